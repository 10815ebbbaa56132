"""Causal DAG over feature and outcome variables.

Node order is the declaration order in the graph file; every query that
returns an ordered result breaks ties by it, so reports are reproducible.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import CycleError, GraphError, PathExplosionError, UnknownNodeError

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"

DEFAULT_PATH_CAP = 10_000


@dataclass(frozen=True)
class VariableDecl:
    """A column of the data: name, kind and declared domain.

    Continuous domains are ``(lo, hi)``; categorical domains are the finite
    value list, in the order used for tie-breaking.
    """

    name: str
    kind: str
    domain: tuple

    def __post_init__(self):
        if not self.name or not isinstance(self.name, str):
            raise GraphError(f"invalid variable name {self.name!r}")
        if self.kind == CONTINUOUS:
            if len(self.domain) != 2:
                raise GraphError(f"{self.name}: continuous domain must be [lo, hi]")
            lo, hi = (float(v) for v in self.domain)
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise GraphError(f"{self.name}: continuous domain needs finite lo <= hi")
            object.__setattr__(self, "domain", (lo, hi))
        elif self.kind == CATEGORICAL:
            if len(self.domain) == 0:
                raise GraphError(f"{self.name}: categorical domain is empty")
            if len(set(self.domain)) != len(self.domain):
                raise GraphError(f"{self.name}: categorical domain has duplicates")
            object.__setattr__(self, "domain", tuple(self.domain))
        else:
            raise GraphError(f"{self.name}: unknown kind {self.kind!r}")

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL

    @property
    def numeric_domain(self) -> bool:
        return all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in self.domain)

    def codes(self) -> tuple[float, ...]:
        """Numeric codes of a categorical domain, in domain order.

        Numeric domains code as themselves, token domains as their index.
        """
        if not self.is_categorical:
            raise GraphError(f"{self.name} is continuous")
        if self.numeric_domain:
            return tuple(float(v) for v in self.domain)
        return tuple(float(i) for i in range(len(self.domain)))

    def encode(self, token) -> float:
        if not self.is_categorical:
            return float(token)
        if self.numeric_domain:
            value = float(token)
            if value not in self.codes():
                raise ValueError(token)
            return value
        try:
            return float(self.domain.index(token))
        except ValueError:
            # numeric-looking tokens in the file arrive as str
            for i, v in enumerate(self.domain):
                if str(v) == str(token):
                    return float(i)
            raise

    def decode(self, code: float):
        if not self.is_categorical:
            return float(code)
        if self.numeric_domain:
            v = self.domain[self.codes().index(float(code))]
            return v
        return self.domain[int(code)]

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind, "domain": list(self.domain)}

    @classmethod
    def from_dict(cls, d: dict) -> "VariableDecl":
        try:
            return cls(d["name"], d["kind"], tuple(d["domain"]))
        except KeyError as exc:
            raise GraphError(f"node entry missing field {exc.args[0]!r}: {d!r}") from None


@dataclass(frozen=True)
class PathSet:
    paths: tuple[tuple[str, ...], ...] = ()

    def __len__(self):
        return len(self.paths)

    def __iter__(self):
        return iter(self.paths)


@dataclass(frozen=True, eq=False)
class CausalGraph:
    nodes: tuple[VariableDecl, ...]
    edges: tuple[tuple[str, str], ...]
    outcome: str
    backdoor_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple((str(a), str(b)) for a, b in self.edges))
        names = [v.name for v in self.nodes]
        if len(set(names)) != len(names):
            raise GraphError("duplicate node names")
        index = {n: i for i, n in enumerate(names)}
        seen = set()
        parents = {n: [] for n in names}
        children = {n: [] for n in names}
        for a, b in self.edges:
            for end in (a, b):
                if end not in index:
                    raise UnknownNodeError(end)
            if a == b:
                raise GraphError(f"self-loop on {a!r}")
            if (a, b) in seen:
                raise GraphError(f"duplicate edge {a} -> {b}")
            seen.add((a, b))
            parents[b].append(a)
            children[a].append(b)
        for n in names:
            parents[n].sort(key=index.__getitem__)
            children[n].sort(key=index.__getitem__)
        if self.outcome not in index:
            raise UnknownNodeError(self.outcome)
        if children[self.outcome]:
            raise GraphError(f"outcome {self.outcome!r} has outgoing edges")
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_parents", {n: tuple(p) for n, p in parents.items()})
        object.__setattr__(self, "_children", {n: tuple(c) for n, c in children.items()})
        object.__setattr__(self, "_topo", self._toposort())
        overrides = {}
        for f, zs in dict(self.backdoor_overrides).items():
            self._check(f)
            for z in zs:
                self._check(z)
            overrides[f] = tuple(zs)
        object.__setattr__(self, "backdoor_overrides", overrides)

    # -- basic accessors -------------------------------------------------

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.nodes)

    @property
    def features(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.nodes if v.name != self.outcome)

    def decl(self, name: str) -> VariableDecl:
        return self.nodes[self._check(name)]

    def position(self, name: str) -> int:
        return self._check(name)

    def parents(self, name: str) -> tuple[str, ...]:
        self._check(name)
        return self._parents[name]

    def children(self, name: str) -> tuple[str, ...]:
        self._check(name)
        return self._children[name]

    def _check(self, name) -> int:
        try:
            return self._index[name]
        except (KeyError, TypeError):
            raise UnknownNodeError(name) from None

    def _toposort(self):
        indeg = {n: len(self._parents[n]) for n in self.names}
        ready = [self._index[n] for n in self.names if indeg[n] == 0]
        heapq.heapify(ready)
        order = []
        while ready:
            n = self.nodes[heapq.heappop(ready)].name
            order.append(n)
            for c in self._children[n]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    heapq.heappush(ready, self._index[c])
        if len(order) != len(self.nodes):
            raise CycleError(self._find_cycle(set(self.names) - set(order)))
        return tuple(order)

    def _find_cycle(self, remaining):
        # every node left after Kahn's algorithm has a parent that is also left
        start = min(remaining, key=self._index.__getitem__)
        walk, pos = [start], {start: 0}
        node = start
        while True:
            node = next(p for p in self._parents[node] if p in remaining)
            if node in pos:
                cycle = walk[pos[node]:][::-1]
                return cycle + [cycle[0]]
            pos[node] = len(walk)
            walk.append(node)

    # -- queries ---------------------------------------------------------

    def topological_order(self) -> tuple[str, ...]:
        return self._topo

    def descendants(self, v: str) -> set[str]:
        self._check(v)
        out, stack = set(), list(self._children[v])
        while stack:
            n = stack.pop()
            if n not in out:
                out.add(n)
                stack.extend(self._children[n])
        return out

    def ancestors(self, v: str) -> set[str]:
        self._check(v)
        out, stack = set(), list(self._parents[v])
        while stack:
            n = stack.pop()
            if n not in out:
                out.add(n)
                stack.extend(self._parents[n])
        return out

    def d_separated(self, x: str, y: str, z: Iterable[str] = ()) -> bool:
        """Whether ``x`` and ``y`` are d-separated given ``z``.

        Uses the reachable-trail traversal: a trail enters each node either
        from a child (moving up) or from a parent (moving down).
        """
        z = set(z)
        for n in (x, y, *z):
            self._check(n)
        if x == y:
            raise GraphError("d_separated needs two distinct nodes")
        if x in z or y in z:
            raise GraphError("conditioning set must exclude x and y")
        # nodes with a descendant in z (including z itself) open colliders
        opens = set(z)
        for n in z:
            opens |= self.ancestors(n)
        visited = set()
        stack = [(x, "up")]
        while stack:
            node, direction = stack.pop()
            if (node, direction) in visited:
                continue
            visited.add((node, direction))
            if node == y:
                return False
            if direction == "up" and node not in z:
                stack.extend((p, "up") for p in self._parents[node])
                stack.extend((c, "down") for c in self._children[node])
            elif direction == "down":
                if node not in z:
                    stack.extend((c, "down") for c in self._children[node])
                if node in opens:
                    stack.extend((p, "up") for p in self._parents[node])
        return True

    def without_outgoing(self, f: str) -> "CausalGraph":
        self._check(f)
        return CausalGraph(self.nodes, tuple(e for e in self.edges if e[0] != f), self.outcome)

    def is_valid_backdoor(self, f: str, zs: Iterable[str]) -> bool:
        zs = set(zs)
        if zs & (self.descendants(f) | {f, self.outcome}):
            return False
        return self.without_outgoing(f).d_separated(f, self.outcome, zs)

    def backdoor_set(self, f: str) -> set[str]:
        """Adjustment set for ``f -> outcome``: the override if given, else Pa(f)."""
        self._check(f)
        if f == self.outcome:
            raise GraphError("backdoor_set is undefined for the outcome")
        if f in self.backdoor_overrides:
            return set(self.backdoor_overrides[f])
        return set(self._parents[f])

    def mediators(self, f: str) -> set[str]:
        self._check(f)
        if f == self.outcome:
            raise GraphError("mediators are undefined for the outcome")
        on_path = self.descendants(f) & (self.ancestors(self.outcome))
        return on_path - {f, self.outcome}

    def directed_paths(self, f: str, cap: int = DEFAULT_PATH_CAP) -> PathSet:
        self._check(f)
        if f == self.outcome:
            raise GraphError("directed_paths is undefined for the outcome")
        reach = self.ancestors(self.outcome)
        paths = []

        def walk(node, prefix):
            if node == self.outcome:
                paths.append(tuple(prefix))
                if len(paths) > cap:
                    raise PathExplosionError(f"more than {cap} directed paths from {f!r}")
                return
            for c in self._children[node]:
                if c == self.outcome or c in reach:
                    walk(c, prefix + [c])

        if f in reach:
            walk(f, [f])
        return PathSet(tuple(sorted(paths)))

    # -- (de)serialization ----------------------------------------------

    def with_edges(self, edges) -> "CausalGraph":
        return CausalGraph(self.nodes, tuple(edges), self.outcome)

    def to_dict(self) -> dict:
        d = {
            "nodes": [v.to_dict() for v in self.nodes],
            "edges": [list(e) for e in self.edges],
            "outcome": self.outcome,
        }
        if self.backdoor_overrides:
            d["backdoor_overrides"] = {k: list(v) for k, v in self.backdoor_overrides.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CausalGraph":
        for key in ("nodes", "edges", "outcome"):
            if key not in d:
                raise GraphError(f"graph document missing {key!r}")
        for e in d["edges"]:
            if not isinstance(e, (list, tuple)) or len(e) != 2:
                raise GraphError(f"edge must be a [parent, child] pair: {e!r}")
        return cls(
            nodes=tuple(VariableDecl.from_dict(n) for n in d["nodes"]),
            edges=tuple(tuple(e) for e in d["edges"]),
            outcome=d["outcome"],
            backdoor_overrides=d.get("backdoor_overrides", {}),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def load_graph(path) -> CausalGraph:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphError(f"{path}: not valid JSON ({exc})") from None
    return CausalGraph.from_dict(doc)


def make_graph(edges: Sequence[tuple[str, str]], outcome: str, nodes: Sequence[str] | None = None,
               kinds: dict | None = None) -> CausalGraph:
    """Shorthand for tests and generators: binary categorical nodes unless ``kinds`` says otherwise."""
    if nodes is None:
        nodes = []
        for a, b in edges:
            for n in (a, b):
                if n not in nodes:
                    nodes.append(n)
    kinds = kinds or {}
    decls = []
    for n in nodes:
        kind = kinds.get(n, CATEGORICAL)
        decls.append(VariableDecl(n, kind, (0, 1) if kind == CATEGORICAL else (0.0, 1.0)))
    return CausalGraph(tuple(decls), tuple(edges), outcome)
