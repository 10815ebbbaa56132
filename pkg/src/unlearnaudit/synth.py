"""Semi-synthetic data from linear structural equations with known effects.

A generator spec is a JSON document::

    {
      "name": "heart",
      "graph": { ...graph document... },
      "roots": {"smoking": {"dist": "bernoulli", "p": 0.5}, ...},
      "equations": {
        "bmi": {"intercept": 0.0, "coefficients": {"smoking": 2.0, "exercise": -3.0},
                "noise": 1.0,
                "gated": [{"parent": "x", "gate": "age>50", "coefficient": 5.0}]}
      },
      "seed": 7,
      "n": 10000
    }

``gated`` terms add ``coefficient * parent`` only on rows where the gate
predicate holds; a spec with gated terms is piecewise linear and its ground
truth is only defined once every gate is fixed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .data import OPS, Dataset, SubgroupPredicate, parse_predicate, schema_for, write_dataset
from .errors import SpecError
from .graph import CausalGraph
from .models import FunctionModel
from .sem import LINEAR, StructuralModel, StructuralModelSet

SHIPPED = ("heart", "heart_opposed", "heart_age", "performance")


@dataclass(frozen=True)
class GatedTerm:
    parent: str
    gate: SubgroupPredicate
    coefficient: float


@dataclass(frozen=True)
class Equation:
    intercept: float
    coefficients: dict
    noise: float
    gated: tuple[GatedTerm, ...] = ()


@dataclass(frozen=True)
class Effect:
    total: float
    direct: float

    @property
    def indirect(self) -> float:
        return self.total - self.direct


@dataclass(frozen=True)
class GeneratorSpec:
    name: str
    graph: CausalGraph
    equations: dict
    roots: dict
    seed: int = 0
    n: int = 1000
    source: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        g = self.graph
        for node in g.names:
            parents = set(g.parents(node))
            if not parents:
                if node in self.equations:
                    raise SpecError(f"{node}: root nodes take a distribution, not an equation")
                if node not in self.roots:
                    raise SpecError(f"{node}: missing root distribution")
                continue
            if node in self.roots:
                raise SpecError(f"{node}: has parents, so it needs an equation")
            if node not in self.equations:
                raise SpecError(f"{node}: missing structural equation")
            if g.decl(node).is_categorical:
                raise SpecError(f"{node}: linear generators only produce continuous non-root nodes")
            eq = self.equations[node]
            if eq.noise < 0:
                raise SpecError(f"{node}: noise must be >= 0")
            used = set(eq.coefficients)
            for t in eq.gated:
                used.add(t.parent)
                used |= {a.feature for a in t.gate.atoms}
            if used != parents:
                raise SpecError(f"{node}: equation terms {sorted(used)} differ from graph parents {sorted(parents)}")
        if self.n < 1:
            raise SpecError("n must be >= 1")

    @property
    def is_linear(self) -> bool:
        return not any(eq.gated for eq in self.equations.values())

    def with_n(self, n: int, seed: int | None = None) -> "GeneratorSpec":
        return replace(self, n=n, seed=self.seed if seed is None else seed)

    def with_noise(self, sigma: float) -> "GeneratorSpec":
        eqs = {k: replace(v, noise=sigma) for k, v in self.equations.items()}
        return replace(self, equations=eqs)


def spec_from_dict(d: dict) -> GeneratorSpec:
    try:
        graph = CausalGraph.from_dict(d["graph"])
        eqs = {}
        for node, e in d.get("equations", {}).items():
            gated = tuple(GatedTerm(t["parent"], parse_predicate(t["gate"]), float(t["coefficient"]))
                          for t in e.get("gated", ()))
            eqs[node] = Equation(float(e.get("intercept", 0.0)),
                                 {k: float(v) for k, v in e.get("coefficients", {}).items()},
                                 float(e.get("noise", 0.0)), gated)
        return GeneratorSpec(d.get("name", "spec"), graph, eqs, dict(d.get("roots", {})),
                             int(d.get("seed", 0)), int(d.get("n", 1000)), source=d)
    except KeyError as exc:
        raise SpecError(f"generator spec missing field {exc.args[0]!r}") from None


def load_spec(path_or_name) -> GeneratorSpec:
    """Load a spec file, or a shipped spec by bare name (``heart``, ``performance``...)."""
    name = str(path_or_name)
    if name in SHIPPED:
        text = resources.files("unlearnaudit.specs").joinpath(f"{name}.json").read_text("utf-8")
    else:
        p = Path(name)
        if not p.is_file():
            raise SpecError(f"no generator spec at {name!r}")
        text = p.read_text(encoding="utf-8")
    try:
        return spec_from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise SpecError(f"{name}: not valid JSON ({exc})") from None


def _sample_root(decl, dist: dict, rng: np.random.Generator, n: int) -> np.ndarray:
    kind = dist.get("dist", "uniform")
    if kind == "bernoulli":
        if not decl.is_categorical or len(decl.domain) != 2:
            raise SpecError(f"{decl.name}: bernoulli root needs a two-value categorical domain")
        lo, hi = decl.codes()
        return np.where(rng.random(n) < float(dist.get("p", 0.5)), hi, lo)
    if kind == "categorical":
        codes = np.asarray(decl.codes())
        probs = np.asarray(dist.get("probs", np.full(len(codes), 1.0 / len(codes))), dtype=float)
        return codes[rng.choice(len(codes), size=n, p=probs / probs.sum())]
    if kind == "uniform":
        if decl.is_categorical:
            raise SpecError(f"{decl.name}: uniform root needs a continuous domain")
        lo, hi = dist.get("lo", decl.domain[0]), dist.get("hi", decl.domain[1])
        return rng.uniform(lo, hi, size=n)
    if kind == "normal":
        return rng.normal(float(dist.get("mean", 0.0)), float(dist.get("sd", 1.0)), size=n)
    raise SpecError(f"{decl.name}: unknown root distribution {kind!r}")


def structural_mean(eq: Equation, cols: dict) -> np.ndarray:
    """Noise-free value of an equation given parent columns ``{name: array}``."""
    n = len(next(iter(cols.values()))) if cols else 1
    out = np.full(n, eq.intercept)
    for p, c in eq.coefficients.items():
        out = out + c * cols[p]
    for t in eq.gated:
        on = np.ones(n, dtype=bool)
        for a in t.gate.atoms:
            on &= OPS[a.op](cols[a.feature], float(a.value))
        out = out + np.where(on, t.coefficient * cols[t.parent], 0.0)
    return out


def generate(spec: GeneratorSpec) -> Dataset:
    """Ancestral sampling in topological order; deterministic under ``spec.seed``."""
    g = spec.graph
    rng = np.random.default_rng(spec.seed)
    cols = {}
    for node in g.topological_order():
        if not g.parents(node):
            cols[node] = _sample_root(g.decl(node), spec.roots[node], rng, spec.n).astype(float)
        else:
            eq = spec.equations[node]
            mean = structural_mean(eq, cols)
            noise = rng.normal(0.0, eq.noise, size=spec.n) if eq.noise > 0 else 0.0
            cols[node] = mean + noise
    schema = schema_for(g)
    X = np.column_stack([cols[v.name] for v in schema])
    return Dataset(schema, X, cols[g.outcome], g.outcome)


def effective_coefficients(spec: GeneratorSpec, gates: dict | None = None) -> dict:
    """Edge -> coefficient with every gate fixed by ``gates`` (gate text -> bool)."""
    gates = {str(parse_predicate(k)) if isinstance(k, str) else str(k): v for k, v in (gates or {}).items()}
    coef = {}
    for child, eq in spec.equations.items():
        for p in spec.graph.parents(child):
            coef[(p, child)] = eq.coefficients.get(p, 0.0)
        for t in eq.gated:
            key = str(t.gate)
            if key not in gates:
                raise SpecError(f"nonlinear spec: gate {key!r} must be fixed to compute effects")
            if gates[key]:
                coef[(t.parent, child)] += t.coefficient
    return coef


def ground_truth_effects(spec: GeneratorSpec, gates: dict | None = None,
                         features=None) -> dict[str, Effect]:
    """Per-feature path-product total and direct effect on the outcome.

    Names in ``features`` that the graph lacks get a zero effect.
    """
    g = spec.graph
    coef = effective_coefficients(spec, gates)
    names = g.features if features is None else tuple(features)
    out = {}
    for f in names:
        if f not in g.names or f == g.outcome:
            out[f] = Effect(0.0, 0.0)
            continue
        total = 0.0
        for path in g.directed_paths(f):
            prod = 1.0
            for a, b in zip(path, path[1:]):
                prod *= coef[(a, b)]
            total += prod
        out[f] = Effect(total, coef.get((f, g.outcome), 0.0))
    return out


def path_effects(spec: GeneratorSpec, f: str, gates: dict | None = None) -> dict[tuple, float]:
    coef = effective_coefficients(spec, gates)
    out = {}
    for path in spec.graph.directed_paths(f):
        prod = 1.0
        for a, b in zip(path, path[1:]):
            prod *= coef[(a, b)]
        out[path] = prod
    return out


def true_sem(spec: GeneratorSpec) -> StructuralModelSet:
    """The generator's own mechanisms for every non-root feature (linear specs only)."""
    if not spec.is_linear:
        raise SpecError("true_sem needs a linear spec")
    g = spec.graph
    models = {}
    for node in g.features:
        parents = g.parents(node)
        if not parents:
            continue
        eq = spec.equations[node]
        coef = np.array([eq.intercept] + [eq.coefficients.get(p, 0.0) for p in parents])
        models[node] = StructuralModel(node, parents, LINEAR, coef, eq.noise)
    return StructuralModelSet(models)


def oracle_model(spec: GeneratorSpec) -> FunctionModel:
    """Model that returns the outcome's noise-free structural equation."""
    g = spec.graph
    eq = spec.equations[g.outcome]
    features = g.features
    used = set(g.parents(g.outcome))

    def fn(X):
        cols = {f: X[:, i] for i, f in enumerate(features) if f in used}
        if not cols:
            return np.full(X.shape[0], eq.intercept)
        return structural_mean(eq, cols)

    return FunctionModel(features, fn, uses=[f for f in features if f in used])


def write_outputs(spec: GeneratorSpec, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data_path = out / f"{spec.name}.csv"
    graph_path = out / f"{spec.name}.graph.json"
    write_dataset(generate(spec), data_path)
    graph_path.write_text(spec.graph.dumps(), encoding="utf-8")
    return data_path, graph_path
