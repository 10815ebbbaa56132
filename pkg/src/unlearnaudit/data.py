"""Tabular data, subgroup predicates and unlearning targets.

Values are stored as a read-only float matrix. Categorical columns hold the
numeric code of each value (see ``VariableDecl.codes``).
"""

from __future__ import annotations

import csv
import math
import operator
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DataError,
    DomainViolationError,
    EmptyTargetError,
    PredicateSyntaxError,
    SchemaMismatchError,
    ValueTypeError,
)
from .graph import CausalGraph, VariableDecl


class Dataset:
    """Immutable table of feature rows with an optional outcome column.

    ``select`` returns views that share the parent's storage through an
    index array.
    """

    def __init__(self, schema: Sequence[VariableDecl], X, y=None, outcome: str | None = None,
                 index=None):
        self.schema = tuple(schema)
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.schema):
            raise SchemaMismatchError(f"expected {len(self.schema)} columns, got shape {X.shape}")
        X.setflags(write=False)
        self._X = X
        if y is not None:
            y = np.asarray(y, dtype=float)
            if y.shape != (X.shape[0],):
                raise SchemaMismatchError("outcome length does not match row count")
            y.setflags(write=False)
        self._y = y
        self.outcome = outcome
        self._index = None if index is None else np.asarray(index, dtype=np.intp)
        self._cache = None
        self._pos = {v.name: i for i, v in enumerate(self.schema)}

    # -- shape and access ------------------------------------------------

    @property
    def columns(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.schema)

    @property
    def n_rows(self) -> int:
        return self._X.shape[0] if self._index is None else len(self._index)

    def __len__(self):
        return self.n_rows

    @property
    def n_columns(self) -> int:
        """Feature columns plus the outcome column when present."""
        return len(self.schema) + (self._y is not None)

    @property
    def has_outcome(self) -> bool:
        return self._y is not None

    @property
    def X(self) -> np.ndarray:
        if self._index is None:
            return self._X
        if self._cache is None:
            cached = self._X[self._index]
            cached.setflags(write=False)
            self._cache = cached
        return self._cache

    @property
    def y(self) -> np.ndarray | None:
        if self._y is None:
            return None
        return self._y if self._index is None else self._y[self._index]

    @property
    def row_ids(self) -> np.ndarray:
        """Row positions in the originally loaded table."""
        if self._index is None:
            return np.arange(self._X.shape[0])
        return self._index

    def col(self, name: str) -> int:
        try:
            return self._pos[name]
        except KeyError:
            raise DataError(f"unknown column {name!r}") from None

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.col(name)]

    def decl(self, name: str) -> VariableDecl:
        return self.schema[self.col(name)]

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.intp)
        base = self.row_ids[rows]
        return Dataset(self.schema, self._X, self._y, self.outcome, index=base)

    def without_outcome(self) -> "Dataset":
        return Dataset(self.schema, self._X, None, None, index=self._index)

    def __repr__(self):
        return f"Dataset(n={self.n_rows}, m={self.n_columns})"


def schema_for(graph: CausalGraph) -> tuple[VariableDecl, ...]:
    return tuple(graph.decl(n) for n in graph.features)


def _format(decl: VariableDecl, value: float) -> str:
    if decl.is_categorical:
        return str(decl.decode(value))
    return repr(float(value))


def write_dataset(ds: Dataset, path) -> None:
    header = list(ds.columns) + ([ds.outcome] if ds.has_outcome else [])
    X, y = ds.X, ds.y
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(ds.n_rows):
            row = [_format(d, X[i, j]) for j, d in enumerate(ds.schema)]
            if y is not None:
                row.append(repr(float(y[i])))
            w.writerow(row)


def _parse_cell(decl: VariableDecl, token: str, row: int):
    token = token.strip()
    if token == "":
        raise ValueTypeError(row, decl.name, token)
    if decl.is_categorical:
        try:
            return decl.encode(token)
        except ValueError:
            raise DomainViolationError(row, decl.name, token) from None
    try:
        value = float(token)
    except ValueError:
        raise ValueTypeError(row, decl.name, token) from None
    if not math.isfinite(value):
        raise ValueTypeError(row, decl.name, token)
    return value


def load_dataset(path, graph: CausalGraph) -> Dataset:
    """Read a comma-separated file whose header names the graph's nodes in order.

    The outcome column may be omitted (audit-only data). Rows are numbered
    from 1, counting the first data line after the header.
    """
    schema = schema_for(graph)
    names = [v.name for v in schema]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaMismatchError(f"{path}: empty file") from None
        if header == names + [graph.outcome]:
            with_outcome = True
        elif header == names:
            with_outcome = False
        else:
            raise SchemaMismatchError(
                f"{path}: header {header} does not match graph columns {names + [graph.outcome]}")
        width = len(header)
        rows, ys = [], []
        out_decl = graph.decl(graph.outcome)
        for lineno, rec in enumerate(reader, start=1):
            if not rec:
                continue
            if len(rec) != width:
                raise SchemaMismatchError(f"row {lineno}: expected {width} fields, got {len(rec)}")
            rows.append([_parse_cell(d, t, lineno) for d, t in zip(schema, rec)])
            if with_outcome:
                ys.append(_parse_cell(out_decl, rec[-1], lineno))
    if not rows:
        raise DataError(f"{path}: no data rows (need n >= 1)")
    return Dataset(schema, np.array(rows, dtype=float), np.array(ys) if with_outcome else None,
                   graph.outcome if with_outcome else None)


# ---------------------------------------------------------------------------
# predicates

OPS = {
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
    "=": operator.eq,
    "!=": operator.ne,
}
_ALIASES = {"≤": "<=", "≥": ">=", "≠": "!=", "==": "="}

_TOKEN = re.compile(
    r"\s*(?:(?P<op><=|>=|!=|==|[<>=≤≥≠])|(?P<amp>&)"
    r"|(?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?(?![A-Za-z_]))"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_.\-]*))"
)


@dataclass(frozen=True)
class Atom:
    feature: str
    op: str
    value: object

    def __str__(self):
        v = self.value
        if isinstance(v, float) and v.is_integer():
            v = int(v)
        return f"{self.feature}{self.op}{v}"


@dataclass(frozen=True)
class SubgroupPredicate:
    """Conjunction of atomic comparisons; the empty conjunction selects every row."""

    atoms: tuple[Atom, ...] = ()

    def __str__(self):
        return " & ".join(str(a) for a in self.atoms)

    @property
    def is_all_rows(self) -> bool:
        return not self.atoms

    def bind(self, schema: Sequence[VariableDecl]) -> "SubgroupPredicate":
        """Check features exist and encode categorical literals; raises DataError."""
        by_name = {v.name: v for v in schema}
        for a in self.atoms:
            if a.feature not in by_name:
                raise DataError(f"predicate references unknown feature {a.feature!r}")
            self._literal(by_name[a.feature], a)
        return self

    @staticmethod
    def _literal(decl: VariableDecl, a: Atom) -> float:
        if decl.is_categorical:
            if a.op not in ("=", "!=") and not decl.numeric_domain:
                raise DataError(f"ordering comparison on token-valued feature {decl.name!r}")
            try:
                return decl.encode(a.value)
            except ValueError:
                raise DataError(f"{a.value!r} is not in the domain of {decl.name!r}") from None
        if isinstance(a.value, str):
            raise DataError(f"non-numeric literal {a.value!r} for continuous feature {decl.name!r}")
        return float(a.value)

    def mask(self, ds: Dataset) -> np.ndarray:
        keep = np.ones(ds.n_rows, dtype=bool)
        for a in self.atoms:
            decl = ds.decl(a.feature)
            keep &= OPS[a.op](ds.column(a.feature), self._literal(decl, a))
        return keep

    def holds(self, row: dict) -> bool:
        """Evaluate on a single ``{name: value}`` record (values already numeric)."""
        return all(OPS[a.op](row[a.feature], a.value) for a in self.atoms)


ALL_ROWS = SubgroupPredicate()


def parse_predicate(text: str) -> SubgroupPredicate:
    """Parse ``ident op literal ( & ident op literal )*``.

    >>> str(parse_predicate("age > 50 &sex=1"))
    'age>50 & sex=1'
    """
    data = text.encode("utf-8")
    pos, atoms = 0, []
    tokens = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise PredicateSyntaxError(f"unexpected character {text[start]!r}",
                                       len(text[:start].encode("utf-8")))
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), len(text[:start].encode("utf-8"))))
        pos = m.end()
    end = len(data)
    i = 0
    while i < len(tokens):
        if atoms:
            kind, val, off = tokens[i]
            if kind != "amp":
                raise PredicateSyntaxError("expected '&'", off)
            i += 1
        want = ("ident", "op", ("num", "ident"))
        parts = []
        for w in want:
            if i >= len(tokens):
                raise PredicateSyntaxError("unexpected end of predicate", end)
            kind, val, off = tokens[i]
            ok = kind in w if isinstance(w, tuple) else kind == w
            if not ok:
                expected = {"ident": "feature name", "op": "comparison operator"}.get(w, "literal")
                raise PredicateSyntaxError(f"expected {expected}, found {val!r}", off)
            parts.append((kind, val))
            i += 1
        (_, feat), (_, op), (lkind, lit) = parts
        op = _ALIASES.get(op, op)
        value = float(lit) if lkind == "num" else lit
        atoms.append(Atom(feat, op, value))
    if tokens and tokens[-1][0] == "amp":
        raise PredicateSyntaxError("dangling '&'", end)
    return SubgroupPredicate(tuple(atoms))


def select(ds: Dataset, p: SubgroupPredicate) -> Dataset:
    if p.is_all_rows:
        return ds
    return ds.take(np.flatnonzero(p.mask(ds)))


@dataclass(frozen=True)
class UnlearningTarget:
    """Rows matched by ``selector`` crossed with ``features``."""

    features: tuple[str, ...]
    selector: SubgroupPredicate = ALL_ROWS

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        if not self.features:
            raise EmptyTargetError("unlearning target has no features")

    def validate(self, ds: Dataset, outcome: str | None = None) -> None:
        for f in self.features:
            if f == outcome or f not in ds.columns:
                raise DataError(f"target feature {f!r} is not a feature column")
        self.selector.bind(ds.schema)

    def rows(self, ds: Dataset) -> Dataset:
        """Validated, nonempty view of the target rows."""
        self.validate(ds, ds.outcome)
        view = select(ds, self.selector)
        if view.n_rows == 0:
            raise EmptyTargetError(f"predicate {str(self.selector)!r} selects no rows")
        return view

    @classmethod
    def parse(cls, features, where: str = "") -> "UnlearningTarget":
        if isinstance(features, str):
            features = [f.strip() for f in features.split(",") if f.strip()]
        return cls(tuple(features), parse_predicate(where or ""))
