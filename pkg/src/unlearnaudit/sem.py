"""Per-node structural mechanisms fitted from observational data."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import SEMError
from .graph import CausalGraph, VariableDecl

RIDGE = 1e-6
RANK_TOL = 1e-12  # eigenvalue ratio of the scaled Gram matrix, i.e. condition number 1e6
IRLS_MAX_ITER = 100
IRLS_TOL = 1e-8

LINEAR = "linear-regression"
LOGIT = "multinomial-logit"


def _design(P: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(P.shape[0]), P])


def solve_design(A: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, bool]:
    """Least squares on a design whose first column is the intercept.

    Uses the column-scaled normal equations plus one refinement step, which is
    much cheaper than an SVD on tall designs. Falls back to ridge when the
    scaled Gram matrix is numerically singular. Returns ``(coef, ridged)``.
    """
    G = A.T @ A
    d = np.sqrt(np.diag(G))
    d[d == 0] = 1.0
    Gs = G / np.outer(d, d)
    ev = np.linalg.eigvalsh(Gs)
    if ev[0] <= ev[-1] * RANK_TOL:
        penalty = RIDGE * np.eye(A.shape[1])
        penalty[0, 0] = 0.0
        return np.linalg.solve(G + penalty, A.T @ y), True
    coef = np.linalg.solve(Gs, (A.T @ y) / d) / d
    coef += np.linalg.solve(Gs, (A.T @ (y - A @ coef)) / d) / d
    return coef, False


def least_squares(P: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, bool]:
    """OLS with intercept; falls back to ridge when the design is rank deficient.

    Returns ``(coef, ridged)`` with the intercept first.
    """
    return solve_design(_design(np.asarray(P, dtype=float).reshape(len(y), -1)), y)


def irls_logistic(P: np.ndarray, y: np.ndarray, max_iter: int = IRLS_MAX_ITER,
                  tol: float = IRLS_TOL) -> tuple[np.ndarray, bool]:
    """Binary logistic regression by iteratively reweighted least squares.

    Returns ``(coef, converged)``. Separable data never converges; the
    iteration cap then bounds the coefficients.
    """
    A = _design(np.asarray(P, dtype=float).reshape(len(y), -1))
    w = np.zeros(A.shape[1])
    jitter = 1e-10 * np.eye(A.shape[1])
    for _ in range(max_iter):
        eta = np.clip(A @ w, -30.0, 30.0)
        p = 1.0 / (1.0 + np.exp(-eta))
        W = p * (1.0 - p)
        H = A.T @ (A * W[:, None]) + jitter
        step = np.linalg.solve(H, A.T @ (y - p))
        w = w + step
        if np.max(np.abs(step)) < tol:
            return w, True
    return w, False


@dataclass(frozen=True)
class StructuralModel:
    node: str
    parents: tuple[str, ...]
    form: str
    coef: np.ndarray  # linear: (k+1,); logit: (classes, k+1)
    residual: float | None = None
    classes: tuple[float, ...] = ()
    ridged: bool = False

    def predict(self, P: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
        """Mean prediction for each row of parent values; ``rng`` adds residual noise."""
        P = np.asarray(P, dtype=float)
        if P.ndim == 1:
            P = P[None, :]
        if P.shape[1] != len(self.parents):
            raise SEMError(f"{self.node}: expected {len(self.parents)} parent values, got {P.shape[1]}")
        if self.form == LINEAR:
            out = self.coef[0] + P @ self.coef[1:]
            if rng is not None and self.residual:
                out = out + rng.normal(0.0, self.residual, size=out.shape)
            return out
        scores = self.coef[:, 0][None, :] + P @ self.coef[:, 1:].T
        classes = np.asarray(self.classes)
        if rng is None:
            return classes[np.argmax(scores, axis=1)]
        probs = 1.0 / (1.0 + np.exp(-np.clip(scores, -30, 30)))
        probs /= probs.sum(axis=1, keepdims=True)
        u = rng.random(len(P))[:, None]
        return classes[np.minimum((u > np.cumsum(probs, axis=1)).sum(axis=1), len(classes) - 1)]

    def to_dict(self) -> dict:
        d = {"node": self.node, "parents": list(self.parents), "form": self.form,
             "coefficients": np.asarray(self.coef).tolist(), "residual": self.residual}
        if self.classes:
            d["classes"] = list(self.classes)
        if self.ridged:
            d["ridged"] = True
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StructuralModel":
        return cls(d["node"], tuple(d["parents"]), d["form"], np.asarray(d["coefficients"], dtype=float),
                   d.get("residual"), tuple(d.get("classes", ())), bool(d.get("ridged", False)))


def predict_node(m: StructuralModel, parent_values) -> float:
    values = np.asarray(parent_values, dtype=float).ravel()
    if values.shape[0] != len(m.parents):
        raise SEMError(f"{m.node}: arity mismatch, expected {len(m.parents)} values, got {values.shape[0]}")
    return float(m.predict(values[None, :])[0])


@dataclass
class StructuralModelSet:
    models: dict[str, StructuralModel] = field(default_factory=dict)

    def __getitem__(self, node):
        return self.models[node]

    def __contains__(self, node):
        return node in self.models

    @property
    def flagged(self) -> list[str]:
        return [n for n, m in self.models.items() if m.ridged]

    def dumps(self) -> str:
        return json.dumps({"models": [m.to_dict() for m in self.models.values()]}, indent=2) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "StructuralModelSet":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls({d["node"]: StructuralModel.from_dict(d) for d in doc["models"]})


def fit_node(node: str, decl: VariableDecl, parents: tuple[str, ...], P: np.ndarray,
             v: np.ndarray) -> StructuralModel:
    if len(v) < len(parents) + 2:
        raise SEMError(f"{node}: {len(v)} rows is too few to fit {len(parents)} parents")
    if not decl.is_categorical:
        coef, ridged = least_squares(P, v)
        resid = v - (coef[0] + P @ coef[1:])
        return StructuralModel(node, parents, LINEAR, coef, float(np.sqrt(np.mean(resid ** 2))),
                               ridged=ridged)
    classes = decl.codes()
    rows = [irls_logistic(P, (v == c).astype(float))[0] for c in classes]
    return StructuralModel(node, parents, LOGIT, np.array(rows), None, classes)


def fit_sem(g: CausalGraph, ds: Dataset, include_outcome: bool = False) -> StructuralModelSet:
    """Fit one mechanism per non-root feature node (and the outcome on request)."""
    models = {}
    for node in g.topological_order():
        parents = g.parents(node)
        if not parents:
            continue
        if node == g.outcome:
            if not include_outcome:
                continue
            if not ds.has_outcome:
                raise SEMError("outcome mechanism requested but dataset has no outcome column")
            v = ds.y
        else:
            v = ds.column(node)
        if g.outcome in parents:
            raise SEMError(f"{node}: outcome cannot be a parent")
        P = ds.X[:, [ds.col(p) for p in parents]]
        models[node] = fit_node(node, g.decl(node), parents, P, v)
    return StructuralModelSet(models)


# ---------------------------------------------------------------------------
# intervention values

EMPIRICAL = "empirical"
DOMAIN_GRID = "domain-grid"
FIXED_PAIR = "fixed-pair"
STRATEGIES = (EMPIRICAL, DOMAIN_GRID, FIXED_PAIR)
GRID_POINTS = 11


def intervention_support(decl: VariableDecl, strategy: str, observed=None) -> np.ndarray:
    """Candidate values for ``empirical`` and ``domain-grid`` strategies."""
    if strategy == EMPIRICAL:
        if observed is None or len(observed) == 0:
            raise SEMError(f"{decl.name}: empty observed support")
        return np.asarray(observed, dtype=float)
    if strategy == DOMAIN_GRID:
        if decl.is_categorical:
            return np.asarray(decl.codes())
        lo, hi = decl.domain
        return np.linspace(lo, hi, GRID_POINTS)
    raise SEMError(f"no support set for strategy {strategy!r}")


def sample_intervention(decl: VariableDecl, rng: np.random.Generator, strategy: str = EMPIRICAL,
                        observed=None, pair=None, size=None):
    """Draw intervention value(s) for ``decl``.

    ``fixed-pair`` returns the treatment value of ``pair = (baseline, treatment)``.
    """
    if strategy == FIXED_PAIR:
        if pair is None or len(pair) != 2:
            raise SEMError("fixed-pair strategy needs (baseline, treatment)")
        t = float(pair[1])
        return t if size is None else np.full(size, t)
    if strategy not in STRATEGIES:
        raise SEMError(f"unknown intervention strategy {strategy!r}")
    support = intervention_support(decl, strategy, observed)
    return rng.choice(support, size=size)
