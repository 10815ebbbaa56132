"""Causal fuzzing oracle.

For each target (row, feature) pair and each of ``k`` sampled intervention
values, the row is copied, the feature is set, and the change is pushed
through the fitted mechanisms of its descendants in topological order. The
model's output change is accumulated. Direct mode skips propagation; path
mode propagates only along one directed path.

The whole batch of ``k * n`` counterfactual rows for a feature is built
and scored at once; the sampled values come from counter-based streams
keyed by (feature, sample index, row id), so results do not depend on the
worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import rng as crng
from .data import Dataset, UnlearningTarget
from .errors import DataError, FuzzError, GraphError
from .graph import CausalGraph, PathSet
from .models import PredictionModel
from .scores import FeatureScore, InfluenceScore
from .sem import EMPIRICAL, FIXED_PAIR, STRATEGIES, StructuralModelSet, intervention_support

CHANGE_TOL = 1e-12
TOTAL, DIRECT, PATHS = "total", "direct", "paths"
AGGREGATIONS = ("sum", "mean", "per-unit")
PREDICT_CHUNK = 200_000


@dataclass
class FuzzConfig:
    samples: int = 10
    strategy: str = EMPIRICAL
    mode: str = TOTAL
    paths: PathSet | None = None
    seed: int = 0
    aggregation: str = "mean"
    pairs: dict = field(default_factory=dict)
    stochastic: bool = False
    keep_instances: bool = False
    threads: int | None = None

    def validate(self, features=()):
        if self.samples < 1:
            raise FuzzError("fuzzing needs samples >= 1")
        if self.strategy not in STRATEGIES:
            raise FuzzError(f"unknown intervention strategy {self.strategy!r}")
        if self.mode not in (TOTAL, DIRECT, PATHS):
            raise FuzzError(f"unknown fuzzing mode {self.mode!r}")
        if self.aggregation not in AGGREGATIONS:
            raise FuzzError(f"unknown aggregation {self.aggregation!r}")
        if self.mode == PATHS:
            if not self.paths:
                raise FuzzError("path-specific mode needs a nonempty path set")
            if not any(p[0] in features for p in self.paths):
                raise FuzzError("no path starts at a target feature")
        if self.strategy == FIXED_PAIR:
            for f in features:
                if f not in self.pairs:
                    raise FuzzError(f"fixed-pair strategy needs a (baseline, treatment) pair for {f!r}")

    def describe(self) -> dict:
        d = {k: v for k, v in asdict(self).items()}
        d["paths"] = [list(p) for p in self.paths] if self.paths else None
        d["pairs"] = {k: list(v) for k, v in self.pairs.items()}
        d.pop("threads")
        return d


def _threads(cfg: FuzzConfig) -> int:
    if cfg.threads:
        return max(1, int(cfg.threads))
    try:
        return max(1, int(os.environ.get("CAFE_THREADS", "1")))
    except ValueError:
        return 1


class Propagator:
    """Pushes an intervention on one feature through the fitted mechanisms."""

    def __init__(self, g: CausalGraph, sem: StructuralModelSet, columns, f: str):
        self.g = g
        self.sem = sem
        self.pos = {c: i for i, c in enumerate(columns)}
        self.f = f
        self.fcol = self.pos[f]
        desc = g.descendants(f) - {g.outcome}
        self.order = [v for v in g.topological_order() if v in desc]
        for v in self.order:
            if v not in sem:
                raise GraphError(f"no fitted mechanism for {v!r}; refit the SEM on this graph")
            if v not in self.pos:
                raise DataError(f"descendant {v!r} of {f!r} is not a data column")
        self.categorical = {v: g.decl(v).is_categorical for v in [f] + self.order}

    def _differs(self, v, new, old):
        if self.categorical[v]:
            return new != old
        return np.abs(new - old) > CHANGE_TOL

    def apply(self, X: np.ndarray, theta, propagate=True, allowed=None, rng=None) -> np.ndarray:
        """Copy ``X``, set the feature to ``theta`` and update changed descendants."""
        Xp = np.array(X, dtype=float, copy=True)
        Xp[:, self.fcol] = theta
        if not propagate:
            return Xp
        changed = {self.f: self._differs(self.f, Xp[:, self.fcol], X[:, self.fcol])}
        for v in self.order:
            if v == self.f or (allowed is not None and v not in allowed):
                continue
            parents = self.g.parents(v)
            mask = np.zeros(X.shape[0], dtype=bool)
            for p in parents:
                if p in changed:
                    mask |= changed[p]
            if not mask.any():
                continue
            cols = [self.pos[p] for p in parents]
            vcol = self.pos[v]
            new = self.sem[v].predict(Xp[np.ix_(mask, cols)], rng)
            Xp[mask, vcol] = new
            ch = np.zeros(X.shape[0], dtype=bool)
            ch[mask] = self._differs(v, new, X[mask, vcol])
            changed[v] = ch
        return Xp


def _predict(model: PredictionModel, X: np.ndarray) -> np.ndarray:
    out = [model.predict(X[i:i + PREDICT_CHUNK]) for i in range(0, X.shape[0], PREDICT_CHUNK)]
    return np.concatenate(out) if out else np.zeros(0)


def _aggregate(dy: np.ndarray, dtheta: np.ndarray, how: str) -> float:
    if how == "sum":
        return float(dy.sum())
    if how == "mean":
        return float(dy.mean())
    denom = float((dtheta * dtheta).sum())
    return float((dy * dtheta).sum() / denom) if denom > 0 else 0.0


def check_paths(g: CausalGraph, paths: PathSet, features) -> None:
    edges = set(g.edges)
    for p in paths:
        if len(p) < 2 or p[-1] != g.outcome:
            raise GraphError(f"path {list(p)} must end at the outcome {g.outcome!r}")
        if p[0] not in features:
            raise GraphError(f"path {list(p)} does not start at a target feature")
        for a, b in zip(p, p[1:]):
            if (a, b) not in edges:
                raise GraphError(f"path {list(p)} uses missing edge {a} -> {b}")


def _fuzz_feature(g, sem, model, ds, view, f, cfg, y0, want_total, want_direct, paths):
    k, n = cfg.samples, view.n_rows
    X = view.X
    col = ds.col(f)
    prop = Propagator(g, sem, ds.columns, f)
    xf = np.tile(X[:, col], k)
    Xk = np.tile(X, (k, 1))
    stoch = np.random.default_rng(int(crng.stream_key(cfg.seed, "noise", f))) if cfg.stochastic else None

    if cfg.strategy == FIXED_PAIR:
        base, treat = (float(v) for v in cfg.pairs[f])
        theta = np.full(k * n, treat)
        dtheta = np.full(k * n, treat - base)
    else:
        support = intervention_support(ds.decl(f), cfg.strategy, ds.column(f))
        theta = np.concatenate([
            support[crng.choice_index(cfg.seed, ("theta", f, s), view.row_ids, len(support))]
            for s in range(k)])
        dtheta = theta - xf
        base = None

    def delta(**kw):
        yt = _predict(model, prop.apply(Xk, theta, rng=stoch, **kw))
        if base is None:
            yb = np.tile(y0, k)
        else:
            yb = _predict(model, prop.apply(Xk, np.full(k * n, base), rng=stoch, **kw))
        return (yt - yb).reshape(k, n)

    score = FeatureScore(f, n_samples=k * n)
    dt = dtheta.reshape(k, n)
    if want_total:
        dy = delta(propagate=True)
        score.total = _aggregate(dy, dt, cfg.aggregation)
        score.max_abs_delta = float(np.abs(dy).max())
        if cfg.keep_instances:
            score.instances["total"] = dy.mean(axis=0)
    if want_direct:
        dy = delta(propagate=False)
        score.direct = _aggregate(dy, dt, cfg.aggregation)
        if score.max_abs_delta is None:
            score.max_abs_delta = float(np.abs(dy).max())
        if cfg.keep_instances:
            score.instances["direct"] = dy.mean(axis=0)
    for p in paths:
        dy = delta(propagate=True, allowed=set(p[1:-1]))
        score.paths[tuple(p)] = _aggregate(dy, dt, cfg.aggregation)
    if cfg.keep_instances:
        score.instances["theta"] = theta.reshape(k, n)
    return score


def fuzz(g: CausalGraph, sem: StructuralModelSet, model: PredictionModel, ds: Dataset,
         target: UnlearningTarget, cfg: FuzzConfig | None = None) -> InfluenceScore:
    """Fuzzing scores for every target feature.

    ``cfg.mode`` selects total+direct decomposition (``total``), direct
    only, or per-path scores on top of the decomposition (``paths``).
    Total and direct use the same sampled values.
    """
    cfg = cfg or FuzzConfig()
    cfg.validate(target.features)
    if tuple(model.features) != tuple(ds.columns):
        raise DataError(f"model expects features {list(model.features)}, data has {list(ds.columns)}")
    view = target.rows(ds)
    paths_by_feature = {f: [] for f in target.features}
    if cfg.mode == PATHS:
        check_paths(g, cfg.paths, target.features)
        for p in cfg.paths:
            paths_by_feature[p[0]].append(tuple(p))
    want_total = cfg.mode in (TOTAL, PATHS)
    y0 = _predict(model, view.X) if cfg.strategy != FIXED_PAIR else None

    def run(f):
        return _fuzz_feature(g, sem, model, ds, view, f, cfg, y0, want_total, True, paths_by_feature[f])

    workers = min(_threads(cfg), len(target.features))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, target.features))
    else:
        results = [run(f) for f in target.features]
    config = cfg.describe()
    config["target"] = {"features": list(target.features), "where": str(target.selector)}
    return InfluenceScore("fuzz", {r.feature: r for r in results}, config)


def fuzz_direct(g, sem, model, ds, target, cfg: FuzzConfig | None = None) -> InfluenceScore:
    cfg = replace(cfg or FuzzConfig(), mode=DIRECT, paths=None)
    return fuzz(g, sem, model, ds, target, cfg)


def fuzz_paths(g, sem, model, ds, target, paths: PathSet, cfg: FuzzConfig | None = None) -> InfluenceScore:
    cfg = replace(cfg or FuzzConfig(), mode=PATHS, paths=PathSet(tuple(map(tuple, paths))))
    return fuzz(g, sem, model, ds, target, cfg)
