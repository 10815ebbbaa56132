"""Graph mis-specification sweeps and timing comparisons."""

from __future__ import annotations

import math
import statistics
import time
from dataclasses import dataclass

import numpy as np

from .baselines import permutation_importance
from .cafe import CafeConfig, cafe_estimate
from .data import Dataset, UnlearningTarget
from .errors import PerturbationError
from .fuzz import FuzzConfig, fuzz
from .graph import CausalGraph
from .models import PredictionModel, train
from .scores import ranks
from .sem import StructuralModelSet, fit_sem

ADD, REMOVE, FULL = "add-edges", "remove-edges", "fully-connect"


@dataclass(frozen=True)
class PerturbationSpec:
    kind: str
    fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (ADD, REMOVE, FULL):
            raise PerturbationError(f"unknown perturbation {self.kind!r}")
        if self.kind != FULL and not (0.0 < self.fraction <= 1.0):
            raise PerturbationError("fraction must lie in (0, 1]")


def _forward_order(g: CausalGraph) -> list[str]:
    # the outcome is a sink, so it can always go last
    order = [n for n in g.topological_order() if n != g.outcome]
    return order + [g.outcome]


def perturb_graph(g: CausalGraph, spec: PerturbationSpec) -> CausalGraph:
    """Add, remove or complete edges; added edges point forward in a fixed order."""
    order = _forward_order(g)
    forward = [(a, b) for i, a in enumerate(order) for b in order[i + 1:]]
    present = set(g.edges)
    rng = np.random.default_rng(spec.seed)
    if spec.kind == FULL:
        return g.with_edges(forward)
    count = math.ceil(spec.fraction * len(g.edges))
    if spec.kind == ADD:
        absent = [e for e in forward if e not in present]
        if not absent:
            raise PerturbationError("graph is already complete; no edge to add")
        pick = rng.choice(len(absent), size=min(count, len(absent)), replace=False)
        return g.with_edges(list(g.edges) + [absent[i] for i in sorted(pick)])
    edges = list(g.edges)
    into_y = sum(1 for a, b in edges if b == g.outcome)
    removed = set()
    for i in rng.permutation(len(edges)):
        if len(removed) == count:
            break
        a, b = edges[i]
        if b == g.outcome and into_y == 1:
            continue
        removed.add(i)
        into_y -= b == g.outcome
    return g.with_edges([e for i, e in enumerate(edges) if i not in removed])


def rank_change(g: CausalGraph, g2: CausalGraph, ds: Dataset, model: PredictionModel,
                cfg: CafeConfig | None = None, features=None, where: str = "") -> float:
    """Percentage of features whose influence rank moves when ``g`` is replaced by ``g2``."""
    if set(g.names) != set(g2.names):
        raise PerturbationError("graphs must share the same node set")
    feats = tuple(features or ds.columns)
    target = UnlearningTarget.parse(feats, where)
    r1 = ranks(cafe_estimate(g, ds, model, target, cfg), feats)
    r2 = ranks(cafe_estimate(g2, ds, model, target, cfg), feats)
    moved = sum(r1[f] != r2[f] for f in feats)
    return 100.0 * moved / len(feats)


def benchmark(methods, g: CausalGraph, ds: Dataset, model: PredictionModel, repeats: int = 3,
              features=None, fuzz_cfg: FuzzConfig | None = None, cafe_cfg: CafeConfig | None = None,
              sem: StructuralModelSet | None = None) -> dict[str, float]:
    """Median wall time in seconds per method, after one untimed warm-up run."""
    if repeats < 3:
        raise PerturbationError("benchmark needs repeats >= 3")
    feats = tuple(features or ds.columns)
    target = UnlearningTarget(feats)
    sem = sem or fit_sem(g, ds)
    # timings run on one worker so thread contention does not skew them
    fuzz_cfg = fuzz_cfg or FuzzConfig(threads=1)
    runners = {
        "cafe": lambda: cafe_estimate(g, ds, model, target, cafe_cfg),
        "fuzz": lambda: fuzz(g, sem, model, ds, target, fuzz_cfg),
        "permutation": lambda: [permutation_importance(ds, model, f) for f in feats],
    }
    table = {}
    for m in methods:
        if m not in runners:
            raise PerturbationError(f"unknown benchmark method {m!r}")
        runners[m]()
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            runners[m]()
            times.append(time.perf_counter() - t0)
        table[m] = statistics.median(times)
    return table


def architecture_sweep(g: CausalGraph, ds: Dataset, kinds=("linear", "trees", "mlp"), features=None,
                       cfg: CafeConfig | None = None, seed: int = 0, hyperparams: dict | None = None) -> dict:
    """Train each model kind on ``ds`` and rank features by the estimator under each."""
    feats = tuple(features or ds.columns)
    target = UnlearningTarget(feats)
    out = {}
    for kind in kinds:
        model = train(kind, ds, seed=seed, hyperparams=(hyperparams or {}).get(kind))
        score = cafe_estimate(g, ds, model, target, cfg)
        out[kind] = {"totals": score.totals(), "ranks": ranks(score, feats)}
    return out
