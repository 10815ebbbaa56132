"""Influence score containers shared by the fuzzing oracle and the estimator."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class FeatureScore:
    """Total and direct influence of one feature; indirect is their difference.

    Either component may be ``None`` when the method did not compute it
    (e.g. direct-only fuzzing has no total).
    """

    feature: str
    total: float | None = None
    direct: float | None = None
    n_samples: int = 0
    max_abs_delta: float | None = None
    paths: dict = field(default_factory=dict)
    instances: dict = field(default_factory=dict, repr=False)
    flags: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def indirect(self) -> float | None:
        if self.total is None or self.direct is None:
            return None
        return self.total - self.direct

    def to_dict(self) -> dict:
        d = {"total": self.total, "direct": self.direct, "indirect": self.indirect,
             "n_samples": self.n_samples}
        if self.max_abs_delta is not None:
            d["max_abs_delta"] = self.max_abs_delta
        if self.paths:
            d["paths"] = [{"path": list(p), "score": s} for p, s in self.paths.items()]
        if self.flags:
            d["flags"] = list(self.flags)
        if self.details:
            d["details"] = self.details
        return d


@dataclass
class InfluenceScore:
    method: str
    scores: dict[str, FeatureScore]
    config: dict = field(default_factory=dict)
    threshold: float | None = None
    verdict: str | None = None

    def __getitem__(self, feature) -> FeatureScore:
        return self.scores[feature]

    def __iter__(self):
        return iter(self.scores.values())

    @property
    def features(self) -> tuple[str, ...]:
        return tuple(self.scores)

    def totals(self) -> dict[str, float]:
        return {f: s.total for f, s in self.scores.items()}

    def combined_total(self) -> float:
        return float(sum(s.total for s in self.scores.values() if s.total is not None))

    def to_dict(self) -> dict:
        d = {"method": self.method, "config": self.config,
             "features": {f: s.to_dict() for f, s in self.scores.items()}}
        if self.threshold is not None:
            d["threshold"] = self.threshold
            d["combined_total"] = self.combined_total()
            d["verdict"] = self.verdict
        return d


def rank_features(scores, order=None) -> list[tuple[str, int]]:
    """Features by descending |total|, ties in declaration order; ranks are 1-based.

    ``scores`` is an InfluenceScore or a ``{feature: value}`` mapping;
    ``order`` defaults to the mapping's own order.
    """
    if isinstance(scores, InfluenceScore):
        values = {f: (s.total if s.total is not None else s.direct) for f, s in scores.scores.items()}
    else:
        values = dict(scores)
    if not values:
        raise ValueError("rank_features needs at least one scored feature")
    order = list(values) if order is None else [f for f in order if f in values]
    pos = {f: i for i, f in enumerate(order)}
    ranked = sorted(order, key=lambda f: (-abs(float(values[f] or 0.0)), pos[f]))
    return [(f, i + 1) for i, f in enumerate(ranked)]


def ranks(scores, order=None) -> dict[str, int]:
    return dict(rank_features(scores, order))


def spearman(a: dict, b: dict) -> float:
    """Spearman correlation between two rank maps over the same features."""
    feats = sorted(a)
    if set(feats) != set(b):
        raise ValueError("rank maps cover different features")
    x = np.array([a[f] for f in feats], dtype=float)
    y = np.array([b[f] for f in feats], dtype=float)
    if len(feats) < 2:
        return 1.0
    x -= x.mean()
    y -= y.mean()
    return float((x @ y) / np.sqrt((x @ x) * (y @ y)))
