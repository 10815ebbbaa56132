"""Reference metrics: permutation importance and group fairness.

Fairness sign conventions follow the usual toolkit defaults: differences
are unprivileged minus privileged, and disparate impact is the
unprivileged-to-privileged ratio of positive prediction rates.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import rng as crng
from .data import Dataset, SubgroupPredicate, parse_predicate
from .errors import BaselineError, DataError
from .models import PredictionModel


def _score(metric: str, y: np.ndarray, pred: np.ndarray) -> float:
    if metric == "rmse":
        return -float(np.sqrt(np.mean((y - pred) ** 2)))
    if metric == "accuracy":
        return float(np.mean((pred >= 0.5) == (y >= 0.5)))
    raise BaselineError(f"unknown metric {metric!r}; use 'rmse' or 'accuracy'")


def permutation_importance(ds: Dataset, model: PredictionModel, feature: str, metric: str = "rmse",
                           seed: int = 0, repeats: int = 5) -> float:
    """Drop in score when ``feature`` is shuffled within its column.

    The rmse score is negated RMSE, so larger importances mean a bigger
    loss of accuracy either way.
    """
    if not ds.has_outcome:
        raise DataError("permutation importance needs an outcome column")
    if repeats < 1:
        raise BaselineError("repeats must be >= 1")
    X, y = ds.X, ds.y
    col = ds.col(feature)
    base = _score(metric, y, model.predict(X))
    rng = np.random.default_rng(int(crng.stream_key(seed, "perm", feature)))
    shuffled = []
    for _ in range(repeats):
        Xp = X.copy()
        Xp[:, col] = rng.permutation(Xp[:, col])
        shuffled.append(_score(metric, y, model.predict(Xp)))
    # mean of per-repeat drops, so an ignored column gives exactly 0
    return float(np.mean([base - s for s in shuffled]))


def permutation_scores(ds, model, features=None, metric="rmse", seed=0, repeats=5) -> dict[str, float]:
    return {f: permutation_importance(ds, model, f, metric, seed, repeats)
            for f in (features or ds.columns)}


@dataclass
class FairnessReport:
    privileged: str
    threshold: float
    spd: float
    di: float
    eod: float | None
    aod: float | None
    n_privileged: int
    n_unprivileged: int
    flags: tuple = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(self.di):
            d["di"] = "inf"
        d["flags"] = list(self.flags)
        return d


def _rate(mask: np.ndarray) -> float:
    return float(mask.mean()) if mask.size else float("nan")


def fairness_metrics(ds: Dataset, model: PredictionModel, privileged: SubgroupPredicate | str,
                     threshold: float = 0.5, label_threshold: float | None = None) -> FairnessReport:
    """SPD, DI, EOD and AOD with rows matching ``privileged`` as the privileged group.

    EOD and AOD need 0/1 outcome labels (or ``label_threshold`` to binarize
    a continuous outcome); otherwise they are ``None``.
    """
    if isinstance(privileged, str):
        privileged = parse_predicate(privileged)
    privileged.bind(ds.schema)
    priv = privileged.mask(ds)
    unpriv = ~priv
    if not priv.any():
        raise DataError(f"privileged group {str(privileged)!r} is empty")
    if not unpriv.any():
        raise DataError(f"unprivileged group (not {str(privileged)!r}) is empty")
    yhat = model.predict(ds.X) >= threshold
    flags = []
    p_u, p_p = _rate(yhat[unpriv]), _rate(yhat[priv])
    spd = p_u - p_p
    if p_p == 0:
        di = math.inf if p_u > 0 else 1.0
        flags.append("di-zero-denominator")
    else:
        di = p_u / p_p
    eod = aod = None
    if ds.has_outcome:
        y = ds.y
        if label_threshold is not None:
            labels = y >= label_threshold
        elif np.all(np.isin(y, (0.0, 1.0))):
            labels = y == 1.0
        else:
            labels = None
            flags.append("no-binary-labels")
        if labels is not None:
            tpr_u, tpr_p = _rate(yhat[unpriv & labels]), _rate(yhat[priv & labels])
            fpr_u, fpr_p = _rate(yhat[unpriv & ~labels]), _rate(yhat[priv & ~labels])
            eod = tpr_u - tpr_p
            aod = 0.5 * ((fpr_u - fpr_p) + (tpr_u - tpr_p))
            if math.isnan(eod):
                eod = None
                flags.append("eod-empty-positive-class")
            if math.isnan(aod):
                aod = None
                flags.append("aod-empty-class")
    return FairnessReport(str(privileged), threshold, spd, di, eod, aod,
                          int(priv.sum()), int(unpriv.sum()), tuple(flags))


def privileged_group(ds: Dataset, feature: str) -> SubgroupPredicate:
    """Default privileged group: the last category, or values above the median."""
    decl = ds.decl(feature)
    if decl.is_categorical:
        lit = decl.domain[-1]
        return parse_predicate(f"{feature}={lit}")
    med = float(np.median(ds.column(feature)))
    return parse_predicate(f"{feature}>{med!r}")


def fairness_by_feature(ds, model, threshold=0.5, features=None, label_threshold=None) -> dict:
    out = {}
    for f in features or ds.columns:
        try:
            out[f] = fairness_metrics(ds, model, privileged_group(ds, f), threshold, label_threshold)
        except DataError as exc:
            out[f] = str(exc)
    return out


# ---------------------------------------------------------------------------
# report-merge format: "feature,score" rows with a header


def read_scores(path) -> dict[str, float]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header[:2] != ["feature", "score"]:
            raise DataError(f"{path}: score files need a 'feature,score' header")
        scores = {}
        for i, row in enumerate(reader, start=1):
            if not row:
                continue
            try:
                scores[row[0].strip()] = float(row[1])
            except (IndexError, ValueError):
                raise DataError(f"{path}: bad score row {i}: {row!r}") from None
    return scores


def write_scores(scores: dict, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "score"])
        for f, s in scores.items():
            w.writerow([f, repr(float(s))])
