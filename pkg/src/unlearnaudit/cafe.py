"""Backdoor-adjusted influence estimation without per-row propagation.

For each target feature ``f`` the model's outputs on the target rows are
contrasted between a baseline and a treatment value of ``f``, adjusting
for the backdoor set ``Z`` (total effect) and additionally for the
mediators ``M`` and their other parents (direct effect). Indirect is total
minus direct. The regression estimator also adjusts for the feature's
other non-descendants, which leaves it unbiased and cuts its variance.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .data import Dataset, UnlearningTarget
from .errors import DataError, EstimatorDegenerateError, EstimatorError
from .graph import CausalGraph
from .models import PredictionModel
from .scores import FeatureScore, InfluenceScore, rank_features  # noqa: F401  (re-exported)
from .sem import solve_design

REGRESSION = "regression"
STRATIFIED = "stratified"
UNLEARNED = "unlearned"
RESIDUAL = "residual-influence"
CANCELLATION_RATIO = 0.1


@dataclass
class CafeConfig:
    estimator: str = REGRESSION
    interventions: dict = field(default_factory=dict)
    tau: float | None = None
    tau_fraction: float = 0.01
    max_cells: int = 64
    bins: int = 10
    weighting: str = "probability"
    bootstrap: int = 0
    seed: int = 0
    precision: bool = True

    def validate(self):
        if self.estimator not in (REGRESSION, STRATIFIED):
            raise EstimatorError(f"unknown estimator {self.estimator!r}")
        if self.tau is not None and self.tau < 0:
            raise EstimatorError("threshold tau must be >= 0")
        if self.weighting not in ("probability", "unweighted"):
            raise EstimatorError(f"unknown weighting {self.weighting!r}")
        for f, (b, t) in self.interventions.items():
            if b == t:
                raise EstimatorError(f"{f}: baseline and treatment must differ")

    def describe(self) -> dict:
        d = asdict(self)
        d["interventions"] = {k: list(v) for k, v in self.interventions.items()}
        return d


def intervention_pair(ds: Dataset, view: Dataset, f: str, cfg: CafeConfig) -> tuple[float, float]:
    """(baseline, treatment) codes; defaults are the first two categories or a one-unit step."""
    decl = ds.decl(f)
    if f in cfg.interventions:
        b, t = cfg.interventions[f]
        if decl.is_categorical:
            try:
                return decl.encode(b), decl.encode(t)
            except ValueError:
                raise DataError(f"{f}: intervention values {b!r}, {t!r} not in domain") from None
        return float(b), float(t)
    if decl.is_categorical:
        codes = decl.codes()
        if len(codes) < 2:
            raise EstimatorError(f"{f}: a one-value domain admits no intervention")
        return codes[0], codes[1]
    b = float(view.column(f).mean())
    return b, b + 1.0


# ---------------------------------------------------------------------------
# regression-adjusted estimator


def _encode(ds: Dataset, view: Dataset, names) -> np.ndarray:
    blocks = []
    for z in sorted(names, key=ds.col):
        decl = ds.decl(z)
        x = view.column(z)
        if decl.is_categorical and len(decl.domain) > 2:
            for c in decl.codes()[1:]:
                blocks.append((x == c).astype(float))
        else:
            blocks.append(x)
    return np.column_stack(blocks) if blocks else np.zeros((view.n_rows, 0))


def _regression_effect(ds, view, out, f, adjust, pair):
    decl = ds.decl(f)
    b, t = pair
    x = view.column(f)
    if decl.is_categorical and len(decl.domain) > 2:
        others = [c for c in decl.codes() if c != b]
        fcols = np.column_stack([(x == c).astype(float) for c in others])
        pick = others.index(t)
        scale = 1.0
    else:
        fcols, pick, scale = x[:, None], 0, (t - b)
    A = np.column_stack([np.ones(view.n_rows), fcols, _encode(ds, view, adjust)])
    coef, ridged = solve_design(A, out)
    return float(coef[1 + pick] * scale), ridged


# ---------------------------------------------------------------------------
# stratified estimator


def _strata(ds, view, names, cfg) -> np.ndarray:
    """Integer stratum label per row; continuous columns are cut into quantile bins."""
    keys = []
    for z in sorted(names, key=ds.col):
        x = view.column(z)
        if ds.decl(z).is_categorical:
            keys.append(x)
        else:
            edges = np.unique(np.quantile(x, np.linspace(0, 1, cfg.bins + 1)[1:-1]))
            keys.append(np.searchsorted(edges, x, side="right").astype(float))
    if not keys:
        return np.zeros(view.n_rows, dtype=np.intp)
    _, labels = np.unique(np.column_stack(keys), axis=0, return_inverse=True)
    return labels.ravel()


def _stratified_effect(ds, view, out, f, adjust, pair, cfg):
    labels = _strata(ds, view, adjust, cfg)
    cells = np.unique(labels)
    if len(cells) > cfg.max_cells:
        raise EstimatorDegenerateError(
            f"{f}: {len(cells)} strata exceed the cap of {cfg.max_cells}")
    b, t = pair
    x = view.column(f)
    discrete = ds.decl(f).is_categorical
    n = view.n_rows
    diffs, weights, dropped_rows, dropped_cells = [], [], 0, 0
    for c in cells:
        rows = labels == c
        if discrete:
            on, off = rows & (x == t), rows & (x == b)
            if on.sum() < 2 or off.sum() < 2:
                dropped_rows += int(rows.sum())
                dropped_cells += 1
                continue
            diffs.append(out[on].mean() - out[off].mean())
        else:
            xs, ys = x[rows], out[rows]
            var = ((xs - xs.mean()) ** 2).sum()
            if rows.sum() < 2 or var <= 0:
                dropped_rows += int(rows.sum())
                dropped_cells += 1
                continue
            slope = ((xs - xs.mean()) * (ys - ys.mean())).sum() / var
            diffs.append(slope * (t - b))
        weights.append(rows.sum())
    if dropped_rows > 0.5 * n or not diffs:
        raise EstimatorDegenerateError(
            f"{f}: {dropped_rows} of {n} rows fall in strata lacking both arms")
    diffs = np.asarray(diffs, dtype=float)
    if cfg.weighting == "unweighted":
        est = float(diffs.sum())
    else:
        w = np.asarray(weights, dtype=float)
        est = float((w / w.sum()) @ diffs)
    return est, {"strata": int(len(cells)), "dropped_strata": dropped_cells,
                 "dropped_rows": dropped_rows}


def direct_adjustment(g: CausalGraph, f: str, Z: set, M: set) -> set:
    """Backdoor set, mediators, and the mediators' other parents.

    Holding a mediator fixed opens any collider it sits on; its remaining
    parents (never descendants of ``f``) close those paths again.
    """
    confounders = set()
    for m in M:
        confounders |= set(g.parents(m))
    return (Z | M | confounders) - {f, g.outcome}


def precision_covariates(g: CausalGraph, f: str, columns) -> set:
    """Features that are not descendants of ``f``.

    Any superset of Pa(f) free of descendants of ``f`` still blocks every
    backdoor path, so adding these keeps the regression unbiased while
    soaking up output variance the model draws from other inputs.
    """
    return (set(columns) & set(g.features)) - g.descendants(f) - {f}


def _effects(ds, view, out, f, Z, D, pair, cfg):
    if cfg.estimator == REGRESSION:
        total, r1 = _regression_effect(ds, view, out, f, Z, pair)
        direct, r2 = _regression_effect(ds, view, out, f, D, pair)
        return total, direct, {"ridged": r1 or r2}
    total, d1 = _stratified_effect(ds, view, out, f, Z, pair, cfg)
    direct, d2 = _stratified_effect(ds, view, out, f, D, pair, cfg)
    return total, direct, {"total_strata": d1, "direct_strata": d2}


def default_threshold(ds: Dataset, outputs: np.ndarray, fraction: float) -> float:
    ref = ds.y if ds.has_outcome else outputs
    return float(fraction * np.std(ref))


def cafe_estimate(g: CausalGraph, ds: Dataset, model: PredictionModel, target: UnlearningTarget,
                  cfg: CafeConfig | None = None) -> InfluenceScore:
    """Per-feature total/direct/indirect influence and the pass/fail verdict."""
    cfg = cfg or CafeConfig()
    cfg.validate()
    if tuple(model.features) != tuple(ds.columns):
        raise DataError(f"model expects features {list(model.features)}, data has {list(ds.columns)}")
    view = target.rows(ds)
    out = model.predict(view.X)
    scores = {}
    for f in target.features:
        Z = g.backdoor_set(f)
        M = g.mediators(f)
        D = direct_adjustment(g, f, Z, M)
        extra = set()
        if cfg.estimator == REGRESSION and cfg.precision:
            extra = precision_covariates(g, f, ds.columns) - Z
        Za, Da = Z | extra, D | extra
        pair = intervention_pair(ds, view, f, cfg)
        total, direct, info = _effects(ds, view, out, f, Za, Da, pair, cfg)
        s = FeatureScore(f, total, direct, n_samples=view.n_rows)
        s.details = {"backdoor_set": sorted(Z, key=g.position), "mediators": sorted(M, key=g.position),
                     "direct_adjustment": sorted(D, key=g.position),
                     "precision_covariates": sorted(extra, key=g.position),
                     "baseline": pair[0], "treatment": pair[1], **info}
        if info.get("ridged"):
            s.flags.append("collinear-design-ridge")
        if cfg.bootstrap:
            s.details["bootstrap_total_range"] = _bootstrap(ds, view, out, f, Za, Da, pair, cfg)
        scores[f] = s
    tau = cfg.tau if cfg.tau is not None else default_threshold(ds, out, cfg.tau_fraction)
    result = InfluenceScore("cafe", scores, cfg.describe(), threshold=tau)
    result.config["target"] = {"features": list(target.features), "where": str(target.selector)}
    result.verdict = UNLEARNED if abs(result.combined_total()) < tau else RESIDUAL
    return result


def _bootstrap(ds, view, out, f, Z, D, pair, cfg, resamples=None):
    rng = np.random.default_rng(cfg.seed)
    vals = []
    for _ in range(resamples or cfg.bootstrap):
        idx = rng.integers(0, view.n_rows, size=view.n_rows)
        sub = view.take(idx)
        try:
            total, _, _ = _effects(ds, sub, out[idx], f, Z, D, pair, cfg)
        except EstimatorDegenerateError:
            continue
        vals.append(total)
    if not vals:
        return None
    return [float(np.percentile(vals, 2.5)), float(np.percentile(vals, 97.5))]


@dataclass
class MultiFeatureEffect:
    score: InfluenceScore
    combined: float
    absolute_sum: float

    @property
    def cancellation(self) -> bool:
        """Per-feature effects largely offset each other."""
        return self.absolute_sum > 0 and abs(self.combined) < CANCELLATION_RATIO * self.absolute_sum

    def to_dict(self) -> dict:
        return {"combined_total": self.combined, "absolute_sum": self.absolute_sum,
                "cancellation": self.cancellation, **self.score.to_dict()}


def multi_feature_effect(g: CausalGraph, ds: Dataset, model: PredictionModel, features,
                         cfg: CafeConfig | None = None, where: str = "") -> MultiFeatureEffect:
    features = tuple(features)
    if len(features) < 2:
        raise EstimatorError("multi-feature effect needs at least two features")
    score = cafe_estimate(g, ds, model, UnlearningTarget.parse(features, where), cfg)
    totals = [s.total for s in score]
    return MultiFeatureEffect(score, float(sum(totals)), float(sum(abs(t) for t in totals)))
