"""Report assembly and serialization.

Everything that can change between identical runs (wall-clock timestamp,
timings) lives under the single ``volatile`` key, so two reports from the
same configuration and seed are byte-identical once that key is dropped.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DataError
from .scores import InfluenceScore, rank_features

REPORT_VERSION = 1


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def canonical(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, separators=(",", ":"))


def digest(text: str | bytes) -> str:
    if isinstance(text, str):
        text = text.encode("utf-8")
    return hashlib.sha256(text).hexdigest()


def file_digest(path) -> str:
    return digest(Path(path).read_bytes())


class InfluenceReport:
    def __init__(self, config: dict, graph_hash: str, data_hash: str, seed: int):
        self.config = config
        self.provenance = {
            "code_version": __version__,
            "config_hash": digest(canonical(config)),
            "graph_hash": graph_hash,
            "data_hash": data_hash,
            "seed": seed,
        }
        self.methods: dict = {}
        self.rankings: dict = {}
        self.subgroups: dict = {}
        self.verdict: dict | None = None
        self.timings: dict = {}

    def add_scores(self, name: str, score: InfluenceScore, order) -> None:
        self.methods[name] = score.to_dict()
        self.rankings[name] = [{"feature": f, "rank": r} for f, r in rank_features(score, order)]
        if score.threshold is not None:
            self.verdict = {"method": name, "threshold": score.threshold,
                            "combined_total": score.combined_total(), "status": score.verdict}

    def add_baseline(self, name: str, values: dict, order) -> None:
        self.methods[name] = {"method": name, "features": dict(values)}
        self.rankings[name] = [{"feature": f, "rank": r} for f, r in rank_features(values, order)]

    def to_dict(self) -> dict:
        d = {
            "report_version": REPORT_VERSION,
            "provenance": self.provenance,
            "config": self.config,
            "methods": self.methods,
            "rankings": self.rankings,
            "volatile": {
                "generated_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
                "timings_s": self.timings,
            },
        }
        if self.subgroups:
            d["subgroups"] = self.subgroups
        if self.verdict is not None:
            d["verdict"] = self.verdict
        return _clean(d)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def write(self, path) -> list[Path]:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps(), encoding="utf-8")
        table = path.with_suffix(".influence.csv")
        write_influence_table(self.to_dict(), table)
        return [path, table]


def write_influence_table(report: dict, path) -> None:
    """Flat plot data: one row per (method, feature)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "feature", "total", "direct", "indirect", "rank"])
        for method, body in report["methods"].items():
            ranks = {r["feature"]: r["rank"] for r in report["rankings"].get(method, [])}
            for f, v in body.get("features", {}).items():
                if isinstance(v, dict) and "total" in v:
                    row = [v.get("total"), v.get("direct"), v.get("indirect")]
                elif isinstance(v, (int, float)):
                    row = [v, "", ""]
                else:
                    continue
                w.writerow([method, f] + ["" if x is None else x for x in row] + [ranks.get(f, "")])


def load_report(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not a JSON report ({exc})") from None


def report_sources(report: dict) -> dict[str, dict[str, float]]:
    """Per-method ``{feature: score}`` maps found in a report (totals for causal methods)."""
    out = {}
    for method, body in report.get("methods", {}).items():
        feats = body.get("features", {})
        vals = {}
        for f, v in feats.items():
            if isinstance(v, dict):
                x = v.get("total") if v.get("total") is not None else v.get("direct")
                if x is not None:
                    vals[f] = float(x)
            elif isinstance(v, (int, float)):
                vals[f] = float(v)
        if vals:
            out[method] = vals
    return out


def comparison_table(sources: dict[str, dict[str, float]]) -> tuple[list[str], list[list]]:
    """Side-by-side table: per-method max-abs-normalised score and rank, side by side."""
    if len(sources) < 2:
        raise DataError("comparison needs at least two score sources")
    features = []
    for vals in sources.values():
        for f in vals:
            if f not in features:
                features.append(f)
    header = ["feature"]
    cols = []
    for name, vals in sources.items():
        header += [f"{name}_score", f"{name}_normalized", f"{name}_rank"]
        scale = max((abs(v) for v in vals.values()), default=0.0) or 1.0
        rk = dict(rank_features(vals, [f for f in features if f in vals]))
        cols.append((vals, scale, rk))
    header.append("missing")
    rows = []
    for f in features:
        row, missing = [f], []
        for (vals, scale, rk), name in zip(cols, sources):
            if f in vals:
                row += [vals[f], vals[f] / scale, rk[f]]
            else:
                row += ["", "", ""]
                missing.append(name)
        row.append(";".join(missing))
        rows.append(row)
    return header, rows
