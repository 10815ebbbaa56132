import json
import math

import numpy as np
import pytest

from unlearnaudit.errors import DataError
from unlearnaudit.report import InfluenceReport, canonical, comparison_table, report_sources
from unlearnaudit.scores import FeatureScore, InfluenceScore, rank_features, spearman


def test_canonical_handles_numpy_and_non_finite():
    text = canonical({"a": np.float64(1.5), "b": np.int64(2), "c": math.inf, "d": np.array([1.0, np.nan]),
                      "e": np.bool_(True)})
    assert json.loads(text) == {"a": 1.5, "b": 2, "c": "inf", "d": [1.0, "nan"], "e": True}


def test_comparison_table_normalises_and_flags_missing():
    header, rows = comparison_table({"m1": {"a": 2.0, "b": -4.0}, "m2": {"a": 1.0}})
    assert header == ["feature", "m1_score", "m1_normalized", "m1_rank", "m2_score", "m2_normalized",
                      "m2_rank", "missing"]
    by = {r[0]: r for r in rows}
    assert by["b"][1:4] == [-4.0, -1.0, 1]
    assert by["a"][2] == 0.5 and by["a"][5] == 1.0
    assert by["b"][-1] == "m2"
    with pytest.raises(DataError):
        comparison_table({"only": {"a": 1.0}})


def test_report_sources_and_verdict():
    score = InfluenceScore("cafe", {"a": FeatureScore("a", 2.0, 0.5)}, threshold=0.1, verdict="residual-influence")
    rep = InfluenceReport({"x": 1}, "g", "d", 0)
    rep.add_scores("cafe", score, ["a"])
    rep.add_baseline("permutation", {"a": 0.0}, ["a"])
    d = rep.to_dict()
    assert d["verdict"]["status"] == "residual-influence"
    assert report_sources(d) == {"cafe": {"a": 2.0}, "permutation": {"a": 0.0}}
    assert d["methods"]["cafe"]["features"]["a"]["indirect"] == 1.5


def test_rank_and_spearman():
    assert rank_features({"a": -3.0, "b": 3.0, "c": 1.0}, ["a", "b", "c"]) == [("a", 1), ("b", 2), ("c", 3)]
    assert spearman({"a": 1, "b": 2, "c": 3}, {"a": 1, "b": 2, "c": 3}) == pytest.approx(1.0)
    assert spearman({"a": 1, "b": 2, "c": 3}, {"a": 3, "b": 2, "c": 1}) == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        spearman({"a": 1}, {"b": 1})
