import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unlearnaudit.errors import PerturbationError
from unlearnaudit.fuzz import FuzzConfig
from unlearnaudit.graph import CausalGraph, make_graph
from unlearnaudit.models import train
from unlearnaudit.robustness import (ADD, FULL, REMOVE, PerturbationSpec, architecture_sweep, benchmark,
                                     perturb_graph, rank_change)
from unlearnaudit.synth import generate

from conftest import random_dag, random_linear_spec


def test_remove_half_of_heart(heart_graph):
    g2 = perturb_graph(heart_graph, PerturbationSpec(REMOVE, 0.5, seed=1))
    assert len(g2.edges) == 2
    assert set(g2.edges) <= set(heart_graph.edges)
    assert g2.parents("risk")


def test_fully_connect_five_nodes(heart_graph):
    g2 = perturb_graph(heart_graph, PerturbationSpec(FULL))
    assert len(g2.edges) == 10
    with pytest.raises(PerturbationError):
        perturb_graph(g2, PerturbationSpec(ADD, 0.5))


def test_spec_validation():
    with pytest.raises(PerturbationError):
        PerturbationSpec("shuffle")
    with pytest.raises(PerturbationError):
        PerturbationSpec(ADD, 0.0)
    with pytest.raises(PerturbationError):
        PerturbationSpec(REMOVE, 1.5)


def test_deterministic_under_seed(heart_graph):
    a = perturb_graph(heart_graph, PerturbationSpec(ADD, 0.4, seed=3))
    b = perturb_graph(heart_graph, PerturbationSpec(ADD, 0.4, seed=3))
    assert a.edges == b.edges
    assert len(a.edges) == len(heart_graph.edges) + 2


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 8), st.sampled_from([ADD, REMOVE, FULL]),
       st.floats(0.05, 1.0), st.integers(0, 100))
def test_perturbed_graph_is_valid(seed, n, kind, fraction, pseed):
    g = random_dag(np.random.default_rng(seed), n, 0.5)
    g = g.with_edges(list(g.edges) + [(g.names[0], g.outcome)] if (g.names[0], g.outcome) not in g.edges
                     else list(g.edges))
    try:
        g2 = perturb_graph(g, PerturbationSpec(kind, fraction, pseed))
    except PerturbationError:
        assert kind == ADD
        return
    CausalGraph.from_dict(g2.to_dict())
    assert g2.parents(g2.outcome)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 6))
def test_rank_change_identity(seed, k):
    spec = random_linear_spec(np.random.default_rng(seed), k, n=200)
    ds = generate(spec)
    assert rank_change(spec.graph, spec.graph, ds, train("linear", ds)) == 0.0


def test_zero_coefficient_edge(heart_spec, heart_data):
    g_extra = heart_spec.graph.with_edges(list(heart_spec.graph.edges) + [("exercise", "risk")])
    model = train("linear", heart_data)
    assert rank_change(g_extra, heart_spec.graph, heart_data, model) == 0.0
    with pytest.raises(PerturbationError):
        rank_change(heart_spec.graph, make_graph([("a", "y")], "y"), heart_data, model)


def test_fully_connected_shift_is_reported(heart_spec, heart_data):
    g2 = perturb_graph(heart_spec.graph, PerturbationSpec(FULL))
    pct = rank_change(heart_spec.graph, g2, heart_data, train("linear", heart_data))
    assert 0.0 <= pct <= 100.0


def test_benchmark(heart_graph, heart_data):
    model = train("linear", heart_data)
    with pytest.raises(PerturbationError):
        benchmark(["cafe"], heart_graph, heart_data, model, repeats=1)
    with pytest.raises(PerturbationError):
        benchmark(["shap"], heart_graph, heart_data, model)
    table = benchmark(["cafe", "fuzz", "permutation"], heart_graph, heart_data, model)
    assert table["cafe"] < 5 and table["permutation"] < 5
    assert table["fuzz"] >= 5 * table["cafe"]


def test_cafe_time_independent_of_k(heart_graph, heart_data):
    model = train("linear", heart_data)
    t = [benchmark(["cafe"], heart_graph, heart_data, model, fuzz_cfg=FuzzConfig(samples=k))["cafe"]
         for k in (1, 100)]
    assert max(t) < 5 * min(t) + 0.01


def test_architecture_sweep(heart_graph, heart_data):
    out = architecture_sweep(heart_graph, heart_data, kinds=("linear", "trees"),
                             hyperparams={"trees": {"trees": 5, "depth": 4}})
    assert set(out) == {"linear", "trees"}
    for res in out.values():
        assert res["ranks"]["smoking"] == 1
