import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from unlearnaudit.data import Dataset
from unlearnaudit.errors import SEMError
from unlearnaudit.graph import VariableDecl, make_graph
from unlearnaudit.sem import (DOMAIN_GRID, FIXED_PAIR, LINEAR, LOGIT, StructuralModel, StructuralModelSet,
                              fit_sem, irls_logistic, least_squares, predict_node, sample_intervention,
                              solve_design)

CONT = VariableDecl("x", "continuous", (0.0, 10.0))
BIN = VariableDecl("s", "categorical", (0, 1))


def _normal_eq(P, y):
    A = np.column_stack([np.ones(len(y)), P])
    return np.linalg.solve(A.T @ A, A.T @ y)


def test_fit_recovers_heart_coefficient(heart_data, heart_graph):
    sem = fit_sem(heart_graph, heart_data)
    m = sem["blood_pressure"]
    assert m.parents == ("smoking",)
    assert 9.9 <= m.coef[1] <= 10.1
    assert abs(predict_node(m, [1.0]) - 10.0) < 0.2


def test_roots_have_no_model(heart_data, heart_graph):
    sem = fit_sem(heart_graph, heart_data)
    assert "smoking" not in sem and "exercise" not in sem
    assert "risk" not in sem
    assert "risk" in fit_sem(heart_graph, heart_data, include_outcome=True)


def test_child_identical_to_parent():
    g = make_graph([("p", "c"), ("c", "y")], "y", kinds={"p": "continuous", "c": "continuous"})
    p = np.linspace(0, 1, 50)
    ds = Dataset((g.decl("p"), g.decl("c")), np.column_stack([p, p]), p, "y")
    m = fit_sem(g, ds)["c"]
    assert m.coef[1] == pytest.approx(1.0, abs=1e-12)
    assert m.residual == pytest.approx(0.0, abs=1e-12)


def test_predict_node_examples():
    m = StructuralModel("v", ("p",), LINEAR, np.array([2.0, 3.0]))
    assert predict_node(m, [1.0]) == 5.0
    with pytest.raises(SEMError):
        predict_node(m, [1.0, 2.0])
    tie = StructuralModel("v", ("p",), LOGIT, np.array([[0.0, 1.0], [0.0, 1.0]]), classes=(0.0, 1.0))
    assert predict_node(tie, [0.0]) == 0.0


def test_logit_node_fit():
    rng = np.random.default_rng(0)
    g = make_graph([("a", "b"), ("b", "y")], "y")
    a = rng.integers(0, 2, 4000).astype(float)
    b = np.where(rng.random(4000) < np.where(a == 1, 0.9, 0.1), 1.0, 0.0)
    ds = Dataset((g.decl("a"), g.decl("b")), np.column_stack([a, b]), b, "y")
    m = fit_sem(g, ds)["b"]
    assert m.form == LOGIT
    assert predict_node(m, [1.0]) == 1.0 and predict_node(m, [0.0]) == 0.0


def test_irls_converges_on_overlapping_classes():
    rng = np.random.default_rng(1)
    x = rng.normal(size=2000)
    y = (rng.random(2000) < 1 / (1 + np.exp(-(0.5 + 2 * x)))).astype(float)
    coef, converged = irls_logistic(x[:, None], y)
    assert converged
    assert abs(coef[0] - 0.5) < 0.2 and abs(coef[1] - 2.0) < 0.3


def test_rank_deficient_uses_ridge():
    x = np.arange(10.0)
    coef, ridged = least_squares(np.column_stack([x, x]), 2 * x)
    assert ridged
    assert coef[1] + coef[2] == pytest.approx(2.0, abs=1e-6)


def test_propagation_determinism(heart_data, heart_graph):
    sem = fit_sem(heart_graph, heart_data)
    P = heart_data.X[:20, [0, 1]]
    assert np.array_equal(sem["bmi"].predict(P), sem["bmi"].predict(P))


def test_sem_roundtrip(tmp_path, heart_data, heart_graph):
    sem = fit_sem(heart_graph, heart_data)
    sem.save(tmp_path / "sem.json")
    back = StructuralModelSet.load(tmp_path / "sem.json")
    P = heart_data.X[:50, [0, 1]]
    assert np.array_equal(back["bmi"].predict(P), sem["bmi"].predict(P))


def test_sample_intervention_examples():
    rng = np.random.default_rng(0)
    vals = {float(v) for v in sample_intervention(BIN, rng, DOMAIN_GRID, size=200)}
    assert vals == {0.0, 1.0}
    assert sample_intervention(BIN, rng, FIXED_PAIR, pair=(0, 1)) == 1.0
    grid = {float(v) for v in sample_intervention(CONT, rng, DOMAIN_GRID, size=500)}
    assert grid == {float(i) for i in range(11)}
    with pytest.raises(SEMError):
        sample_intervention(BIN, rng, FIXED_PAIR)


# -- properties ------------------------------------------------------------


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(10, 60))
def test_least_squares_matches_normal_equations(seed, k, n):
    rng = np.random.default_rng(seed)
    P = rng.normal(size=(n, k))
    y = rng.normal(size=n)
    coef, ridged = least_squares(P, y)
    assert not ridged
    np.testing.assert_allclose(coef, _normal_eq(P, y), rtol=1e-7, atol=1e-9)


def test_coefficients_converge_with_n():
    n, hits = 2000, 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=n)
        y = 1.5 - 2.0 * x + rng.normal(size=n)
        coef, _ = least_squares(x[:, None], y)
        hits += abs(coef[1] + 2.0) < 5 / np.sqrt(n) and abs(coef[0] - 1.5) < 5 / np.sqrt(n)
    assert hits >= 19


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_fitted_rmse_within_residual(seed):
    rng = np.random.default_rng(seed)
    g = make_graph([("a", "b"), ("b", "y")], "y", kinds={"a": "continuous", "b": "continuous"})
    a = rng.normal(size=300)
    b = 3 * a + rng.normal(scale=rng.uniform(0.1, 3), size=300)
    ds = Dataset((g.decl("a"), g.decl("b")), np.column_stack([a, b]), b, "y")
    m = fit_sem(g, ds)["b"]
    rmse = np.sqrt(np.mean((m.predict(a[:, None]) - b) ** 2))
    assert rmse <= 1.1 * m.residual


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (8, 2), elements=st.floats(-5, 5)))
def test_predict_is_deterministic(P):
    m = StructuralModel("v", ("p", "q"), LINEAR, np.array([0.5, 1.0, -2.0]), residual=1.0)
    assert np.array_equal(m.predict(P), m.predict(P))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6), st.floats(1e-3, 1e3))
def test_solve_design_matches_svd_least_squares(seed, p, scale):
    rng = np.random.default_rng(seed)
    A = np.column_stack([np.ones(300), rng.normal(scale=scale, size=(300, p))])
    y = rng.normal(size=300)
    coef, ridged = solve_design(A, y)
    ref, *_ = np.linalg.lstsq(A, y, rcond=None)
    assert not ridged
    np.testing.assert_allclose(A @ coef, A @ ref, rtol=0, atol=1e-9)
