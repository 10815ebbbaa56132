import sys
import textwrap

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unlearnaudit.data import Dataset, UnlearningTarget
from unlearnaudit.errors import EmptyTargetError, ModelError, ProtocolError
from unlearnaudit.external import ExternalModel, decode_preds, external_model
from unlearnaudit.graph import VariableDecl
from unlearnaudit.models import BuiltinModel, FunctionModel, resolve_kind, simulate_unlearning, train

ECHO = textwrap.dedent("""
    import json, sys
    json.loads(sys.stdin.readline())
    for line in sys.stdin:
        rows = json.loads(line)["rows"]
        sys.stdout.write(json.dumps({"preds": [r[0] for r in rows]}) + "\\n")
        sys.stdout.flush()
""")

SHORT = textwrap.dedent("""
    import json, sys
    sys.stdin.readline()
    for line in sys.stdin:
        sys.stdout.write(json.dumps({"preds": [1.0, 2.0]}) + "\\n")
        sys.stdout.flush()
""")

SILENT = "import sys, time\nsys.stdin.readline()\nsys.stdin.readline()\ntime.sleep(30)\n"
DIES = "import sys\nsys.stdin.readline()\nsys.stdin.readline()\nsys.exit(3)\n"


def _script(tmp_path, name, body):
    p = tmp_path / name
    p.write_text(body)
    return [sys.executable, str(p)]


def _toy(n=40, seed=0):
    rng = np.random.default_rng(seed)
    schema = (VariableDecl("a", "continuous", (-10.0, 10.0)), VariableDecl("b", "continuous", (-10.0, 10.0)))
    X = rng.normal(size=(n, 2))
    return Dataset(schema, X, 1.0 + 2.0 * X[:, 0] - X[:, 1], "y")


def test_resolve_kind():
    assert resolve_kind("linear") == "linear-regression"
    assert resolve_kind("forest") == "tree-ensemble"
    with pytest.raises(ModelError):
        resolve_kind("svm")


def test_linear_noiseless():
    schema = (VariableDecl("x", "continuous", (0.0, 10.0)),)
    x = np.linspace(0, 5, 20)
    m = train("linear", Dataset(schema, x[:, None], 2 * x, "y"))
    assert m.predict([[3.0]])[0] == pytest.approx(6.0, abs=1e-6)


def test_logistic_separable():
    schema = (VariableDecl("x", "continuous", (-10.0, 10.0)),)
    x = np.concatenate([np.linspace(-5, -1, 10), np.linspace(1, 5, 10)])
    y = (x > 0).astype(float)
    m = train("logistic", Dataset(schema, x[:, None], y, "y"))
    p = m.predict(x[:, None])
    assert np.all((p >= 0) & (p <= 1))
    assert np.mean(m.predict_label(x[:, None]) == y) == 1.0
    with pytest.raises(ModelError):
        train("logistic", _toy())


@pytest.mark.parametrize("kind", ["trees", "mlp"])
def test_nonlinear_kinds_fit(kind):
    ds = _toy(400)
    m = train(kind, ds, hyperparams={"trees": 10, "iterations": 500} if kind == "trees" else {"iterations": 1500})
    resid = np.sqrt(np.mean((m.predict(ds.X) - ds.y) ** 2))
    assert resid < 0.5 * np.std(ds.y)


@pytest.mark.parametrize("kind", ["linear", "trees", "mlp"])
def test_save_load_roundtrip(tmp_path, kind):
    ds = _toy(200)
    m = train(kind, ds, hyperparams={"trees": 3, "iterations": 50})
    m.save(tmp_path / "m.json")
    back = BuiltinModel.load(tmp_path / "m.json")
    assert np.array_equal(back.predict(ds.X), m.predict(ds.X))


def test_wrong_width_rejected():
    m = train("linear", _toy())
    with pytest.raises(ModelError):
        m.predict(np.zeros((2, 3)))


def test_simulate_unlearning(heart_data):
    m = simulate_unlearning("linear", heart_data, UnlearningTarget.parse("smoking"))
    assert "smoking" not in m.uses and m.features == heart_data.columns
    with pytest.raises(EmptyTargetError):
        UnlearningTarget.parse([])


def test_unlearning_rows_still_predicts_all():
    from unlearnaudit.synth import generate, load_spec
    ds = generate(load_spec("heart_age").with_n(1000))
    m = simulate_unlearning("linear", ds, UnlearningTarget.parse("age", "age>50"),
                            drop_features=False, drop_rows=True)
    out = m.predict(ds.X)
    assert out.shape == (1000,) and np.all(np.isfinite(out))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 9999), st.floats(-50, 50))
def test_unread_column_never_changes_output(row, value):
    ds = _toy(200, seed=3)
    m = train("linear", ds, features=["b"])
    X = ds.X[[row % 200]].copy()
    X2 = X.copy()
    X2[0, 0] = value
    assert m.predict(X)[0] == m.predict(X2)[0]


# -- external adapter ------------------------------------------------------


def test_echo_model(tmp_path):
    with external_model(_script(tmp_path, "echo.py", ECHO), ["a", "b"]) as m:
        assert m.predict([[5.0, 1.0]]).tolist() == [5.0]
        X = np.random.default_rng(0).normal(size=(5000, 2))
        assert np.array_equal(m.predict(X), X[:, 0])


def test_count_mismatch_is_protocol_error(tmp_path):
    with ExternalModel(_script(tmp_path, "short.py", SHORT), ["a"]) as m:
        with pytest.raises(ProtocolError):
            m.predict(np.zeros((3, 1)))


def test_timeout_and_exit(tmp_path):
    m = ExternalModel(_script(tmp_path, "silent.py", SILENT), ["a"], timeout=0.5)
    with pytest.raises(ModelError, match="timed out"):
        m.predict(np.zeros((1, 1)))
    m = ExternalModel(_script(tmp_path, "dies.py", DIES), ["a"], timeout=5)
    with pytest.raises(ModelError, match="exited"):
        m.predict(np.zeros((1, 1)))
    with pytest.raises(ModelError):
        ExternalModel(["/nonexistent/binary"], ["a"])


@pytest.mark.parametrize("line", ["not json", '{"p": []}', '{"preds": [1, "x"]}', '{"preds": [NaN]}',
                                  '{"preds": [true]}', '[1]'])
def test_decode_rejects_malformed(line):
    with pytest.raises(ProtocolError):
        decode_preds(line, 1)


def test_served_builtin_matches_in_process(tmp_path, heart_data):
    m = train("mlp", heart_data, hyperparams={"iterations": 100})
    m.save(tmp_path / "m.json")
    X = heart_data.X[:300]
    with ExternalModel([sys.executable, "-m", "unlearnaudit.serve", str(tmp_path / "m.json")],
                       heart_data.columns) as ext:
        assert np.array_equal(ext.predict(X), m.predict(X))


def test_function_model():
    m = FunctionModel(["a", "b"], lambda X: X[:, 0] * 2)
    assert m.predict([[1.0, 0.0]]).tolist() == [2.0]
