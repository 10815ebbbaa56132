import numpy as np
import pytest

from unlearnaudit.graph import make_graph
from unlearnaudit.synth import generate, load_spec


HEART_EDGES = [("smoking", "blood_pressure"), ("smoking", "bmi"), ("exercise", "bmi"),
               ("blood_pressure", "risk"), ("bmi", "risk")]


@pytest.fixture(scope="session")
def heart_spec():
    return load_spec("heart")


@pytest.fixture(scope="session")
def heart_data(heart_spec):
    return generate(heart_spec)


@pytest.fixture(scope="session")
def heart_graph(heart_spec):
    return heart_spec.graph


@pytest.fixture
def letter_heart():
    """The heart DAG with single-letter names."""
    return make_graph([("S", "B"), ("S", "M"), ("E", "M"), ("B", "R"), ("M", "R")], "R",
                      nodes=["S", "E", "B", "M", "R"])


def random_dag(rng: np.random.Generator, n: int, p: float = 0.4):
    names = [f"v{i}" for i in range(n)]
    edges = [(names[i], names[j]) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    return make_graph(edges, names[-1], nodes=names)


def random_linear_spec(rng: np.random.Generator, n_nodes: int, n: int = 500, p: float = 0.5, noise: float = 1.0):
    """Random linear generator spec; binary or normal roots, continuous non-roots, outcome last."""
    from unlearnaudit.synth import spec_from_dict

    names = [f"v{i}" for i in range(n_nodes - 1)] + ["y"]
    edges = [(names[i], names[j]) for i in range(n_nodes) for j in range(i + 1, n_nodes)
             if rng.random() < p or (i == 0 and j == n_nodes - 1)]
    parents = {v: [a for a, b in edges if b == v] for v in names}
    nodes, roots, eqs = [], {}, {}
    for v in names:
        if not parents[v] and rng.random() < 0.5:
            nodes.append({"name": v, "kind": "categorical", "domain": [0, 1]})
            roots[v] = {"dist": "bernoulli", "p": float(rng.uniform(0.2, 0.8))}
        else:
            nodes.append({"name": v, "kind": "continuous", "domain": [-100.0, 100.0]})
            if parents[v]:
                eqs[v] = {"intercept": float(rng.normal()), "noise": noise,
                          "coefficients": {a: float(rng.choice([-1, 1]) * rng.uniform(0.5, 3.0))
                                           for a in parents[v]}}
            else:
                roots[v] = {"dist": "normal", "mean": 0.0, "sd": 1.0}
    return spec_from_dict({"name": "random", "graph": {"nodes": nodes, "edges": [list(e) for e in edges],
                                                       "outcome": "y"},
                           "roots": roots, "equations": eqs, "seed": int(rng.integers(2**31)), "n": n})
