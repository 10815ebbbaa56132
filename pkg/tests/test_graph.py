import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unlearnaudit.errors import CycleError, GraphError, PathExplosionError, UnknownNodeError
from unlearnaudit.graph import CausalGraph, VariableDecl, load_graph, make_graph

from conftest import random_dag


# -- brute-force oracles -------------------------------------------------


def _trails(g, x, y):
    """Every simple undirected path from x to y, as node lists."""
    adj = {n: set(g.parents(n)) | set(g.children(n)) for n in g.names}
    out = []

    def walk(node, path):
        if node == y:
            out.append(path)
            return
        for m in adj[node]:
            if m not in path:
                walk(m, path + [m])

    walk(x, [x])
    return out


def oracle_d_separated(g, x, y, z):
    z = set(z)
    for path in _trails(g, x, y):
        open_ = True
        for a, b, c in zip(path, path[1:], path[2:]):
            collider = a in g.parents(b) and c in g.parents(b)
            if collider:
                if b not in z and not (g.descendants(b) & z):
                    open_ = False
                    break
            elif b in z:
                open_ = False
                break
        if open_:
            return False
    return True


def oracle_paths(g, f):
    out = []

    def walk(node, path):
        if node == g.outcome:
            out.append(tuple(path))
            return
        for c in g.children(node):
            walk(c, path + [c])

    walk(f, [f])
    return sorted(out)


# -- examples ------------------------------------------------------------


def test_topological_order_heart(letter_heart):
    assert letter_heart.topological_order() == ("S", "E", "B", "M", "R")


def test_topological_order_trivial():
    assert make_graph([], "A", nodes=["A"]).topological_order() == ("A",)
    assert make_graph([("A", "B"), ("B", "C")], "C").topological_order() == ("A", "B", "C")


def test_descendants(letter_heart):
    assert letter_heart.descendants("S") == {"B", "M", "R"}
    assert letter_heart.descendants("R") == set()
    assert letter_heart.descendants("E") == {"M", "R"}


def test_d_separation_examples(letter_heart):
    g = letter_heart
    assert g.d_separated("B", "M", {"S"})
    assert not g.d_separated("B", "M", set())
    assert g.d_separated("S", "E", set())
    assert not g.d_separated("S", "E", {"M"})


def test_d_separation_preconditions(letter_heart):
    with pytest.raises(GraphError):
        letter_heart.d_separated("S", "S")
    with pytest.raises(GraphError):
        letter_heart.d_separated("S", "E", {"S"})


def test_backdoor_examples(letter_heart):
    assert letter_heart.backdoor_set("S") == set()
    assert letter_heart.backdoor_set("B") == {"S"}
    assert letter_heart.backdoor_set("M") == {"S", "E"}
    with pytest.raises(GraphError):
        letter_heart.backdoor_set("R")


def test_backdoor_override():
    g = CausalGraph(make_graph([("A", "F"), ("A", "Y"), ("F", "Y")], "Y").nodes,
                    (("A", "F"), ("A", "Y"), ("F", "Y")), "Y", {"F": ["A"]})
    assert g.backdoor_set("F") == {"A"}


def test_mediators(letter_heart):
    assert letter_heart.mediators("S") == {"B", "M"}
    assert letter_heart.mediators("B") == set()
    assert letter_heart.mediators("E") == {"M"}


def test_directed_paths(letter_heart):
    assert list(letter_heart.directed_paths("S")) == [("S", "B", "R"), ("S", "M", "R")]
    assert list(letter_heart.directed_paths("B")) == [("B", "R")]
    g = make_graph([("A", "Y")], "Y", nodes=["A", "C", "Y"])
    assert list(g.directed_paths("C")) == []


def test_path_cap():
    # layered graph with 2^6 paths
    edges, prev = [], ["s"]
    for layer in range(6):
        cur = [f"a{layer}", f"b{layer}"]
        edges += [(p, c) for p in prev for c in cur]
        prev = cur
    edges += [(p, "y") for p in prev]
    g = make_graph(edges, "y")
    assert len(g.directed_paths("s")) == 2 ** 6
    with pytest.raises(PathExplosionError):
        g.directed_paths("s", cap=10)


def test_validation_errors():
    with pytest.raises(CycleError) as exc:
        make_graph([("A", "B"), ("B", "C"), ("C", "A"), ("C", "Y")], "Y")
    assert set(exc.value.cycle) >= {"A", "B", "C"}
    with pytest.raises(UnknownNodeError):
        make_graph([("A", "B")], "Y", nodes=["A", "B"])
    with pytest.raises(GraphError):
        make_graph([("A", "A")], "A")
    with pytest.raises(GraphError):
        make_graph([("A", "Y"), ("A", "Y")], "Y")
    with pytest.raises(GraphError):
        make_graph([("Y", "A")], "Y")
    with pytest.raises(GraphError):
        VariableDecl("x", "continuous", (1.0, 0.0))
    with pytest.raises(GraphError):
        VariableDecl("x", "categorical", ())


def test_roundtrip(tmp_path, letter_heart):
    p = tmp_path / "g.json"
    p.write_text(letter_heart.dumps())
    g2 = load_graph(p)
    assert g2.to_dict() == letter_heart.to_dict()
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(GraphError):
        load_graph(tmp_path / "bad.json")
    (tmp_path / "missing.json").write_text(json.dumps({"nodes": []}))
    with pytest.raises(GraphError):
        load_graph(tmp_path / "missing.json")


# -- properties ------------------------------------------------------------

dags = st.builds(lambda seed, n, p: random_dag(np.random.default_rng(seed), n, p),
                 st.integers(0, 2**32 - 1), st.integers(2, 10), st.floats(0.1, 0.8))


@settings(max_examples=100, deadline=None)
@given(dags)
def test_backdoor_sets_are_valid(g):
    for f in g.features:
        assert g.is_valid_backdoor(f, g.backdoor_set(f))


@settings(max_examples=100, deadline=None)
@given(dags)
def test_mediators_are_descendants(g):
    for f in g.features:
        m = g.mediators(f)
        assert m <= g.descendants(f)
        assert not m & {f, g.outcome}


@settings(max_examples=100, deadline=None)
@given(dags)
def test_topological_order_is_consistent(g):
    order = g.topological_order()
    assert sorted(order) == sorted(g.names)
    pos = {n: i for i, n in enumerate(order)}
    assert all(pos[a] < pos[b] for a, b in g.edges)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 8))
def test_d_separation_matches_path_oracle(seed, n):
    g = random_dag(np.random.default_rng(seed), n, 0.45)
    names = g.names
    for x, y in itertools.combinations(names, 2):
        rest = [v for v in names if v not in (x, y)]
        for r in range(len(rest) + 1):
            for z in itertools.combinations(rest, r):
                assert g.d_separated(x, y, z) == oracle_d_separated(g, x, y, z), (g.edges, x, y, z)


@settings(max_examples=50, deadline=None)
@given(dags)
def test_directed_paths_match_oracle(g):
    for f in g.features:
        assert list(g.directed_paths(f)) == oracle_paths(g, f)
