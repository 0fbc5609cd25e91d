import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fedgcf.errors import ConfigError
from fedgcf.graphs import ClassSpec, Graph, SyntheticSpec, generate_synthetic
from fedgcf.struct_encode import (StructConfig, annotate, degree_encoding, encode_graph,
                                  random_walk_encoding, transition_matrix)
from oracles import walk_return_probability


def graph(n, edges):
    return Graph(n, edges, np.zeros((n, 1)), 0)


@st.composite
def random_graphs(draw, max_nodes=8):
    n = draw(st.integers(1, max_nodes))
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
    return graph(n, chosen)


def test_isolated_node_rw_is_zero():
    assert np.all(random_walk_encoding(graph(1, []), 16) == 0)


def test_single_edge_alternates():
    enc = random_walk_encoding(graph(2, [(0, 1)]), 8)
    np.testing.assert_array_equal(enc[0], [0, 1, 0, 1, 0, 1, 0, 1])


def test_triangle_two_step_return():
    tri = graph(3, [(0, 1), (1, 2), (0, 2)])
    enc = random_walk_encoding(tri, 4)
    expected = walk_return_probability(tri.adjacency(), 0, 2)
    assert expected == 0.5
    assert enc[0, 1] == pytest.approx(expected, abs=1e-15)
    for k in range(4):
        assert enc[0, k] == pytest.approx(walk_return_probability(tri.adjacency(), 0, k + 1), abs=1e-14)


@settings(max_examples=40, deadline=None)
@given(g=random_graphs(max_nodes=6), k=st.integers(1, 4))
def test_rw_matches_walk_enumeration(g, k):
    enc = random_walk_encoding(g, k)
    A = g.adjacency()
    for u in range(g.num_nodes):
        assert enc[u, k - 1] == pytest.approx(walk_return_probability(A, u, k), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(g=random_graphs())
def test_rw_entries_are_probabilities_and_rows_stochastic(g):
    enc = random_walk_encoding(g, 16)
    assert np.all((enc >= 0) & (enc <= 1))
    P = transition_matrix(g)
    Pk = np.eye(g.num_nodes)
    deg = g.degrees()
    for _ in range(5):
        Pk = Pk @ P
        sums = Pk.sum(axis=1)
        np.testing.assert_allclose(sums[deg > 0], 1.0, atol=1e-12)
        np.testing.assert_array_equal(sums[deg == 0], 0.0)


def test_degree_encoding():
    assert degree_encoding(graph(1, []), 16)[0].argmax() == 0
    star = graph(21, [(0, i) for i in range(1, 21)])
    enc = degree_encoding(star, 16)
    assert enc[0].argmax() == 15 and enc[0].sum() == 1
    path = degree_encoding(graph(3, [(0, 1), (1, 2)]), 16)
    assert path.argmax(axis=1).tolist() == [1, 2, 1]


def test_annotate_dimension_and_idempotence():
    ds = generate_synthetic(SyntheticSpec(), 0)
    once = annotate(ds)
    assert all(g.node_struct.shape == (g.num_nodes, 32) for g in once.graphs)
    assert annotate(once).equals(once)


def test_struct_config_validation():
    assert StructConfig().dim == 32
    with pytest.raises(ConfigError):
        StructConfig(rw_dim=0)


@settings(max_examples=30, deadline=None)
@given(g=random_graphs(), data=st.data())
def test_permutation_equivariance(g, data):
    perm = data.draw(st.permutations(range(g.num_nodes)))
    cfg = StructConfig()
    a = encode_graph(g, cfg)
    b = encode_graph(g.permuted(perm), cfg)
    np.testing.assert_allclose(b[list(perm)], a, atol=1e-12)


def test_isomorphic_pair_same_multiset():
    ds = generate_synthetic(SyntheticSpec(classes=(ClassSpec("random"), ClassSpec("ring"))), 2)
    g = ds.graphs[0]
    perm = np.random.default_rng(0).permutation(g.num_nodes)
    pair = annotate(type(ds)(graphs=[g, g.permuted(perm)] + list(ds.graphs[-1:]), num_classes=2,
                             feature_dim=ds.feature_dim))
    a = sorted(map(tuple, np.round(pair.graphs[0].node_struct, 12)))
    b = sorted(map(tuple, np.round(pair.graphs[1].node_struct, 12)))
    assert a == b
