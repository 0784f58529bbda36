import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netred.graph import (GraphError, WeightedGraph, build_matrices, graph_from_edges, grid_graph,
                          is_connected, path_graph)

from conftest import random_connected_graph, small_graph


def test_small_network_laplacian_entries():
    L = build_matrices(small_graph()).laplacian
    assert L[0, 0] == 5 and L[0, 5] == -5 and L[4, 4] == 25
    assert np.allclose(L, L.T)
    assert np.allclose(L.sum(axis=1), 0)


def test_single_edge_laplacian():
    g = WeightedGraph(2, ((1, 2, 1.0),))
    assert np.array_equal(g.laplacian(), [[1, -1], [-1, 1]])


def test_incidence_weight_factorization():
    m = build_matrices(small_graph())
    assert np.allclose(np.diag(m.weight), [5, 3, 2, 1, 2, 3, 5, 2, 6, 7, 6, 7, 1, 1, 1])
    assert np.allclose(m.incidence @ m.weight @ m.incidence.T, m.laplacian)
    # orientation low id -> high id: -1 at the lower vertex
    assert m.incidence[0, 0] == -1 and m.incidence[5, 0] == 1


def test_connectivity():
    assert is_connected(small_graph())
    assert not is_connected(WeightedGraph(2, ()))
    g = path_graph(5)
    assert is_connected(g)
    assert np.linalg.eigvalsh(g.laplacian())[1] > 0


def test_directed_connectivity_rejected():
    g = graph_from_edges(2, [(1, 2, 1.0)], directed=True)
    with pytest.raises(GraphError):
        is_connected(g)


def test_directed_adjacency_and_laplacian():
    # a_ij = w((j, i)): edge (1, 2) enters vertex 2
    m = build_matrices(graph_from_edges(3, [(1, 2, 2.0), (3, 2, 0.5), (2, 3, 4.0)], directed=True))
    A = np.array([[0, 0, 0], [2.0, 0, 0.5], [0, 4.0, 0]])
    assert np.array_equal(m.adjacency, A)
    assert np.array_equal(m.laplacian, np.diag(A.sum(axis=1)) - A)
    assert np.allclose(m.laplacian @ np.ones(3), 0)
    assert not np.allclose(m.laplacian, m.laplacian.T)


def test_grid_graph():
    g = grid_graph(10, 10, 1)
    assert g.n_vertices == 100 and g.n_edges == 180
    one = grid_graph(1, 1, 1)
    assert one.n_vertices == 1 and one.n_edges == 0
    assert np.allclose(np.diag(grid_graph(2, 2, 1).laplacian()), [2, 2, 2, 2])


@pytest.mark.parametrize("edges", [((1, 1, 1.0),), ((1, 3, 1.0),), ((1, 2, -1.0),),
                                   ((1, 2, 1.0), (2, 1, 2.0))])
def test_invalid_edges(edges):
    with pytest.raises(GraphError):
        WeightedGraph(2, edges)


def test_round_trip_from_laplacian():
    g = small_graph()
    h = WeightedGraph.from_laplacian(g.laplacian())
    assert np.allclose(h.laplacian(), g.laplacian())
    assert h.n_edges == g.n_edges


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=2, max_value=12), st.integers(min_value=0, max_value=10 ** 6))
def test_laplacian_invariants_random(n, seed):
    g = random_connected_graph(np.random.default_rng(seed), n)
    m = build_matrices(g)
    L = m.laplacian
    assert np.allclose(L, L.T)
    assert np.allclose(L @ np.ones(n), 0)
    assert np.all(L - np.diag(np.diag(L)) <= 0)
    lam = np.linalg.eigvalsh(L)
    assert lam[0] > -1e-10 and lam[1] > 1e-10
    assert np.allclose(m.incidence @ m.weight @ m.incidence.T, L)
