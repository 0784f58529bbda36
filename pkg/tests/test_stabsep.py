import numpy as np
import pytest
import scipy.linalg as spla

from conftest import random_connected_graph, random_partition
from netred.graph import WeightedGraph, path_graph
from netred.mas import AgentDynamics, LinearMas, LtiRealization, cluster_reduce, realize
from netred.partition import Partition
from netred.stabsep import (StabSepError, check_unstable_parts, decompose_mas, h2_error, h2_inner,
                            h2_norm, hinf_error, hinf_norm, mas_stable_basis, principal_angle_sin,
                            sigma_max_at, split_pencil)

RANK1_H2 = "{{1, 8}, {2, 3, 4, 9, 10}, {5}, {6}, {7}}"
RANK2_H2 = "{{1, 2, 3, 4}, {5, 8}, {6}, {7}, {9, 10}}"
RANK1_HINF = "{{1, 3, 5, 8}, {2, 4}, {6}, {7}, {9, 10}}"
RANK2_HINF = "{{1, 2, 5, 8}, {3, 4}, {6}, {7}, {9, 10}}"


def oscillator_agent():
    return AgentDynamics(np.eye(2), [[0.0, 1.0], [-1.0, 0.5]], [[-0.1], [100.0]], [[1.0, 1.0]],
                         [[1.0]])


def test_stable_basis_equal_inertias():
    T, m_plus = mas_stable_basis(np.ones(3))
    assert m_plus == 3
    assert np.allclose(T[[0, 1], [0, 1]], 1 / np.sqrt(2))
    assert np.allclose(T[[1, 2], [0, 1]], -1 / np.sqrt(2))


def test_stable_basis_unequal_inertias():
    T, m_plus = mas_stable_basis([1.0, 3.0])
    assert T[0, 0] == pytest.approx(3 / np.sqrt(10)) and T[1, 0] == pytest.approx(-1 / np.sqrt(10))
    assert m_plus == 4
    m = np.array([1.0, 2.0, 0.5, 4.0])
    T, _ = mas_stable_basis(m)
    assert np.allclose(T.T @ m, 0)
    assert np.allclose(np.linalg.norm(T, axis=0), 1)


def test_small_network_stable_part(small_sys, small_decomp):
    st = small_decomp.stable
    assert st.order == 9
    lam = np.sort(spla.eigvals(st.A, st.E).real)
    assert np.all(np.abs(spla.eigvals(st.A, st.E).imag) < 1e-10)
    ref = np.sort(-np.linalg.eigvalsh(small_sys.laplacian)[1:])
    assert np.allclose(lam, ref)
    assert small_decomp.m_plus == 10
    residue = np.outer(small_sys.output_map.sum(axis=1), small_sys.input_map.sum(axis=0)) / 10
    assert np.allclose(small_decomp.residue, residue)
    # marginal part is C 1 1^T B / (10 s)
    s = 0.7j
    un = small_decomp.unstable
    assert np.allclose(un(s), residue / s)


def test_single_agent_has_no_stable_part():
    sys = LinearMas(WeightedGraph(1, ()), [1.0], [[1.0]], [[1.0]])
    d = decompose_mas(sys)
    assert d.stable.order == 0 and d.unstable.order == 1
    assert h2_norm(d.stable) == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_decomposition_block_diagonal_general_agent(seed):
    rng = np.random.default_rng(seed)
    g = random_connected_graph(rng, 5)
    sys = LinearMas(g, rng.uniform(0.5, 2, 5), rng.standard_normal((5, 1)),
                    rng.standard_normal((2, 5)), oscillator_agent())
    d = decompose_mas(sys)
    full = realize(sys)
    T = np.hstack([d.T_minus, d.T_plus])
    S = np.hstack([d.S_minus, d.S_plus])
    k = d.T_minus.shape[1]
    for X in (S.T @ full.E @ T, S.T @ full.A @ T):
        scale = np.abs(X).max()
        assert np.abs(X[:k, k:]).max() <= 1e-10 * scale
        assert np.abs(X[k:, :k]).max() <= 1e-10 * scale
    st = d.stable
    assert np.allclose(S.T[:k] @ full.E @ d.T_minus, st.E)
    assert np.allclose(S.T[:k] @ full.A @ d.T_minus, st.A)
    assert np.allclose(full.C @ d.T_minus, st.C)
    assert spla.eigvals(st.A, st.E).real.max() < -1e-9
    assert spla.eigvals(d.unstable.A, d.unstable.E).real.min() >= -1e-9
    # transfer functions add up
    s = 0.3 + 1.1j
    assert np.allclose(full(s), st(s) + d.unstable(s), atol=1e-8 * np.abs(full(s)).max())


def test_split_pencil_identities():
    A = np.array([[1.0, 2.0, 0.0], [0.0, -1.0, 1.0], [0.0, 0.0, -3.0]])
    E = np.diag([1.0, 2.0, 1.0])
    sp = split_pencil(A, E)
    T = np.hstack([sp.T_minus, sp.T_plus])
    S = np.hstack([sp.S_minus, sp.S_plus])
    assert np.allclose(S.T @ E @ T, np.eye(3))
    D = S.T @ A @ T
    assert sp.n_stable == 2 and np.allclose(D[:2, 2:], 0) and np.allclose(D[2:, :2], 0)


def test_unsynchronized_system_rejected():
    ag = AgentDynamics([[1.0]], [[1.0]], [[1.0]], [[1.0]], [[0.0]])
    sys = LinearMas(path_graph(2), np.ones(2), np.ones((2, 1)), np.eye(2), ag)
    with pytest.raises(StabSepError):
        decompose_mas(sys)


def test_h2_norm_scalar_and_inner():
    sys = LtiRealization([[1.0]], [[-2.0]], [[1.0]], [[1.0]])
    assert h2_norm(sys) == pytest.approx(0.5)  # integral of exp(-4t) = 1/4
    assert h2_inner(sys, sys) == pytest.approx(0.25)


def test_hinf_norm_scalar_and_resonance():
    sys = LtiRealization([[1.0]], [[-2.0]], [[1.0]], [[3.0]])
    val, w = hinf_norm(sys)
    assert val == pytest.approx(1.5) and abs(w) < 1e-6
    zeta, wn = 0.05, 2.0
    res = LtiRealization(np.eye(2), [[0, 1], [-wn ** 2, -2 * zeta * wn]], [[0], [1]], [[1, 0]])
    val, w = hinf_norm(res)
    peak = 1 / (2 * zeta * np.sqrt(1 - zeta ** 2) * wn ** 2)
    assert val == pytest.approx(peak, rel=1e-6)
    assert sigma_max_at(res, w) == pytest.approx(val)


def test_self_error_is_zero(small_sys, small_decomp):
    assert h2_error(small_decomp, small_sys).relative <= 1e-10
    assert hinf_error(small_decomp, small_sys).relative <= 1e-9
    red = cluster_reduce(small_sys, Partition.singletons(10))
    assert h2_error(small_decomp, red).relative <= 1e-10


@pytest.mark.parametrize("part,expected", [(RANK1_H2, 0.128053), (RANK2_H2, 0.131311)])
def test_h2_errors_of_ranked_partitions(small_sys, small_decomp, part, expected):
    red = cluster_reduce(small_sys, Partition.parse(part))
    assert abs(h2_error(small_decomp, red).relative - expected) <= 1e-5


@pytest.mark.parametrize("part,expected", [(RANK1_HINF, 0.253975), (RANK2_HINF, 0.254376)])
def test_hinf_errors_of_ranked_partitions(small_sys, small_decomp, part, expected):
    red = cluster_reduce(small_sys, Partition.parse(part))
    assert abs(hinf_error(small_decomp, red).relative - expected) <= 1e-4


def test_h2_error_matches_inner_products(small_sys, small_decomp):
    red = decompose_mas(cluster_reduce(small_sys, Partition.parse(RANK1_H2)))
    a, b = small_decomp.stable, red.stable
    err2 = h2_inner(a, a) - 2 * h2_inner(a, b) + h2_inner(b, b)
    assert np.sqrt(err2) == pytest.approx(h2_error(small_decomp, red).absolute, rel=1e-8)


@pytest.mark.parametrize("seed", range(10))
def test_marginal_parts_match_after_clustering(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 9))
    sys = LinearMas(random_connected_graph(rng, n), rng.uniform(0.5, 2, n),
                    rng.standard_normal((n, 2)), rng.standard_normal((3, n)))
    d = decompose_mas(sys)
    red = decompose_mas(cluster_reduce(sys, random_partition(rng, n)))
    check_unstable_parts(d, red)
    assert np.abs(d.residue - red.residue).max() <= 1e-8 * max(np.abs(d.residue).max(), 1)


def test_mismatched_marginal_parts_rejected():
    g = path_graph(4)
    sys = LinearMas(g, np.ones(4), np.ones((4, 1)), np.eye(4))
    other = LinearMas(g, np.ones(4), 2 * np.ones((4, 1)), np.eye(4))
    with pytest.raises(StabSepError):
        h2_error(sys, other)


def test_h2_quadrature_agrees_with_gramian(small_sys, small_decomp):
    from netred.stabsep import h2_norm_quadrature
    assert h2_norm_quadrature(small_decomp.stable) == pytest.approx(h2_norm(small_decomp.stable),
                                                                  rel=1e-8)


def test_principal_angles():
    e1, e2 = np.eye(2)[:, :1], np.eye(2)[:, 1:]
    assert principal_angle_sin(e1, e1) == pytest.approx(0, abs=1e-15)
    assert principal_angle_sin(e1, e2) == pytest.approx(1)
    assert principal_angle_sin(e1, np.array([[1.0], [1.0]]) / np.sqrt(2)) == pytest.approx(1 / np.sqrt(2))
