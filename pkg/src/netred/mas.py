"""Linear multi-agent systems: assembly, LTI realization, synchronization and clustering.

A linear multi-agent system couples identical agents

    E x_i' = A x_i + B v_i,   z_i = C x_i,
    m_i v_i = sum_j a_ij K (z_j - z_i) + sum_k b_ik u_k,

over a weighted undirected graph.  Stacking the agents gives the realization

    (M kron E) x' = (M kron A - L kron BKC) x + (Bnet kron B) u,
    y = (Cnet kron C) x.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg as spla

from .graph import WeightedGraph, build_matrices, is_connected
from .numerics import HURWITZ_TOL, as_matrix, hurwitz_abscissa, sym_gen_eig
from .partition import Partition, characteristic_matrix

E_COND_MAX = 1e12


class MasError(ValueError):
    """Raised for inconsistent multi-agent system descriptions."""


@dataclass(frozen=True, eq=False)
class LtiRealization:
    """Descriptor realization ``E x' = A x + B u, y = C x`` with invertible E."""

    E: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        N = np.asarray(self.A).shape[0]
        E = np.asarray(self.E, dtype=float).reshape(N, N)
        A = np.asarray(self.A, dtype=float).reshape(N, N)
        B = np.asarray(self.B, dtype=float).reshape(N, -1) if N else np.zeros((0, np.shape(self.B)[-1]))
        C = np.asarray(self.C, dtype=float).reshape(-1, N) if N else np.zeros((np.shape(self.C)[0], 0))
        for name, val in (("E", E), ("A", A), ("B", B), ("C", C)):
            object.__setattr__(self, name, val)

    @property
    def order(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.B.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.C.shape[0]

    def __call__(self, s) -> np.ndarray:
        """Transfer function value ``C (sE - A)^{-1} B``."""
        if self.order == 0:
            return np.zeros((self.n_outputs, self.n_inputs), dtype=complex)
        return self.C @ np.linalg.solve(s * self.E - self.A, self.B)

    def poles(self) -> np.ndarray:
        if self.order == 0:
            return np.zeros(0, dtype=complex)
        return spla.eigvals(self.A, self.E)

    def project(self, V, W=None) -> "LtiRealization":
        """Petrov-Galerkin projection ``(W^T E V, W^T A V, W^T B, C V)``."""
        V = np.asarray(V, dtype=float)
        W = V if W is None else np.asarray(W, dtype=float)
        return LtiRealization(W.T @ self.E @ V, W.T @ self.A @ V, W.T @ self.B, self.C @ V)


def concatenate_parallel(sys1: LtiRealization, sys2: LtiRealization, sign: float = -1.0) -> LtiRealization:
    """Realization of ``H1 + sign * H2`` (block-diagonal dynamics, stacked inputs)."""
    return LtiRealization(
        spla.block_diag(sys1.E, sys2.E),
        spla.block_diag(sys1.A, sys2.A),
        np.vstack([sys1.B, sys2.B]),
        np.hstack([sys1.C, sign * sys2.C]),
    )


@dataclass(frozen=True, eq=False)
class AgentDynamics:
    """Identical agent model ``E x' = A x + B v, z = C x`` with coupling gain K."""

    E: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    K: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, "agent A")
        n = A.shape[0]
        E = as_matrix(self.E, "agent E")
        B = as_matrix(self.B, "agent B").reshape(n, -1)
        C = as_matrix(self.C, "agent C").reshape(-1, n)
        K = as_matrix(self.K, "agent K").reshape(B.shape[1], C.shape[0])
        if A.shape != (n, n) or E.shape != (n, n):
            raise MasError("agent E and A must be square of equal size")
        if np.linalg.cond(E) > E_COND_MAX:
            raise MasError("agent E is singular or badly conditioned")
        for name, val in (("E", E), ("A", A), ("B", B), ("C", C), ("K", K)):
            object.__setattr__(self, name, val)

    @classmethod
    def single_integrator(cls) -> "AgentDynamics":
        return cls(E=[[1.0]], A=[[0.0]], B=[[1.0]], C=[[1.0]], K=[[1.0]])

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def is_single_integrator(self) -> bool:
        return (self.n == 1 and self.m == 1 and self.p == 1 and self.A[0, 0] == 0.0
                and self.E[0, 0] == 1.0 and self.B[0, 0] == 1.0 and self.C[0, 0] == 1.0
                and self.K[0, 0] == 1.0)

    @property
    def feedback(self) -> np.ndarray:
        """The product ``B K C``."""
        return self.B @ self.K @ self.C


@dataclass(frozen=True, eq=False)
class LinearMas:
    """Linear multi-agent system over an undirected connected graph."""

    graph: WeightedGraph
    inertias: np.ndarray
    input_map: np.ndarray
    output_map: np.ndarray
    agent: AgentDynamics = field(default_factory=AgentDynamics.single_integrator)

    def __post_init__(self):
        n = self.graph.n_vertices
        if self.graph.directed:
            raise MasError("multi-agent systems require an undirected graph")
        if not is_connected(self.graph):
            raise MasError("the graph of a multi-agent system must be connected")
        m = np.asarray(self.inertias, dtype=float).ravel()
        if m.shape != (n,):
            raise MasError(f"expected {n} inertias, got {m.size}")
        if not np.all(m > 0):
            raise MasError("inertias must be positive")
        Bn = as_matrix(self.input_map, "input map")
        Cn = as_matrix(self.output_map, "output map")
        if Bn.shape[0] != n:
            raise MasError(f"input map must have {n} rows, got {Bn.shape[0]}")
        if Cn.shape[1] != n:
            raise MasError(f"output map must have {n} columns, got {Cn.shape[1]}")
        object.__setattr__(self, "inertias", m)
        object.__setattr__(self, "input_map", Bn)
        object.__setattr__(self, "output_map", Cn)
        object.__setattr__(self, "_laplacian", build_matrices(self.graph).laplacian)

    @property
    def n_agents(self) -> int:
        return self.graph.n_vertices

    @property
    def laplacian(self) -> np.ndarray:
        return self._laplacian

    @property
    def mass(self) -> np.ndarray:
        return np.diag(self.inertias)

    def realize(self) -> LtiRealization:
        return realize(self)


def realize(sys: LinearMas) -> LtiRealization:
    """Kronecker assembly of the network realization."""
    ag = sys.agent
    M = sys.mass
    return LtiRealization(
        E=np.kron(M, ag.E),
        A=np.kron(M, ag.A) - np.kron(sys.laplacian, ag.feedback),
        B=np.kron(sys.input_map, ag.B),
        C=np.kron(sys.output_map, ag.C),
    )


def leader_follower_input(n_vertices: int, leaders) -> np.ndarray:
    """Input map with ``b_ik = 1`` iff vertex i is the k-th leader (1-based ids)."""
    leaders = [int(v) for v in leaders]
    if not leaders:
        raise MasError("at least one leader is required")
    if len(set(leaders)) != len(leaders):
        raise MasError("duplicate leaders")
    B = np.zeros((n_vertices, len(leaders)))
    for k, v in enumerate(leaders):
        if not 1 <= v <= n_vertices:
            raise MasError(f"leader {v} out of range 1..{n_vertices}")
        B[v - 1, k] = 1.0
    return B


def incidence_output(graph: WeightedGraph) -> np.ndarray:
    """Edge-difference output map ``W^{1/2} R^T``."""
    gm = build_matrices(graph)
    return np.sqrt(gm.weight) @ gm.incidence.T


class SyncReport(NamedTuple):
    """Result of a synchronization test.

    ``witness`` is the first Laplacian eigenvalue at which the test failed, or
    the largest real part of the closed-loop spectra when it succeeded.
    """

    synchronized: bool
    witness: float


def laplacian_spectrum(sys: LinearMas) -> np.ndarray:
    """Eigenvalues of the pencil ``(L, M)`` in ascending order."""
    w, _ = sym_gen_eig(sys.laplacian, sys.mass)
    return w


def _closed_loop_check(agent: AgentDynamics, lambdas) -> SyncReport:
    worst = -np.inf
    BKC = agent.feedback
    for lam in lambdas:
        alpha, _ = hurwitz_abscissa(agent.A - lam * BKC, agent.E)
        if not alpha < -HURWITZ_TOL:
            return SyncReport(False, float(lam))
        worst = max(worst, alpha)
    return SyncReport(True, float(worst))


def is_synchronized(sys: LinearMas) -> SyncReport:
    """Test ``(A - lambda_i BKC, E)`` Hurwitz for every nonzero Laplacian eigenvalue."""
    lam = laplacian_spectrum(sys)[1:]
    return _closed_loop_check(sys.agent, lam)


def check_sync_preserved_for_all_partitions(sys: LinearMas, n_samples: int = 101) -> SyncReport:
    """Sample ``[lambda_2, lambda_n]`` and test the closed-loop agent at each point.

    Every clustered model has its nonzero Laplacian eigenvalues inside this
    interval, so a pass indicates that clustering preserves synchronization.
    This is a sampled test, not a certificate.
    """
    lam = laplacian_spectrum(sys)
    if lam.size < 2:
        return SyncReport(True, -np.inf)
    grid = np.linspace(lam[1], lam[-1], max(int(n_samples), 2))
    return _closed_loop_check(sys.agent, grid)


def reduced_matrices(sys: LinearMas, p: Partition):
    """``(P^T M P, P^T L P, P^T Bnet, Cnet P)`` for the characteristic matrix P."""
    if p.n_vertices != sys.n_agents:
        raise MasError(f"partition covers {p.n_vertices} vertices, system has {sys.n_agents}")
    P = characteristic_matrix(p)
    return (P.T @ sys.mass @ P, P.T @ sys.laplacian @ P, P.T @ sys.input_map, sys.output_map @ P)


def cluster_reduce(sys: LinearMas, p: Partition) -> LinearMas:
    """Clustered model: the projection with ``V = W = P kron I_n`` as a new LinearMas."""
    Mh, Lh, Bh, Ch = reduced_matrices(sys, p)
    graph = WeightedGraph.from_laplacian(Lh)
    return LinearMas(graph, np.diag(Mh).copy(), Bh, Ch, sys.agent)
