"""Nonlinear multi-agent systems with clustered reduction and simulation.

Agents follow the control-affine dynamics

    x_i' = A(x_i) + B(x_i) v_i,   z_i = C(x_i),
    m_i v_i = sum_j a_ij K(z_i, z_j) + sum_k b_ik u_k,
    y_l = sum_j c_lj C(x_j).

Agent callbacks are vectorized over a leading batch axis: ``drift`` maps
``(k, n) -> (k, n)``, ``input_field`` maps ``(k, n) -> (k, n, m)``, ``output_fn``
maps ``(k, n) -> (k, p)`` and ``coupling`` maps two ``(k, p)`` arrays to ``(k, m)``.

The clustered model keeps the structure: ``M^ = P^T M P``, ``A^ = P^T A P``,
``B^ = P^T B`` and ``C^ = C P``.  The diagonal of ``P^T A P`` (edges inside a
cluster) is kept in the dynamics, which makes the reduced vector field equal to
the Galerkin projection ``(P^T kron I) f((P kron I) x^, u)`` for any coupling;
for diffusive couplings with ``K(z, z) = 0`` it has no effect.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.integrate import trapezoid

from .graph import WeightedGraph, build_matrices, grid_graph
from .mas import AgentDynamics, LinearMas, leader_follower_input
from .numerics import ODE_ATOL, ODE_RTOL, OdeSolution, integrate_ode
from .partition import Partition, characteristic_matrix

TRAIN_INPUT_NAME = "train"
TEST_INPUT_NAME = "test"
DEFAULT_T_SPAN = (0.0, 20.0)


class NonlinearError(ValueError):
    """Raised for inconsistent nonlinear system descriptions."""


def train_input(t):
    """Training input ``u(t) = exp(-t)``."""
    return np.exp(-np.asarray(t, dtype=float))


def test_input(t):
    """Test input ``u(t) = exp(-t/10) sin(t)``."""
    t = np.asarray(t, dtype=float)
    return np.exp(-t / 10.0) * np.sin(t)


INPUT_PRESETS = {TRAIN_INPUT_NAME: train_input, TEST_INPUT_NAME: test_input}


@dataclass(frozen=True, eq=False)
class AgentDerivatives:
    """Optional derivatives of the agent callbacks, used for analytic Jacobians.

    ``d_drift``: ``(k, n) -> (k, n, n)``; ``d_input_field``: ``(k, n) -> (k, n, m, n)``;
    ``d_output``: ``(k, n) -> (k, p, n)``; ``d_coupling``: two ``(k, p)`` arrays to a
    pair of ``(k, m, p)`` arrays (derivatives with respect to ``z_i`` and ``z_j``).
    """

    d_drift: Callable
    d_input_field: Callable
    d_output: Callable
    d_coupling: Callable


@dataclass(frozen=True, eq=False)
class NonlinearMas:
    """Nonlinear network of identical control-affine agents.

    ``adjacency`` may carry diagonal entries (self-weights of clustered models).
    """

    adjacency: np.ndarray
    inertias: np.ndarray
    input_map: np.ndarray
    output_map: np.ndarray
    drift: Callable
    input_field: Callable
    output_fn: Callable
    coupling: Callable
    n: int
    derivatives: AgentDerivatives | None = None

    def __post_init__(self):
        A = np.asarray(self.adjacency, dtype=float)
        N = A.shape[0]
        if A.shape != (N, N) or np.any(A < 0) or np.abs(A - A.T).max(initial=0.0) > 1e-12 * max(
                np.abs(A).max(initial=0.0), 1.0):
            raise NonlinearError("adjacency must be a square symmetric nonnegative matrix")
        m = np.asarray(self.inertias, dtype=float).ravel()
        if m.shape != (N,) or np.any(m <= 0):
            raise NonlinearError("need one positive inertia per agent")
        Bn = np.atleast_2d(np.asarray(self.input_map, dtype=float))
        Cn = np.atleast_2d(np.asarray(self.output_map, dtype=float))
        if Bn.shape[0] != N or Cn.shape[1] != N:
            raise NonlinearError("input/output maps do not match the number of agents")
        n = int(self.n)
        x = np.zeros((1, n))
        try:
            a = np.asarray(self.drift(x))
            b = np.asarray(self.input_field(x))
            c = np.asarray(self.output_fn(x))
        except Exception as exc:
            raise NonlinearError(f"agent callback failed on probe state: {exc}") from exc
        if a.shape != (1, n) or b.ndim != 3 or b.shape[:2] != (1, n) or c.ndim != 2 or c.shape[0] != 1:
            raise NonlinearError("agent callbacks returned inconsistent shapes")
        mdim, pdim = b.shape[2], c.shape[1]
        k = np.asarray(self.coupling(c, c))
        if k.shape != (1, mdim):
            raise NonlinearError("coupling callback returned an inconsistent shape")
        I, J = np.nonzero(A)
        object.__setattr__(self, "adjacency", A)
        object.__setattr__(self, "inertias", m)
        object.__setattr__(self, "input_map", Bn)
        object.__setattr__(self, "output_map", Cn)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "_dims", (mdim, pdim))
        object.__setattr__(self, "_pairs", (I, J, A[I, J]))
        G = np.zeros((N, I.size))
        G[I, np.arange(I.size)] = A[I, J]
        object.__setattr__(self, "_gather", G)

    @property
    def n_agents(self) -> int:
        return self.adjacency.shape[0]

    @property
    def m(self) -> int:
        return self._dims[0]

    @property
    def p(self) -> int:
        return self._dims[1]

    @property
    def order(self) -> int:
        return self.n_agents * self.n

    @property
    def graph(self) -> WeightedGraph:
        """Interconnection graph without self-weights."""
        return WeightedGraph.from_adjacency(self.adjacency)

    @property
    def mass_diagonal(self) -> np.ndarray:
        """Diagonal of ``M kron I_n``."""
        return np.repeat(self.inertias, self.n)

    def _split_input(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float).reshape(self.input_map.shape[1], self.m)
        return self.input_map @ u

    def vector_field(self, x, u) -> np.ndarray:
        """Mass-form right-hand side ``f(x, u)`` with ``(M kron I_n) x' = f(x, u)``.

        ``x`` may be a single stacked state of length ``N`` or a batch of shape ``(N, k)``.
        """
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = x.reshape(self.n_agents, self.n, -1).transpose(2, 0, 1)  # (k, agents, n)
        k = X.shape[0]
        flat = X.reshape(-1, self.n)
        Z = np.asarray(self.output_fn(flat)).reshape(k, self.n_agents, self.p)
        I, J, _ = self._pairs
        Kv = np.asarray(self.coupling(Z[:, I].reshape(-1, self.p), Z[:, J].reshape(-1, self.p)))
        S = np.einsum("iq,kqm->kim", self._gather, Kv.reshape(k, I.size, self.m))
        S = S + self._split_input(u)[None]
        drift = np.asarray(self.drift(flat)).reshape(k, self.n_agents, self.n)
        Bx = np.asarray(self.input_field(flat)).reshape(k, self.n_agents, self.n, self.m)
        f = self.inertias[None, :, None] * drift + np.einsum("kinm,kim->kin", Bx, S)
        f = f.transpose(1, 2, 0).reshape(self.order, k)
        return f[:, 0] if single else f

    def rhs(self, x, u, t=None) -> np.ndarray:
        """State derivative ``x' = (M kron I_n)^{-1} f(x, u)``."""
        f = self.vector_field(x, u)
        d = self.mass_diagonal
        return f / (d if f.ndim == 1 else d[:, None])

    def output(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        Z = np.asarray(self.output_fn(x.reshape(self.n_agents, self.n)))
        return (self.output_map @ Z).ravel()

    def jacobian(self, x, u) -> np.ndarray:
        """Analytic Jacobian of :meth:`vector_field` (requires ``derivatives``)."""
        if self.derivatives is None:
            raise NonlinearError("no derivative callbacks available")
        dv = self.derivatives
        n, m, Na = self.n, self.m, self.n_agents
        X = np.asarray(x, dtype=float).reshape(Na, n)
        Z = np.asarray(self.output_fn(X))
        dC = np.asarray(dv.d_output(X))  # (Na, p, n)
        I, J, a = self._pairs
        Kv = np.asarray(self.coupling(Z[I], Z[J]))
        dKi, dKj = dv.d_coupling(Z[I], Z[J])  # (q, m, p)
        S = self._gather @ Kv + self._split_input(u)
        Bx = np.asarray(self.input_field(X))  # (Na, n, m)
        dA = np.asarray(dv.d_drift(X))  # (Na, n, n)
        dB = np.asarray(dv.d_input_field(X))  # (Na, n, m, n)
        # dS_i/dx_j as (Na, m, Na, n)
        dS = np.zeros((Na, m, Na, n))
        wi = a[:, None, None] * np.einsum("qmp,qpn->qmn", dKi, dC[I])
        wj = a[:, None, None] * np.einsum("qmp,qpn->qmn", dKj, dC[J])
        np.add.at(dS, (I, slice(None), I), wi)
        np.add.at(dS, (I, slice(None), J), wj)
        Jm = np.einsum("inm,imjl->injl", Bx, dS)
        diag = self.inertias[:, None, None] * dA + np.einsum("inml,im->inl", dB, S)
        idx = np.arange(Na)
        Jm[idx, :, idx, :] += diag
        return Jm.reshape(self.order, self.order)


def _input_function(u) -> Callable:
    if u is None:
        return lambda t: 0.0
    if isinstance(u, str):
        try:
            return INPUT_PRESETS[u]
        except KeyError:
            raise NonlinearError(f"unknown input preset {u!r}") from None
    if callable(u):
        return u
    const = np.asarray(u, dtype=float)
    return lambda t: const


def simulate(sys: NonlinearMas, x0=None, u=None, t_span=DEFAULT_T_SPAN, sample_times=None,
             rtol: float = ODE_RTOL, atol: float = ODE_ATOL) -> OdeSolution:
    """Integrate the network with mass matrix ``M kron I_n``.

    ``u`` is a callable of time (returning all input channels), a preset name
    (``"train"`` or ``"test"``), a constant, or None for zero input.
    """
    uf = _input_function(u)
    nu = sys.input_map.shape[1] * sys.m
    x0 = np.zeros(sys.order) if x0 is None else np.asarray(x0, dtype=float)

    def inp(t):
        return np.broadcast_to(np.asarray(uf(t), dtype=float), (nu,))

    def fun(t, x):
        return sys.vector_field(x, inp(t))

    def jac(t, x):
        return sys.jacobian(x, inp(t))

    has_jac = sys.derivatives is not None

    return integrate_ode(fun, x0, t_span, mass=sys.mass_diagonal, jac=jac if has_jac else None,
                         rtol=rtol, atol=atol, sample_times=sample_times, vectorized=not has_jac)


def cluster_reduce_nonlinear(sys: NonlinearMas, p: Partition) -> NonlinearMas:
    """Clustered model with summed inertias and merged weights, same callbacks."""
    if p.n_vertices != sys.n_agents:
        raise NonlinearError(f"partition covers {p.n_vertices} agents, system has {sys.n_agents}")
    P = characteristic_matrix(p)
    return NonlinearMas(
        adjacency=P.T @ sys.adjacency @ P,
        inertias=P.T @ sys.inertias,
        input_map=P.T @ sys.input_map,
        output_map=sys.output_map @ P,
        drift=sys.drift, input_field=sys.input_field, output_fn=sys.output_fn,
        coupling=sys.coupling, n=sys.n, derivatives=sys.derivatives,
    )


def lift(p: Partition, x_red, n: int) -> np.ndarray:
    """Map reduced states (rows of ``x_red``) to full states via ``P kron I_n``."""
    Pn = np.kron(characteristic_matrix(p), np.eye(n))
    x_red = np.asarray(x_red, dtype=float)
    return x_red @ Pn.T


class ReductionError(NamedTuple):
    times: np.ndarray
    full: np.ndarray
    error: np.ndarray
    relative_l2: float

    @property
    def max_pointwise(self) -> float:
        return float(np.abs(self.error).max())


def reduction_error(sys: NonlinearMas, red: NonlinearMas, p: Partition, x0=None, u=None,
                    t_span=DEFAULT_T_SPAN, samples: int = 1000, reference: OdeSolution | None = None,
                    rtol: float = ODE_RTOL, atol: float = ODE_ATOL) -> ReductionError:
    """Simulate both models on a shared uniform grid and compare the lifted reduced state."""
    times = np.linspace(t_span[0], t_span[1], samples)
    if reference is None:
        reference = simulate(sys, x0, u, t_span, times, rtol, atol)
    elif reference.times.shape != times.shape or not np.allclose(reference.times, times):
        raise NonlinearError("reference trajectory must be sampled on the shared uniform grid")
    xr0 = None
    if x0 is not None:
        P = characteristic_matrix(p)
        xr0 = np.kron(np.linalg.solve(P.T @ P, P.T), np.eye(sys.n)) @ np.asarray(x0, dtype=float)
    red_sol = simulate(red, xr0, u, t_span, times, rtol, atol)
    err = reference.states - lift(p, red_sol.states, sys.n)
    den = trapezoid((reference.states ** 2).sum(axis=1), times)
    if den <= 0:
        raise NonlinearError("reference trajectory is identically zero; relative error undefined")
    num = trapezoid((err ** 2).sum(axis=1), times)
    return ReductionError(times, reference.states, err, float(np.sqrt(num / den)))


def l2_relative_error(sys, red, p, x0=None, u=None, t_span=DEFAULT_T_SPAN, samples: int = 1000) -> float:
    """Relative L2 state error ``||x - (P kron I) x^|| / ||x||`` (trapezoidal rule)."""
    return reduction_error(sys, red, p, x0, u, t_span, samples).relative_l2


# ---------------------------------------------------------------------------
# Van der Pol network


def _vdp_callbacks(mu: float, sigma: float, c: float):
    bvec = np.array([sigma, -c])

    def drift(X):
        x1, x2 = X[:, 0], X[:, 1]
        return np.column_stack([x2, mu * (1.0 - x1 ** 2) * x2 - x1])

    def input_field(X):
        return np.broadcast_to(bvec[None, :, None], (X.shape[0], 2, 1))

    def output_fn(X):
        return X.sum(axis=1, keepdims=True)

    def coupling(zi, zj):
        return zi - zj

    def d_drift(X):
        x1, x2 = X[:, 0], X[:, 1]
        D = np.zeros((X.shape[0], 2, 2))
        D[:, 0, 1] = 1.0
        D[:, 1, 0] = -2.0 * mu * x1 * x2 - 1.0
        D[:, 1, 1] = mu * (1.0 - x1 ** 2)
        return D

    def d_input_field(X):
        return np.zeros((X.shape[0], 2, 1, 2))

    def d_output(X):
        return np.ones((X.shape[0], 1, 2))

    def d_coupling(zi, zj):
        one = np.ones((zi.shape[0], 1, 1))
        return one, -one

    return (drift, input_field, output_fn, coupling,
            AgentDerivatives(d_drift, d_input_field, d_output, d_coupling))


def vanderpol_network(graph: WeightedGraph | None = None, mu: float = 0.5, sigma: float = 0.1,
                      c: float = 100.0, inertias=None, input_map=None, output_map=None) -> NonlinearMas:
    """Network of Van der Pol oscillators ``x1' = x2 + sigma v``,
    ``x2' = mu (1 - x1^2) x2 - x1 - c v`` with output ``z = x1 + x2``.

    Defaults: 10 x 10 grid, unit inertias and weights, input at agent 1,
    all agent outputs observed.
    """
    graph = grid_graph(10, 10) if graph is None else graph
    N = graph.n_vertices
    adjacency = build_matrices(graph).adjacency
    drift, input_field, output_fn, coupling, der = _vdp_callbacks(mu, sigma, c)
    return NonlinearMas(
        adjacency=adjacency,
        inertias=np.ones(N) if inertias is None else inertias,
        input_map=leader_follower_input(N, [1]) if input_map is None else input_map,
        output_map=np.eye(N) if output_map is None else output_map,
        drift=drift, input_field=input_field, output_fn=output_fn, coupling=coupling, n=2,
        derivatives=der,
    )


def vanderpol_linear_analogue(graph: WeightedGraph | None = None, mu: float = 0.5, sigma: float = 0.1,
                              c: float = 100.0) -> LinearMas:
    """Linear network with the Van der Pol linearization at the origin as agent.

    With diffusive coupling ``K(z_i, z_j) = z_i - z_j`` the interconnection
    reads ``v_i = -sum_j a_ij (z_j - z_i)/m_i``, i.e. the linear form with
    ``B = (-sigma, c)`` and ``K = 1``.
    """
    graph = grid_graph(10, 10) if graph is None else graph
    N = graph.n_vertices
    agent = AgentDynamics(E=np.eye(2), A=[[0.0, 1.0], [-1.0, mu]], B=[[-sigma], [c]],
                          C=[[1.0, 1.0]], K=[[1.0]])
    return LinearMas(graph, np.ones(N), leader_follower_input(N, [1]), np.eye(N), agent)


def linear_instance(sys: LinearMas) -> NonlinearMas:
    """A linear multi-agent system expressed through nonlinear callbacks (E = I required)."""
    ag = sys.agent
    if not np.allclose(ag.E, np.eye(ag.n)):
        raise NonlinearError("linear instantiation requires agent E = I")
    A, B, C, K = ag.A, ag.B, ag.C, ag.K

    def drift(X):
        return X @ A.T

    def input_field(X):
        return np.broadcast_to(B[None], (X.shape[0],) + B.shape)

    def output_fn(X):
        return X @ C.T

    def coupling(zi, zj):
        return (zj - zi) @ K.T

    return NonlinearMas(build_matrices(sys.graph).adjacency, sys.inertias, sys.input_map,
                        sys.output_map, drift, input_field, output_fn, coupling, ag.n)

