"""Splitting multi-agent systems into asymptotically stable and marginal parts.

The consensus direction of a synchronized network makes its transfer function
only marginally stable, so H2 and H-infinity errors are measured on the
asymptotically stable parts.  For inertias ``m`` the network-level split uses
the lower bidiagonal matrix ``T_minus`` whose columns are orthogonal to
``M 1``; agent-level splits come from an ordered real Schur form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg as spla
from scipy.integrate import quad

from .mas import AgentDynamics, LinearMas, LtiRealization, concatenate_parallel, is_synchronized
from .numerics import HURWITZ_TOL, NumericsError, orthonormalize, solve_gen_lyapunov

TransferFunction = LtiRealization

UNSTABLE_MATCH_TOL = 1e-8
HINF_GRID_POINTS = 400
HINF_OMEGA_RANGE = (1e-3, 1e3)
HINF_TOL = 1e-6
H2_QUADRATURE_BELOW = 1e-6


class StabSepError(ValueError):
    """Raised when a decomposition or an error norm is undefined."""


def mas_stable_basis(inertias) -> tuple[np.ndarray, float]:
    """Return ``(T_minus, m_plus)`` for positive inertias ``m``.

    ``T_minus`` is ``n x (n-1)`` lower bidiagonal with unit-norm columns
    ``alpha_i e_i - beta_i e_{i+1}``, ``alpha_i = m_{i+1}/sqrt(m_i^2+m_{i+1}^2)`` and
    ``beta_i = m_i/sqrt(m_i^2+m_{i+1}^2)``, so that ``T_minus^T M 1 = 0``.
    ``m_plus`` is the total inertia ``1^T M 1``.
    """
    m = np.asarray(inertias, dtype=float).ravel()
    if np.any(m <= 0):
        raise StabSepError("inertias must be positive")
    n = m.size
    T = np.zeros((n, max(n - 1, 0)))
    if n > 1:
        d = np.hypot(m[:-1], m[1:])
        i = np.arange(n - 1)
        T[i, i] = m[1:] / d
        T[i + 1, i] = -m[:-1] / d
    return T, float(m.sum())


@dataclass(frozen=True, eq=False)
class PencilSplit:
    """Block diagonalization of a pencil ``(A, E)``.

    With ``T = [T_minus, T_plus]`` and ``S = [S_minus, S_plus]`` we have
    ``S^T E T = I`` and ``S^T A T = diag(A_minus, A_plus)`` where ``A_minus``
    collects the eigenvalues with real part below ``-HURWITZ_TOL``.
    """

    T_minus: np.ndarray
    T_plus: np.ndarray
    S_minus: np.ndarray
    S_plus: np.ndarray
    A_minus: np.ndarray
    A_plus: np.ndarray

    @property
    def n_stable(self) -> int:
        return self.T_minus.shape[1]


def split_pencil(A, E=None) -> PencilSplit:
    """Stable/unstable block diagonalization via ordered Schur form and a Sylvester solve."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    E = np.eye(n) if E is None else np.atleast_2d(np.asarray(E, dtype=float))
    Einv = np.linalg.inv(E)
    F = Einv @ A
    Ts, Q, k = spla.schur(F, output="real", sort=lambda re, im: re < -HURWITZ_TOL)
    T11, T12, T22 = Ts[:k, :k], Ts[:k, k:], Ts[k:, k:]
    Z = np.eye(n)
    if 0 < k < n:
        # T11 Y - Y T22 = -T12 removes the coupling block
        Z[:k, k:] = spla.solve_sylvester(T11, -T22, -T12)
    Tt = Q @ Z
    St = np.linalg.solve(Tt, Einv).T
    Ad = St.T @ A @ Tt
    return PencilSplit(Tt[:, :k], Tt[:, k:], St[:, :k], St[:, k:], Ad[:k, :k], Ad[k:, k:])


def mas_stable_realization(inertias, laplacian, input_map, output_map, agent: AgentDynamics,
                           agent_split: PencilSplit | None = None) -> LtiRealization:
    """Asymptotically stable part of a network given by its matrices.

    This is the block of the network realization transformed by
    ``[T_minus kron I_n, 1 kron T_minus^A]``.  For single integrators it reduces
    to ``(T^T M T, -T^T L T, T^T Bnet, Cnet T)``.
    """
    m = np.asarray(inertias, dtype=float).ravel()
    T, m_plus = mas_stable_basis(m)
    Mm = (T.T * m) @ T
    Lm = T.T @ laplacian @ T
    Bm = T.T @ input_map
    Cm = output_map @ T
    if agent.is_single_integrator:
        return LtiRealization(Mm, -Lm, Bm, Cm)
    split = agent_split if agent_split is not None else split_pencil(agent.A, agent.E)
    E_net = np.kron(Mm, agent.E)
    A_net = np.kron(Mm, agent.A) - np.kron(Lm, agent.feedback)
    B_net = np.kron(Bm, agent.B)
    C_net = np.kron(Cm, agent.C)
    k = split.n_stable
    if k == 0:
        return LtiRealization(E_net, A_net, B_net, C_net)
    ones = np.ones(m.size)
    E_ag = m_plus * np.eye(k)
    A_ag = m_plus * split.A_minus
    B_ag = np.kron((ones @ input_map)[None, :], split.S_minus.T @ agent.B)
    C_ag = np.kron((output_map @ ones)[:, None], agent.C @ split.T_minus)
    return LtiRealization(
        spla.block_diag(E_net, E_ag), spla.block_diag(A_net, A_ag),
        np.vstack([B_net, B_ag]), np.hstack([C_net, C_ag]),
    )


@dataclass(frozen=True, eq=False)
class StableDecomposition:
    """Stable/marginal split of a multi-agent system.

    ``T_minus``/``S_minus`` span the asymptotically stable part and
    ``T_plus``/``S_plus`` the marginal part of the full realization, so that
    ``stable = (S_minus^T E T_minus, S_minus^T A T_minus, S_minus^T B, C T_minus)``.
    ``residue`` is ``Cnet 1 1^T Bnet / m_plus``, which determines the marginal part.
    """

    T_minus: np.ndarray
    S_minus: np.ndarray
    T_plus: np.ndarray
    S_plus: np.ndarray
    stable: LtiRealization
    unstable: LtiRealization
    residue: np.ndarray
    m_plus: float


def decompose_mas(sys: LinearMas) -> StableDecomposition:
    """Split a synchronized multi-agent system into stable and marginal parts."""
    report = is_synchronized(sys)
    if not report.synchronized:
        raise StabSepError(f"system is not synchronized (fails at Laplacian eigenvalue "
                           f"{report.witness:.6g}); its stable part is undefined")
    ag = sys.agent
    n = ag.n
    T, m_plus = mas_stable_basis(sys.inertias)
    ones = np.ones((sys.n_agents, 1))
    split = split_pencil(ag.A, ag.E)
    In = np.eye(n)
    Tm = np.hstack([np.kron(T, In), np.kron(ones, split.T_minus)])
    Sm = np.hstack([np.kron(T, In), np.kron(ones, split.S_minus)])
    Tp = np.kron(ones, split.T_plus)
    Sp = np.kron(ones, split.S_plus)
    full = sys.realize()
    stable = mas_stable_realization(sys.inertias, sys.laplacian, sys.input_map, sys.output_map,
                                    ag, split)
    unstable = LtiRealization(Sp.T @ full.E @ Tp, Sp.T @ full.A @ Tp, Sp.T @ full.B, full.C @ Tp)
    residue = np.outer(sys.output_map.sum(axis=1), sys.input_map.sum(axis=0)) / m_plus
    return StableDecomposition(Tm, Sm, Tp, Sp, stable, unstable, residue, m_plus)


class ErrorNorm(NamedTuple):
    absolute: float
    relative: float


def h2_norm(sys: LtiRealization) -> float:
    """H2 norm ``sqrt(trace(C X C^T))`` from the controllability Gramian."""
    if sys.order == 0:
        return 0.0
    X = solve_gen_lyapunov(sys.A, sys.E, sys.B)
    return float(np.sqrt(max(np.trace(sys.C @ X @ sys.C.T), 0.0)))


def h2_inner(sys1: LtiRealization, sys2: LtiRealization) -> float:
    """H2 inner product ``trace(C1 X C2^T)`` with X from a Sylvester equation."""
    if sys1.order == 0 or sys2.order == 0:
        return 0.0
    F1 = np.linalg.solve(sys1.E, sys1.A)
    F2 = np.linalg.solve(sys2.E, sys2.A)
    G1 = np.linalg.solve(sys1.E, sys1.B)
    G2 = np.linalg.solve(sys2.E, sys2.B)
    X = spla.solve_sylvester(F1, F2.T, -G1 @ G2.T)
    return float(np.trace(sys1.C @ X @ sys2.C.T))


def sigma_max_at(sys: LtiRealization, omega: float) -> float:
    if sys.order == 0:
        return 0.0
    return float(np.linalg.norm(sys(1j * omega), 2))


def _golden_max(f, a: float, b: float, tol: float) -> tuple[float, float]:
    """Golden-section search for a maximizer of a unimodal f on [a, b]."""
    g = (np.sqrt(5.0) - 1.0) / 2.0
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    best = max((f(a), a), (f(b), b), (fc, c), (fd, d))
    for _ in range(200):
        if b - a <= tol * max(abs(c), abs(d), 1e-12):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
            best = max(best, (fc, c))
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
            best = max(best, (fd, d))
    return best[1], best[0]


def hinf_grid(poles=None, n_points: int = HINF_GRID_POINTS, omega_range=HINF_OMEGA_RANGE) -> np.ndarray:
    """Logarithmic frequency grid plus zero and the pole imaginary parts."""
    pts = [np.logspace(np.log10(omega_range[0]), np.log10(omega_range[1]), n_points), [0.0]]
    if poles is not None and len(poles):
        pts.append(np.abs(np.asarray(poles).imag))
    return np.unique(np.concatenate(pts))


def hinf_norm(sys: LtiRealization, tol: float = HINF_TOL, n_points: int = HINF_GRID_POINTS,
              omega_range=HINF_OMEGA_RANGE) -> tuple[float, float]:
    """H-infinity norm by grid search and golden-section refinement.

    Returns ``(norm, omega)`` where ``omega`` attains the value.  The result is
    never below the value at any grid point.
    """
    if sys.order == 0:
        return 0.0, 0.0
    grid = hinf_grid(sys.poles(), n_points, omega_range)
    vals = np.array([sigma_max_at(sys, w) for w in grid])
    k = int(np.argmax(vals))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, grid.size - 1)]
    w, v = _golden_max(lambda x: sigma_max_at(sys, x), lo, hi, tol)
    if v < vals[k]:
        return float(vals[k]), float(grid[k])
    return float(v), float(w)


def _as_decomposition(s) -> StableDecomposition:
    if isinstance(s, StableDecomposition):
        return s
    if isinstance(s, LinearMas):
        return decompose_mas(s)
    raise TypeError(f"expected LinearMas or StableDecomposition, got {type(s).__name__}")


def check_unstable_parts(d1: StableDecomposition, d2: StableDecomposition,
                         tol: float = UNSTABLE_MATCH_TOL):
    """Raise unless both systems have the same marginal part (residue comparison)."""
    if d1.T_plus.shape[1] != d2.T_plus.shape[1]:
        raise StabSepError("marginal parts have different dimensions")
    if d1.T_plus.shape[1] == 0:
        return
    if d1.residue.shape != d2.residue.shape:
        raise StabSepError("marginal parts have different input/output dimensions")
    scale = max(np.abs(d1.residue).max(initial=0.0), 1.0)
    if np.abs(d1.residue - d2.residue).max(initial=0.0) > tol * scale:
        raise StabSepError("marginal parts differ; the error system is not stable")


def stable_error_system(sys, red) -> tuple[LtiRealization, LtiRealization]:
    """Return ``(H_minus, H_minus - Hred_minus)`` after checking the marginal parts."""
    d1, d2 = _as_decomposition(sys), _as_decomposition(red)
    check_unstable_parts(d1, d2)
    return d1.stable, concatenate_parallel(d1.stable, d2.stable)


def _relative(absolute: float, reference: float) -> ErrorNorm:
    return ErrorNorm(absolute, absolute / reference if reference > 0 else (0.0 if absolute == 0 else np.inf))


def h2_norm_quadrature(sys: LtiRealization, rtol: float = 1e-10, atol: float = 0.0) -> float:
    """H2 norm from ``(1/pi) int_0^inf ||H(i w)||_F^2 dw`` (substitution ``w = tan t``).

    Slower than :func:`h2_norm` but free of cancellation when ``sys`` is the
    difference of two nearly equal systems.  ``atol`` bounds the absolute
    error of the norm.
    """
    if sys.order == 0:
        return 0.0

    def f(t):
        w = np.tan(t)
        return float(np.sum(np.abs(sys(1j * w)) ** 2)) / np.cos(t) ** 2

    val, _ = quad(f, 0.0, np.pi / 2, epsabs=np.pi * atol ** 2, epsrel=rtol, limit=500)
    return float(np.sqrt(max(val, 0.0) / np.pi))


def h2_error(sys, red) -> ErrorNorm:
    """Absolute and relative H2 error between the stable parts of two systems.

    The Gramian formula loses about half the digits when the error is tiny
    relative to the system; below ``H2_QUADRATURE_BELOW`` the error is
    recomputed by frequency-domain quadrature of the pointwise difference.
    """
    ref, err = stable_error_system(sys, red)
    return _h2_difference(ref, err)


def _h2_difference(ref: LtiRealization, err: LtiRealization) -> ErrorNorm:
    ref_norm = h2_norm(ref)
    abs_err = h2_norm(err)
    if abs_err < H2_QUADRATURE_BELOW * ref_norm:
        abs_err = h2_norm_quadrature(err, atol=1e-13 * ref_norm)
    return _relative(abs_err, ref_norm)


def h2_realization_error(full: LtiRealization, red: LtiRealization) -> ErrorNorm:
    """H2 error between two Hurwitz realizations (no marginal parts involved)."""
    return _h2_difference(full, concatenate_parallel(full, red))


def hinf_error(sys, red, tol: float = HINF_TOL) -> ErrorNorm:
    """Absolute and relative H-infinity error between the stable parts of two systems."""
    ref, err = stable_error_system(sys, red)
    return _relative(hinf_norm(err, tol)[0], hinf_norm(ref, tol)[0])


def principal_angle_sin(V1, V2) -> float:
    """Sine of the largest principal angle between ``span(V1)`` and ``span(V2)``."""
    try:
        Q1 = orthonormalize(V1)
        Q2 = orthonormalize(V2)
    except NumericsError as exc:
        raise StabSepError(f"rank-deficient subspace basis: {exc}") from None
    R = Q1 - Q2 @ (Q2.T @ Q1)
    return float(min(max(np.linalg.norm(R, 2), 0.0), 1.0))
