"""Dense linear algebra and time integration used throughout the package.

All tolerance constants live here so the rest of the code shares one policy.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as spla
from scipy.integrate import solve_ivp

HURWITZ_TOL = 1e-9
FACTOR_RTOL = 1e-10
SYMMETRY_TOL = 1e-10
ODE_RTOL = 1e-6
ODE_ATOL = 1e-9
KRONECKER_MAX_DIM = 50

# Reconstruction residuals are verified when this is set (tests enable it).
DEBUG_CHECKS = os.environ.get("NETRED_DEBUG", "") not in ("", "0")


class NumericsError(ValueError):
    """Raised when an input violates a numerical precondition."""


class NotHurwitzError(NumericsError):
    """Raised when a pencil that must be Hurwitz has an eigenvalue with Re >= -tol."""

    def __init__(self, eigenvalue: complex, context: str = ""):
        self.eigenvalue = eigenvalue
        where = f" ({context})" if context else ""
        super().__init__(f"pencil is not Hurwitz{where}: eigenvalue {eigenvalue:.6g} "
                         f"has real part >= -{HURWITZ_TOL:g}")


class IntegrationError(RuntimeError):
    """Raised when the time integrator fails; ``t_reached`` is the last accepted time."""

    def __init__(self, message: str, t_reached: float):
        self.t_reached = float(t_reached)
        super().__init__(f"{message} (integration stopped at t = {self.t_reached:.6g})")


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Convert to a finite 2-D float array."""
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if m.ndim != 2:
        raise NumericsError(f"{name} must be two-dimensional")
    if not np.all(np.isfinite(m)):
        raise NumericsError(f"{name} contains non-finite entries")
    return m


def _check(ok: bool, what: str):
    if not ok:
        raise NumericsError(f"{what} reconstruction residual exceeds tolerance")


def sym_gen_eig(A, M=None):
    """Eigenpairs of the symmetric-definite pencil ``A v = lambda M v``.

    Returns eigenvalues ascending and M-orthonormal eigenvectors (columns).
    """
    A = as_matrix(A, "A")
    nrm = max(np.linalg.norm(A), 1.0)
    if np.max(np.abs(A - A.T), initial=0.0) > SYMMETRY_TOL * nrm:
        raise NumericsError("A is not symmetric")
    if M is None:
        w, V = spla.eigh(A)
    else:
        M = as_matrix(M, "M")
        if np.max(np.abs(M - M.T), initial=0.0) > SYMMETRY_TOL * max(np.linalg.norm(M), 1.0):
            raise NumericsError("M is not symmetric")
        try:
            spla.cholesky(M)
        except np.linalg.LinAlgError:
            raise NumericsError("M is not positive definite") from None
        w, V = spla.eigh(A, M)
    return w, V


def hurwitz_abscissa(A, E=None) -> tuple[float, complex]:
    """Largest real part of the spectrum of ``(A, E)`` and the eigenvalue attaining it."""
    A = as_matrix(A, "A")
    if A.size == 0:
        return -np.inf, complex(-np.inf)
    lam = spla.eigvals(A) if E is None else spla.eigvals(A, as_matrix(E, "E"))
    k = int(np.argmax(lam.real))
    return float(lam[k].real), complex(lam[k])


def is_hurwitz(A, E=None, tol: float = HURWITZ_TOL) -> bool:
    return hurwitz_abscissa(A, E)[0] < -tol


def require_hurwitz(A, E=None, context: str = ""):
    alpha, lam = hurwitz_abscissa(A, E)
    if not alpha < -HURWITZ_TOL:
        raise NotHurwitzError(lam, context)


def qr_column_pivot(A):
    """Economy QR with column pivoting: ``A[:, piv] = Q R``.

    The diagonal of R is non-increasing in magnitude.
    """
    A = as_matrix(A, "A")
    Q, R, piv = spla.qr(A, mode="economic", pivoting=True)
    if DEBUG_CHECKS:
        _check(np.linalg.norm(A[:, piv] - Q @ R) <= FACTOR_RTOL * max(np.linalg.norm(A), 1e-300),
               "pivoted QR")
    return Q, R, piv


def svd(A):
    """Thin SVD ``A = U diag(s) V^T`` with a deterministic sign convention.

    Each left singular vector has its largest-magnitude entry positive (ties go
    to the first such entry); the right vectors are flipped accordingly.
    """
    A = as_matrix(A, "A")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if U.size:
        idx = np.argmax(np.abs(U), axis=0)
        signs = np.sign(U[idx, np.arange(U.shape[1])])
        signs[signs == 0] = 1.0
        U = U * signs
        Vt = Vt * signs[:, None]
    if DEBUG_CHECKS:
        _check(np.linalg.norm(A - (U * s) @ Vt) <= FACTOR_RTOL * max(np.linalg.norm(A), 1e-300), "SVD")
    return U, s, Vt.T


def orthonormalize(V) -> np.ndarray:
    """Orthonormal basis of the column span of a full-rank V (via QR)."""
    V = as_matrix(V, "V")
    Q, R = np.linalg.qr(V)
    d = np.abs(np.diag(R))
    if d.size and d.min() <= 1e-12 * max(d.max(), 1e-300):
        raise NumericsError("matrix does not have full column rank")
    return Q


def solve_gen_lyapunov(A, E, B) -> np.ndarray:
    """Solve ``A X E^T + E X A^T + B B^T = 0`` for symmetric positive semidefinite X.

    The pencil ``(A, E)`` must be Hurwitz.  The equation is transformed to the
    standard form ``(E^{-1}A) X + X (E^{-1}A)^T + E^{-1} B B^T E^{-T} = 0`` and
    solved by Bartels-Stewart; small problems whose residual is unsatisfactory
    fall back to a Kronecker-product linear solve.
    """
    A = as_matrix(A, "A")
    E = np.eye(A.shape[0]) if E is None else as_matrix(E, "E")
    B = as_matrix(B, "B")
    if A.shape[0] == 0:
        return np.zeros((0, 0))
    require_hurwitz(A, E, "Lyapunov equation")
    lu = spla.lu_factor(E)
    F = spla.lu_solve(lu, A)
    G = spla.lu_solve(lu, B)
    Q = G @ G.T
    X = spla.solve_continuous_lyapunov(F, -Q)
    X = 0.5 * (X + X.T)
    qn = max(np.linalg.norm(B @ B.T), 1e-300)
    res = np.linalg.norm(A @ X @ E.T + E @ X @ A.T + B @ B.T)
    if res > 1e-8 * qn and A.shape[0] <= KRONECKER_MAX_DIM:
        n = A.shape[0]
        K = np.kron(np.eye(n), F) + np.kron(F, np.eye(n))
        X = np.linalg.solve(K, -Q.reshape(-1, order="F")).reshape(n, n, order="F")
        X = 0.5 * (X + X.T)
    return X


@dataclass(frozen=True, eq=False)
class OdeSolution:
    """Trajectory samples.

    ``states[k]`` is the state at ``times[k]``; ``accepted_steps`` counts the
    integrator's accepted steps over the whole interval.
    """

    times: np.ndarray
    states: np.ndarray
    accepted_steps: int

    def snapshot_matrix(self) -> np.ndarray:
        """States as columns (state dimension x number of samples)."""
        return self.states.T


def integrate_ode(rhs: Callable, x0, t_span, *, mass=None, jac: Callable | None = None,
                  rtol: float = ODE_RTOL, atol: float = ODE_ATOL, sample_times=None,
                  vectorized: bool = False, method: str = "BDF") -> OdeSolution:
    """Integrate ``mass @ x' = rhs(t, x)`` with an adaptive stiff solver.

    Parameters
    ----------
    rhs
        Callable ``rhs(t, x)``.  With ``vectorized=True`` it must accept states
        of shape ``(N, k)`` and return the same shape.
    mass
        Constant invertible mass matrix (1-D arrays are taken as diagonals).
    jac
        Optional Jacobian ``d rhs / dx`` as a callable ``jac(t, x)``.
    sample_times
        If given, the solution is returned at these times (interpolated with the
        integrator's dense output); otherwise at every accepted step.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    t0, t1 = float(t_span[0]), float(t_span[1])
    N = x0.size

    if mass is None:
        fun, jfun = rhs, jac
    else:
        mass = np.asarray(mass, dtype=float)
        if mass.ndim == 1:
            inv = 1.0 / mass
            if not np.all(np.isfinite(inv)):
                raise NumericsError("mass matrix is singular")

            def fun(t, x):
                f = rhs(t, x)
                return f * (inv[:, None] if np.ndim(f) == 2 else inv)

            jfun = None if jac is None else (lambda t, x: inv[:, None] * jac(t, x))
        else:
            lu = spla.lu_factor(mass)

            def fun(t, x):
                return spla.lu_solve(lu, rhs(t, x))

            jfun = None if jac is None else (lambda t, x: spla.lu_solve(lu, jac(t, x)))

    def guarded(t, x):
        f = fun(t, x)
        if not np.all(np.isfinite(f)):
            raise IntegrationError("right-hand side produced non-finite values", t)
        return f

    kwargs = dict(method=method, rtol=rtol, atol=atol, dense_output=sample_times is not None,
                  vectorized=vectorized)
    if jfun is not None and method in ("BDF", "Radau", "LSODA"):
        kwargs["jac"] = jfun
    if N == 0:
        times = np.asarray(sample_times if sample_times is not None else [t0, t1], dtype=float)
        return OdeSolution(times, np.zeros((times.size, 0)), 0)
    sol = solve_ivp(guarded, (t0, t1), x0, **kwargs)
    if sol.status < 0:
        t_last = sol.t[-1] if sol.t.size else t0
        raise IntegrationError(sol.message, t_last)
    steps = sol.t.size - 1
    if sample_times is None:
        return OdeSolution(sol.t.copy(), sol.y.T.copy(), steps)
    ts = np.asarray(sample_times, dtype=float)
    if ts.size and (np.any(np.diff(ts) <= 0) or ts[0] < min(t0, t1) or ts[-1] > max(t0, t1)):
        raise NumericsError("sample times must be strictly increasing and inside t_span")
    return OdeSolution(ts, sol.sol(ts).T.copy(), steps)
