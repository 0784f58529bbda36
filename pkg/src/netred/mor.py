"""Projection bases: IRKA and balanced truncation for linear systems, POD for simulated ones.

IRKA and balanced truncation act on an :class:`~netred.mas.LtiRealization`; POD
acts on a snapshot matrix.  For marginally stable networks the linear methods are
applied to the asymptotically stable part and the
result is lifted with :func:`assemble_unstable_aware_basis`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as spla

from .mas import LtiRealization
from .numerics import as_matrix, require_hurwitz, solve_gen_lyapunov, svd
from .stabsep import StableDecomposition

HANKEL_CUTOFF = 1e-12
IMAG_AXIS_SHIFT = 1e-8


class MorError(ValueError):
    """Raised for invalid reduction requests."""


class ConvergenceWarning(UserWarning):
    """Issued when IRKA stops at ``max_iter`` without meeting its tolerance."""


@dataclass(frozen=True, eq=False)
class ProjectionBasis:
    """Projection matrices with block-row structure and method diagnostics.

    ``V`` and ``W`` have ``N = n_agents * block_size`` rows.  For Galerkin
    projections ``W`` is ``V``.
    """

    V: np.ndarray
    W: np.ndarray
    block_size: int = 1
    method: str = ""
    iterations: int = 0
    shift_change: float = 0.0
    converged: bool = True
    orthonormal: bool = False
    history: tuple = field(default=())
    shifts: np.ndarray | None = None

    @property
    def order(self) -> int:
        return self.V.shape[1]

    def reduce(self, sys: LtiRealization) -> LtiRealization:
        return sys.project(self.V, self.W)


def _realify(Vc: np.ndarray, shifts: np.ndarray) -> np.ndarray:
    """Real basis for the span of complex columns closed under conjugation."""
    cols = []
    for v, s in zip(Vc.T, shifts):
        if abs(s.imag) <= 1e-12 * max(abs(s), 1.0):
            cols.append(v.real)
        elif s.imag > 0:
            cols.append(v.real)
            cols.append(v.imag)
    R = np.column_stack(cols)
    Q, _ = np.linalg.qr(R)
    return Q


def _tangential_data(Er, Ar, Br, Cr):
    """Mirrored reduced poles with right/left tangential directions."""
    lam, X = spla.eig(Ar, Er)
    Y = np.linalg.solve(X, np.linalg.inv(Er))
    b = (Y @ Br).T
    c = Cr @ X
    sigma = -lam
    # reflect poles that are not in the left half-plane so the shifts stay admissible
    bad = sigma.real <= 0
    sigma = np.where(bad, np.abs(sigma.real) + IMAG_AXIS_SHIFT + 1j * sigma.imag, sigma)
    order = np.lexsort((sigma.imag, sigma.real))
    return sigma[order], b[:, order], c[:, order]


def _shift_change(new: np.ndarray, old: np.ndarray) -> float:
    a, b = np.sort_complex(new), np.sort_complex(old)
    return float(np.max(np.abs(a - b) / np.abs(a)))


def irka(sys: LtiRealization, r: int, seed: int = 0, max_iter: int = 200, tol: float = 1e-6,
         shifts=None) -> ProjectionBasis:
    """Iterative rational Krylov algorithm for a Hurwitz MIMO system.

    Initial shifts are the mirrored poles of the projection of ``sys`` onto a
    random orthonormal ``r``-dimensional subspace (``seed``); tangential
    directions come from the corresponding eigenvectors.  Iteration stops when
    the relative shift change falls below ``tol``.  The returned bases satisfy
    ``W^T E V = I``.
    """
    N = sys.order
    if not 1 <= r <= N:
        raise MorError(f"reduced order must lie in 1..{N}, got {r}")
    require_hurwitz(sys.A, sys.E, "IRKA")
    E, A, B, C = sys.E, sys.A, sys.B, sys.C
    if r == N:
        V = np.eye(N)
        return ProjectionBasis(V, np.linalg.inv(E).T, method="irka", orthonormal=True)
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((N, r)))
    if shifts is None:
        sigma, bt, ct = _tangential_data(Q.T @ E @ Q, Q.T @ A @ Q, Q.T @ B, C @ Q)
    else:
        sigma = np.asarray(shifts, dtype=complex)
        bt = np.ones((B.shape[1], r), dtype=complex)
        ct = np.ones((C.shape[0], r), dtype=complex)
    history = []
    converged = False
    change = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        Vc = np.column_stack([np.linalg.solve(s * E - A, B @ bt[:, k]) for k, s in enumerate(sigma)])
        Wc = np.column_stack([np.linalg.solve((s * E - A).conj().T, C.T @ ct[:, k].conj())
                              for k, s in enumerate(sigma)])
        V = _realify(Vc, sigma)
        W = _realify(Wc, sigma)
        red = sys.project(V, W)
        new_sigma, bt, ct = _tangential_data(red.E, red.A, red.B, red.C)
        change = _shift_change(new_sigma, sigma)
        history.append(change)
        sigma = new_sigma
        if change < tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"IRKA did not converge in {max_iter} iterations "
                      f"(relative shift change {change:.3g})", ConvergenceWarning, stacklevel=2)
    W = W @ np.linalg.inv(V.T @ E.T @ W)
    return ProjectionBasis(V, W, method="irka", iterations=it, shift_change=change,
                           converged=converged, orthonormal=True, history=tuple(history),
                           shifts=sigma)


def _gramian_factor(X: np.ndarray) -> np.ndarray:
    """Factor Z with ``Z Z^T = X`` for a symmetric positive semidefinite X."""
    w, U = np.linalg.eigh(0.5 * (X + X.T))
    return U * np.sqrt(np.clip(w, 0.0, None))


@dataclass(frozen=True, eq=False)
class BalancedTruncation:
    basis: ProjectionBasis
    hankel_values: np.ndarray
    error_bound: float


def balanced_truncation(sys: LtiRealization, r: int) -> BalancedTruncation:
    """Square-root balanced truncation.

    Hankel singular values below ``HANKEL_CUTOFF`` relative to the largest are
    not balanced; the reduced order is capped at the number of remaining values.
    The H-infinity error bound is twice the sum of the truncated Hankel values.
    """
    N = sys.order
    if not 0 <= r <= N:
        raise MorError(f"reduced order must lie in 0..{N}, got {r}")
    P = solve_gen_lyapunov(sys.A, sys.E, sys.B)
    Q = solve_gen_lyapunov(sys.A.T, sys.E.T, sys.C.T)
    Zp, Zq = _gramian_factor(P), _gramian_factor(Q)
    U, s, Vh = svd(Zq.T @ sys.E @ Zp)
    keep = int(np.sum(s > HANKEL_CUTOFF * max(s[0], 1e-300))) if s.size else 0
    rr = min(r, keep)
    scale = 1.0 / np.sqrt(s[:rr])
    V = Zp @ Vh[:, :rr] * scale
    W = Zq @ U[:, :rr] * scale
    bound = 2.0 * float(np.sum(s[rr:]))
    basis = ProjectionBasis(V, W, method="bt")
    return BalancedTruncation(basis, s, bound)


def pod(snapshots, r: int, block_size: int = 1) -> tuple[ProjectionBasis, np.ndarray]:
    """Proper orthogonal decomposition: leading left singular vectors of the snapshots.

    Returns the basis and all singular values.  If ``r`` exceeds the numerical
    rank a warning is issued and the basis is truncated to that rank.
    """
    S = as_matrix(snapshots, "snapshots")
    if S.shape[1] < r:
        raise MorError(f"need at least {r} snapshots, got {S.shape[1]}")
    U, s, _ = svd(S)
    rank = int(np.sum(s > max(S.shape) * np.finfo(float).eps * max(s[0], 1e-300))) if s.size else 0
    if r > rank:
        warnings.warn(f"POD order {r} exceeds numerical rank {rank}; truncating", stacklevel=2)
        r = rank
    V = U[:, :r]
    return ProjectionBasis(V, V, block_size=block_size, method="pod", orthonormal=True), s


def assemble_unstable_aware_basis(decomp: StableDecomposition, inner: ProjectionBasis | None):
    """Lift a stable-part basis: ``V = [T_minus V_minus, T_plus]``, ``W = [S_minus W_minus, S_plus]``."""
    if inner is None or inner.order == 0:
        return decomp.T_plus.copy(), decomp.S_plus.copy()
    V = np.hstack([decomp.T_minus @ inner.V, decomp.T_plus])
    W = np.hstack([decomp.S_minus @ inner.W, decomp.S_plus])
    return V, W
