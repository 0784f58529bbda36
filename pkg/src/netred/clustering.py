"""Recovering graph partitions from projection bases.

Agent i is represented by its row of V (or its n x r_P block of rows for
agents of order n).  Agents with similar rows are merged, either with
QR-pivot clustering or with k-means.  For an orthonormal V and a partition
with characteristic matrix P, the k-means cost equals
``||(I - P (P^T P)^{-1} P^T) V||_F^2``, which bounds the squared sine of the
largest principal angle between ``span V`` and ``span P``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import as_matrix, orthonormalize, qr_column_pivot, svd
from .partition import Partition, characteristic_matrix, partition_from_labels

SOURCES = ("v", "w", "vw")
RANK_TOL = 1e-12
ORTHONORMAL_TOL = 1e-10


class ClusteringError(ValueError):
    """Raised when a partition cannot be formed from the given features."""


@dataclass(frozen=True, eq=False)
class ClusterInput:
    """A basis to cluster, with ``block_size`` rows per agent."""

    basis: np.ndarray
    block_size: int = 1
    source: str = "v"

    def __post_init__(self):
        b = as_matrix(self.basis, "basis")
        if self.block_size < 1 or b.shape[0] % self.block_size:
            raise ClusteringError(
                f"basis with {b.shape[0]} rows is not divisible into blocks of {self.block_size}")
        object.__setattr__(self, "basis", b)

    @property
    def mode(self) -> str:
        return "rows" if self.block_size == 1 else "block_rows"

    @property
    def n_agents(self) -> int:
        return self.basis.shape[0] // self.block_size


def feature_rows(inp) -> np.ndarray:
    """Feature matrix with one row per agent (its block of rows flattened row-major)."""
    if not isinstance(inp, ClusterInput):
        inp = ClusterInput(inp)
    return inp.basis.reshape(inp.n_agents, -1)


def clustering_basis(V, W=None, source: str = "v", r: int | None = None) -> np.ndarray:
    """Orthonormal basis selected by ``source``.

    ``v`` and ``w`` orthonormalize V or W; ``vw`` takes the first ``r`` left
    singular vectors of ``[orth(V), orth(W)]`` (``r`` defaults to V's width).
    """
    source = source.lower()
    if source not in SOURCES:
        raise ClusteringError(f"unknown basis source {source!r}; expected one of {SOURCES}")
    if source == "v":
        return orthonormalize(V)
    if W is None:
        raise ClusteringError(f"basis source {source!r} requires W")
    if source == "w":
        return orthonormalize(W)
    r = np.shape(V)[1] if r is None else r
    U, _, _ = svd(np.hstack([orthonormalize(V), orthonormalize(W)]))
    return U[:, :r]


def qr_cluster(inp, r: int | None = None) -> Partition:
    """QR-pivot clustering of the feature rows.

    The pivoted QR of ``F^T`` selects ``r`` representative agents.  Every other
    agent gets the coefficients ``R11^{-1} R12`` expressing its feature in terms
    of the representatives and joins the one with the largest absolute
    coefficient (ties go to the earliest pivot).
    """
    F = feature_rows(inp)
    n = F.shape[0]
    r = F.shape[1] if r is None else int(r)
    if not 1 <= r <= n:
        raise ClusteringError(f"cluster count must lie in 1..{n}, got {r}")
    Q, R, piv = qr_column_pivot(F.T)
    d = np.abs(np.diag(R))
    if d.size < r or d[r - 1] <= RANK_TOL * max(d[0], 1e-300):
        raise ClusteringError(f"feature matrix has rank below {r}; cannot seed {r} clusters")
    coef = np.zeros((r, n))
    coef[:, piv[:r]] = np.eye(r)
    if n > r:
        coef[:, piv[r:]] = np.linalg.solve(R[:r, :r], R[:r, r:])
    labels = np.argmax(np.abs(coef), axis=0)
    return partition_from_labels(labels)


@dataclass(frozen=True, eq=False)
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    cost: float
    iterations: int
    seed: int
    restart: int = 0
    cost_history: tuple = field(default=())


def _sq_dist(X, C):
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def _kmeanspp(X, r, rng):
    """Greedy k-means++ seeding.

    Each new center is the best (lowest resulting potential) of
    ``2 + floor(ln r)`` candidates drawn with probability proportional to the
    squared distance to the nearest chosen center.
    """
    n = X.shape[0]
    trials = 2 + int(np.log(r))
    centers = [X[rng.integers(n)]]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, r):
        total = d2.sum()
        if total <= 0:
            cand = rng.integers(n, size=trials)
        else:
            cand = np.searchsorted(np.cumsum(d2), rng.random(trials) * total, side="right")
            cand = np.minimum(cand, n - 1)
        cd2 = np.minimum(d2[None, :], ((X[None, :, :] - X[cand][:, None, :]) ** 2).sum(axis=2))
        best = int(np.argmin(cd2.sum(axis=1)))
        centers.append(X[cand[best]])
        d2 = cd2[best]
    return np.array(centers)


def _repair_empty(X, labels, r):
    """Move the farthest point of the costliest cluster into each empty cluster."""
    while True:
        counts = np.bincount(labels, minlength=r)
        empty = np.flatnonzero(counts == 0)
        if empty.size == 0:
            return labels
        centers = np.array([X[labels == k].mean(axis=0) if counts[k] else np.zeros(X.shape[1])
                            for k in range(r)])
        d2 = ((X - centers[labels]) ** 2).sum(axis=1)
        costs = np.bincount(labels, weights=d2, minlength=r)
        costs[counts <= 1] = -1.0
        big = int(np.argmax(costs))
        members = np.flatnonzero(labels == big)
        far = members[int(np.argmax(d2[members]))]
        labels = labels.copy()
        labels[far] = empty[0]


def _lloyd(X, centers, max_iter):
    r = centers.shape[0]
    labels = np.argmin(_sq_dist(X, centers), axis=1)
    labels = _repair_empty(X, labels, r)
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        centers = np.array([X[labels == k].mean(axis=0) for k in range(r)])
        d = _sq_dist(X, centers)
        history.append(float(d[np.arange(X.shape[0]), labels].sum()))
        new = _repair_empty(X, np.argmin(d, axis=1), r)
        if np.array_equal(new, labels):
            break
        labels = new
    centers = np.array([X[labels == k].mean(axis=0) for k in range(r)])
    cost = float(((X - centers[labels]) ** 2).sum())
    history.append(cost)
    return labels, centers, cost, it, history


def kmeans(X, r: int, seed: int = 0, n_init: int = 50, max_iter: int = 300) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding; the best of ``n_init`` restarts is kept."""
    X = as_matrix(X, "features")
    n = X.shape[0]
    if not 1 <= r <= n:
        raise ClusteringError(f"cluster count must lie in 1..{n}, got {r}")
    rng = np.random.default_rng(seed)
    best = None
    for restart in range(max(int(n_init), 1)):
        labels, centers, cost, it, hist = _lloyd(X, _kmeanspp(X, r, rng), max_iter)
        if best is None or cost < best.cost:
            best = KMeansResult(labels, centers, cost, it, seed, restart, tuple(hist))
    return best


def kmeans_cluster(inp, r: int, seed: int = 0, n_init: int = 50,
                   max_iter: int = 300) -> tuple[Partition, KMeansResult]:
    """k-means on the feature rows; returns the canonical partition and the raw result."""
    res = kmeans(feature_rows(inp), r, seed=seed, n_init=n_init, max_iter=max_iter)
    return partition_from_labels(res.labels), res


def kmeans_cost(F, p: Partition) -> float:
    """Sum of squared distances of feature rows to their cluster means."""
    F = as_matrix(F, "features")
    lab = p.labels()
    cost = 0.0
    for k in range(p.n_clusters):
        rows = F[lab == k]
        cost += float(((rows - rows.mean(axis=0)) ** 2).sum())
    return cost


def kmeans_cost_equals_projection_bound(V, p: Partition) -> tuple[float, float]:
    """Return the k-means cost of ``p`` on the rows of V and ``||(I - Pi_P) V||_F^2``.

    V must have orthonormal columns; the two numbers agree up to rounding.
    """
    V = as_matrix(V, "V")
    if np.abs(V.T @ V - np.eye(V.shape[1])).max(initial=0.0) > ORTHONORMAL_TOL:
        raise ClusteringError("V must have orthonormal columns")
    P = characteristic_matrix(p)
    Pn = P / np.sqrt(P.sum(axis=0))
    resid = V - Pn @ (Pn.T @ V)
    return kmeans_cost(V, p), float((resid ** 2).sum())


def cluster_basis(inp, r: int, algo: str = "kmeans", seed: int = 0, n_init: int = 50) -> Partition:
    """Dispatch to :func:`qr_cluster` or :func:`kmeans_cluster`."""
    algo = algo.lower()
    if algo == "qr":
        return qr_cluster(inp, r)
    if algo == "kmeans":
        return kmeans_cluster(inp, r, seed=seed, n_init=n_init)[0]
    raise ClusteringError(f"unknown clustering algorithm {algo!r}")

