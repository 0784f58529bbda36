"""Exhaustive partition ranking and the basis-to-partition pipelines.

The exhaustive sweep evaluates every partition with a fixed number of
clusters.  Partitions are processed in chunks of consecutive enumeration
indices; each chunk builds the clustered stable parts, diagonalizes them in a
batch and evaluates

* the H2 error through modal inner products
  ``<H1, H2> = -sum_kl (c1_k . c2_l)(b1_k . b2_l) / (l1_k + l2_l)``, and
* the H-infinity error as the maximum over a coarse frequency grid.

The best candidates are then re-evaluated with the standalone routines of
:mod:`netred.stabsep`, which produce the reported numbers.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .clustering import ClusterInput, cluster_basis, clustering_basis
from .mas import LinearMas, cluster_reduce
from .mor import balanced_truncation, irka
from .partition import (Partition, count_partitions, enumerate_partitions, iter_rgs,
                        partition_from_rgs, partition_index)
from .stabsep import (StableDecomposition, decompose_mas, h2_error, h2_norm,
                      h2_realization_error, hinf_error,
                      hinf_grid, hinf_norm, mas_stable_realization, split_pencil)

METRICS = ("h2", "hinf")
DEFAULT_BUDGET = 10 ** 6
CHUNK_SIZE = 1000
SUB_BATCH = 100
SWEEP_GRID_POINTS = 200
REFINE_COUNT = 100
TIE_RTOL = 1e-9
MODAL_COND_MAX = 1e8
WORKERS_ENV = "NETRED_WORKERS"


class SearchError(ValueError):
    """Raised for invalid search or pipeline requests."""


class BudgetExceeded(SearchError):
    """Raised when the number of partitions exceeds the configured budget."""


class InvalidCombination(SearchError):
    """Raised for pipeline option combinations that are not meaningful."""


@dataclass(frozen=True)
class RankedPartition:
    rank: int
    metric: str
    relative_error: float
    partition: Partition


def default_workers() -> int:
    value = os.environ.get(WORKERS_ENV)
    if value:
        try:
            return max(int(value), 1)
        except ValueError:
            raise SearchError(f"{WORKERS_ENV} must be an integer, got {value!r}") from None
    return 1


def partition_error(sys: LinearMas, p: Partition, metric: str = "h2",
                    decomp: StableDecomposition | None = None) -> float:
    """Relative error of the clustered model for one partition (standalone evaluation)."""
    decomp = decompose_mas(sys) if decomp is None else decomp
    red = decompose_mas(cluster_reduce(sys, p))
    if metric == "h2":
        return h2_error(decomp, red).relative
    if metric == "hinf":
        return hinf_error(decomp, red).relative
    raise SearchError(f"unknown metric {metric!r}; expected one of {METRICS}")


# ---------------------------------------------------------------------------
# batched evaluation


def _modal(E, A, B, C):
    """Batched modal form: poles, output directions C X, input directions X^{-1} E^{-1} B."""
    F = np.linalg.solve(E, A)
    G = np.linalg.solve(E, B)
    lam, X = np.linalg.eig(F)
    Bm = np.linalg.solve(X, G.astype(complex))
    Cm = C @ X
    return lam, Bm, Cm, np.linalg.cond(X)


class _Evaluator:
    """Shared, immutable data for evaluating partitions of one system."""

    def __init__(self, sys: LinearMas, r: int, metric: str):
        if metric not in METRICS:
            raise SearchError(f"unknown metric {metric!r}; expected one of {METRICS}")
        self.sys, self.r, self.metric = sys, r, metric
        self.decomp = decompose_mas(sys)
        self.split = None if sys.agent.is_single_integrator else split_pencil(sys.agent.A, sys.agent.E)
        st = self.decomp.stable
        lam, Bm, Cm, _ = _modal(st.E[None], st.A[None], st.B[None], st.C[None])
        self.lam0, self.B0, self.C0 = lam[0], Bm[0], Cm[0]
        if metric == "h2":
            self.ref = h2_norm(st)
            self.g11 = self.ref ** 2
        else:
            self.ref = hinf_norm(st)[0]
            self.omega = hinf_grid(None, SWEEP_GRID_POINTS)
            self.H0 = self._response(self.lam0[None], self.B0[None], self.C0[None])[0]

    def _response(self, lam, Bm, Cm):
        s = 1j * self.omega
        R = 1.0 / (s[None, :, None] - lam[:, None, :])  # (c, w, k)
        return (Cm[:, None, :, :] * R[:, :, None, :]) @ Bm[:, None, :, :]

    def _reduced(self, rgs_list):
        sys = self.sys
        P = np.zeros((sys.n_agents, self.r))
        stacks = []
        for a in rgs_list:
            P[:] = 0.0
            P[np.arange(sys.n_agents), a] = 1.0
            st = mas_stable_realization(P.T @ sys.inertias, P.T @ sys.laplacian @ P,
                                        P.T @ sys.input_map, sys.output_map @ P, sys.agent, self.split)
            stacks.append((st.E, st.A, st.B, st.C))
        return [np.stack(z) for z in zip(*stacks)]

    def _h2_values(self, E, A, B, C):
        lam, Bm, Cm, cond = _modal(E, A, B, C)
        den22 = lam[:, :, None] + lam[:, None, :]
        g22 = -np.einsum("cpk,cpl,ckm,clm,ckl->c", Cm, Cm, Bm, Bm, 1.0 / den22)
        den12 = self.lam0[None, :, None] + lam[:, None, :]
        g12 = -np.einsum("pk,cpl,km,clm,ckl->c", self.C0, Cm, self.B0, Bm, 1.0 / den12)
        err2 = self.g11 - 2.0 * g12.real + g22.real
        return np.sqrt(np.clip(err2, 0.0, None)) / self.ref, cond

    def _hinf_values(self, E, A, B, C):
        lam, Bm, Cm, cond = _modal(E, A, B, C)
        D = self.H0[None] - self._response(lam, Bm, Cm)  # (c, w, p, m)
        Dh = np.conj(np.swapaxes(D, -1, -2))
        G = Dh @ D if D.shape[-1] <= D.shape[-2] else D @ Dh
        if G.shape[-1] == 1:
            top = G[..., 0, 0].real
        elif G.shape[-1] == 2:
            a, d = G[..., 0, 0].real, G[..., 1, 1].real
            top = 0.5 * (a + d) + np.sqrt(0.25 * (a - d) ** 2 + np.abs(G[..., 0, 1]) ** 2)
        else:
            top = np.linalg.eigvalsh(G)[..., -1]
        smax = np.sqrt(np.clip(top, 0.0, None))
        return smax.max(axis=1) / self.ref, cond

    def evaluate(self, start: int, stop: int) -> np.ndarray:
        rgs = list(iter_rgs(self.sys.n_agents, self.r, start, stop))
        out = np.empty(len(rgs))
        fn = self._h2_values if self.metric == "h2" else self._hinf_values
        for b in range(0, len(rgs), SUB_BATCH):
            part = rgs[b:b + SUB_BATCH]
            E, A, B, C = self._reduced(part)
            vals, cond = fn(E, A, B, C)
            bad = ~(cond < MODAL_COND_MAX) | ~np.isfinite(vals)
            for k in np.flatnonzero(bad):
                vals[k] = self.standalone(partition_from_rgs(part[k]))
            out[b:b + len(part)] = vals
        return out

    def standalone(self, p: Partition) -> float:
        return partition_error(self.sys, p, self.metric, self.decomp)


_WORKER: _Evaluator | None = None


def _init_worker(sys, r, metric):
    global _WORKER
    _WORKER = _Evaluator(sys, r, metric)


def _run_chunk(bounds):
    return bounds[0], _WORKER.evaluate(*bounds)


def _checkpoint_key(sys: LinearMas, r: int, metric: str) -> str:
    h = hashlib.sha256()
    for arr in (sys.laplacian, sys.inertias, sys.input_map, sys.output_map, sys.agent.E,
                sys.agent.A, sys.agent.B, sys.agent.C, sys.agent.K):
        h.update(np.ascontiguousarray(arr, dtype=float).tobytes())
        h.update(str(arr.shape).encode())
    h.update(f"{r}:{metric}:{SWEEP_GRID_POINTS}:{CHUNK_SIZE}".encode())
    return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# census and ranking


@dataclass
class Census:
    """Sweep values of every partition (by enumeration index) plus refined values."""

    n_vertices: int
    n_clusters: int
    metric: str
    values: np.ndarray
    refined: dict = field(default_factory=dict)

    def best_known(self) -> np.ndarray:
        v = self.values.copy()
        for k, val in self.refined.items():
            v[k] = val
        return v

    def _order(self, indices, vals) -> list[int]:
        """Sort indices by value; near-equal values are ordered canonically."""
        idx = sorted(indices, key=lambda k: vals[k])
        out, group = [], []
        for k in idx:
            if group and vals[k] - vals[group[0]] > TIE_RTOL * max(abs(vals[group[0]]), 1e-300):
                out.extend(sorted(group, key=self._key))
                group = []
            group.append(k)
        out.extend(sorted(group, key=self._key))
        return out

    def _key(self, k: int):
        return self.partition(k).sort_key()

    def partition(self, k: int) -> Partition:
        return next(enumerate_partitions(self.n_vertices, self.n_clusters, k, k + 1))

    def ranked(self, top_k: int) -> list[RankedPartition]:
        vals = self.best_known()
        candidates = list(self.refined) if len(self.refined) >= min(top_k, vals.size) else range(vals.size)
        order = self._order(candidates, vals)[:top_k]
        return [RankedPartition(i + 1, self.metric, float(vals[k]), self.partition(k))
                for i, k in enumerate(order)]

    def rank_of(self, p: Partition, value: float | None = None) -> int:
        """1-based rank of ``p`` among all partitions (ties ordered canonically)."""
        vals = self.best_known()
        k = partition_index(p)
        v = vals[k] if value is None else value
        tol = TIE_RTOL * max(abs(v), 1e-300)
        below = int(np.sum(vals < v - tol))
        tied = np.flatnonzero(np.abs(vals - v) <= tol)
        key = p.sort_key()
        return 1 + below + sum(1 for q in tied if q != k and self._key(q) < key)


def _first_partition(n: int, r: int) -> Partition:
    return partition_from_rgs(next(iter_rgs(n, r)))


def partition_census(sys: LinearMas, r: int, metric: str = "h2", workers: int | None = None,
                     budget: int = DEFAULT_BUDGET, checkpoint_dir=None, refine: int = REFINE_COUNT,
                     progress: Callable | None = None) -> Census:
    """Evaluate every partition into ``r`` clusters and refine the best ``refine`` candidates."""
    metric = metric.lower()
    if metric not in METRICS:
        raise SearchError(f"unknown metric {metric!r}; expected one of {METRICS}")
    n = sys.n_agents
    if not 1 <= r <= n:
        raise SearchError(f"cluster count must lie in 1..{n}, got {r}")
    total = count_partitions(n, r)
    if total > budget:
        raise BudgetExceeded(f"{total} partitions exceed the budget of {budget}; "
                             "use the clustering pipeline instead")
    workers = default_workers() if workers is None else max(int(workers), 1)
    chunks = [(s, min(s + CHUNK_SIZE, total)) for s in range(0, total, CHUNK_SIZE)]
    values = np.full(total, np.nan)

    ckdir = None
    if checkpoint_dir is not None:
        ckdir = Path(checkpoint_dir) / _checkpoint_key(sys, r, metric)
        ckdir.mkdir(parents=True, exist_ok=True)
        (ckdir / "meta.json").write_text(json.dumps({"n": n, "r": r, "metric": metric, "total": total}))
    todo = []
    for c in chunks:
        f = None if ckdir is None else ckdir / f"chunk_{c[0]:09d}.npy"
        if f is not None and f.exists():
            values[c[0]:c[1]] = np.load(f)
        else:
            todo.append(c)
    done = len(chunks) - len(todo)

    def store(start, vals):
        nonlocal done
        values[start:start + vals.size] = vals
        if ckdir is not None:
            np.save(ckdir / f"chunk_{start:09d}.npy", vals)
        done += 1
        if progress is not None:
            progress(done, len(chunks))

    if todo and total == 1:
        # r = 1 or r = n: the single partition is evaluated directly (the
        # clustered stable part may be empty, which the batch path excludes)
        store(0, np.array([partition_error(sys, _first_partition(n, r), metric)]))
    elif todo:
        if workers == 1:
            ev = _Evaluator(sys, r, metric)
            for c in todo:
                store(c[0], ev.evaluate(*c))
        else:
            with ProcessPoolExecutor(workers, initializer=_init_worker,
                                     initargs=(sys, r, metric)) as pool:
                for start, vals in pool.map(_run_chunk, todo):
                    store(start, vals)
    census = Census(n, r, metric, values)
    k = min(refine, total)
    best = np.argsort(values, kind="stable")[:k]
    decomp = decompose_mas(sys)
    for idx in best:
        census.refined[int(idx)] = partition_error(sys, census.partition(int(idx)), metric, decomp)
    return census


def rank_all_partitions(sys: LinearMas, r: int, metric: str = "h2", top_k: int = 15,
                        workers: int | None = None, budget: int = DEFAULT_BUDGET,
                        checkpoint_dir=None, progress: Callable | None = None) -> list[RankedPartition]:
    """Top ``top_k`` partitions into ``r`` clusters by relative stable-part error."""
    refine = max(REFINE_COUNT, top_k)
    census = partition_census(sys, r, metric, workers, budget, checkpoint_dir, refine, progress)
    return census.ranked(top_k)


# ---------------------------------------------------------------------------
# pipeline


@dataclass(frozen=True, eq=False)
class PipelineResult:
    partition: Partition
    h2: float
    hinf: float
    h2_rank: int | None
    hinf_rank: int | None
    basis_error: float
    method: str
    source: str
    algo: str


MOR_METHODS = ("irka", "bt")
ALGOS = ("qr", "kmeans")


def heuristic_pipeline(sys: LinearMas, r: int, mor: str = "irka", source: str = "v",
                       algo: str = "kmeans", order: int | None = None, seed: int = 0,
                       n_init: int = 50, tables: dict | None = None) -> PipelineResult:
    """Decompose, reduce the stable part, cluster the lifted basis and evaluate.

    The clustered basis is ``T_minus V_minus`` (and ``S_minus W_minus``), i.e.
    the reduced stable subspace in network coordinates; the consensus direction
    is omitted since every partition contains it.  ``tables`` may map metric
    names to :class:`Census` objects to report ranks.
    """
    mor, source, algo = mor.lower(), source.lower(), algo.lower()
    order = r if order is None else int(order)
    if mor not in MOR_METHODS:
        raise InvalidCombination(f"reduction method {mor!r} is not available for linear systems; "
                                 f"expected one of {MOR_METHODS}")
    if algo not in ALGOS:
        raise InvalidCombination(f"unknown clustering algorithm {algo!r}")
    if algo == "qr" and r != order:
        raise InvalidCombination("QR clustering yields exactly as many clusters as basis "
                                 f"columns (order {order}), but {r} clusters were requested")
    if not 1 <= r <= sys.n_agents:
        raise InvalidCombination(f"cluster count must lie in 1..{sys.n_agents}")
    decomp = decompose_mas(sys)
    n_stable = decomp.stable.order
    if r == sys.n_agents or n_stable == 0:
        p = Partition.singletons(sys.n_agents) if r == sys.n_agents else Partition(
            sys.n_agents, (tuple(range(1, sys.n_agents + 1)),))
        basis_err = 0.0
    else:
        if not 1 <= order <= n_stable:
            raise InvalidCombination(f"reduction order must lie in 1..{n_stable}")
        if mor == "irka":
            basis = irka(decomp.stable, order, seed=seed)
        else:
            basis = balanced_truncation(decomp.stable, order).basis
        red = basis.reduce(decomp.stable)
        basis_err = h2_error_stable(decomp.stable, red)
        V = decomp.T_minus @ basis.V
        W = decomp.S_minus @ basis.W
        F = clustering_basis(V, W, source, r=basis.order)
        p = cluster_basis(ClusterInput(F, sys.agent.n, source), r, algo, seed=seed, n_init=n_init)
    red_dec = decompose_mas(cluster_reduce(sys, p))
    h2 = h2_error(decomp, red_dec).relative
    hinf = hinf_error(decomp, red_dec).relative
    tables = tables or {}
    h2_rank = tables["h2"].rank_of(p) if "h2" in tables else None
    hinf_rank = tables["hinf"].rank_of(p) if "hinf" in tables else None
    return PipelineResult(p, h2, hinf, h2_rank, hinf_rank, basis_err, mor, source, algo)


def h2_error_stable(full, red) -> float:
    """Relative H2 error between two Hurwitz realizations."""
    return h2_realization_error(full, red).relative


@dataclass(frozen=True, eq=False)
class NonlinearPipelineResult:
    partition: Partition
    relative_l2: float
    max_pointwise: float
    singular_values: np.ndarray
    n_snapshots: int
    error: object = None


def nonlinear_pipeline(sys, r: int, order: int = 2, algo: str = "kmeans", seed: int = 0,
                       n_init: int = 50, train="train", test="test", t_span=(0.0, 20.0),
                       samples: int = 1000, train_solution=None,
                       reference=None) -> NonlinearPipelineResult:
    """POD of a training trajectory, clustering of its block rows, evaluation on a test input.

    The snapshots are the states at the integrator's accepted steps.  A
    precomputed training run (``train_solution``) and test reference
    trajectory (``reference``, sampled on the shared uniform grid) may be
    passed to avoid repeated simulations in sweeps.
    """
    from .mor import pod
    from .nonlinear import cluster_reduce_nonlinear, reduction_error, simulate

    algo = algo.lower()
    if algo not in ALGOS:
        raise InvalidCombination(f"unknown clustering algorithm {algo!r}")
    if algo == "qr" and r != order:
        raise InvalidCombination("QR clustering yields exactly as many clusters as basis "
                                 f"columns (order {order}), but {r} clusters were requested")
    if not 1 <= r <= sys.n_agents:
        raise InvalidCombination(f"cluster count must lie in 1..{sys.n_agents}")
    if train_solution is None:
        train_solution = simulate(sys, u=train, t_span=t_span)
    snaps = train_solution.snapshot_matrix()
    basis, s = pod(snaps, order, block_size=sys.n)
    if r == sys.n_agents:
        p = Partition.singletons(sys.n_agents)
    else:
        p = cluster_basis(ClusterInput(basis.V, sys.n, "v"), r, algo, seed=seed, n_init=n_init)
    red = cluster_reduce_nonlinear(sys, p)
    err = reduction_error(sys, red, p, u=test, t_span=t_span, samples=samples, reference=reference)
    return NonlinearPipelineResult(p, err.relative_l2, err.max_pointwise, s, snaps.shape[1], err)
