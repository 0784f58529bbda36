"""Graph partitions with their characteristic matrices and exhaustive enumeration.

Partitions of ``{1..n}`` into ``r`` clusters are enumerated as restricted
growth strings (RGS) ``a[0..n-1]`` with ``a[0] = 0`` and
``a[i] <= 1 + max(a[:i])``, using exactly the values ``0..r-1``.  The order is
lexicographic in the RGS, and any contiguous index range can be generated
directly through :func:`unrank_rgs`, which is what parallel search uses.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

MAX_COUNT_N = 30


class PartitionError(ValueError):
    """Raised for invalid partitions or enumeration requests."""


@dataclass(frozen=True)
class Partition:
    """Disjoint nonempty clusters covering ``{1..n_vertices}`` in canonical form.

    Clusters are sorted ascending and ordered by their smallest member.
    """

    n_vertices: int
    clusters: tuple

    def __post_init__(self):
        n = int(self.n_vertices)
        clusters = [tuple(sorted(int(v) for v in c)) for c in self.clusters]
        if any(len(c) == 0 for c in clusters):
            raise PartitionError("clusters must be nonempty")
        members = [v for c in clusters for v in c]
        if sorted(members) != list(range(1, n + 1)):
            raise PartitionError(
                f"clusters must be disjoint and cover 1..{n}, got {self.clusters!r}")
        clusters.sort(key=lambda c: c[0])
        object.__setattr__(self, "n_vertices", n)
        object.__setattr__(self, "clusters", tuple(clusters))

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    def labels(self) -> np.ndarray:
        """0-based cluster index of each vertex (this is the RGS of the partition)."""
        lab = np.empty(self.n_vertices, dtype=int)
        for k, c in enumerate(self.clusters):
            lab[np.asarray(c) - 1] = k
        return lab

    def characteristic_matrix(self) -> np.ndarray:
        return characteristic_matrix(self)

    def sort_key(self) -> tuple:
        """Canonical order: lexicographic comparison of the cluster lists."""
        return self.clusters

    def __str__(self) -> str:
        return format_partition(self)

    @classmethod
    def singletons(cls, n: int) -> "Partition":
        return cls(n, tuple((i,) for i in range(1, n + 1)))

    @classmethod
    def parse(cls, text: str) -> "Partition":
        """Parse the rendering produced by :func:`format_partition`."""
        s = text.strip()
        if not (s.startswith("{") and s.endswith("}")):
            raise PartitionError(f"cannot parse partition {text!r}")
        inner = s[1:-1].strip()
        clusters = []
        while inner:
            if not inner.startswith("{"):
                raise PartitionError(f"cannot parse partition {text!r}")
            end = inner.index("}")
            body = inner[1:end]
            clusters.append(tuple(int(v) for v in body.split(",") if v.strip()))
            inner = inner[end + 1:].lstrip().lstrip(",").lstrip()
        n = sum(len(c) for c in clusters)
        return cls(n, tuple(clusters))


def format_partition(p: Partition) -> str:
    """Render as ``{{1, 8}, {2, 3, 4, 9, 10}, {5}, {6}, {7}}``."""
    return "{" + ", ".join("{" + ", ".join(str(v) for v in c) + "}" for c in p.clusters) + "}"


def characteristic_matrix(p: Partition) -> np.ndarray:
    """``n x r`` 0/1 matrix whose k-th column indicates cluster k."""
    P = np.zeros((p.n_vertices, p.n_clusters))
    P[np.arange(p.n_vertices), p.labels()] = 1.0
    return P


def partition_from_labels(labels: Sequence) -> Partition:
    """Canonical partition grouping vertices that share a label (any hashable ids)."""
    labels = list(np.asarray(labels).tolist()) if not isinstance(labels, list) else labels
    if len(labels) == 0:
        raise PartitionError("empty label vector")
    groups: dict = {}
    for v, lab in enumerate(labels, start=1):
        groups.setdefault(lab, []).append(v)
    return Partition(len(labels), tuple(tuple(g) for g in groups.values()))


def partition_from_rgs(rgs: Sequence[int]) -> Partition:
    return partition_from_labels(list(rgs))


@lru_cache(maxsize=None)
def count_partitions(n: int, r: int) -> int:
    """Stirling number of the second kind ``S(n, r)``."""
    if not (0 <= r <= n <= MAX_COUNT_N):
        if n > MAX_COUNT_N:
            raise PartitionError(f"n = {n} exceeds supported maximum {MAX_COUNT_N}")
        raise PartitionError(f"need 0 <= r <= n, got n={n}, r={r}")
    if n == 0:
        return 1 if r == 0 else 0
    if r == 0:
        return 0
    if r == n:
        return 1
    return r * count_partitions(n - 1, r) + count_partitions(n - 1, r - 1)


@lru_cache(maxsize=None)
def _completions(remaining: int, m: int, r: int) -> int:
    """Number of ways to extend an RGS prefix with current maximum value count ``m``.

    ``remaining`` positions are still free and exactly ``r`` distinct values
    must be used in total.
    """
    if m > r:
        return 0
    if remaining == 0:
        return 1 if m == r else 0
    if r - m > remaining:
        return 0
    return m * _completions(remaining - 1, m, r) + _completions(remaining - 1, m + 1, r)


def unrank_rgs(index: int, n: int, r: int) -> list[int]:
    """Return the ``index``-th (0-based) RGS of length n with exactly r values."""
    total = count_partitions(n, r)
    if not 0 <= index < total:
        raise PartitionError(f"index {index} out of range 0..{total - 1}")
    rgs = [0]
    m = 1
    for pos in range(1, n):
        remaining = n - pos - 1
        for v in range(m + 1):
            nm = max(m, v + 1)
            c = _completions(remaining, nm, r)
            if index < c:
                rgs.append(v)
                m = nm
                break
            index -= c
    return rgs


def rank_rgs(rgs: Sequence[int], r: int | None = None) -> int:
    """Inverse of :func:`unrank_rgs`: position of an RGS in the enumeration order."""
    rgs = [int(v) for v in rgs]
    n = len(rgs)
    r = max(rgs) + 1 if r is None else r
    index, m = 0, 1
    for pos in range(1, n):
        remaining = n - pos - 1
        for v in range(rgs[pos]):
            index += _completions(remaining, max(m, v + 1), r)
        m = max(m, rgs[pos] + 1)
    return index


def partition_index(p: Partition) -> int:
    """Position of ``p`` in :func:`enumerate_partitions` order."""
    return rank_rgs(p.labels().tolist(), p.n_clusters)


def _next_rgs(a: list[int], r: int) -> bool:
    """Advance ``a`` in place to the next RGS using exactly r values."""
    n = len(a)
    prefix_max = [0] * n
    mx = -1
    for i, v in enumerate(a):
        mx = max(mx, v)
        prefix_max[i] = mx
    for i in range(n - 1, 0, -1):
        limit = min(prefix_max[i - 1] + 1, r - 1)
        tail = n - i - 1
        for v in range(a[i] + 1, limit + 1):
            m = max(prefix_max[i - 1], v) + 1
            need = r - m
            if need <= tail:
                # smallest valid completion: zeros, then the missing values in order
                a[i] = v
                a[i + 1:] = [0] * (tail - need) + list(range(m, r))
                return True
    return False


def iter_rgs(n: int, r: int, start: int = 0, stop: int | None = None) -> Iterator[list[int]]:
    """Yield RGS with indices ``start <= k < stop`` in lexicographic order."""
    total = count_partitions(n, r)
    stop = total if stop is None else min(stop, total)
    if start >= stop:
        return
    a = unrank_rgs(start, n, r)
    for _ in range(start, stop):
        yield list(a)
        if not _next_rgs(a, r):
            break


def enumerate_partitions(n: int, r: int, start: int = 0, stop: int | None = None) -> Iterator[Partition]:
    """Yield every partition of ``{1..n}`` into exactly ``r`` clusters once.

    The optional index range selects a contiguous chunk of the full sequence.
    """
    if n < 1 or r < 1:
        raise PartitionError("n and r must be positive")
    if r > n:
        raise PartitionError(f"cannot split {n} vertices into {r} nonempty clusters")
    for a in iter_rgs(n, r, start, stop):
        yield partition_from_rgs(a)
