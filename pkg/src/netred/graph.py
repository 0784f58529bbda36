"""Weighted graphs and their adjacency, degree, incidence and Laplacian matrices.

Vertex ids are 1-based at every public boundary (constructors, rendering,
file formats) and 0-based inside the stored edge arrays.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

LAPLACIAN_TOL = 1e-12


class GraphError(ValueError):
    """Raised for invalid graph descriptions."""


@dataclass(frozen=True, eq=False)
class GraphMatrices:
    """Dense matrices derived from a :class:`WeightedGraph`.

    Attributes
    ----------
    adjacency
        ``A[i, j]`` is the weight of the edge entering vertex ``i`` from ``j``.
    in_degree
        Diagonal matrix ``D = diag(A 1)``.
    laplacian
        ``L = D - A``.
    incidence
        ``n x |E|`` matrix with ``-1`` at the tail and ``+1`` at the head of
        each edge, columns in input edge order.
    weight
        Diagonal ``|E| x |E|`` matrix of edge weights.
    """

    adjacency: np.ndarray
    in_degree: np.ndarray
    laplacian: np.ndarray
    incidence: np.ndarray
    weight: np.ndarray


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """A weighted graph on vertices ``1..n_vertices``.

    Undirected edges are normalized to ``(min, max)`` so that the incidence
    orientation is deterministic (low id to high id).
    """

    n_vertices: int
    edges: tuple = field(default=())
    directed: bool = False

    def __post_init__(self):
        n = int(self.n_vertices)
        if n < 1:
            raise GraphError(f"number of vertices must be positive, got {self.n_vertices}")
        object.__setattr__(self, "n_vertices", n)
        normalized = []
        seen = set()
        for k, edge in enumerate(self.edges):
            if len(edge) != 3:
                raise GraphError(f"edge {k + 1} must be a triplet (i, j, w), got {edge!r}")
            i, j, w = edge
            if int(i) != i or int(j) != j:
                raise GraphError(f"edge {k + 1}: vertex ids must be integers")
            i, j, w = int(i), int(j), float(w)
            if not (1 <= i <= n and 1 <= j <= n):
                raise GraphError(f"edge {k + 1}: vertex id out of range 1..{n}")
            if i == j:
                raise GraphError(f"edge {k + 1}: self-loop at vertex {i}")
            if not np.isfinite(w) or w <= 0:
                raise GraphError(f"edge {k + 1}: weight must be positive, got {w}")
            if not self.directed and i > j:
                i, j = j, i
            if (i, j) in seen:
                raise GraphError(f"edge {k + 1}: duplicate edge ({i}, {j})")
            seen.add((i, j))
            normalized.append((i, j, w))
        object.__setattr__(self, "edges", tuple(normalized))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, _, w in self.edges], dtype=float)

    def matrices(self) -> GraphMatrices:
        return build_matrices(self)

    def laplacian(self) -> np.ndarray:
        return build_matrices(self).laplacian

    @classmethod
    def from_adjacency(cls, adjacency, tol: float = LAPLACIAN_TOL) -> "WeightedGraph":
        """Build an undirected graph from the strict upper triangle of ``adjacency``.

        Entries not exceeding ``tol`` and the diagonal are ignored.
        """
        a = np.asarray(adjacency, dtype=float)
        n = a.shape[0]
        iu, ju = np.nonzero(np.triu(a, k=1) > tol)
        edges = [(int(i) + 1, int(j) + 1, float(a[i, j])) for i, j in zip(iu, ju)]
        return cls(n, tuple(edges))

    @classmethod
    def from_laplacian(cls, laplacian, tol: float = LAPLACIAN_TOL) -> "WeightedGraph":
        """Build an undirected graph whose weights are the negated off-diagonals."""
        return cls.from_adjacency(-np.asarray(laplacian, dtype=float), tol=tol)


def build_matrices(g: WeightedGraph) -> GraphMatrices:
    """Assemble adjacency, in-degree, Laplacian, incidence and weight matrices."""
    n, ne = g.n_vertices, g.n_edges
    A = np.zeros((n, n))
    R = np.zeros((n, ne))
    w = g.weights
    for k, (i, j, wk) in enumerate(g.edges):
        # a_ij = w((j, i)): the edge (i, j) enters vertex j
        A[j - 1, i - 1] = wk
        if not g.directed:
            A[i - 1, j - 1] = wk
        R[i - 1, k] = -1.0
        R[j - 1, k] = 1.0
    D = np.diag(A.sum(axis=1))
    L = D - A
    return GraphMatrices(adjacency=A, in_degree=D, laplacian=L, incidence=R, weight=np.diag(w))


def _components(g: WeightedGraph) -> list[list[int]]:
    adj: list[list[int]] = [[] for _ in range(g.n_vertices)]
    for i, j, _ in g.edges:
        adj[i - 1].append(j - 1)
        adj[j - 1].append(i - 1)
    seen = [False] * g.n_vertices
    comps = []
    for s in range(g.n_vertices):
        if seen[s]:
            continue
        seen[s] = True
        comp, queue = [], deque([s])
        while queue:
            v = queue.popleft()
            comp.append(v + 1)
            for u in adj[v]:
                if not seen[u]:
                    seen[u] = True
                    queue.append(u)
        comps.append(sorted(comp))
    return comps


def is_connected(g: WeightedGraph) -> bool:
    """Return True if every pair of vertices is joined by a path (breadth-first search)."""
    if g.directed:
        raise GraphError("connectivity of directed graphs is not supported")
    return len(_components(g)) == 1


def grid_graph(rows: int, cols: int, w: float = 1.0) -> WeightedGraph:
    """Four-neighbour lattice with vertices numbered row by row from the top-left corner."""
    if rows < 1 or cols < 1:
        raise GraphError("grid dimensions must be positive")
    edges = []
    for r in range(rows):
        for c in range(cols):
            k = r * cols + c + 1
            if c + 1 < cols:
                edges.append((k, k + 1, w))
            if r + 1 < rows:
                edges.append((k, k + cols, w))
    return WeightedGraph(rows * cols, tuple(edges))


def path_graph(n: int, w: float = 1.0) -> WeightedGraph:
    return WeightedGraph(n, tuple((i, i + 1, w) for i in range(1, n)))


def graph_from_edges(n: int, edges: Iterable, directed: bool = False) -> WeightedGraph:
    return WeightedGraph(n, tuple(tuple(e) for e in edges), directed)
