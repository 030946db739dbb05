"""Undirected communication topology, Metropolis consensus weights and Laplacian."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import kernels


class GraphError(ValueError):
    pass


PRESETS = ("ring", "complete", "star", "line")


@dataclass(frozen=True)
class CommGraph:
    """Undirected graph on nodes ``0..n-1``.

    ``edges`` are normalised ``(i, j)`` pairs with ``i < j``, sorted, and
    ``weights`` holds the matching nonnegative a_ij values (1.0 unless given).
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    weights: tuple[float, ...]

    @property
    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if not self.edges:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty.copy(), np.zeros(0)
        ei = np.array([e[0] for e in self.edges], dtype=np.int64)
        ej = np.array([e[1] for e in self.edges], dtype=np.int64)
        return ei, ej, np.array(self.weights, dtype=np.float64)

    def neighbors(self, i: int) -> list[int]:
        return self._adjacency_lists()[i]

    def _adjacency_lists(self) -> list[list[int]]:
        cached = self.__dict__.get("_adj")
        if cached is None:
            cached = [[] for _ in range(self.n)]
            for i, j in self.edges:
                cached[i].append(j)
                cached[j].append(i)
            for row in cached:
                row.sort()
            object.__setattr__(self, "_adj", cached)
        return cached

    def degrees(self) -> list[int]:
        return [len(nb) for nb in self._adjacency_lists()]

    def adjacency(self, weighted: bool = True) -> np.ndarray:
        A = np.zeros((self.n, self.n))
        for (i, j), w in zip(self.edges, self.weights):
            A[i, j] = A[j, i] = w if weighted else 1.0
        return A


def build_graph(n: int, edges: Iterable[Sequence]) -> CommGraph:
    """Build a graph from ``(i, j)`` or ``(i, j, weight)`` items.

    Duplicates in either orientation collapse to one edge; when a duplicate
    carries a different weight the last one wins.
    """
    if n < 0:
        raise GraphError(f"node count must be >= 0, got {n}")
    merged: dict[tuple[int, int], float] = {}
    for item in edges:
        if len(item) not in (2, 3):
            raise GraphError(f"edge must be (i, j) or (i, j, weight), got {item!r}")
        i, j = int(item[0]), int(item[1])
        w = float(item[2]) if len(item) == 3 else 1.0
        if i == j:
            raise GraphError(f"self-loop on node {i}")
        for v in (i, j):
            if not 0 <= v < n:
                raise GraphError(f"node index {v} out of range [0, {n})")
        if not w >= 0.0:
            raise GraphError(f"edge ({i}, {j}) has negative weight {w}")
        merged[(min(i, j), max(i, j))] = w
    keys = sorted(merged)
    return CommGraph(n=n, edges=tuple(keys), weights=tuple(merged[k] for k in keys))


def preset_edges(name: str, n: int) -> list[tuple[int, int]]:
    if name == "ring":
        if n < 2:
            return []
        return [(i, (i + 1) % n) for i in range(n)]
    if name == "line":
        return [(i, i + 1) for i in range(n - 1)]
    if name == "complete":
        return [(i, j) for i in range(n) for j in range(i + 1, n)]
    if name == "star":
        return [(0, j) for j in range(1, n)]
    raise GraphError(f"unknown topology preset {name!r}; expected one of {PRESETS}")


def preset_graph(name: str, n: int) -> CommGraph:
    return build_graph(n, preset_edges(name, n))


def is_connected(g: CommGraph) -> bool:
    if g.n <= 1:
        return True
    seen = [False] * g.n
    seen[0] = True
    queue = deque([0])
    count = 1
    while queue:
        u = queue.popleft()
        for v in g.neighbors(u):
            if not seen[v]:
                seen[v] = True
                count += 1
                queue.append(v)
    return count == g.n


def metropolis_weights(g: CommGraph) -> np.ndarray:
    """Doubly stochastic consensus weights ``1 / (1 + max(deg_i, deg_j))``.

    Edge weights a_ij are ignored; only the topology matters.
    """
    if not is_connected(g):
        raise GraphError("metropolis weights need a connected graph")
    deg = g.degrees()
    W = np.zeros((g.n, g.n))
    for i, j in g.edges:
        W[i, j] = W[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
    # diagonal from an exact sum of the off-diagonal row
    for i in range(g.n):
        W[i, i] = 1.0 - np.sum(W[i, np.arange(g.n) != i])
    return W


def laplacian(g: CommGraph) -> np.ndarray:
    A = g.adjacency(weighted=True)
    return np.diag(A.sum(axis=1)) - A


def laplacian_potential(g: CommGraph, x) -> float:
    """Disagreement energy ``x^T L x``, i.e. half the double sum of a_ij (x_j - x_i)^2."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (g.n,):
        raise GraphError(f"expected {g.n} values, got shape {x.shape}")
    ei, ej, ew = g.edge_arrays
    return kernels.edge_quadform(ei, ej, ew, x)
