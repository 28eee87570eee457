"""Finite weighted multigraphs, gluing, BFS balls and the graph Laplacian."""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import DimensionMismatch, DisconnectedGraph, EmptySet, InvalidEdge

_tags = itertools.count()


class Graph:
    """Connected multigraph with positive conductances and no self-loops.

    Parallel edges are stored individually. Solvers use the merged
    conductance matrix, which sums parallel edges.
    """

    def __init__(self, vertex_count: int, edges: np.ndarray, *, check: bool = True):
        edges = np.asarray(edges, dtype=float).reshape(-1, 3)
        n = int(vertex_count)
        u = edges[:, 0].astype(np.int64)
        v = edges[:, 1].astype(np.int64)
        c = edges[:, 2].copy()
        if check:
            if n < 1:
                raise InvalidEdge("graph needs at least one vertex")
            if np.any(u != edges[:, 0]) or np.any(v != edges[:, 1]):
                raise InvalidEdge("vertex ids must be integers")
            bad = (u < 0) | (u >= n) | (v < 0) | (v >= n)
            if bad.any():
                i = int(np.flatnonzero(bad)[0])
                raise InvalidEdge(f"edge {i} has an endpoint outside [0, {n})")
            if np.any(u == v):
                i = int(np.flatnonzero(u == v)[0])
                raise InvalidEdge(f"edge {i} is a self-loop at {u[i]}")
            if not np.all(np.isfinite(c)) or np.any(c <= 0):
                raise InvalidEdge("conductances must be finite and positive")
        for arr in (u, v, c):
            arr.setflags(write=False)
        self.vertex_count = n
        self.edge_u, self.edge_v, self.edge_c = u, v, c
        self.tag = next(_tags)
        deg = np.bincount(u, weights=c, minlength=n) + np.bincount(v, weights=c, minlength=n)
        deg.setflags(write=False)
        self.degrees = deg
        if check and n > 1:
            ncomp, _ = connected_components(self.conductance_matrix, directed=False)
            if ncomp != 1:
                raise DisconnectedGraph(f"graph has {ncomp} connected components")
        if check and n > 1 and len(c) == 0:
            raise DisconnectedGraph("no edges")

    def __repr__(self) -> str:
        return f"Graph(n={self.vertex_count}, m={self.edge_count})"

    @property
    def edge_count(self) -> int:
        return len(self.edge_c)

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        return [(int(a), int(b), float(w)) for a, b, w in zip(self.edge_u, self.edge_v, self.edge_c)]

    @cached_property
    def adjacency(self) -> list[list[tuple[int, float, int]]]:
        """Per-vertex incident edges as ``(neighbour, conductance, edge index)``."""
        adj: list[list[tuple[int, float, int]]] = [[] for _ in range(self.vertex_count)]
        for i, (a, b, w) in enumerate(zip(self.edge_u.tolist(), self.edge_v.tolist(), self.edge_c.tolist())):
            adj[a].append((b, w, i))
            adj[b].append((a, w, i))
        return adj

    @cached_property
    def conductance_matrix(self) -> sp.csr_matrix:
        n = self.vertex_count
        rows = np.concatenate([self.edge_u, self.edge_v])
        cols = np.concatenate([self.edge_v, self.edge_u])
        vals = np.concatenate([self.edge_c, self.edge_c])
        m = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        m.sum_duplicates()
        m.sort_indices()
        return m

    @cached_property
    def laplacian_matrix(self) -> sp.csr_matrix:
        """``L = D - C``, so that ``Δf = -L f``."""
        return (sp.diags(self.degrees) - self.conductance_matrix).tocsr()

    @cached_property
    def neighbour_lists(self) -> list[np.ndarray]:
        m = self.conductance_matrix
        return [m.indices[m.indptr[i]:m.indptr[i + 1]] for i in range(self.vertex_count)]

    def neighbours(self, x: int) -> np.ndarray:
        return self.neighbour_lists[x]

    def conductance(self, x: int, y: int) -> float:
        """Total conductance between ``x`` and ``y`` (parallel edges summed)."""
        return float(self.conductance_matrix[x, y])

    def hop_distances(self, source: int | Iterable[int], blocked: Iterable[int] = ()) -> np.ndarray:
        """BFS distances from ``source``; unreachable vertices get -1."""
        m = self.conductance_matrix
        dist = np.full(self.vertex_count, -1, dtype=np.int64)
        for b in blocked:
            dist[b] = -2
        srcs = [source] if isinstance(source, (int, np.integer)) else list(source)
        queue = deque()
        for s in srcs:
            dist[s] = 0
            queue.append(s)
        indptr, indices = m.indptr, m.indices
        while queue:
            x = queue.popleft()
            d = dist[x] + 1
            for y in indices[indptr[x]:indptr[x + 1]]:
                if dist[y] == -1:
                    dist[y] = d
                    queue.append(y)
        dist[dist == -2] = -1
        return dist


def build_graph(vertex_count: int, weighted_edges: Iterable[Sequence[float]]) -> Graph:
    rows = [tuple(e) if len(e) == 3 else (e[0], e[1], 1.0) for e in weighted_edges]
    arr = np.array(rows, dtype=float).reshape(-1, 3)
    return Graph(vertex_count, arr)


@dataclass(frozen=True)
class QuotientMap:
    """``mapping[v]`` is the quotient vertex of source vertex ``v``."""

    mapping: np.ndarray
    glued_block: int

    def __call__(self, v: int) -> int:
        return int(self.mapping[v])


def glue(g: Graph, B: Iterable[int]) -> tuple[Graph, QuotientMap]:
    """Identify ``B`` to a single vertex and drop the edges inside ``B``.

    The block becomes vertex ``min(B)`` relabelled into the dense order; other
    vertices keep their relative order.
    """
    block = sorted({int(b) for b in B})
    if not block:
        raise EmptySet("cannot glue an empty set")
    in_b = np.zeros(g.vertex_count, dtype=bool)
    in_b[block] = True
    rep = block[0]
    keep = ~in_b
    keep[rep] = True
    new_index = np.cumsum(keep) - 1
    mapping = new_index.copy()
    mapping[in_b] = new_index[rep]
    u = mapping[g.edge_u]
    v = mapping[g.edge_v]
    mask = u != v
    edges = np.column_stack([u[mask], v[mask], g.edge_c[mask]])
    q = Graph(int(keep.sum()), edges)
    mapping.setflags(write=False)
    return q, QuotientMap(mapping, int(new_index[rep]))


def metric_ball(g: Graph, center: int, radius: int) -> set[int]:
    dist = g.hop_distances(center)
    return set(np.flatnonzero((dist >= 0) & (dist <= radius)).tolist())


def laplacian_apply(g: Graph, f) -> np.ndarray:
    vals = np.asarray(f, dtype=float)
    if vals.shape != (g.vertex_count,):
        raise DimensionMismatch(f"expected {g.vertex_count} values, got shape {vals.shape}")
    return -(g.laplacian_matrix @ vals)


def outer_boundary(g: Graph, members: Iterable[int]) -> set[int]:
    """Vertices outside ``members`` with a neighbour inside."""
    inside = np.zeros(g.vertex_count, dtype=bool)
    inside[list(members)] = True
    m = g.conductance_matrix
    touched = np.asarray(m[inside].sum(axis=0)).ravel() > 0
    return set(np.flatnonzero(touched & ~inside).tolist())


def read_edge_list(path) -> Graph:
    """Parse ``u v [conductance]`` lines; ``#`` starts a comment."""
    edges = []
    top = -1
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise InvalidEdge(f"{path}:{lineno}: expected 'u v [c]'")
            try:
                a, b = int(parts[0]), int(parts[1])
                c = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError as exc:
                raise InvalidEdge(f"{path}:{lineno}: {exc}") from None
            edges.append((a, b, c))
            top = max(top, a, b)
    return build_graph(top + 1, edges)


def write_edge_list(g: Graph, path) -> None:
    with open(path, "w") as fh:
        for a, b, c in g.edges:
            fh.write(f"{a} {b} {c!r}\n")
