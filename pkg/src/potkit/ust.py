"""Uniform spanning trees: loop erasure, Wilson's algorithm and tree diagnostics."""
from __future__ import annotations

import csv
import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from . import _walk
from .crw import ConditionedChain, WalkPath, _first
from .dirichlet import escape_probability
from .errors import (ChainGraphMismatch, IncompleteOrdering, InputError, SameVertex, TooLarge,
                     UnorientedTree)
from .graph import Graph
from .models import Exhaustion

TOWARD_ROOT = "toward_root"
TOWARD_INFINITY = "toward_infinity"
UNORIENTED = "unoriented"


@dataclass(frozen=True)
class LoopErasedPath:
    vertices: tuple

    def __len__(self) -> int:
        return len(self.vertices)


def loop_erase(path) -> LoopErasedPath:
    """Chronological loop erasure of a walk (a :class:`WalkPath` or a vertex sequence)."""
    verts = path.vertices if isinstance(path, WalkPath) else path
    verts = [int(v) for v in verts]
    if not verts:
        raise InputError("cannot loop-erase an empty path")
    out: list[int] = []
    where: dict[int, int] = {}
    for v in verts:
        k = where.get(v)
        if k is not None:
            for u in out[k + 1:]:
                del where[u]
            del out[k + 1:]
        else:
            where[v] = len(out)
            out.append(v)
    return LoopErasedPath(tuple(out))


@dataclass(frozen=True)
class SpanningTree:
    parent: np.ndarray  # -1 at the root
    root: int
    orientation_tag: str = TOWARD_ROOT
    graph_tag: int = -1
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def vertex_count(self) -> int:
        return len(self.parent)

    def edges(self) -> frozenset:
        """Unordered edge set ``{(min, max), ...}``."""
        return frozenset((min(v, p), max(v, p)) for v, p in enumerate(self.parent.tolist()) if p >= 0)

    def children(self) -> list[list[int]]:
        ch: list[list[int]] = [[] for _ in range(self.vertex_count)]
        for v, p in enumerate(self.parent.tolist()):
            if p >= 0:
                ch[p].append(v)
        return ch

    def depths(self) -> np.ndarray:
        """Number of parent steps from each vertex to the root."""
        depth = np.full(self.vertex_count, -1, dtype=np.int64)
        depth[self.root] = 0
        ch = self.children()
        queue = deque([self.root])
        while queue:
            x = queue.popleft()
            for c in ch[x]:
                depth[c] = depth[x] + 1
                queue.append(c)
        return depth


def is_spanning_tree(tree: SpanningTree, g: Graph) -> bool:
    """Exactly one root, every parent edge present, and every vertex reaches the root."""
    par = tree.parent
    if len(par) != g.vertex_count or int(np.sum(par < 0)) != 1 or par[tree.root] != -1:
        return False
    C = g.conductance_matrix
    for v, p in enumerate(par.tolist()):
        if p >= 0 and C[v, p] == 0:
            return False
    return bool(np.all(tree.depths() >= 0))


def _srw_arrays(g: Graph):
    C = g.conductance_matrix
    P = (sp.diags(1.0 / g.degrees) @ C).tocsr()
    return _walk.chain_arrays(P)


def _check_ordering(g: Graph, root: int, ordering: Sequence[int] | None) -> np.ndarray:
    if ordering is None:
        return np.array([v for v in range(g.vertex_count) if v != root], dtype=np.int64)
    order = np.asarray([int(v) for v in ordering], dtype=np.int64)
    missing = set(range(g.vertex_count)) - {root} - set(order.tolist())
    if missing:
        raise IncompleteOrdering(f"ordering misses {len(missing)} vertices, e.g. {min(missing)}")
    return order


def wilson_wired(g: Graph, root: int, ordering: Sequence[int] | None = None, seed: int = 0,
                 index: int = 0, _arrays=None) -> SpanningTree:
    """Uniform (conductance-weighted) spanning tree of ``g``, oriented toward ``root``."""
    root = int(root)
    order = _check_ordering(g, root, ordering)
    arrays = _arrays if _arrays is not None else _srw_arrays(g)
    in_tree = np.zeros(g.vertex_count, dtype=np.bool_)
    in_tree[root] = True
    parent = np.full(g.vertex_count, -1, dtype=np.int64)
    _walk.wilson_fill(*arrays, in_tree, parent, order, int(seed), int(index))
    parent[root] = -1
    return SpanningTree(parent, root, TOWARD_ROOT, g.tag)


def wilson_wired_many(g: Graph, root: int, n: int, ordering: Sequence[int] | None = None,
                      seed: int = 0, threads: int = 1) -> list[SpanningTree]:
    arrays = _srw_arrays(g)
    order = _check_ordering(g, int(root), ordering)
    return _walk.parallel_map(lambda i: wilson_wired(g, root, order, seed, i, arrays), n, threads)


def wilson_infinity(g: Graph, chain: ConditionedChain, ordering: Sequence[int] | None = None,
                    seed: int = 0, index: int = 0, cap: int = 10**7, _arrays=None) -> SpanningTree:
    """Wilson's algorithm rooted at infinity on a wired level.

    The first branch is the loop erasure of the conditioned walk from the
    anchor, run until it reaches the wired vertex; the remaining branches are
    loop-erased simple walks stopped on the current tree. Every vertex points
    to its successor along its branch, so the tree is oriented toward the
    wired vertex, which stands in for infinity.
    """
    if chain.base is not g and chain.base.tag != g.tag:
        raise ChainGraphMismatch("the chain was built on a different graph")
    if not chain.absorbing:
        raise ChainGraphMismatch("the chain has no wired vertex to stop at")
    wired = min(chain.absorbing)
    o = chain.anchor
    if ordering is None:
        ordering = [o] + [v for v in range(g.vertex_count) if v not in (o, wired)]
    ordering = [int(v) for v in ordering]
    if ordering[0] != o:
        raise ChainGraphMismatch(f"ordering must start at the chain's anchor {o}")
    order = _check_ordering(g, wired, ordering)

    codes = np.zeros(g.vertex_count, dtype=np.int8)
    codes[wired] = _walk.BOUNDARY
    fc, fi = _first(chain, o)
    verts, reason = _walk.walk(*chain._arrays, o, fc, fi, codes, int(cap), int(seed), (int(index) << 1))
    if verts[-1] != wired:
        raise InputError(f"the first branch did not reach the wired vertex within {cap} steps")
    branch = _walk.loop_erase_array(verts, g.vertex_count)
    parent = np.full(g.vertex_count, -1, dtype=np.int64)
    in_tree = np.zeros(g.vertex_count, dtype=np.bool_)
    parent[branch[:-1]] = branch[1:]
    in_tree[branch] = True
    arrays = _arrays if _arrays is not None else _srw_arrays(g)
    _walk.wilson_fill(*arrays, in_tree, parent, order[1:], int(seed), (int(index) << 1) | 1)
    parent[wired] = -1
    meta = {"first_branch": tuple(branch.tolist())}
    if chain.level is not None:
        meta["level"] = chain.level.n
    return SpanningTree(parent, wired, TOWARD_INFINITY, g.tag, meta)


def wilson_infinity_many(g: Graph, chain: ConditionedChain, n: int, seed: int = 0,
                         threads: int = 1) -> list[SpanningTree]:
    arrays = _srw_arrays(g)
    wired = min(chain.absorbing)
    order = [chain.anchor] + [v for v in range(g.vertex_count) if v not in (chain.anchor, wired)]
    return _walk.parallel_map(lambda i: wilson_infinity(g, chain, order, seed, i, _arrays=arrays), n, threads)


def first_branch(tree: SpanningTree) -> tuple:
    return tree.meta["first_branch"]


def forward_path(tree: SpanningTree, v: int) -> list[int]:
    out = [int(v)]
    par = tree.parent
    while par[out[-1]] >= 0:
        out.append(int(par[out[-1]]))
        if len(out) > len(par):
            raise InputError("parent pointers contain a cycle")
    return out


def past(tree: SpanningTree, v: int) -> set[int]:
    """Vertices whose forward path passes through ``v`` (``v`` included)."""
    if tree.orientation_tag not in (TOWARD_ROOT, TOWARD_INFINITY):
        raise UnorientedTree("past() needs an oriented tree")
    ch = tree.children()
    out = {int(v)}
    stack = [int(v)]
    while stack:
        x = stack.pop()
        for c in ch[x]:
            out.add(c)
            stack.append(c)
    return out


def past_sizes(tree: SpanningTree) -> np.ndarray:
    """``|past(v)|`` for every vertex, from one pass over the tree."""
    depth = tree.depths()
    size = np.ones(tree.vertex_count, dtype=np.int64)
    for v in np.argsort(-depth, kind="stable"):
        p = tree.parent[v]
        if p >= 0:
            size[p] += size[v]
    return size


def future(tree: SpanningTree, v: int) -> set[int]:
    return set(range(tree.vertex_count)) - past(tree, v)


# ---------------------------------------------------------------- end diagnostic

@dataclass(frozen=True)
class EndLevelStat:
    level: int
    reach_probability: float
    reach_stderr: float
    reach_radius: int
    mean_past: float
    max_past: int
    exact_reach: float | None = None


@dataclass(frozen=True)
class EndDiagnostic:
    per_level: tuple
    two_ended_suspect: bool
    margin: float
    z: float


def _line_exact_reach(n: int, r: int) -> float:
    # symmetric line level n is the cycle C_{2n+2}; the UST drops one uniform edge
    return max(0, n - r + 1) / (n + 1)


def two_ended_flag(probs: Sequence[float], errs: Sequence[float], margin: float = 0.02, z: float = 2.0) -> bool:
    """True when no consecutive drop in reach probability exceeds ``margin + z σ_diff``."""
    if len(probs) < 3:
        return False
    for (p0, e0), (p1, e1) in zip(zip(probs, errs), zip(probs[1:], errs[1:])):
        if p1 < p0 - (margin + z * math.hypot(e0, e1)):
            return False
    return True


def end_diagnostic(exh: Exhaustion, levels: Sequence[int] | None = None, n_samples: int = 500,
                   inner_fraction: float = 0.5, seed: int = 0, margin: float = 0.02, z: float = 2.0,
                   threads: int = 1) -> EndDiagnostic:
    """How often ``past(o)`` reaches hop distance ``inner_fraction * n`` in the wired UST."""
    levels = list(exh.levels if levels is None else levels)
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise InputError("levels must be increasing")
    rows = []
    for k, n in enumerate(levels):
        lv = exh.level(n)
        g, o = lv.graph, lv.anchor
        r = max(1, math.ceil(inner_fraction * n))
        dist = lv.interior_distances(o)
        trees = wilson_wired_many(g, lv.boundary, n_samples, seed=seed * 1_000_003 + k, threads=threads)
        reach, sizes = [], []
        for t in trees:
            pv = past(t, o)
            sizes.append(len(pv))
            reach.append(any(dist[v] >= r for v in pv))
        p = float(np.mean(reach))
        se = math.sqrt(max(p * (1 - p), 1e-12) / n_samples)
        exact = _line_exact_reach(n, r) if exh.model == "line" and exh.variant == "symmetric" else None
        rows.append(EndLevelStat(n, p, se, r, float(np.mean(sizes)), int(max(sizes)), exact))
    flag = two_ended_flag([s.reach_probability for s in rows], [s.reach_stderr for s in rows], margin, z)
    return EndDiagnostic(tuple(rows), flag, margin, z)


# ---------------------------------------------------------------- path reversal

def _count_paths(g: Graph, start: int, stop: int, avoid: int, max_len: int) -> int:
    # admissible walks: interior vertices avoid both endpoints
    n = g.vertex_count
    A = (g.conductance_matrix > 0).astype(np.float64).toarray()
    inner = np.ones(n, dtype=bool)
    inner[[start, stop, avoid]] = False
    vec = np.zeros(n)
    vec[start] = 1.0
    total = 0.0
    for _ in range(max_len):
        nxt = vec @ A
        total += nxt[stop]
        vec = nxt * inner
    return int(total)


def path_reversal_check(g: Graph, u: int, o: int, max_len: int = 10, limit: int = 2_000_000) -> float:
    """TV distance between the excursion law ``u -> o`` and the reversed law ``o -> u``.

    Law A is the walk from ``u`` until ``T_o`` on ``{T_o < T_u^+}``; law B is the
    walk from ``o`` until ``T_u`` on ``{T_u < T_o^+}``, read backwards. Both are
    summed exactly over paths of at most ``max_len`` steps.
    """
    u, o = int(u), int(o)
    if u == o:
        raise SameVertex("u and o must differ")
    count = _count_paths(g, u, o, u, max_len)
    if count > limit:
        raise TooLarge(f"{count} paths exceed the enumeration limit {limit}")
    C = g.conductance_matrix.toarray()
    deg = g.degrees
    esc_a = escape_probability(g, u, {o})
    esc_b = escape_probability(g, o, {u})
    nbrs = [np.flatnonzero(C[x]).tolist() for x in range(g.vertex_count)]
    tv = 0.0
    stack = [(u, (u,))]
    while stack:
        x, path = stack.pop()
        for y in nbrs[x]:
            if y == u:
                continue
            new = path + (y,)
            if y == o:
                pa = math.prod(C[a, b] / deg[a] for a, b in zip(new, new[1:])) / esc_a
                rev = new[::-1]
                pb = math.prod(C[a, b] / deg[a] for a, b in zip(rev, rev[1:])) / esc_b
                tv += abs(pa - pb)
            elif len(new) - 1 < max_len:
                stack.append((y, new))
    return 0.5 * tv


# ---------------------------------------------------------------- enumeration oracle

class _UnionFind:
    def __init__(self, n: int):
        self.p = list(range(n))

    def find(self, x: int) -> int:
        while self.p[x] != x:
            self.p[x] = self.p[self.p[x]]
            x = self.p[x]
        return x

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.p[ra] = rb
        return True


def enumerate_spanning_trees(g: Graph, limit: int = 200_000) -> dict[frozenset, float]:
    """Every spanning tree as an unordered edge set, with its normalised weight."""
    C = sp.triu(g.conductance_matrix, k=1).tocoo()
    pairs = list(zip(C.row.tolist(), C.col.tolist(), C.data.tolist()))
    n = g.vertex_count
    if math.comb(len(pairs), n - 1) > limit:
        raise TooLarge("too many edge subsets to enumerate")
    out = {}
    for combo in itertools.combinations(pairs, n - 1):
        uf = _UnionFind(n)
        if all(uf.union(a, b) for a, b, _ in combo):
            out[frozenset((a, b) for a, b, _ in combo)] = math.prod(c for _, _, c in combo)
    total = sum(out.values())
    return {k: w / total for k, w in out.items()}


def matrix_tree_count(g: Graph) -> float:
    """Weighted spanning-tree count from any reduced Laplacian minor."""
    L = g.laplacian_matrix.toarray()
    return float(np.linalg.det(L[1:, 1:]))


# ---------------------------------------------------------------- summaries and export

def window_summary(tree: SpanningTree, g: Graph, center: int, window: Iterable[int]) -> tuple[int, int]:
    """(tree degree of ``center``, number of tree edges with both ends in ``window``)."""
    win = set(int(v) for v in window)
    E = tree.edges()
    deg = sum(1 for a, b in E if center in (a, b))
    inside = sum(1 for a, b in E if a in win and b in win)
    return deg, inside


def total_variation(a: Sequence, b: Sequence) -> float:
    """TV distance between the empirical laws of two samples of hashable outcomes."""
    ca: dict = {}
    cb: dict = {}
    for k in a:
        ca[k] = ca.get(k, 0) + 1
    for k in b:
        cb[k] = cb.get(k, 0) + 1
    na, nb = len(a), len(b)
    return 0.5 * sum(abs(ca.get(k, 0) / na - cb.get(k, 0) / nb) for k in set(ca) | set(cb))


def write_tree_csv(path, tree: SpanningTree) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["vertex", "parent", "oriented"])
        oriented = "1" if tree.orientation_tag != UNORIENTED else "0"
        for v, p in enumerate(tree.parent.tolist()):
            wr.writerow([v, "" if p < 0 else p, oriented])
