"""The walk conditioned to avoid an anchor: the Doob transform by ``a(·, o)``.

On a wired level the transformed rows are stochastic everywhere except at
the wired vertex, whose row is short by ``1/(deg(w) a(w))``. That deficit is
treated as killing, which is the exact finite-level analogue of escaping to
infinity.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import _walk
from .dirichlet import hitting_field, hitting_prob
from .errors import (DimensionMismatch, GraphMismatch, InputError, MissingKernelEntry,
                     NonStochasticRow, SingularSystem, StartOutsideDomain)
from .graph import Graph
from .kernel import _interior, hm_values, kernel_column
from .models import Exhaustion, Level

STOP_REASONS = {1: "hit_target", 2: "hit_boundary", 3: "step_cap"}
DEFAULT_CAP = 10**6


@dataclass(eq=False)
class ConditionedChain:
    base: Graph
    anchor: int
    kernel_values: np.ndarray
    conductances_hat: np.ndarray
    transition: sp.csr_matrix = field(repr=False)
    first_support: np.ndarray = field(repr=False)
    first_probs: np.ndarray = field(repr=False)
    absorbing: frozenset = frozenset()
    level: Level | None = field(default=None, repr=False)
    pair_kernel: Callable[[int], np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        self._arrays = _walk.chain_arrays(self.transition)
        self._first_cum = np.cumsum(self.first_probs)
        self._first_cum[-1] = 1.0 + 1e-12

    @property
    def a(self) -> np.ndarray:
        return self.kernel_values

    @property
    def anchor_neighbours(self) -> np.ndarray:
        return self.base.neighbours(self.anchor)

    def stationary_measure(self) -> np.ndarray:
        """``π(x) = Σ_y ĉ(x, y)``."""
        g = self.base
        out = np.bincount(g.edge_u, weights=self.conductances_hat, minlength=g.vertex_count)
        return out + np.bincount(g.edge_v, weights=self.conductances_hat, minlength=g.vertex_count)

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.transition.sum(axis=1)).ravel()

    def p(self, x: int, y: int) -> float:
        return float(self.transition[x, y])

    def two_point(self, y: int) -> np.ndarray:
        """``a(·, y)`` on the base graph."""
        if self.pair_kernel is None:
            raise MissingKernelEntry("this chain has no two-variable kernel; build it from an exhaustion")
        return self.pair_kernel(y)


def build_crw(g: Graph, anchor: int, kernel_values, absorbing: Iterable[int] = (),
              tol: float = 1e-10) -> ConditionedChain:
    """Doob transform of the simple walk on ``g`` by ``kernel_values``.

    Rows at ``absorbing`` vertices may be substochastic (the deficit kills the
    walk); every other row off the anchor must sum to one within ``tol``.
    """
    a = np.asarray(kernel_values, dtype=float).copy()
    n = g.vertex_count
    if a.shape != (n,):
        raise DimensionMismatch(f"expected {n} kernel values, got shape {a.shape}")
    anchor = int(anchor)
    if abs(a[anchor]) > 1e-12:
        raise InputError(f"kernel must vanish at the anchor, got {a[anchor]}")
    if np.any(a < -1e-12):
        raise InputError("kernel values must be nonnegative")
    a[anchor] = 0.0
    a = np.clip(a, 0.0, None)
    a.setflags(write=False)
    absorbing = frozenset(int(v) for v in absorbing)

    live = a > 0
    C = g.conductance_matrix
    scale = np.zeros(n)
    scale[live] = 1.0 / (g.degrees[live] * a[live])
    P = (sp.diags(scale) @ C @ sp.diags(a)).tocsr()
    P.eliminate_zeros()
    rs = np.asarray(P.sum(axis=1)).ravel()
    for x in np.flatnonzero(live):
        if x in absorbing:
            if rs[x] > 1 + tol:
                raise NonStochasticRow(f"row {x} sums to {rs[x]!r} > 1")
        elif abs(rs[x] - 1.0) > tol:
            raise NonStochasticRow(f"row {x} sums to {rs[x]!r}; the kernel is not harmonic there")

    row = C.getrow(anchor)
    w = row.data * a[row.indices]
    if w.sum() <= 0:
        raise InputError("the kernel vanishes on every neighbour of the anchor")
    chat = g.edge_c * a[g.edge_u] * a[g.edge_v]
    return ConditionedChain(g, anchor, a, chat, P, row.indices.astype(np.int64), w / w.sum(), absorbing)


def crw_from_exhaustion(exh: Exhaustion, anchor=None, level: int | None = None) -> ConditionedChain:
    """Chain on one wired level, anchored at ``anchor`` (default: the model origin)."""
    lv = exh.level(level)
    ov = lv.anchor if anchor is None else _interior(lv, anchor)
    chain = build_crw(lv.graph, ov, kernel_column(lv, ov), absorbing={lv.boundary})
    chain.level = lv
    chain.pair_kernel = lambda y, _lv=lv: kernel_column(_lv, int(y))
    return chain


def one_step_martingale(chain: ConditionedChain) -> float:
    """``max |Σ_y p̂(x,y)/a(y) - 1/a(x)|`` over live ``x`` off the anchor and its neighbours."""
    a = chain.a
    inv = np.zeros_like(a)
    inv[a > 0] = 1.0 / a[a > 0]
    lhs = chain.transition @ inv
    mask = a > 0
    mask[chain.anchor_neighbours] = False
    # at absorbing vertices the killed mass carries 1/a = 0, so they are included
    return float(np.max(np.abs(lhs[mask] - inv[mask]), initial=0.0))


def row_sum_residual(chain: ConditionedChain, include_absorbing: bool = False) -> float:
    rs = chain.row_sums()
    mask = chain.a > 0
    if not include_absorbing:
        mask[list(chain.absorbing)] = False
    return float(np.max(np.abs(rs[mask] - 1.0), initial=0.0))


def stationary_residual(chain: ConditionedChain) -> float:
    """``max |π(x) - deg(x) a(x)^2|`` over live vertices other than absorbing ones."""
    g = chain.base
    pi = chain.stationary_measure()
    mask = chain.a > 0
    mask[list(chain.absorbing)] = False
    target = g.degrees * chain.a ** 2
    return float(np.max(np.abs(pi[mask] - target[mask]) / np.maximum(target[mask], 1.0), initial=0.0))


# ---------------------------------------------------------------- sampling

@dataclass(frozen=True)
class WalkPath:
    vertices: np.ndarray
    rng_seed: int
    stop_reason: str
    graph_tag: int = -1
    path_index: int = 0

    def __len__(self) -> int:
        return len(self.vertices)


def _stop_codes(chain: ConditionedChain, targets: Iterable[int], stop_at_boundary: bool) -> np.ndarray:
    codes = np.zeros(chain.base.vertex_count, dtype=np.int8)
    if stop_at_boundary:
        for v in chain.absorbing:
            codes[v] = _walk.BOUNDARY
    for v in targets:
        codes[int(v)] = _walk.TARGET
    return codes


def _first(chain: ConditionedChain, start: int):
    if start == chain.anchor:
        return chain._first_cum, chain.first_support
    return np.empty(0), np.empty(0, dtype=np.int64)


def sample_crw(chain: ConditionedChain, start: int, targets: Iterable[int] = (), cap: int = DEFAULT_CAP,
               seed: int = 0, index: int = 0, stop_at_boundary: bool = True) -> WalkPath:
    """One path of the conditioned walk from ``start``.

    From the anchor the first step uses the anchor law. The walk stops on
    ``targets``, on the absorbing set (unless ``stop_at_boundary`` is off, in
    which case only killing ends it) or after ``cap`` steps.
    """
    start = int(start)
    if start != chain.anchor and chain.a[start] <= 0:
        raise StartOutsideDomain(f"the conditioned walk cannot start at {start}")
    codes = _stop_codes(chain, targets, stop_at_boundary)
    if start == chain.anchor:
        codes[start] = _walk.RUN
    fc, fi = _first(chain, start)
    verts, reason = _walk.walk(*chain._arrays, start, fc, fi, codes, int(cap), int(seed), int(index))
    return WalkPath(verts, int(seed), STOP_REASONS[int(reason)], chain.base.tag, int(index))


def sample_many(chain: ConditionedChain, start: int, n_paths: int, seed: int = 0, threads: int = 1,
                **kw) -> list[WalkPath]:
    return _walk.parallel_map(lambda i: sample_crw(chain, start, seed=seed, index=i, **kw), n_paths, threads)


def transition_counts(path: WalkPath, x: int) -> dict[int, int]:
    """How often the path stepped from ``x`` to each neighbour."""
    v = path.vertices
    idx = np.flatnonzero(v[:-1] == x)
    nxt, cnt = np.unique(v[idx + 1], return_counts=True)
    return dict(zip(nxt.tolist(), cnt.tolist()))


def write_path_csv(path, walk: WalkPath) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["step", "vertex"])
        for i, v in enumerate(walk.vertices.tolist()):
            wr.writerow([i, v])


# ---------------------------------------------------------------- Green function

@dataclass(frozen=True)
class MCEstimate:
    value: float
    stderr: float
    n_paths: int

    def within(self, target: float, k: float = 3.0) -> bool:
        return abs(self.value - target) <= k * max(self.stderr, 1e-15)


def _check_live(chain: ConditionedChain, *vs: int) -> None:
    for v in vs:
        if v == chain.anchor or chain.a[v] <= 0:
            raise StartOutsideDomain(f"vertex {v} is not in the domain of the conditioned walk")


def _solver(chain: ConditionedChain, drop: Sequence[int]):
    n = chain.base.vertex_count
    keep = np.ones(n, dtype=bool)
    keep[list(drop)] = False
    keep &= chain.a > 0
    idx = np.flatnonzero(keep)
    P = chain.transition[idx][:, idx]
    A = (sp.identity(len(idx), format="csc") - P.tocsc()).tocsc()
    try:
        lu = splu(A)
    except RuntimeError as exc:
        raise SingularSystem(str(exc)) from None
    pos = -np.ones(n, dtype=np.int64)
    pos[idx] = np.arange(len(idx))
    return lu, idx, pos


def crw_green(chain: ConditionedChain, x: int, y: int, mode: str = "analytic", n_paths: int = 10**5,
              seed: int = 0, threads: int = 1, absorb: bool = True, roulette: float = 0.6,
              cap: int = DEFAULT_CAP):
    """Expected visits to ``y`` by the conditioned walk from ``x``.

    ``analytic`` evaluates the kernel formula, ``solve`` inverts ``I - P̂`` on
    the level, and ``monte_carlo`` returns an :class:`MCEstimate`. Monte Carlo
    treats the absorbing set as an exit when ``absorb`` is set; otherwise the
    walk runs until killed, which matches the other two modes exactly.
    """
    x, y = int(x), int(y)
    _check_live(chain, x, y)
    g = chain.base
    if mode == "analytic":
        ay = chain.two_point(y)
        a = chain.a
        return float(g.degrees[y] * a[y] / a[x] * (a[x] - ay[x] + ay[chain.anchor]))
    if mode == "solve":
        lu, idx, pos = _solver(chain, [chain.anchor])
        rhs = np.zeros(len(idx))
        rhs[pos[y]] = 1.0
        return float(lu.solve(rhs)[pos[x]])
    if mode != "monte_carlo":
        raise InputError(f"unknown mode {mode!r}")
    codes = _stop_codes(chain, (), absorb)
    base = float(chain.a[x]) if roulette else 0.0
    survive = float(roulette) if roulette else 1.0
    arrs = chain._arrays

    def block(i0, i1):
        return _walk.visit_counts(*arrs, x, y, codes, int(cap), chain.a, base, survive, int(seed), i0, i1)

    vals = _walk.batched(block, int(n_paths), threads)
    return MCEstimate(float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(len(vals))), int(n_paths))


# ---------------------------------------------------------------- hitting probabilities

@dataclass(frozen=True)
class HitResult:
    value: float
    leakage: float


def _hit_field(chain: ConditionedChain, target: int, taboo: Sequence[int] = ()) -> np.ndarray:
    """``x -> P̂_x(T̂_target < T̂_taboo ∧ killing)`` over all vertices."""
    lu, idx, pos = _solver(chain, [chain.anchor, target, *taboo])
    P = chain.transition
    rhs = np.asarray(P[idx][:, [target]].todense()).ravel()
    out = np.zeros(chain.base.vertex_count)
    out[idx] = lu.solve(rhs)
    out[target] = 1.0
    return out


def leakage(chain: ConditionedChain, x: int, y: int) -> float:
    """``P̂_x`` of reaching the absorbing set before ``y``."""
    if not chain.absorbing:
        return 0.0
    if x in chain.absorbing:
        return 1.0
    ab = sorted(chain.absorbing)
    # glue the absorbing set into one target by summing columns
    lu, idx, pos = _solver(chain, [chain.anchor, y, *ab])
    rhs = np.asarray(chain.transition[idx][:, ab].sum(axis=1)).ravel()
    sol = lu.solve(rhs)
    return float(sol[pos[x]])


def crw_hit_prob(chain: ConditionedChain, x: int, y: int, mode: str = "analytic") -> HitResult:
    """``P̂_x(T̂_y < ∞)`` on the level, with the leakage through the wired vertex."""
    x, y = int(x), int(y)
    if x == y:
        raise InputError("x and y must differ")
    _check_live(chain, x, y)
    if mode == "analytic":
        o = chain.anchor
        a = chain.a
        hm_y = a[y] / (a[y] + chain.two_point(y)[o])
        hm_x = a[x] / (a[x] + chain.two_point(x)[o])
        val = hm_y * hitting_prob(chain.base, y, {x}, {o}) / hm_x
    elif mode == "solve":
        val = float(_hit_field(chain, y)[x])
    else:
        raise InputError(f"unknown mode {mode!r}")
    return HitResult(float(val), leakage(chain, x, y))


def qhat(chain: ConditionedChain, y: int, mode: str = "analytic") -> float:
    """Probability that the walk started at the anchor ever visits ``y``."""
    y = int(y)
    _check_live(chain, y)
    if mode == "analytic":
        a = chain.a
        return float(a[y] / (a[y] + chain.two_point(y)[chain.anchor]))
    if mode != "solve":
        raise InputError(f"unknown mode {mode!r}")
    h = _hit_field(chain, y)
    return float(chain.first_probs @ h[chain.first_support])


@dataclass(frozen=True)
class QhatProfile:
    values: dict      # radius -> {coord: q̂}
    summary: dict     # radius -> {"mean", "min", "max", "count", "level"}

    @property
    def liminf(self) -> float:
        return min(s["min"] for s in self.summary.values())

    @property
    def limsup(self) -> float:
        return max(s["max"] for s in self.summary.values())

    def deviations(self, target: float = 0.5) -> list[float]:
        return [abs(self.summary[r]["mean"] - target) for r in sorted(self.summary)]


def qhat_profile(exh: Exhaustion, radii: Sequence[int], o=None, level: int | None = None,
                 level_factor: int = 16) -> QhatProfile:
    """``q̂`` on each hop sphere around the anchor.

    Each radius ``r`` is evaluated on level ``level_factor * r`` unless a fixed
    ``level`` is given, so that the truncation stays far from the sphere.
    """
    values, summary = {}, {}
    for r in radii:
        r = int(r)
        n = int(level) if level is not None else level_factor * r
        lv = exh.level(n)
        ov = lv.anchor if o is None else _interior(lv, o)
        dist = lv.interior_distances(ov)
        vids = [int(v) for v in np.flatnonzero(dist == r) if v != lv.boundary]
        if not vids:
            raise InputError(f"no interior vertices at distance {r} on level {n}")
        q = hm_values(lv, ov, vids)
        values[r] = {lv.coord(v): float(h) for v, h in zip(vids, q)}
        summary[r] = {"mean": float(q.mean()), "min": float(q.min()), "max": float(q.max()),
                      "count": len(vids), "level": n}
    return QhatProfile(values, summary)


# ---------------------------------------------------------------- statistics

@dataclass(frozen=True)
class MartingaleResult:
    residual: float
    stderr: float
    mean: float
    target: float
    n_paths: int

    @property
    def within_3se(self) -> bool:
        return self.residual <= 3 * max(self.stderr, 1e-15)


def martingale_residual(chain: ConditionedChain, x: int, n_steps: int, n_paths: int, seed: int = 0,
                        threads: int = 1) -> MartingaleResult:
    """``|E 1/a(X̂_{n ∧ T_N}) - 1/a(x)|`` with ``N`` the anchor's neighbours.

    Killed paths contribute zero, which keeps the identity exact on a level.
    """
    x = int(x)
    _check_live(chain, x)
    codes = np.zeros(chain.base.vertex_count, dtype=np.int8)
    codes[chain.anchor_neighbours] = _walk.TARGET
    empty_c, empty_i = np.empty(0), np.empty(0, dtype=np.int64)
    a = chain.a
    arrs = chain._arrays

    def block(i0, i1):
        return _walk.end_points(*arrs, x, empty_c, empty_i, codes, int(n_steps), int(seed), i0, i1)

    ends = _walk.batched(block, int(n_paths), threads).astype(np.int64)
    inv = np.zeros(len(a) + 1)
    inv[:-1][a > 0] = 1.0 / a[a > 0]
    vals = inv[ends]  # KILLED = -1 picks the trailing zero
    mean = float(vals.mean())
    return MartingaleResult(abs(mean - 1.0 / a[x]), float(vals.std(ddof=1) / np.sqrt(len(vals))), mean,
                            float(1.0 / a[x]), int(n_paths))


def _vertices(p) -> np.ndarray:
    return np.asarray(p.vertices if isinstance(p, WalkPath) else p, dtype=np.int64)


def trace_intersections(path1, path2) -> tuple[int, int]:
    """Common vertices of two traces, and of the first trace with the loop erasure of the second."""
    if isinstance(path1, WalkPath) and isinstance(path2, WalkPath) and path1.graph_tag != path2.graph_tag:
        raise GraphMismatch("paths live on different graphs")
    v1, v2 = _vertices(path1), _vertices(path2)
    if len(v1) == 0 or len(v2) == 0:
        return 0, 0
    top = int(max(v1.max(), v2.max())) + 1
    le = _walk.loop_erase_array(v2, top)
    s1 = np.unique(v1)
    return int(np.intersect1d(s1, v2).size), int(np.intersect1d(s1, le).size)


@dataclass(frozen=True)
class RecurrenceStat:
    counts: np.ndarray
    horizon: int

    @property
    def mean(self) -> float:
        return float(self.counts.mean())

    def distribution(self) -> dict[int, float]:
        k, c = np.unique(self.counts, return_counts=True)
        return dict(zip(k.tolist(), (c / c.sum()).tolist()))


def set_recurrence_stat(chain: ConditionedChain, A: Iterable[int], horizon: int, n_paths: int,
                        seed: int = 0, start: int | None = None, threads: int = 1) -> RecurrenceStat:
    """Distinct vertices of ``A`` visited within ``horizon`` steps."""
    A = np.array(sorted({int(v) for v in A}), dtype=np.int64)
    if A.size == 0:
        raise InputError("A must be nonempty")
    start = chain.anchor if start is None else int(start)

    def one(i):
        p = sample_crw(chain, start, cap=horizon, seed=seed, index=i)
        return int(np.intersect1d(np.unique(p.vertices[1:] if start == chain.anchor else p.vertices), A).size)

    return RecurrenceStat(np.array(_walk.parallel_map(one, int(n_paths), threads)), int(horizon))


# ---------------------------------------------------------------- conditioned law

def _prefixes(g: Graph, start: int, length: int, avoid: int):
    """All walks of ``length`` steps from ``start`` avoiding ``avoid``, with their SRW weight."""
    C = g.conductance_matrix
    out = [((start,), 1.0)]
    for _ in range(length):
        nxt = []
        for path, w in out:
            x = path[-1]
            row = C.getrow(x)
            for y, c in zip(row.indices.tolist(), row.data.tolist()):
                if y != avoid:
                    nxt.append((path + (y,), w * c / g.degrees[x]))
        out = nxt
    return out


def conditioned_prefix_tv(chain: ConditionedChain, start: int, radii: Sequence[float],
                          length: int = 4) -> list[float]:
    """TV between SRW prefixes conditioned on ``{T_R < T_o}`` and conditioned-walk prefixes.

    ``T_R`` is the exit time of ``{a <= R}``. Both laws are computed exactly by
    enumerating every prefix of ``length`` steps.
    """
    g, o, a = chain.base, chain.anchor, chain.a
    start = int(start)
    _check_live(chain, start)
    paths = _prefixes(g, start, length, o)
    out = []
    for R in radii:
        outside = set(np.flatnonzero(a > R).tolist())
        if not outside:
            raise InputError(f"no vertex has a > {R} on this level")
        h = hitting_field(g, outside, {o})
        tv = 0.0
        for path, w in paths:
            if any(v in outside for v in path):
                raise InputError(f"prefixes of length {length} leave {{a <= {R}}}; use a larger R")
            end = path[-1]
            cond = w * h[end] / h[start]
            crw = w * a[end] / a[start]
            tv += abs(cond - crw)
        out.append(0.5 * tv)
    return out
