"""Truncated potential kernels, two-point harmonic measure and the gluing construction.

At level ``n`` with wired vertex ``w`` the truncated kernel is
``a_n(x, y) = g_w(y, y) - g_w(x, y)``. Everything here is evaluated on the
finite wired graph of each level.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .dirichlet import (ProbabilityTable, eff_resistance, eff_resistance_to_set, escape_probability,
                        exit_matrix, green_column, grounded_diagonal, hitting_field, hitting_prob)
from .errors import IncompleteTable, InsufficientLevels, NotInterior
from .graph import outer_boundary
from .models import Exhaustion, Level


@dataclass(frozen=True)
class KernelEstimate:
    value: float
    per_level_values: tuple
    sequence_id: str
    converged: bool
    spread_across_sequences: float = 0.0
    sequence_finals: dict = field(default_factory=dict)
    tol: float = 1e-3

    @property
    def unique(self) -> bool:
        """Whether all sequences agree to within the convergence tolerance."""
        return self.spread_across_sequences < self.tol


def _interior(level: Level, coord) -> int:
    v = level.vid(coord)
    if v == level.boundary:
        raise NotInterior(f"{coord} is the wired vertex")
    return v


def _component_zeros(level: Level, y: int) -> np.ndarray:
    """Vertices cut off from the wired vertex by removing ``y``."""
    reach = level.graph.hop_distances(level.boundary, blocked=[y]) >= 0
    cut = ~reach
    cut[y] = False
    return cut


def kernel_column(level: Level, y: int) -> np.ndarray:
    """``a_n(·, y)`` over all vertices of the level (the wired vertex included)."""
    col = green_column(level.graph, [level.boundary], y)
    a = col[y] - col
    a[y] = 0.0
    a[_component_zeros(level, y)] = 0.0
    return a


def truncated_kernel(exh: Exhaustion, x, y, level: int | None = None) -> float:
    lv = exh.level(level)
    xv, yv = _interior(lv, x), _interior(lv, y)
    return float(kernel_column(lv, yv)[xv])


def kernel_via_escape(level: Level, x: int, y: int) -> float:
    """``(1/deg y) P_x(T_w < T_y) / P_y(T_w < T_y^+)``, an independent route."""
    if x == y:
        return 0.0
    g, w = level.graph, level.boundary
    num = hitting_prob(g, x, {w}, {y})
    den = escape_probability(g, y, {w})
    return num / (g.degrees[y] * den)


def kernel_via_resistance(level: Level, x: int, y: int) -> float:
    """``R_eff(y <-> w) P_x(T_w < T_y)`` with the resistance taken on the glued graph."""
    if x == y:
        return 0.0
    g, w = level.graph, level.boundary
    return eff_resistance_to_set(g, y, {w}) * hitting_prob(g, x, {w}, {y})


def _aitken(v: Sequence[float]) -> float:
    a, b, c = v[-3:]
    den = c - 2 * b + a
    return c if abs(den) < 1e-15 else c - (c - b) ** 2 / den


def _estimate(values: list[tuple[int, float]], tol: float, seq: str, aitken: bool) -> tuple[float, bool]:
    vals = [v for _, v in values]
    conv = len(vals) >= 2 and abs(vals[-1] - vals[-2]) < tol
    val = _aitken(vals) if aitken and len(vals) >= 3 else vals[-1]
    return val, conv


def kernel_levels(exh: Exhaustion, x, y) -> list[tuple[int, float]]:
    return [(lv.n, truncated_kernel(exh, x, y, lv.n)) for lv in exh]


def kernel_limit(exh: Exhaustion, x, y, tol: float = 1e-3, alt_sequences: Iterable[Exhaustion] = (),
                 aitken: bool = False) -> KernelEstimate:
    """Per-level kernel values along ``exh`` and the disagreement between sequences."""
    seqs = [exh, *alt_sequences]
    for s in seqs:
        if len(s.levels) < 3:
            raise InsufficientLevels(f"{s.sequence_id} has {len(s.levels)} levels; need at least 3")
    per = kernel_levels(exh, x, y)
    value, conv = _estimate(per, tol, exh.sequence_id, aitken)
    finals = {exh.sequence_id: value}
    for s in alt_sequences:
        finals[s.sequence_id] = _estimate(kernel_levels(s, x, y), tol, s.sequence_id, aitken)[0]
    spread = max(finals.values()) - min(finals.values())
    return KernelEstimate(value, tuple(per), exh.sequence_id, conv, spread, finals, tol)


# ---------------------------------------------------------------- harmonic measure

def hm_level(level: Level, x: int, y: int) -> float:
    """``P_w(T_x < T_y)`` from the wired vertex."""
    return hitting_prob(level.graph, level.boundary, {x}, {y})


def hm_two_point(exh: Exhaustion, x, y, tol: float = 1e-3) -> KernelEstimate:
    per = []
    for lv in exh:
        xv, yv = _interior(lv, x), _interior(lv, y)
        if xv == yv:
            raise NotInterior("the two points must differ")
        per.append((lv.n, hm_level(lv, xv, yv)))
    value, conv = _estimate(per, tol, exh.sequence_id, False)
    return KernelEstimate(value, tuple(per), exh.sequence_id, conv, tol=tol)


def hm_consistency(level: Level, x: int, y: int) -> float:
    """``|a_n(x, y) - hm_n R_eff(x <-> y)|`` on the wired graph."""
    a = kernel_column(level, y)[x]
    return abs(a - hm_level(level, x, y) * eff_resistance(level.graph, x, y))


def hm_values(level: Level, o: int, vids: Sequence[int]) -> np.ndarray:
    """``hm_{x,o}(x)`` for each ``x`` in ``vids`` via ``a(x,o) / (a(x,o) + a(o,x))``."""
    g, w = level.graph, level.boundary
    col_o = green_column(g, [w], o)
    a_xo = col_o[o] - col_o[np.asarray(vids)]
    diag = grounded_diagonal(g, [w], vids)
    a_ox = diag - col_o[np.asarray(vids)]
    out = np.zeros(len(vids))
    tot = a_xo + a_ox
    ok = tot > 0
    out[ok] = a_xo[ok] / tot[ok]
    return out


# ---------------------------------------------------------------- gluing

@dataclass(frozen=True)
class QBValue:
    value: float
    per_level_values: tuple
    x_deviation: float = 0.0


def _interior_set(level: Level, B) -> list[int]:
    vs = sorted({_interior(level, b) for b in B})
    if not vs:
        raise NotInterior("B must be nonempty")
    return vs


def q_B_level(level: Level, Bv: Sequence[int], wv: int, via: str = "limit") -> tuple[float, float]:
    """``q_B(w)`` at one level; returns ``(value, x-deviation)``."""
    g, wd = level.graph, level.boundary
    Bset = set(Bv)
    if wv in Bset:
        return 0.0, 0.0
    if via == "limit":
        r = eff_resistance_to_set(g, wd, Bset)
        return r * hitting_prob(g, wv, {wd}, Bset), 0.0
    if via != "formula":
        raise ValueError(f"unknown route {via!r}")
    others = sorted(set(range(g.vertex_count)) - Bset)
    support, M = exit_matrix(g, others, [wv])
    law = dict(zip(support, M[0]))
    vals = []
    for x in Bv:
        a = kernel_column(level, x)
        vals.append(a[wv] - sum(p * a[b] for b, p in law.items()))
    return float(np.mean(vals)), float(max(vals) - min(vals))


def q_B(exh: Exhaustion, B, w, via: str = "limit", level: int | None = None) -> QBValue:
    """``q_B(w)`` along the exhaustion (or at one ``level``) by the chosen route."""
    lvls = [exh.level(level)] if level is not None else list(exh)
    per, dev = [], 0.0
    for lv in lvls:
        Bv = _interior_set(lv, B)
        val, d = q_B_level(lv, Bv, _interior(lv, w), via)
        per.append((lv.n, val))
        dev = max(dev, d)
    return QBValue(per[-1][1], tuple(per), dev)


def q_B_field(level: Level, Bv: Sequence[int]) -> np.ndarray:
    """``q_B`` at every vertex of the level, zero on ``B``."""
    g, wd = level.graph, level.boundary
    Bset = set(Bv)
    r = eff_resistance_to_set(g, wd, Bset)
    return r * hitting_field(g, {wd}, Bset)


def hm_from_infinity(exh: Exhaustion, B, level: int | None = None) -> ProbabilityTable:
    """Harmonic measure of ``B`` from infinity as ``Δq_B`` restricted to ``B``."""
    lv = exh.level(level)
    Bv = _interior_set(lv, B)
    q = q_B_field(lv, Bv)
    m = lv.graph.conductance_matrix
    masses = np.array([m.getrow(b).data @ (q[m.getrow(b).indices] - q[b]) for b in Bv])
    masses = np.clip(masses, 0.0, None)
    return ProbabilityTable(Bv, masses, tol=1e-6)


# ---------------------------------------------------------------- Green / kernel identity

@dataclass(frozen=True)
class IdentityResidual:
    residual: float
    per_level: tuple  # (level, residual, truncation gap)


def green_pk_identity(exh: Exhaustion, x, y, z) -> IdentityResidual:
    """``Gr_z(x,y)/deg(y)`` against ``a(x,z) - a(x,y) + a(z,y)`` at each level.

    The left side uses the wired graph killed at ``z`` only; the truncation gap
    is its distance from the Green function killed at ``z`` and the wired vertex.
    """
    rows = []
    for lv in exh:
        xv, yv, zv = (_interior(lv, c) for c in (x, y, z))
        g = lv.graph
        lhs = green_column(g, [zv], yv)[xv]
        ay, az = kernel_column(lv, yv), kernel_column(lv, zv)
        rhs = az[xv] - ay[xv] + ay[zv]
        gap = abs(lhs - green_column(g, [zv, lv.boundary], yv)[xv])
        rows.append((lv.n, abs(lhs - rhs), gap))
    return IdentityResidual(max(r for _, r, _ in rows), tuple(rows))


# ---------------------------------------------------------------- sublevel sets

@dataclass(frozen=True)
class KernelTable:
    level: Level
    anchor: int
    values: np.ndarray


def kernel_table(exh: Exhaustion, z=None, level: int | None = None) -> KernelTable:
    lv = exh.level(level)
    zv = lv.anchor if z is None else _interior(lv, z)
    return KernelTable(lv, zv, kernel_column(lv, zv))


@dataclass(frozen=True)
class SublevelSet:
    anchor: int
    radius: float
    members: frozenset
    boundary: frozenset
    connected: bool
    simply_connected: bool | None
    touches_wired: bool


def sublevel_set(table: KernelTable, R: float, margin: int = 2) -> SublevelSet:
    """``{x interior : a(x, anchor) <= R}`` with its outer vertex boundary."""
    vals = np.asarray(table.values, dtype=float)
    lv = table.level
    g = lv.graph
    if vals.shape != (g.vertex_count,) or not np.all(np.isfinite(vals[lv.interior_mask])):
        raise IncompleteTable("kernel table must cover every interior vertex")
    inside = (vals <= R + 1e-12 * max(1.0, abs(R))) & lv.interior_mask  # round-off at a(x) == R
    inside[table.anchor] = True
    members = set(np.flatnonzero(inside).tolist())
    bnd = outer_boundary(g, members)
    touches = lv.boundary in bnd
    reach = g.hop_distances(table.anchor, blocked=set(range(g.vertex_count)) - members)
    connected = bool(np.all(reach[list(members)] >= 0))
    dist_w = g.hop_distances(lv.boundary)
    if min(dist_w[list(members)]) >= margin:
        comp = g.hop_distances(lv.boundary, blocked=members) >= 0
        rest = set(range(g.vertex_count)) - members
        simply = bool(all(comp[v] for v in rest))
    else:
        simply = None
    return SublevelSet(table.anchor, float(R), frozenset(members), frozenset(bnd), connected, simply, touches)


# ---------------------------------------------------------------- delta-good census

@dataclass(frozen=True)
class Census:
    level: int
    annulus_sizes: dict
    counts: dict  # threshold -> {radius: count}
    values: dict  # vid -> hm


def delta_good_census(exh: Exhaustion, o=None, thresholds: Sequence[float] = (0.25, 0.5),
                      max_radius: int | None = None, level: int | None = None) -> Census:
    """Count ``{x : hm_{x,o}(x) >= δ}`` per hop annulus around ``o``."""
    lv = exh.level(level)
    ov = lv.anchor if o is None else _interior(lv, o)
    dist = lv.interior_distances(ov)
    if max_radius is None:
        max_radius = max(1, lv.n // 4)
    vids = [int(v) for v in np.flatnonzero((dist >= 1) & (dist <= max_radius)) if v != lv.boundary]
    hm = hm_values(lv, ov, vids)
    sizes: dict[int, int] = {}
    for v in vids:
        sizes[int(dist[v])] = sizes.get(int(dist[v]), 0) + 1
    counts = {}
    for t in thresholds:
        row = {r: 0 for r in sorted(sizes)}
        for v, h in zip(vids, hm):
            if h >= t:
                row[int(dist[v])] += 1
        counts[float(t)] = row
    return Census(lv.n, dict(sorted(sizes.items())), counts, dict(zip(vids, hm.tolist())))


# ---------------------------------------------------------------- export

def write_kernel_csv(path, exh: Exhaustion, y, coords: Iterable | None = None) -> None:
    """Rows ``x_coord, y_coord, level, value`` for every level of ``exh``."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x_coord", "y_coord", "level", "value"])
        for lv in exh:
            yv = _interior(lv, y)
            a = kernel_column(lv, yv)
            pts = coords if coords is not None else [c for c in lv.coords if c is not None]
            for c in pts:
                wr.writerow([_fmt_coord(c), _fmt_coord(lv.coord(yv)), lv.n, f"{a[lv.vid(c)]:.12g}"])


def _fmt_coord(c) -> str:
    c = (c,) if isinstance(c, int) else c
    return " ".join(str(t) for t in c)
