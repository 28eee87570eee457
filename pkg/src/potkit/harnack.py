"""Harnack-type ratios for harmonic functions with and without a pole.

Scales are given either directly in kernel units (``units="kernel"``, the
sublevel set ``{a <= R}``) or as hop radii (``units="radius"``, the default),
in which case radius ``r`` is mapped to the largest kernel value on the hop
sphere of radius ``r``. Each scale is evaluated on a level just large enough
to contain the outer domain with a safety margin.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dirichlet import (HarmonicField, exit_matrix, green_matrix, hitting_field, reff_ball,
                        resistance_from)
from .errors import InputError, NoStabilization, SameVertex, ScaleTooLargeForTruncation
from .graph import Graph, laplacian_apply, outer_boundary
from .kernel import _interior, kernel_column
from .models import Exhaustion, Level

DIVERGED = 1e-12  # min/max below this counts as a vanishing minimum
MARGIN = 4


@dataclass(frozen=True)
class RatioReport:
    R: float
    M: float
    ratio: float
    witness_max: int
    witness_min: int
    family_size: int
    diverged: bool = False
    level: int = 0
    extras: dict = field(default_factory=dict, compare=False)

    def as_dict(self, level: Level | None = None) -> dict:
        d = {"R": self.R, "M": self.M, "ratio": self.ratio, "diverged": self.diverged,
             "family_size": self.family_size, "level": self.level,
             "witness_max": self.witness_max, "witness_min": self.witness_min}
        if level is not None:
            d["witness_max"] = _coord_str(level.coord(self.witness_max))
            d["witness_min"] = _coord_str(level.coord(self.witness_min))
        d.update({k: v for k, v in self.extras.items() if isinstance(v, (int, float, str, bool))})
        return d


def _coord_str(c) -> str:
    return "wired" if c is None else ",".join(str(t) for t in c)


def harmonic_with_pole(g: Graph, o: int, b: int) -> HarmonicField:
    """``x -> P_x(T_b < T_o)``: zero at the pole ``o``, one at ``b``, harmonic elsewhere."""
    o, b = int(o), int(b)
    if o == b:
        raise SameVertex("pole and target must differ")
    return HarmonicField(hitting_field(g, {b}, {o}), g.tag)


def harmonic_residual(g: Graph, values, fixed: Sequence[int]) -> float:
    """Largest ``|Δh|`` off ``fixed``."""
    lap = laplacian_apply(g, np.asarray(values, dtype=float))
    mask = np.ones(g.vertex_count, dtype=bool)
    mask[list(fixed)] = False
    return float(np.max(np.abs(lap[mask]), initial=0.0))


def max_principle_holds(values, domain: Sequence[int], boundary: Sequence[int], tol: float = 1e-10) -> bool:
    """Extremes over ``domain`` are attained on ``boundary``."""
    v = np.asarray(values, dtype=float)
    inner = v[list(domain)]
    bnd = v[list(boundary)]
    return bool(inner.max() <= bnd.max() + tol and inner.min() >= bnd.min() - tol)


# ---------------------------------------------------------------- scales and levels

def _hop_sphere(lv: Level, z: int, r: int) -> np.ndarray:
    d = lv.interior_distances(z)
    return np.flatnonzero(d == r)


def kernel_scale(lv: Level, a: np.ndarray, z: int, r: float, units: str) -> float:
    if units == "kernel":
        return float(r)
    if units != "radius":
        raise InputError(f"unknown units {units!r}")
    sphere = _hop_sphere(lv, z, int(r))
    if sphere.size == 0:
        raise ScaleTooLargeForTruncation(f"hop sphere of radius {r} is empty on level {lv.n}")
    return float(a[sphere].max())


def _pick_level(exh: Exhaustion, hop_radius: int, level: int | None) -> Level:
    if level is not None:
        return exh.level(level)
    return exh.level(max(exh.levels[0], int(hop_radius) + MARGIN))


def _sublevel(lv: Level, a: np.ndarray, z: int, R: float) -> set[int]:
    inside = (a <= R) & lv.interior_mask
    inside[z] = True
    return set(np.flatnonzero(inside).tolist())


def _check_inside(lv: Level, members: set[int], what: str) -> None:
    dw = lv.graph.hop_distances(lv.boundary)
    if min(dw[list(members)]) < 2:
        raise ScaleTooLargeForTruncation(f"{what} reaches the wired boundary of level {lv.n}")


def _worst(columns: np.ndarray, row_ids: Sequence[int]):
    """Worst max/min over the columns; rows correspond to ``row_ids``.

    Returns ``(ratio, witness_max, witness_min, diverged, column)``.
    """
    ids = list(row_ids)
    best = (1.0, ids[0], ids[0], False, -1)
    for j in range(columns.shape[1]):
        v = columns[:, j]
        hi, lo = int(np.argmax(v)), int(np.argmin(v))
        vmax, vmin = float(v[hi]), float(v[lo])
        if vmax <= 0:
            continue
        if vmin <= DIVERGED * vmax:
            return math.inf, ids[hi], ids[lo], True, j
        if vmax / vmin > best[0]:
            best = (vmax / vmin, ids[hi], ids[lo], False, j)
    return best


# ---------------------------------------------------------------- elliptic

def elliptic_ratio(exh: Exhaustion, z=None, R: float = 1, M: float = 8, family: Sequence | None = None,
                   units: str = "radius", level: int | None = None) -> RatioReport:
    """Worst max/min over the hull of the resistance ball of scale ``R``.

    The family defaults to the exit-measure atoms ``x -> P_x(X_T = b)`` of the
    sublevel set at scale ``M R``. An explicit ``family`` is a list of vertex
    arrays on the chosen level.
    """
    if M <= 1:
        raise InputError("M must exceed 1")
    hop = int(math.ceil(M * R)) if units == "radius" else None
    lv = _pick_level(exh, hop if hop is not None else 0, level)
    g = lv.graph
    zv = lv.anchor if z is None else _interior(lv, z)
    a = kernel_column(lv, zv)
    if R == 0:
        return RatioReport(0.0, float(M), 1.0, zv, zv, 1 if family is None else len(family), level=lv.n)
    outer = kernel_scale(lv, a, zv, M * R, units)
    domain = _sublevel(lv, a, zv, outer)
    _check_inside(lv, domain, "the outer sublevel set")
    if units == "radius":
        rho = float(resistance_from(g, zv, _hop_sphere(lv, zv, int(R))).max())
        hops = 2 * int(R) + 2
    else:
        rho, hops = float(R), None
    _, hull = reff_ball(g, zv, rho, outside=lv.boundary, max_hops=hops)
    hull = sorted(hull & domain)
    if family is not None:
        cols = np.column_stack([np.asarray(f, dtype=float)[hull] for f in family])
    else:
        _, cols = exit_matrix(g, domain, hull)
    ratio, wmax, wmin, div, j = _worst(cols, hull)
    return RatioReport(float(R), float(M), ratio, wmax, wmin, cols.shape[1], div, lv.n,
                       {"scale_kernel": outer, "scale_resistance": rho, "hull_size": len(hull)})


# ---------------------------------------------------------------- anchored

def _anchored_setup(exh: Exhaustion, o, R: float, M: float, units: str, level: int | None):
    hop = int(math.ceil(M * R)) if units == "radius" else 0
    lv = _pick_level(exh, hop, level)
    ov = lv.anchor if o is None else _interior(lv, o)
    a = kernel_column(lv, ov)
    inner = kernel_scale(lv, a, ov, R, units)
    outer = kernel_scale(lv, a, ov, M * R, units)
    lam = _sublevel(lv, a, ov, inner)
    domain = _sublevel(lv, a, ov, outer)
    _check_inside(lv, domain, "the outer sublevel set")
    ring = sorted(outer_boundary(lv.graph, lam))
    return lv, ov, a, inner, outer, domain, ring


def anchored_family(lv: Level, ov: int, domain: set[int], starts: Sequence[int], kind: str = "exit",
                    n_random: int = 16, seed: int = 0):
    """Columns of positive functions harmonic off the pole, evaluated at ``starts``.

    ``exit``: ``x -> P_x(X_T = b, T < T_o)`` for ``b`` on the outer boundary of
    ``domain``. ``pole``: ``x -> P_x(T_b < T_o)`` on the whole level.
    ``random``: harmonic extensions of ``n_random`` seeded uniform boundary
    data; these may come close to zero and are kept out of the default sweeps.
    """
    g = lv.graph
    if kind in ("exit", "random"):
        support, cols = exit_matrix(g, domain, list(starts), taboo={ov})
        keep = [j for j, b in enumerate(support) if b != ov]
        if kind == "exit":
            return [support[j] for j in keep], cols[:, keep]
        data = np.random.default_rng(seed).random((len(keep), n_random))
        return [None] * n_random, cols[:, keep] @ data
    if kind == "pole":
        bnd = sorted(outer_boundary(g, domain) - {ov})
        cols = np.column_stack([hitting_field(g, {b}, {ov})[list(starts)] for b in bnd])
        return bnd, cols
    raise InputError(f"unknown family {kind!r}")


def anchored_ratio(exh: Exhaustion, o=None, R: float = 2, M: float = 8, family: str = "exit",
                   units: str = "radius", level: int | None = None) -> RatioReport:
    """Worst max/min over the boundary of ``{a <= R}`` for functions vanishing at ``o``.

    The family is ``anchored_family(kind=family)`` together with ``a(·, o)``
    itself; ``family="kernel"`` uses only ``a(·, o)``. A vanishing minimum is
    reported as ``ratio = inf`` with ``diverged`` set.
    """
    lv, ov, a, inner, outer, domain, ring = _anchored_setup(exh, o, R, M, units, level)
    if family == "kernel":
        cols = a[ring][:, None]
        poles: list = [None]
    else:
        poles, cols = anchored_family(lv, ov, domain, ring, family)
        cols = np.column_stack([cols, a[ring]])
        poles = poles + [None]
    ratio, wmax, wmin, div, j = _worst(cols, ring)
    pole = poles[j] if j >= 0 else None
    if pole is not None:
        worst = _coord_str(lv.coord(pole))
    else:
        worst = "kernel" if j < 0 or j == cols.shape[1] - 1 else family
    return RatioReport(float(R), float(M), ratio, wmax, wmin, cols.shape[1], div, lv.n,
                       {"scale_kernel": inner, "outer_kernel": outer, "ring_size": len(ring),
                        "worst_pole": worst,
                        "kernel_spread": float(a[ring].max() / a[ring].min())})


def crw_harnack_ratio(exh: Exhaustion, o=None, R: float = 2, M: float = 8, units: str = "radius",
                      level: int | None = None, include_constant: bool = True) -> RatioReport:
    """Ratios for ``ĥ = h / a`` over the anchored exit family on the boundary of ``{a <= R}``.

    ``ĥ`` is harmonic for the conditioned walk exactly when ``h`` is harmonic
    off the anchor. The extras carry the kernel spread on the ring, which
    bounds how far these ratios can sit from the anchored ones.
    """
    lv, ov, a, inner, outer, domain, ring = _anchored_setup(exh, o, R, M, units, level)
    poles, cols = anchored_family(lv, ov, domain, ring, "exit")
    hat = cols / a[ring][:, None]
    if include_constant:
        hat = np.column_stack([hat, np.ones(len(ring))])
    ratio, wmax, wmin, div, j = _worst(hat, ring)
    base, *_ = _worst(cols, ring)
    return RatioReport(float(R), float(M), ratio, wmax, wmin, hat.shape[1], div, lv.n,
                       {"anchored_ratio_same_family": base,
                        "kernel_spread": float(a[ring].max() / a[ring].min())})


# ---------------------------------------------------------------- conditional exit measure

def conditional_exit_comparability(exh: Exhaustion, o=None, R: float = 2, M_start: float = 2,
                                   max_doublings: int = 6, stabilization: float = 0.10,
                                   units: str = "radius", max_level: int = 512) -> RatioReport:
    """``max_{x,y,b} [ν(x,b)/a(x)] / [ν(y,b)/a(y)]`` over ``{a <= R} \\ {a <= 1}``.

    ``ν(x, b)`` is the probability of leaving ``{a <= Ψ}`` at ``b`` before
    hitting ``o``. ``Ψ = M R`` with ``M`` doubled from ``M_start`` until the
    ratio changes by at most ``stabilization``.
    """
    if R < 1:
        raise InputError("R must be at least 1")
    history = []
    M = float(M_start)
    prev = None
    for _ in range(max_doublings + 1):
        hop = int(math.ceil(M * R)) if units == "radius" else 0
        if hop + MARGIN > max_level:
            break
        lv, ov, a, inner, outer, domain, _ = _anchored_setup(exh, o, R, M, units, None)
        one = kernel_scale(lv, a, ov, 1, units)
        X = sorted(_sublevel(lv, a, ov, inner) - _sublevel(lv, a, ov, one))
        if len(X) == 0:
            raise InputError("the annulus between scales 1 and R is empty")
        poles, cols = anchored_family(lv, ov, domain, X, "exit")
        f = cols / a[X][:, None]
        ratio, wmax, wmin, div, j = _worst(f, X)
        history.append((M, ratio))
        rep = RatioReport(float(R), M, ratio, wmax, wmin, f.shape[1], div, lv.n,
                          {"psi_kernel": outer, "doublings": len(history),
                           "history": tuple(history)})
        if div:
            return rep
        if prev is not None and abs(ratio / prev - 1) <= stabilization:
            return rep
        prev = ratio
        M *= 2
    raise NoStabilization(f"ratio did not stabilise within {stabilization:.0%}; history {history}")


# ---------------------------------------------------------------- Liouville and auxiliary bounds

def liouville_oscillation(exh: Exhaustion, o=None, R: float = 2, outers: Sequence[float] = (4, 8, 16),
                          units: str = "radius") -> list[float]:
    """Relative oscillation of a bounded ``ĥ`` on the ring at scale ``R``, per outer scale.

    ``ĥ = h / a`` with ``h(x) = P_x(leave {a <= outer} through the half with first
    coordinate > 0, before T_o)``. Oscillation is ``(max - min) / max`` on the ring.
    """
    out = []
    for S in outers:
        lv, ov, a, inner, outer, domain, ring = _anchored_setup(exh, o, R, S / R, units, None)
        support, cols = exit_matrix(lv.graph, domain, ring, taboo={ov})
        half = [j for j, b in enumerate(support)
                if b != ov and lv.coord(b) is not None and lv.coord(b)[0] > 0]
        h = cols[:, half].sum(axis=1)
        hat = h / a[ring]
        out.append(float((hat.max() - hat.min()) / hat.max()))
    return out


def green_scale_constant(exh: Exhaustion, o=None, R: float = 2, M0: float = 2, M: float = 8,
                            units: str = "radius") -> dict:
    """Smallest ``C`` with ``R/C <= Gr(x,y)/deg(y) <= C R`` for the killed Green function.

    The Green function is killed on leaving ``{a <= M R}``; ``x`` ranges over the
    boundary of ``{a <= M0 R}`` and ``y`` over the hull boundary of the
    resistance ball of scale ``R``. The scale ``R`` used in the bound is the
    resistance scale.
    """
    lv, ov, a, inner, outer, domain, _ = _anchored_setup(exh, o, R, M, units, None)
    g = lv.graph
    mid = kernel_scale(lv, a, ov, M0 * R, units)
    xs = sorted(outer_boundary(g, _sublevel(lv, a, ov, mid)))
    if units == "radius":
        rho = float(resistance_from(g, ov, _hop_sphere(lv, ov, int(R))).max())
        hops = 2 * int(R) + 2
    else:
        rho, hops = float(R), None
    _, hull = reff_ball(g, ov, rho, outside=lv.boundary, max_hops=hops)
    ys = sorted(outer_boundary(g, hull))
    killed = sorted(set(range(g.vertex_count)) - domain)
    G = green_matrix(g, killed, ys)  # g(·, y) = Gr(·, y) / deg(y)
    vals = G[xs]
    C = float(max(vals.max() / rho, rho / vals.min()))
    return {"C": C, "R_resistance": rho, "min": float(vals.min()), "max": float(vals.max()),
            "level": lv.n, "pairs": int(vals.size)}


def tm_to_bounds(level: Level, o: int, Mk: float) -> dict:
    """Check ``a/(M+1) <= P_z(T_M < T_o) <= a/M`` for ``z`` in ``{1 < a <= M}``.

    ``T_M`` is the exit time of ``{a <= Mk}``. Returns the largest violation of
    either bound (zero when both hold) and the boundary kernel range.
    """
    a = kernel_column(level, o)
    lam = _sublevel(level, a, o, Mk)
    _check_inside(level, lam, "the sublevel set")
    outside = set(range(level.graph.vertex_count)) - lam
    h = hitting_field(level.graph, outside, {o})
    zs = [z for z in lam if a[z] > 1.0 or (Mk <= 1 and a[z] > 0)]
    zs = [z for z in zs if z != o]
    lower = np.array([a[z] / (Mk + 1) for z in zs])
    upper = np.array([a[z] / Mk for z in zs])
    p = h[zs]
    viol = float(max(np.max(lower - p, initial=0.0), np.max(p - upper, initial=0.0), 0.0))
    bnd = sorted(outer_boundary(level.graph, lam))
    return {"violation": viol, "count": len(zs), "boundary_min": float(a[bnd].min()),
            "boundary_max": float(a[bnd].max())}


def optional_stopping_residual(level: Level, A: Sequence[int], x: int, y: int) -> float:
    """``|g_{A^c}(x,y) - (E_x a(X_T, y) - a(x, y))|`` with ``T`` the exit time of ``A``."""
    A = {int(v) for v in A}
    if level.boundary in A:
        raise InputError("A must avoid the wired vertex")
    g = level.graph
    ay = kernel_column(level, int(y))
    killed = sorted(set(range(g.vertex_count)) - A)
    lhs = green_matrix(g, killed, [int(y)])[int(x), 0]
    support, Mx = exit_matrix(g, A, [int(x)])
    rhs = float(Mx[0] @ ay[support]) - ay[int(x)]
    return float(abs(lhs - rhs))


def write_sweep_csv(path, model: str, reports: Sequence[RatioReport], level: Level | None = None) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["model", "R", "M", "ratio", "witness_max", "witness_min"])
        for r in reports:
            wm = _coord_str(level.coord(r.witness_max)) if level else r.witness_max
            wn = _coord_str(level.coord(r.witness_min)) if level else r.witness_min
            wr.writerow([model, f"{r.R:.12g}", f"{r.M:.12g}", f"{r.ratio:.12g}", wm, wn])
