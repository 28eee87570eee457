"""Exhaustive identity checks on small graphs and per-level kernel identities."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .dirichlet import exit_matrix, last_exit_check, solve_dirichlet
from .graph import Graph, build_graph, laplacian_apply, metric_ball, outer_boundary
from .kernel import green_pk_identity, kernel_column, kernel_via_escape, kernel_via_resistance
from .models import MODELS, VARIANTS, Exhaustion, make_exhaustion

SMALL_LIMIT = 400


@dataclass
class SuiteResult:
    residuals: dict = field(default_factory=dict)   # graph name -> {identity: residual}
    seconds: float = 0.0

    @property
    def max_residual(self) -> float:
        return max((v for row in self.residuals.values() for v in row.values()), default=0.0)

    def by_identity(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for row in self.residuals.values():
            for k, v in row.items():
                out[k] = max(out.get(k, 0.0), v)
        return out


def small_graphs() -> list[tuple[str, Graph, int | None]]:
    """Hand-made graphs plus every built-in level with at most 400 vertices (sampled levels)."""
    out: list[tuple[str, Graph, int | None]] = [
        ("path3", build_graph(3, [(0, 1), (1, 2)]), None),
        ("K3", build_graph(3, [(0, 1), (1, 2), (0, 2)]), None),
        ("C4", build_graph(4, [(0, 1), (1, 2), (2, 3), (3, 0)]), None),
        ("K4", build_graph(4, [(a, b) for a in range(4) for b in range(a + 1, 4)]), None),
        ("weighted", build_graph(5, [(0, 1, 2.0), (1, 2, 0.5), (2, 3, 1.0), (3, 4, 3.0), (4, 0, 1.0),
                                     (0, 2, 1.5), (1, 2, 1.0)]), None),
    ]
    levels = {"line": (2, 4, 8, 32), "cycle-calibration": (3, 16), "grid2d": (2, 4, 6, 9),
              "triangular": (3, 6), "comb": (2, 8, 24)}
    for model in MODELS:
        for variant in VARIANTS[model]:
            for n in levels[model]:
                if model == "grid2d" and variant == "diamond":
                    n = 2 * n
                lv = make_exhaustion(model, [n], variant).level(n)
                if lv.graph.vertex_count <= SMALL_LIMIT:
                    out.append((f"{model}:{variant}:{n}", lv.graph, lv.boundary))
    return out


def _dense_laplacian(g: Graph) -> np.ndarray:
    return g.laplacian_matrix.toarray()


def green_symmetry(g: Graph, A: Sequence[int]) -> float:
    L = _dense_laplacian(g)
    free = np.setdiff1d(np.arange(g.vertex_count), A)
    G = np.linalg.inv(L[np.ix_(free, free)])
    return float(np.max(np.abs(G - G.T)))


def dirichlet_residual(g: Graph, boundary: Sequence[int], rng: np.random.Generator) -> float:
    vals = {int(b): float(v) for b, v in zip(boundary, rng.normal(size=len(boundary)))}
    src_v = [v for v in range(g.vertex_count) if v not in vals][:3]
    source = {v: float(s) for v, s in zip(src_v, rng.normal(size=len(src_v)))}
    u = np.asarray(solve_dirichlet(g, vals, source).values)
    lap = laplacian_apply(g, u)
    res = 0.0
    for v in range(g.vertex_count):
        if v in vals:
            res = max(res, abs(u[v] - vals[v]))
        else:
            res = max(res, abs(lap[v] + source.get(v, 0.0)))
    return res


def resistance_routes(g: Graph) -> tuple[float, float]:
    """All pairs: pseudo-inverse vs grounded inverse, and pseudo-inverse vs flow energy."""
    L = _dense_laplacian(g)
    n = g.vertex_count
    Lp = np.linalg.pinv(L)
    d = np.diag(Lp)
    R = d[:, None] + d[None, :] - 2 * Lp
    ground = 0.0
    for y in range(n):
        free = np.r_[0:y, y + 1:n]
        G = np.linalg.inv(L[np.ix_(free, free)])
        ground = max(ground, float(np.max(np.abs(np.diag(G) - R[free, y]))))
    # energy of the unit current flow from x to y equals R(x, y)
    u, v, c = g.edge_u, g.edge_v, g.edge_c
    D = Lp[u] - Lp[v]  # edge potential drop per unit source at each vertex
    energy = 0.0
    for x in range(n):
        drop = D[:, [x]] - D  # potential drop for the flow x -> every y
        E = (c[:, None] * drop ** 2).sum(axis=0)
        energy = max(energy, float(np.max(np.abs(E - R[x]))))
    return ground, energy


def last_exit_residual(g: Graph, center: int) -> float:
    """Exhaustive over ``x`` in ``A`` and exit points ``b`` for ``A = ball(1) ⊆ B = ball(2)``."""
    A = metric_ball(g, center, 1)
    B = metric_ball(g, center, 2)
    if len(B) == g.vertex_count:
        B = metric_ball(g, center, 1)
        A = {center}
    if len(B) == g.vertex_count:
        return 0.0
    worst = 0.0
    for b in sorted(outer_boundary(g, B)):
        for x in sorted(A):
            worst = max(worst, last_exit_check(g, A, B, x, b))
    return worst


def exit_normalization(g: Graph, center: int) -> float:
    worst = 0.0
    for r in (1, 2):
        dom = metric_ball(g, center, r)
        if len(dom) == g.vertex_count:
            continue
        _, M = exit_matrix(g, dom, sorted(dom))
        worst = max(worst, float(np.max(np.abs(M.sum(axis=1) - 1.0))))
    return worst


def identity_suite(graphs: Iterable[tuple[str, Graph, int | None]] | None = None, seed: int = 0) -> SuiteResult:
    """Run every exact identity on every graph; residuals are absolute."""
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    result = SuiteResult()
    for name, g, wired in (small_graphs() if graphs is None else graphs):
        ground = wired if wired is not None else g.vertex_count - 1
        center = 0 if wired != 0 else 1
        k = max(1, g.vertex_count // 10)
        A = rng.choice(g.vertex_count, size=k, replace=False)
        bnd = [int(v) for v in A]
        row = {
            "green_symmetry": max(green_symmetry(g, [ground]), green_symmetry(g, bnd)),
            "dirichlet": dirichlet_residual(g, bnd, rng),
            "last_exit": last_exit_residual(g, center),
            "exit_normalization": exit_normalization(g, center),
        }
        row["resistance_grounded"], row["resistance_energy"] = resistance_routes(g)
        result.residuals[name] = row
    result.seconds = time.perf_counter() - start
    return result


def kernel_identity_residuals(exh: Exhaustion, y=None, radius: int = 4) -> list[tuple[int, float, float]]:
    """Per level: max over ``x`` near ``y`` of the resistance and escape routes against ``a_n``."""
    out = []
    for lv in exh:
        yv = lv.anchor if y is None else lv.vid(y)
        a = kernel_column(lv, yv)
        dist = lv.interior_distances(yv)
        xs = [int(v) for v in np.flatnonzero((dist >= 0) & (dist <= radius)) if v != lv.boundary]
        r_res = max(abs(kernel_via_resistance(lv, x, yv) - a[x]) for x in xs)
        r_esc = max(abs(kernel_via_escape(lv, x, yv) - a[x]) for x in xs)
        out.append((lv.n, r_res, r_esc))
    return out


def level_suite(exh: Exhaustion) -> dict[str, float]:
    """Kernel identities that hold exactly on each level of ``exh``."""
    res = kernel_identity_residuals(exh)
    out = {"kernel_resistance": max(r for _, r, _ in res), "kernel_escape": max(e for _, _, e in res)}
    dim = len(exh.top.coords[exh.top.anchor])
    x, y, z = ((2,), (1,), (0,)) if dim == 1 else ((2,) + (0,) * (dim - 1), (1,) + (0,) * (dim - 1),
                                                   (0,) * dim)
    try:
        out["green_pk"] = green_pk_identity(exh, x, y, z).residual
    except Exception:  # models without these coordinates skip the triangle identity
        pass
    return out
