"""One check per acceptance criterion, at the stated tolerances.

Each test records a PASS/FAIL line; the lines are printed together in the
terminal summary.
"""
import math
import time

import numpy as np
import pytest
from scipy.stats import chi2_contingency, chisquare

from potkit import checks
from potkit import crw as C
from potkit import harnack as H
from potkit import ust as U
from potkit.graph import build_graph, laplacian_apply
from potkit.kernel import (green_pk_identity, hm_from_infinity, hm_two_point, kernel_column, kernel_limit,
                           q_B, q_B_field)
from potkit.models import make_exhaustion

from conftest import ACCEPTANCE_LINES


def report(k, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {k}: {detail}")
    assert ok, detail


def _tree_key(t):
    return frozenset(tuple(sorted(e)) for e in t.edges())


def test_criterion_01_identity_suite():
    res = checks.identity_suite()
    ok = res.max_residual <= 1e-8 and res.seconds <= 60
    report(1, ok, f"{len(res.residuals)} graphs, max residual {res.max_residual:.2e}, {res.seconds:.1f} s")


def test_criterion_02_kernel_identity():
    worst = {}
    for model, levels in (("line", [8, 16, 32, 64, 128]), ("grid2d", [8, 16, 32, 64])):
        res = checks.kernel_identity_residuals(make_exhaustion(model, levels), radius=3)
        worst[model] = max(max(r, e) for _, r, e in res)
    ok = max(worst.values()) <= 1e-9
    report(2, ok, ", ".join(f"{m} max residual {v:.2e}" for m, v in worst.items()))


def test_criterion_03_line_closed_forms():
    errs = {}
    for variant, f in (("symmetric", lambda k: abs(k) / 2), ("one-sided-right", lambda k: max(k, 0))):
        worst = 0.0
        for n in (16, 64, 256):
            lv = make_exhaustion("line", [n], variant).top
            a = kernel_column(lv, lv.vid((0,)))
            ks = range(-n, n + 1) if variant == "symmetric" else range(-n // 2, n // 2 + 1)
            worst = max(worst, max(abs(a[lv.vid((k,))] - f(k)) * n / 2 for k in ks))
        errs[variant] = worst  # error in units of 2/n
    tri = green_pk_identity(make_exhaustion("line", [16, 64]), (2,), (1,), (0,)).residual
    div = H.anchored_ratio(make_exhaustion("line", [64]), R=2, M=8).diverged
    ok = max(errs.values()) <= 1 and tri <= 1e-9 and div
    report(3, ok, f"max error / (2/n): {errs['symmetric']:.2e} symmetric, {errs['one-sided-right']:.2e} "
                  f"one-sided; triangle residual {tri:.1e}; line anchored divergence {div}")


@pytest.fixture(scope="module")
def z2_kernel():
    t0 = time.perf_counter()
    levels = [16, 32, 64, 128]
    boxes = make_exhaustion("grid2d", levels)
    diamonds = make_exhaustion("grid2d", levels, "diamond")
    e10 = kernel_limit(boxes, (1, 0), (0, 0), alt_sequences=[diamonds])
    e11 = kernel_limit(boxes, (1, 1), (0, 0), alt_sequences=[diamonds])
    return e10, e11, time.perf_counter() - t0


def test_criterion_04_z2_constants(z2_kernel):
    e10, e11, secs = z2_kernel
    ok = (abs(e10.value - 0.25) <= 0.01 and abs(e11.value - 1 / math.pi) <= 0.01
          and max(e10.spread_across_sequences, e11.spread_across_sequences) <= 1e-3 and secs <= 120)
    report(4, ok, f"a(1,0) = {e10.value:.6f}, a(1,1) = {e11.value:.6f}, spreads "
                  f"{e10.spread_across_sequences:.1e}/{e11.spread_across_sequences:.1e}, {secs:.1f} s")


def test_criterion_05_uniqueness_dichotomy(z2_kernel):
    seqs = [make_exhaustion("line", [32, 64, 128], v) for v in ("symmetric", "one-sided-right", "one-sided-left")]
    line = kernel_limit(seqs[0], (1,), (0,), alt_sequences=seqs[1:])
    grid = z2_kernel[0]
    ok = line.spread_across_sequences >= 0.9 and grid.spread_across_sequences <= 1e-3
    report(5, ok, f"line spread {line.spread_across_sequences:.3f}, grid2d spread "
                  f"{grid.spread_across_sequences:.1e}")


def test_criterion_06_gluing():
    exh = make_exhaustion("grid2d", [64])
    lv = exh.top
    rng = np.random.default_rng(2024)
    tol = 1e-3
    gap = mass = hm_gap = 0.0
    for _ in range(5):
        k = int(rng.integers(1, 5))
        pts = set()
        while len(pts) < k:
            pts.add(tuple(int(t) for t in rng.integers(-4, 5, size=2)))
        B = sorted(pts)
        while True:
            w = tuple(int(t) for t in rng.integers(-6, 7, size=2))
            if w not in pts:
                break
        lim = q_B(exh, B, w, via="limit").value
        frm = q_B(exh, B, w, via="formula").value
        gap = max(gap, abs(lim - frm))
        Bv = lv.vids(B)
        raw = laplacian_apply(lv.graph, q_B_field(lv, Bv))[Bv]
        mass = max(mass, abs(raw.sum() - 1), float(max(0.0, -raw.min())))
    x, y = (0, 1), (3, -2)
    two = hm_two_point(exh, x, y).value
    hm_gap = abs(hm_from_infinity(exh, [x, y])[lv.vid(x)] - two)
    ok = gap <= 2 * tol and mass <= 1e-6 and hm_gap <= 1e-6
    report(6, ok, f"route gap {gap:.1e}, Δq_B mass error {mass:.1e}, hm vs two-point {hm_gap:.1e}")


def test_criterion_07_conditioned_walk():
    grid = make_exhaustion("grid2d", [32])
    gch = C.crw_from_exhaustion(grid)
    lch = C.crw_from_exhaustion(make_exhaustion("line", [512]))
    rows = max(C.row_sum_residual(gch), C.row_sum_residual(lch))
    mart = max(C.one_step_martingale(gch), C.one_step_martingale(lch))
    llv = lch.level
    mc = C.crw_green(lch, llv.vid((2,)), llv.vid((1,)), "monte_carlo", n_paths=10**5, seed=7)
    glv = grid.top
    hit_ok = True
    worst = 0.0
    for x, y in [((3, 1), (0, 2)), ((5, 0), (1, 1)), ((-2, 4), (2, -3))]:
        an = C.crw_hit_prob(gch, glv.vid(x), glv.vid(y))
        sv = C.crw_hit_prob(gch, glv.vid(x), glv.vid(y), "solve")
        d = abs(an.value - sv.value)
        worst = max(worst, d)
        hit_ok &= d <= 1e-6 + an.leakage
    ok = rows <= 1e-10 and mart <= 1e-12 and mc.within(1.0, 3) and hit_ok
    report(7, ok, f"row sums {rows:.1e}, martingale {mart:.1e}, MC Ĝ(2,1) = {mc.value:.4f} ± {mc.stderr:.4f} "
                  f"({abs(mc.value - 1) / mc.stderr:.2f} SE from 1), hit routes {worst:.1e}")


def test_criterion_08_qhat_transitive_limit():
    t0 = time.perf_counter()
    prof = C.qhat_profile(make_exhaustion("grid2d", [64]), [4, 8, 16], level_factor=16)
    secs = time.perf_counter() - t0
    dev = prof.deviations(0.5)
    ok = dev[0] > dev[1] > dev[2] and dev[-1] <= 0.15 and secs <= 120
    means = ", ".join(f"{prof.summary[r]['mean']:.4f}" for r in (4, 8, 16))
    report(8, ok, f"annulus means {means}; deviations {', '.join(f'{d:.2e}' for d in dev)}; {secs:.1f} s")


def _uniform_p(g, n, seed):
    exact = U.enumerate_spanning_trees(g)
    counts = {k: 0 for k in exact}
    for t in U.wilson_wired_many(g, 0, n, seed=seed):
        counts[_tree_key(t)] += 1
    keys = sorted(exact, key=sorted)
    return chisquare([counts[k] for k in keys], [exact[k] * n for k in keys]).pvalue


def test_criterion_09_wilson():
    k3 = build_graph(3, [(0, 1), (1, 2), (0, 2)])
    c4 = build_graph(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
    k4 = build_graph(4, [(a, b) for a in range(4) for b in range(a + 1, 4)])
    p3, p4 = _uniform_p(k3, 3000, 1), _uniform_p(c4, 3000, 2)
    keys = sorted(U.enumerate_spanning_trees(k4), key=sorted)
    table = []
    for order, seed in (([1, 2, 3], 3), ([3, 2, 1], 4)):
        counts = {k: 0 for k in keys}
        for t in U.wilson_wired_many(k4, 0, 10**4, ordering=order, seed=seed):
            counts[_tree_key(t)] += 1
        table.append([counts[k] for k in keys])
    p_order = chi2_contingency(np.array(table)).pvalue
    ok = min(p3, p4, p_order) > 1e-3
    report(9, ok, f"chi-square p: K3 {p3:.3f}, C4 {p4:.3f}, K4 ordering {p_order:.3f}")


def test_criterion_10_wilson_at_infinity():
    exh = make_exhaustion("grid2d", [16])
    lv = exh.top
    ch = C.crw_from_exhaustion(exh)
    n = 10**4
    inf_trees = U.wilson_infinity_many(lv.graph, ch, n, seed=21)
    first = [U.first_branch(t)[:4] for t in inf_trees]
    le = [U.loop_erase(C.sample_crw(ch, lv.anchor, seed=22, index=i)).vertices[:4] for i in range(n)]
    tv_branch = U.total_variation(first, le)
    window = [lv.vid((i, j)) for i in (-1, 0, 1) for j in (-1, 0, 1)]
    wired = U.wilson_wired_many(lv.graph, lv.boundary, n, seed=23)
    s_inf = [U.window_summary(t, lv.graph, lv.anchor, window) for t in inf_trees]
    s_wired = [U.window_summary(t, lv.graph, lv.anchor, window) for t in wired]
    tv_tree = U.total_variation(s_inf, s_wired)
    ok = tv_branch <= 0.05 and tv_tree <= 0.05
    report(10, ok, f"first-branch TV {tv_branch:.4f}, window-summary TV {tv_tree:.4f}")


def test_criterion_11_end_diagnostic():
    grid = U.end_diagnostic(make_exhaustion("grid2d", [8, 16, 32]), n_samples=500, seed=31)
    line = U.end_diagnostic(make_exhaustion("line", [8, 16, 32]), n_samples=500, seed=32)
    g_reach = [s.reach_probability for s in grid.per_level]
    decreasing = all(b < a for a, b in zip(g_reach, g_reach[1:]))
    line_ok = all(abs(s.reach_probability - s.exact_reach)
                  <= 3 * math.sqrt(s.exact_reach * (1 - s.exact_reach) / 500) and s.reach_probability > 0
                  for s in line.per_level)
    ok = decreasing and line_ok and line.two_ended_suspect and not grid.two_ended_suspect
    lr = ", ".join(f"{s.reach_probability:.3f}/{s.exact_reach:.3f}" for s in line.per_level)
    report(11, ok, f"grid reach {', '.join(f'{p:.3f}' for p in g_reach)}; line reach/exact {lr}; "
                   f"flags line={line.two_ended_suspect} grid={grid.two_ended_suspect}")


def test_criterion_12_path_reversal():
    graphs = [(n, g) for n, g, _ in checks.small_graphs() if g.vertex_count <= 8]
    worst, pairs = 0.0, 0
    for _, g in graphs:
        for u in range(g.vertex_count):
            for o in range(g.vertex_count):
                if u != o:
                    worst = max(worst, U.path_reversal_check(g, u, o, max_len=10))
                    pairs += 1
    ok = worst <= 1e-10
    report(12, ok, f"{len(graphs)} graphs, {pairs} ordered pairs, max TV {worst:.1e}")


def test_criterion_13_intersections():
    exh = make_exhaustion("grid2d", [128])
    ch = C.crw_from_exhaustion(exh)
    o = exh.top.anchor
    medians = []
    for horizon in (10**3, 10**4):
        counts = []
        for i in range(100):
            p1 = C.sample_crw(ch, o, cap=horizon, seed=41, index=2 * i)
            p2 = C.sample_crw(ch, o, cap=horizon, seed=41, index=2 * i + 1)
            counts.append(C.trace_intersections(p1, p2)[0])
        medians.append(float(np.median(counts)))
    ok = medians[0] < medians[1]
    report(13, ok, f"median intersections {medians[0]:.1f} (10^3 steps) -> {medians[1]:.1f} (10^4 steps)")


def test_criterion_14_harnack():
    grid = make_exhaustion("grid2d", [16, 32, 64])
    ell = [H.elliptic_ratio(grid, R=R, M=8).ratio for R in (2, 4, 8)]
    anc = [H.anchored_ratio(grid, R=R, M=8).ratio for R in (2, 4, 8)]
    finite = all(map(math.isfinite, ell + anc))
    stable = max(ell) / min(ell) <= 2 and max(anc) / min(anc) <= 2
    ce = H.conditional_exit_comparability(grid, R=2)
    line = make_exhaustion("line", [64])
    flags = H.anchored_ratio(line, R=2).diverged and H.crw_harnack_ratio(line, R=2).diverged
    ok = finite and stable and math.isfinite(ce.ratio) and flags
    report(14, ok, f"elliptic {', '.join(f'{r:.3f}' for r in ell)}; anchored {', '.join(f'{r:.3f}' for r in anc)}; "
                   f"conditional exit {ce.ratio:.3f} at Ψ = {ce.M * ce.R:g} (hops); line flags {flags}")
