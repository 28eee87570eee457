import math

import numpy as np
import pytest

from potkit import harnack as H
from potkit.errors import SameVertex, ScaleTooLargeForTruncation
from potkit.models import make_exhaustion


@pytest.fixture(scope="module")
def grid():
    return make_exhaustion("grid2d", [16, 32, 64, 128])


@pytest.fixture(scope="module")
def line():
    return make_exhaustion("line", [64, 128])


def test_harmonic_with_pole_line(line):
    lv = line.level(64)
    o, b = lv.vid((0,)), lv.boundary
    h = np.asarray(H.harmonic_with_pole(lv.graph, o, b))
    for k in (-5, 0, 3, 40):
        assert h[lv.vid((k,))] == pytest.approx(max(k, 0) / 65 if k >= 0 else abs(k) / 65, abs=1e-12)
    assert H.harmonic_residual(lv.graph, h, [o, b]) < 1e-8
    with pytest.raises(SameVertex):
        H.harmonic_with_pole(lv.graph, o, o)


def test_harmonic_with_pole_symmetry(grid):
    lv = grid.level(16)
    o = lv.anchor
    h1 = np.asarray(H.harmonic_with_pole(lv.graph, o, lv.vid((5, 2))))
    h2 = np.asarray(H.harmonic_with_pole(lv.graph, o, lv.vid((2, 5))))
    for x, y in [(1, 0), (3, 1), (-2, 4)]:
        assert h1[lv.vid((x, y))] == pytest.approx(h2[lv.vid((y, x))], abs=1e-12)


def test_max_principle():
    v = [0.0, 0.5, 1.0]
    assert H.max_principle_holds(v, [1], [0, 2])
    assert not H.max_principle_holds([0.0, 2.0, 1.0], [1], [0, 2])


def test_elliptic_ratio_grid(grid):
    reps = [H.elliptic_ratio(grid, R=R, M=8) for R in (1, 2, 4)]
    ratios = [r.ratio for r in reps]
    assert all(math.isfinite(r) and r >= 1 for r in ratios)
    assert max(ratios) / min(ratios) <= 2


def test_elliptic_trivial(grid):
    assert H.elliptic_ratio(grid, R=0, M=8).ratio == 1
    lv = grid.level(32)
    ones = [np.ones(lv.graph.vertex_count)]
    assert H.elliptic_ratio(grid, R=2, M=8, family=ones, level=32).ratio == pytest.approx(1)


def test_anchored_ratio_grid(grid):
    ratios = [H.anchored_ratio(grid, R=R, M=8).ratio for R in (2, 4, 8)]
    assert all(math.isfinite(r) for r in ratios)
    assert max(ratios) / min(ratios) <= 2


def test_anchored_kernel_family_near_one(grid):
    r = H.anchored_ratio(grid, R=4, M=8, family="kernel")
    assert 1 <= r.ratio < 1.5


def test_line_diverges(line):
    assert H.anchored_ratio(line, R=2, M=8).diverged
    assert H.anchored_ratio(line, R=2, M=8).ratio == math.inf
    assert H.crw_harnack_ratio(line, R=2, M=8).diverged


def test_crw_ratio_vs_anchored(grid):
    crw = H.crw_harnack_ratio(grid, R=2, M=8)
    anc = H.anchored_ratio(grid, R=2, M=8)
    assert math.isfinite(crw.ratio)
    assert crw.ratio <= anc.ratio * 3


def test_conditional_exit_line(line):
    rep = H.conditional_exit_comparability(line, R=2, M_start=2)
    assert rep.diverged


def test_liouville_decreases(grid):
    osc = H.liouville_oscillation(grid, R=2, outers=(4, 8, 16))
    assert osc[0] > osc[1] > osc[2]


def test_tm_to_bounds(grid):
    lv = grid.level(64)
    out = H.tm_to_bounds(lv, lv.anchor, 0.5)
    assert out["violation"] == 0 and out["count"] > 0
    with pytest.raises(ScaleTooLargeForTruncation):
        H.tm_to_bounds(grid.level(16), grid.level(16).anchor, 0.8)


def test_optional_stopping(grid):
    lv = grid.level(16)
    A = [lv.vid((i, j)) for i in range(-2, 3) for j in range(-1, 2)]
    assert H.optional_stopping_residual(lv, A, lv.vid((1, 0)), lv.vid((0, 1))) < 1e-10


def test_sweep_csv(tmp_path, grid):
    reps = [H.elliptic_ratio(grid, R=R) for R in (1, 2)]
    p = tmp_path / "s.csv"
    H.write_sweep_csv(p, "grid2d", reps, grid.level(reps[0].level))
    rows = p.read_text().splitlines()
    assert rows[0] == "model,R,M,ratio,witness_max,witness_min" and len(rows) == 3


def test_green_scale_constant(grid):
    cs = [H.green_scale_constant(grid, R=R)["C"] for R in (2, 4)]
    assert all(1 <= c < math.inf for c in cs)
    assert max(cs) / min(cs) <= 2


def test_random_family_is_harmonic_combination(grid):
    r = H.anchored_ratio(grid, R=2, M=8, family="random")
    e = H.anchored_ratio(grid, R=2, M=8, family="exit")
    assert 1 <= r.ratio <= e.ratio  # positive mixtures of exit atoms cannot be worse
