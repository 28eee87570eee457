import numpy as np
import pytest

from potkit.errors import IncompleteTable, InsufficientLevels, NotInterior
from potkit.kernel import (KernelTable, delta_good_census, green_pk_identity, hm_from_infinity,
                           hm_two_point, hm_values, kernel_column, kernel_limit, kernel_table,
                           kernel_via_escape, kernel_via_resistance, q_B, sublevel_set,
                           truncated_kernel, write_kernel_csv)
from potkit.models import make_exhaustion


@pytest.mark.parametrize("n", [4, 16, 64])
def test_line_symmetric_closed_form(n):
    exh = make_exhaustion("line", [n])
    lv = exh.top
    a = kernel_column(lv, lv.vid((0,)))
    for k in range(-n, n + 1):
        assert a[lv.vid((k,))] == pytest.approx(abs(k) / 2, abs=1e-10)


def test_line_one_sided():
    n = 32
    exh = make_exhaustion("line", [n], "one-sided-right")
    for k in (-5, -1, 1, 3, 10):
        assert truncated_kernel(exh, (k,), (0,)) == pytest.approx(max(k, 0), abs=2 / n)


def test_kernel_diagonal_zero():
    exh = make_exhaustion("grid2d", [4])
    assert truncated_kernel(exh, (1, 1), (1, 1)) == 0


@pytest.mark.parametrize("model", ["line", "grid2d", "comb", "triangular"])
def test_three_routes_agree(model):
    lv = make_exhaustion(model, [6]).top
    y = lv.anchor
    a = kernel_column(lv, y)
    for x in range(0, lv.graph.vertex_count, 5):
        if x == lv.boundary:
            continue
        assert kernel_via_resistance(lv, x, y) == pytest.approx(a[x], abs=1e-9)
        assert kernel_via_escape(lv, x, y) == pytest.approx(a[x], abs=1e-9)


def test_kernel_harmonic_off_pole():
    lv = make_exhaustion("grid2d", [8]).top
    a = kernel_column(lv, lv.anchor)
    from potkit.graph import laplacian_apply
    lap = laplacian_apply(lv.graph, a)
    lap[lv.boundary] = 0
    expect = np.zeros_like(lap)
    expect[lv.anchor] = 1.0
    assert np.allclose(lap, expect, atol=1e-10)


def test_grid_constants_small_levels():
    boxes = make_exhaustion("grid2d", [16, 32, 64])
    diamonds = make_exhaustion("grid2d", [16, 32, 64], "diamond")
    est = kernel_limit(boxes, (1, 0), (0, 0), alt_sequences=[diamonds])
    assert est.value == pytest.approx(0.25, abs=1e-6)
    assert est.unique
    assert truncated_kernel(boxes, (1, 1), (0, 0)) == pytest.approx(1 / np.pi, abs=0.01)


def test_line_sequence_dependence():
    seqs = [make_exhaustion("line", [16, 32, 64], v) for v in ("symmetric", "one-sided-right", "one-sided-left")]
    est = kernel_limit(seqs[0], (1,), (0,), alt_sequences=seqs[1:])
    finals = sorted(est.sequence_finals.values())
    assert finals == pytest.approx([0.0, 0.5, 1.0], abs=0.05)
    assert est.spread_across_sequences >= 0.9 and not est.unique


def test_kernel_limit_needs_levels():
    with pytest.raises(InsufficientLevels):
        kernel_limit(make_exhaustion("grid2d", [4, 8]), (1, 0), (0, 0))


def test_not_interior():
    with pytest.raises(NotInterior):
        truncated_kernel(make_exhaustion("grid2d", [2]), (5, 0), (0, 0))


def test_hm_two_point():
    grid = make_exhaustion("grid2d", [8, 16, 32])
    est = hm_two_point(grid, (0, 0), (1, 0))
    devs = [abs(v - 0.5) for _, v in est.per_level_values]
    assert devs == sorted(devs, reverse=True) and devs[-1] < 2e-4
    line = hm_two_point(make_exhaustion("line", [16, 32, 64]), (1,), (0,))
    for n, v in line.per_level_values:
        assert v == pytest.approx((n + 1) / (2 * n + 1), abs=1e-12)
    right = make_exhaustion("line", [16, 32, 64], "one-sided-right")
    assert hm_two_point(right, (1,), (0,)).value == pytest.approx(1.0, abs=0.02)


def test_q_B():
    exh = make_exhaustion("grid2d", [16, 32])
    assert q_B(exh, [(0, 0)], (2, 1)).value == pytest.approx(truncated_kernel(exh, (2, 1), (0, 0)), abs=1e-10)
    assert q_B(exh, [(0, 0), (1, 0)], (1, 0)).value == 0
    lim = q_B(exh, [(0, 0), (1, 0)], (0, 1), via="limit").value
    frm = q_B(exh, [(0, 0), (1, 0)], (0, 1), via="formula")
    assert lim == pytest.approx(frm.value, abs=2e-3)
    assert frm.x_deviation < 2e-3


def test_hm_from_infinity():
    exh = make_exhaustion("grid2d", [32])
    t = hm_from_infinity(exh, [(0, 0), (1, 0)])
    assert list(t.masses) == pytest.approx([0.5, 0.5], abs=2e-4)
    t = hm_from_infinity(exh, [(-1, 0), (0, 0), (1, 0)])
    lv = exh.top
    left, mid, right = (t[lv.vid(c)] for c in [(-1, 0), (0, 0), (1, 0)])
    assert mid < right and left == pytest.approx(right, abs=1e-12)
    assert sum(t.masses) == pytest.approx(1, abs=1e-6)
    two = hm_two_point(exh, (0, 1), (2, 0), tol=1e-3).value
    t2 = hm_from_infinity(exh, [(0, 1), (2, 0)])
    assert t2[lv.vid((0, 1))] == pytest.approx(two, abs=1e-6)


def test_green_pk_identity_line():
    r = green_pk_identity(make_exhaustion("line", [8, 16]), (2,), (1,), (0,))
    assert r.residual < 1e-9
    r = green_pk_identity(make_exhaustion("line", [8]), (0,), (1,), (0,))
    assert r.residual < 1e-12


def test_green_pk_identity_grid():
    r = green_pk_identity(make_exhaustion("grid2d", [64]), (3, 0), (0, 2), (0, 0))
    assert r.residual <= 5e-3


def test_sublevel_sets():
    t = kernel_table(make_exhaustion("line", [16]))
    s = sublevel_set(t, 1.0)
    assert {t.level.coord(v)[0] for v in s.members} == {-2, -1, 0, 1, 2}
    assert sublevel_set(t, 0).members == {t.anchor}
    grid = kernel_table(make_exhaustion("grid2d", [16]))
    prev = set()
    for R in (0.3, 0.45, 0.6):
        s = sublevel_set(grid, R)
        assert prev <= s.members and s.connected and s.simply_connected
        prev = set(s.members)
    with pytest.raises(IncompleteTable):
        sublevel_set(KernelTable(grid.level, grid.anchor, np.full(3, 0.1)), 1.0)


def test_census_line():
    c = delta_good_census(make_exhaustion("line", [32]), thresholds=(0.4, 0.6), max_radius=6)
    total = sum(c.annulus_sizes.values())
    assert sum(c.counts[0.4].values()) == total
    assert sum(c.counts[0.6].values()) == 0


def test_census_grid_symmetry_and_comb_order():
    lv = make_exhaustion("grid2d", [16]).top
    nb = [lv.vid(c) for c in [(1, 0), (0, 1), (-1, 0), (0, -1)]]
    assert np.ptp(hm_values(lv, lv.anchor, nb)) < 1e-12
    comb = make_exhaustion("comb", [32]).top
    tip = comb.vid((1, 3))   # distance 4 along a tooth
    spine = comb.vid((4, 0))
    h = hm_values(comb, comb.anchor, [tip, spine])
    assert h[0] < h[1]


def test_kernel_csv(tmp_path):
    exh = make_exhaustion("grid2d", [4])
    p = tmp_path / "k.csv"
    write_kernel_csv(p, exh, (0, 0), [(1, 0), (1, 1)])
    lines = p.read_text().splitlines()
    assert len(lines) == 3
