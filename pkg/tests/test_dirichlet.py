import numpy as np
import pytest

from potkit.dirichlet import (eff_resistance, eff_resistance_to_set, escape_probability, exit_measure,
                              green, green_column, green_matrix, hitting_prob, last_exit_check,
                              reff_ball, solve_dirichlet)
from potkit.errors import OverlappingSets
from potkit.graph import build_graph, laplacian_apply, metric_ball
from potkit.models import make_exhaustion

from conftest import path_graph


def test_dirichlet_linear(path3):
    u = solve_dirichlet(path3, {0: 0.0, 2: 1.0})
    assert np.allclose(np.asarray(u), [0, 0.5, 1])


def test_dirichlet_zero(triangle):
    assert np.allclose(np.asarray(solve_dirichlet(triangle, {0: 0.0})), 0)


def test_dirichlet_source_matches_green():
    g = path_graph(4)
    u = np.asarray(solve_dirichlet(g, {0: 0.0, 3: 0.0}, {1: 1.0}))
    assert np.allclose(-laplacian_apply(g, u)[1:3], [1, 0])
    assert u[1] == pytest.approx(green(g, {0, 3}, 1, 1) / g.degrees[1])


def test_green_values():
    g = path_graph(4)
    assert green(g, {0, 3}, 1, 1) == pytest.approx(4 / 3)
    assert green(g, {0, 3}, 1, 2) == pytest.approx(2 / 3)
    assert green(g, {0, 3}, 2, 1) == pytest.approx(2 / 3)
    assert green(g, {0, 3}, 0, 1) == 0


def test_green_symmetric_on_grid():
    lv = make_exhaustion("grid2d", [4]).level(4)
    cols = list(range(0, 40, 3))
    G = green_matrix(lv.graph, {lv.boundary}, cols)
    sub = G[cols]
    # green_column is g, deg-weighted Green is symmetric in the unweighted sense
    assert np.allclose(sub, sub.T, atol=1e-12)
    assert np.allclose(G[:, 1], green_column(lv.graph, {lv.boundary}, cols[1]))


def test_hitting():
    g = path_graph(11)
    assert hitting_prob(g, 3, {10}, {0}) == pytest.approx(0.3)
    assert hitting_prob(g, 10, {10}, {0}) == 1
    assert hitting_prob(g, 0, {10}, {0}) == 0
    with pytest.raises(OverlappingSets):
        hitting_prob(g, 3, {5}, {5})


def test_escape_equals_reciprocal_green():
    g = path_graph(4)
    assert escape_probability(g, 1, {0, 3}) == pytest.approx(3 / 4)


def test_exit_measure(path3):
    t = exit_measure(path3, {1}, 1)
    assert t.as_dict() == pytest.approx({0: 0.5, 2: 0.5})
    g = path_graph(5)
    t = exit_measure(g, {1, 2, 3}, 2, taboo={1})
    assert t.get(1) == pytest.approx(2 / 3) and t.get(4) == pytest.approx(1 / 3)


def test_exit_measure_grid_symmetry():
    lv = make_exhaustion("grid2d", [3]).level(3)
    dom = metric_ball(lv.graph, lv.vid((0, 0)), 2)
    t = exit_measure(lv.graph, dom, lv.vid((0, 0)))
    vals = {lv.coord(v): p for v, p in t.as_dict().items()}
    for (x, y), p in vals.items():
        for img in [(y, x), (-x, y), (x, -y), (-y, -x)]:
            assert vals[img] == pytest.approx(p, abs=1e-12)


def test_resistance(path3, triangle, c4):
    assert eff_resistance(path3, 0, 2) == pytest.approx(2)
    assert eff_resistance(triangle, 0, 1) == pytest.approx(2 / 3)
    assert eff_resistance(c4, 0, 1) == pytest.approx(3 / 4)
    assert eff_resistance_to_set(path3, 1, {0, 2}) == pytest.approx(0.5)
    assert eff_resistance_to_set(c4, 1, {3}) == pytest.approx(eff_resistance(c4, 1, 3))


def test_reff_ball(path3):
    assert reff_ball(path3, 0, 1)[0] == {0, 1}
    assert reff_ball(path3, 2, 0)[0] == {2}
    lv = make_exhaustion("grid2d", [6]).level(6)
    z = lv.vid((0, 0))
    ball, hull = reff_ball(lv.graph, z, 0.5, outside=lv.boundary)
    assert ball <= hull and z in hull
    # no holes: the complement of the hull is connected through the wired vertex
    rest = set(range(lv.graph.vertex_count)) - hull
    dist = lv.graph.hop_distances(lv.boundary, blocked=hull)
    assert all(dist[v] >= 0 for v in rest)


def test_last_exit():
    g = path_graph(7)
    assert last_exit_check(g, {2, 3}, {1, 2, 3, 4, 5}, 2, 6) < 1e-10
    assert last_exit_check(g, {3}, {3}, 3, 4) < 1e-12
    lv = make_exhaustion("grid2d", [4]).level(4)
    A = {lv.vid((i, j)) for i in range(-1, 2) for j in range(-1, 2)}
    B = {lv.vid((i, j)) for i in range(-3, 4) for j in range(-3, 4)}
    from potkit.graph import outer_boundary
    worst = max(last_exit_check(lv.graph, A, B, x, b) for x in A for b in outer_boundary(lv.graph, B))
    assert worst < 1e-9


def test_weighted_series_parallel():
    g = build_graph(3, [(0, 1, 2.0), (1, 2, 2.0), (0, 2, 1.0)])
    assert eff_resistance(g, 0, 2) == pytest.approx(1 / (1 / 1.0 + 1 / 1.0))
