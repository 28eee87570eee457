import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from potkit.errors import DisconnectedGraph, EmptySet, InvalidEdge, UnknownModel
from potkit.graph import (build_graph, glue, laplacian_apply, metric_ball, outer_boundary,
                          read_edge_list, write_edge_list)
from potkit.models import MODELS, VARIANTS, make_exhaustion

from conftest import path_graph


def test_degrees(path3, triangle):
    assert list(path3.degrees) == [1, 2, 1]
    assert list(triangle.degrees) == [2, 2, 2]


def test_disconnected_rejected():
    with pytest.raises(DisconnectedGraph):
        build_graph(4, [(0, 1), (2, 3)])


@pytest.mark.parametrize("edge", [(0, 0), (0, 5), (0, 1, -1.0), (0, 1, 0.0)])
def test_bad_edges(edge):
    with pytest.raises(InvalidEdge):
        build_graph(3, [edge, (1, 2)])


def test_glue_c4(c4):
    q, qm = glue(c4, [0, 2])
    assert q.vertex_count == 3
    blk = qm.glued_block
    assert q.degrees[blk] == 4
    assert len(q.edges) == 4  # parallel edges kept
    assert q.conductance(blk, qm(1)) == 2 and q.conductance(blk, qm(3)) == 2


def test_glue_path(path3):
    q, qm = glue(path3, [0, 2])
    assert q.vertex_count == 2
    assert len(q.edges) == 2
    assert q.conductance(qm(0), qm(1)) == 2


def test_glue_singleton_is_identity(triangle):
    q, qm = glue(triangle, [1])
    assert list(qm.mapping) == [0, 1, 2]
    assert sorted(q.edges) == sorted(triangle.edges)


def test_glue_empty(path3):
    with pytest.raises(EmptySet):
        glue(path3, [])


def test_metric_ball():
    g = path_graph(4)
    assert metric_ball(g, 1, 1) == {0, 1, 2}
    assert metric_ball(g, 2, 0) == {2}
    lv = make_exhaustion("grid2d", [2]).level(2)
    ball = metric_ball(lv.graph, lv.vid((0, 0)), 2)
    assert len(ball) == 13 and lv.boundary not in ball


def test_laplacian(path3, triangle):
    assert list(laplacian_apply(path3, [0, 1, 0])) == [1, -2, 1]
    assert list(laplacian_apply(triangle, [1, 0, 0])) == [-2, 1, 1]
    assert np.allclose(laplacian_apply(triangle, [3, 3, 3]), 0)


def test_outer_boundary():
    g = path_graph(5)
    assert outer_boundary(g, {1, 2}) == {0, 3}


def test_level_shapes():
    lv = make_exhaustion("line", [2]).level(2)
    assert lv.interior_count == 5 and lv.graph.degrees[lv.boundary] == 2
    lv = make_exhaustion("grid2d", [1]).level(1)
    assert lv.interior_count == 9 and lv.graph.degrees[lv.boundary] == 12
    lv = make_exhaustion("line", [3], "one-sided-right").level(3)
    xs = sorted(c[0] for c in lv.coords if c is not None)
    assert xs == list(range(-9, 4))
    assert lv.graph.degrees[lv.vid((-9,))] == 1 and lv.graph.degrees[lv.boundary] == 1


@pytest.mark.parametrize("model", MODELS)
def test_every_model_nests(model):
    for v in VARIANTS[model]:
        exh = make_exhaustion(model, [2, 4, 6], v)
        assert exh.check_embeddings()
        assert exh.goes_to_infinity()


def test_unknown_model():
    with pytest.raises(UnknownModel):
        make_exhaustion("torus", [1, 2])
    with pytest.raises(ValueError):
        make_exhaustion("grid2d", [4, 2])


def test_edge_list_roundtrip(tmp_path, triangle):
    p = tmp_path / "g.txt"
    write_edge_list(triangle, p)
    assert read_edge_list(p).edges == triangle.edges


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.1, 5.0), min_size=3, max_size=8), st.data())
def test_glue_preserves_cut(conds, data):
    n = len(conds) + 1
    edges = [(i, i + 1, c) for i, c in enumerate(conds)] + [(0, n - 1, 1.0)]
    g = build_graph(n, edges)
    B = data.draw(st.sets(st.integers(0, n - 1), min_size=1, max_size=n - 1))
    q, qm = glue(g, B)
    blk = qm.glued_block
    for v in set(range(n)) - B:
        cut = sum(g.conductance(v, b) for b in B)
        assert q.conductance(blk, qm(v)) == pytest.approx(cut)
    assert q.degrees.sum() == pytest.approx(g.degrees.sum() - 2 * sum(
        c for a, b, c in g.edges if a in B and b in B))
