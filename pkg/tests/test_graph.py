import math
import random

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

import oracles
from conftest import floor, graph_of, obj, wall
from strategies import raw_batches, vertex_sets, yaw
from sgloop.graph import (
    DEFAULT_VOCABULARY,
    GraphConfig,
    GraphError,
    InstanceVertex,
    Kind,
    RawNode,
    RawSegmentInput,
    SceneGraph,
    build_edges,
    build_graph,
    check_vocabulary,
    filter_instances,
    merge_same_part,
    update_graph,
)
from sgloop.registration import Pose4DoF, transform_vertex

CFG = GraphConfig()

# weighted_centroid([(100, (0, 0, 0.5)), (300, (1, 0, 0.5))])
MERGED_CHAIR_CENTROID = (0.75, 0.0, 0.5)


def node(vid, label="chair", xyz=(0.0, 0.0, 0.5), bbox=(0.5, 0.5, 0.9), points=100, conf=0.9, normal=None):
    return RawNode(vid, label, xyz, bbox, normal, conf, points)


def edge_set(adj):
    return {(a, b) for a, nbrs in adj.items() for b in nbrs if a < b}


# -- vocabulary and invariants ---------------------------------------------------


def test_vocabulary_needs_wall_and_floor():
    check_vocabulary(DEFAULT_VOCABULARY)
    vocab = dict(DEFAULT_VOCABULARY)
    del vocab["floor"]
    with pytest.raises(GraphError, match="floor"):
        check_vocabulary(vocab)
    with pytest.raises(GraphError, match="wall"):
        check_vocabulary({**DEFAULT_VOCABULARY, "wall": Kind.OBJECT})


def test_vertex_normal_rules():
    with pytest.raises(GraphError):
        InstanceVertex(1, "wall", Kind.WALL, (0, 0, 0), (1, 1, 1)).check()
    with pytest.raises(GraphError):
        InstanceVertex(1, "chair", Kind.OBJECT, (0, 0, 0), (1, 1, 1), (0, 0, 1)).check()
    with pytest.raises(GraphError, match="unit"):
        InstanceVertex(1, "wall", Kind.WALL, (0, 0, 0), (1, 1, 1), (0, 2, 0)).check()
    InstanceVertex(1, "wall", Kind.WALL, (0, 0, 0), (1, 1, 1), (0, 1, 0)).check()


def test_graph_check_catches_asymmetry():
    g = graph_of([obj(1, "chair", (0, 0, 0)), obj(2, "table", (1, 0, 0))], [(1, 2)])
    g.check()
    bad = SceneGraph(g.vertices, {1: frozenset({2}), 2: frozenset()}, vocabulary=dict(DEFAULT_VOCABULARY))
    with pytest.raises(GraphError, match="symmetric"):
        bad.check()


# -- merge_same_part ---------------------------------------------------------------


def test_merge_two_chair_parts():
    raw = RawSegmentInput([node(1, xyz=(0, 0, 0.5), points=100), node(2, xyz=(1, 0, 0.5), points=300)], [(1, 2)])
    (v,) = merge_same_part(raw)
    assert oracles.weighted_centroid([(100, (0, 0, 0.5)), (300, (1, 0, 0.5))]) == MERGED_CHAIR_CENTROID
    assert v.centroid == pytest.approx(MERGED_CHAIR_CENTROID, abs=1e-12)
    assert v.id == 1 and v.point_count == 400
    # union of [-0.25, 0.25] and [0.75, 1.25] along x
    assert v.bbox == pytest.approx((1.5, 0.5, 0.9))


def test_merge_singleton_passes_through():
    n = node(7, "lamp", (1.0, 2.0, 0.3), conf=0.6)
    (v,) = merge_same_part(RawSegmentInput([n]))
    assert (v.id, v.label, v.centroid, v.bbox, v.confidence, v.point_count) == (
        7, "lamp", n.centroid, n.bbox, 0.6, 100,
    )


def test_merge_chain_is_transitive():
    raw = RawSegmentInput([node(1), node(2), node(3)], [(1, 2), (2, 3)])
    assert len(merge_same_part(raw)) == 1


def test_merge_label_and_confidence():
    raw = RawSegmentInput(
        [node(1, "table", points=100, conf=0.6), node(2, "desk", points=100, conf=0.8), node(3, "table", points=50)],
        [(1, 2), (2, 3)],
    )
    (v,) = merge_same_part(raw)
    # equal point counts: lexicographically smaller label wins
    assert v.label == "desk"
    assert v.confidence == 0.9


def test_merge_rejects_mixed_kinds():
    diagnostics = []
    w = node(2, "wall", normal=(1.0, 0.0, 0.0))
    raw = RawSegmentInput([node(1), w, node(3, "lamp")], [(1, 2)])
    out = merge_same_part(raw, diagnostics=diagnostics)
    assert [v.id for v in out] == [3]
    assert diagnostics and "mixed kinds" in diagnostics[0]


def test_merge_unknown_label_lists_vocabulary():
    with pytest.raises(GraphError, match="vocabulary is"):
        merge_same_part(RawSegmentInput([node(1, "spaceship")]))


def test_raw_input_validation():
    with pytest.raises(GraphError):
        RawSegmentInput([node(1), node(1)]).validate()
    with pytest.raises(GraphError):
        RawSegmentInput([node(1)], [(1, 9)]).validate()


@given(st.data())
def test_merge_order_independent(data):
    nodes = [node(i, data.draw(st.sampled_from(["chair", "table"])), (i * 0.1, 0, 0.5), points=50 + i) for i in range(1, 8)]
    pairs = data.draw(st.lists(st.tuples(st.integers(1, 7), st.integers(1, 7)), max_size=6))
    want = merge_same_part(RawSegmentInput(nodes, pairs))
    rng = random.Random(data.draw(st.integers(0, 10**6)))
    shuffled_nodes, shuffled_pairs = nodes[:], [(b, a) if rng.random() < 0.5 else (a, b) for a, b in pairs]
    rng.shuffle(shuffled_nodes)
    rng.shuffle(shuffled_pairs)
    assert merge_same_part(RawSegmentInput(shuffled_nodes, shuffled_pairs)) == want


# -- filter_instances ---------------------------------------------------------------


def test_filter_examples():
    keep = obj(1, "chair", (0, 0, 0), bbox=(0.3, 0.3, 0.3), confidence=0.9)
    low = obj(2, "chair", (0, 0, 0), confidence=0.3)
    assert filter_instances([keep, low], CFG) == [keep]


def test_filter_boundaries_inclusive():
    d = 0.1 / math.sqrt(3)
    edge_case = obj(1, "chair", (0, 0, 0), bbox=(d, d, d), points=50, confidence=0.5)
    cfg = GraphConfig(min_diagonal=edge_case.diagonal)
    assert filter_instances([edge_case], cfg) == [edge_case]
    assert filter_instances([obj(2, "chair", (0, 0, 0), points=49)], CFG) == []


def test_filter_drops_flat_boxes_and_keeps_order():
    flat = obj(1, "chair", (0, 0, 0), bbox=(1.0, 1.0, 0.0))
    a, b = obj(3, "lamp", (0, 0, 0)), obj(2, "sofa", (0, 0, 0))
    assert filter_instances([a, flat, b], CFG) == [a, b]


# -- build_edges ----------------------------------------------------------------------


def test_object_distance_rule():
    near = build_edges([obj(1, "chair", (0, 0, 0)), obj(2, "table", (1.0, 0, 0))], CFG)
    far = build_edges([obj(1, "chair", (0, 0, 0)), obj(2, "table", (5.0, 0, 0))], CFG)
    exact = build_edges([obj(1, "chair", (0, 0, 0)), obj(2, "table", (2.0, 0, 0))], CFG)
    assert edge_set(near) == {(1, 2)}
    assert edge_set(far) == set() and edge_set(exact) == set()


def test_wall_rules():
    parallel = build_edges([wall(1, (0, 0, 1), (1, 0, 0)), wall(2, (1, 0, 1), (1, 0, 0))], CFG)
    corner = build_edges([wall(1, (0, 0, 1), (1, 0, 0)), wall(2, (1, 1, 1), (0, 1, 0))], CFG)
    opposite = build_edges([wall(1, (0, 0, 1), (1, 0, 0)), wall(2, (1, 0, 1), (-1, 0, 0))], CFG)
    assert edge_set(parallel) == set()
    assert edge_set(corner) == {(1, 2)}
    assert edge_set(opposite) == set()


def test_object_wall_perpendicular_rule():
    w = wall(1, (0, 0, 1.25), (1, 0, 0))
    # 0.4 m in front of the wall plane but far along it: still connected
    close = build_edges([w, obj(2, "sofa", (0.4, 2.5, 0.4))], CFG)
    away = build_edges([w, obj(2, "sofa", (0.6, 0.0, 0.4))], CFG)
    assert edge_set(close) == {(1, 2)} and edge_set(away) == set()


def test_floor_overlap_rule():
    f = floor(0, bbox=(4.0, 4.0, 0.05))
    inside = build_edges([f, obj(1, "chair", (1.0, 1.0, 0.4))], CFG)
    outside = build_edges([f, obj(1, "chair", (3.0, 0.0, 0.4), bbox=(1.0, 1.0, 1.0))], CFG)
    assert edge_set(inside) == {(0, 1)}
    # touching footprints (2.0 + 0.5 == 2.5) do not overlap
    assert edge_set(outside) == set()


def test_missing_normal_is_an_error():
    with pytest.raises(GraphError, match="no normal"):
        build_edges([InstanceVertex(1, "wall", Kind.WALL, (0, 0, 0), (1, 1, 1))], CFG)


@given(vertex_sets())
def test_edges_match_pairwise_oracle(vertices):
    assert edge_set(build_edges(vertices, CFG)) == oracles.edges(vertices)


def _clear_of_thresholds(vertices, margin=1e-6):
    for a in vertices:
        for b in vertices:
            if a.id >= b.id:
                continue
            d = math.dist(a.centroid, b.centroid)
            if min(abs(d - 2.0), abs(d - 3.0)) < margin:
                return False
            for w, o in ((a, b), (b, a)):
                if w.kind is Kind.WALL and o.kind is Kind.OBJECT:
                    p = abs(sum(n * (x - y) for n, x, y in zip(w.normal, o.centroid, w.centroid)))
                    if abs(p - 0.5) < margin:
                        return False
    return True


@given(vertex_sets(with_floor=False), yaw, st.tuples(st.floats(-5, 5), st.floats(-5, 5), st.floats(-1, 1)))
def test_edges_invariant_under_4dof(vertices, theta, t):
    assume(_clear_of_thresholds(vertices))
    pose = Pose4DoF(theta, t)
    moved = [transform_vertex(v, pose) for v in vertices]
    assert build_edges(moved, CFG) == build_edges(vertices, CFG)


@given(vertex_sets())
def test_adjacency_symmetric_without_self_loops(vertices):
    adj = build_edges(vertices, CFG)
    for a, nbrs in adj.items():
        assert a not in nbrs
        for b in nbrs:
            assert a in adj[b]


# -- update_graph ---------------------------------------------------------------------


def _raw(vertices):
    return RawSegmentInput([RawNode.from_vertex(v) for v in vertices])


def test_update_from_empty():
    verts = [obj(1, "chair", (0, 0, 0.4)), obj(2, "table", (1, 0, 0.4)), obj(3, "lamp", (5, 0, 0.4))]
    g, dirty = update_graph(SceneGraph(), _raw(verts), CFG)
    assert len(g) == 3 and dirty == {1, 2, 3} and g.revision == 1


def test_update_identical_input_is_idempotent():
    verts = [obj(1, "chair", (0, 0, 0.4)), obj(2, "table", (1, 0, 0.4))]
    g, _ = update_graph(SceneGraph(), _raw(verts), CFG)
    g2, dirty = update_graph(g, _raw(verts), CFG)
    assert dirty == set() and g2.revision == g.revision and g2 == g


def test_update_move_across_threshold():
    # path 1 - 2 - 3 - 4 - 5 along x, 1.5 m apart; moving 5 away breaks the 4-5 edge
    verts = [obj(i, "chair", (1.5 * i, 0, 0.4)) for i in range(1, 6)]
    g, _ = update_graph(SceneGraph(), _raw(verts), CFG)
    assert edge_set(g.adjacency) == {(1, 2), (2, 3), (3, 4), (4, 5)}
    g2, dirty = update_graph(g, _raw([obj(5, "chair", (9.0, 0, 0.4))]), CFG)
    assert (4, 5) not in edge_set(g2.adjacency)
    # both endpoints, and everything within two hops of either
    assert {5, 4, 3, 2} <= dirty
    assert 1 not in dirty


def test_update_does_not_mutate_input():
    g, _ = update_graph(SceneGraph(), _raw([obj(1, "chair", (0, 0, 0.4))]), CFG)
    before = (dict(g.vertices), dict(g.adjacency), g.revision)
    update_graph(g, _raw([obj(2, "chair", (1, 0, 0.4))]), CFG)
    assert (g.vertices, g.adjacency, g.revision) == before


@given(raw_batches())
def test_incremental_matches_batch_build(batches):
    g = SceneGraph()
    for nodes in batches:
        g, _ = update_graph(g, RawSegmentInput(nodes), CFG)
        g.check()
    batch = build_graph(RawSegmentInput.concat(RawSegmentInput(n) for n in batches), CFG)
    assert g.vertices == batch.vertices
    assert g.adjacency == batch.adjacency


@given(raw_batches())
def test_dirty_set_covers_every_change(batches):
    g = SceneGraph()
    for nodes in batches:
        new, dirty = update_graph(g, RawSegmentInput(nodes), CFG)
        for vid in set(g.vertices) | set(new.vertices):
            if g.vertices.get(vid) != new.vertices.get(vid) or g.adjacency.get(vid) != new.adjacency.get(vid):
                assert vid in dirty
        g = new


def test_build_graph_filters_and_merges():
    raw = RawSegmentInput(
        [node(1, points=100), node(2, xyz=(0.3, 0, 0.5), points=100), node(3, "lamp", conf=0.2)],
        [(1, 2)],
    )
    g = build_graph(raw, CFG, session_id="s1")
    assert g.ids() == [1] and g.session_id == "s1"
