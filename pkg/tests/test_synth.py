import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import obj

from sgloop.descriptors import DescriptorConfig, compute_descriptors, enumerate_walks
from sgloop.graph import Kind, SceneGraph
from sgloop.matcher import LoopResult, MatchConfig, correspondences_from, detect_loop
from sgloop.registration import Pose4DoF
from sgloop.synth import (
    GroundTruth,
    Metrics,
    PerturbationSpec,
    Placement,
    PlacementError,
    SceneSpec,
    evaluate,
    generate_scene,
    perturb_scene,
    twin_walks_tie,
)

FURNISHED = SceneSpec(
    width=6.0,
    depth=5.0,
    placements=(Placement("chair", 5), Placement("lamp", 5), Placement("plant", 5)),
    seed=3,
)


def _boxes_apart(a, b):
    return any(abs(a.centroid[k] - b.centroid[k]) >= (a.bbox[k] + b.bbox[k]) / 2 for k in range(3))


# -- generate_scene -------------------------------------------------------------


def test_empty_room_is_walls_and_floor():
    g, layout = generate_scene(SceneSpec(seed=1))
    kinds = sorted(v.kind.value for v in g.vertices.values())
    assert kinds == ["floor", "wall", "wall", "wall", "wall"]
    assert layout.floor_id == 0 and len(layout.wall_ids) == 4


def test_same_seed_same_graph():
    assert generate_scene(FURNISHED) == generate_scene(FURNISHED)
    other, _ = generate_scene(SceneSpec(**{**FURNISHED.__dict__, "seed": 4}))
    assert other != generate_scene(FURNISHED)[0]


@pytest.mark.parametrize("seed", range(5))
def test_layout_postconditions(seed):
    spec = SceneSpec(**{**FURNISHED.__dict__, "seed": seed, "wall_count": 6})
    g, layout = generate_scene(spec)
    g.check()
    assert sum(v.kind is Kind.FLOOR for v in g.vertices.values()) == 1
    walls = [g.vertices[w] for w in layout.wall_ids]
    assert len(walls) == 6
    center = np.array([spec.width / 2, spec.depth / 2])
    for w in walls:
        # on the perimeter, facing inward
        on_edge = min(w.centroid[0], spec.width - w.centroid[0], w.centroid[1], spec.depth - w.centroid[1])
        assert abs(on_edge) < 1e-9
        assert np.dot(center - np.array(w.centroid[:2]), w.normal[:2]) > 0
    objs = [v for v in g.vertices.values() if v.kind is Kind.OBJECT]
    assert len(objs) == 15
    for i, a in enumerate(objs):
        for b in objs[i + 1 :]:
            assert _boxes_apart(a, b)


def test_one_twin_pair_ties_under_enumeration():
    g, layout = generate_scene(SceneSpec(twins=1, seed=0))
    (u, v), = layout.twin_pairs
    a, b = g.vertices[u], g.vertices[v]
    assert a.label == b.label
    assert np.allclose(a.bbox, b.bbox, rtol=0.05)
    assert (g.neighbors(u) & g.neighbors(v)) - {layout.floor_id}
    assert enumerate_walks(g, u, 4).counts == enumerate_walks(g, v, 4).counts
    same_label = [x for x in g.vertices.values() if x.label == a.label]
    assert len(same_label) == 2


def test_twins_in_a_furnished_room():
    spec = SceneSpec(placements=(Placement("lamp", 1), Placement("tv", 1, "wall")), twins=2, seed=5)
    g, layout = generate_scene(spec)
    assert len(layout.twin_pairs) == 2
    assert all(twin_walks_tie(g, u, v) for u, v in layout.twin_pairs)


def test_infeasible_layout_raises():
    crowded = SceneSpec(width=1.0, depth=1.0, placements=(Placement("sofa", 6),), seed=0)
    with pytest.raises(PlacementError):
        generate_scene(crowded, max_tries=20, max_layouts=2)


def test_spec_validation():
    with pytest.raises(ValueError):
        Placement("chair", -1)
    with pytest.raises(ValueError):
        Placement("chair", 1, "floating")
    with pytest.raises(ValueError):
        SceneSpec(twins=-1)
    with pytest.raises(ValueError):
        PerturbationSpec(keep_fraction=1.5)
    with pytest.raises(ValueError):
        PerturbationSpec(transform="sideways")


# -- perturb_scene --------------------------------------------------------------


def test_identity_perturbation():
    g, _ = generate_scene(FURNISHED)
    p, gt = perturb_scene(g, PerturbationSpec())
    assert p == g
    assert gt.pairs == {(v, v) for v in g.ids()}
    assert gt.pose == Pose4DoF.identity()


def test_keep_half():
    g, _ = generate_scene(FURNISHED)
    assert len(g) == 20
    p, gt = perturb_scene(g, PerturbationSpec(keep_fraction=0.5, seed=9))
    assert len(p) == 10 and len(gt.pairs) == 10
    assert {a for a, _ in gt.pairs} == set(p.ids())


def test_split_maps_both_fragments_to_the_original():
    chair = SceneSpec(placements=(Placement("chair", 1, "isolated"),), seed=2)
    g, _ = generate_scene(chair)
    (cid,) = [v for v, x in g.vertices.items() if x.label == "chair"]
    p, gt = perturb_scene(g, PerturbationSpec(split_fraction=1.0))
    chairs = [v for v, x in p.vertices.items() if x.label == "chair"]
    assert len(chairs) == 2
    assert {(c, cid) for c in chairs} <= gt.pairs
    a, b = (p.vertices[c] for c in chairs)
    # halves tile the original footprint
    assert math.isclose(a.bbox[0] * a.bbox[1] + b.bbox[0] * b.bbox[1], g.vertices[cid].bbox[0] * g.vertices[cid].bbox[1])
    assert np.allclose((np.array(a.centroid) + b.centroid) / 2, g.vertices[cid].centroid)


def test_moves_are_bounded_and_marked_dynamic():
    g, _ = generate_scene(FURNISHED)
    spec = PerturbationSpec(move_labels={"chair"}, move_fraction=0.2, move_max=1.0, seed=1)
    p, gt = perturb_scene(g, spec)
    shifts = [math.dist(p.vertices[v].centroid, g.vertices[v].centroid) for v in g.ids()]
    assert sum(s > 0 for s in shifts) == 1
    assert max(shifts) <= 1.0
    chairs = {v for v, x in g.vertices.items() if x.label == "chair"}
    assert gt.dynamic_active == chairs == gt.dynamic_inactive


def test_rigid_transform_and_relabel():
    g, _ = generate_scene(FURNISHED)
    p, gt = perturb_scene(g, PerturbationSpec(transform="random", relabel_ids=True, seed=4))
    assert gt.pose != Pose4DoF.identity()
    assert not set(p.ids()) & set(g.ids())
    for a, i in gt.pairs:
        moved = gt.pose.apply(g.vertices[i].centroid)
        assert np.allclose(p.vertices[a].centroid, moved, atol=1e-9)
        assert p.vertices[a].label == g.vertices[i].label


def test_perturbation_is_deterministic():
    g, _ = generate_scene(FURNISHED)
    spec = PerturbationSpec(keep_fraction=0.8, split_fraction=0.2, jitter_sigma=0.05, transform="random", seed=7)
    assert perturb_scene(g, spec) == perturb_scene(g, spec)


def test_identity_round_trip_through_detection():
    g, _ = generate_scene(SceneSpec(placements=FURNISHED.placements[:2], width=5.0, seed=8))
    p, gt = perturb_scene(g, PerturbationSpec())
    cfg = DescriptorConfig()
    res = detect_loop(p, g, compute_descriptors(p, cfg), compute_descriptors(g, cfg), MatchConfig())
    assert res.correspondences.id_pairs() <= gt.pairs
    assert evaluate([res], gt, p).precision == 1.0


# -- evaluate -------------------------------------------------------------------


def _graph(n):
    return SceneGraph.from_vertices([obj(k, "chair", (3.0 * k, 0, 0)) for k in range(n)])


def test_precision_arithmetic():
    gt = GroundTruth(pairs={(k, k) for k in range(10)})
    corrs = correspondences_from([(k, k if k < 8 else k + 1, 0.9) for k in range(10)])
    m = evaluate([LoopResult(True, corrs)], gt, _graph(12))
    assert m.precision == pytest.approx(0.8)
    assert m.recall == 1.0 and m.matches == 10


def test_no_recall_is_not_applicable():
    gt = GroundTruth(pairs={(0, 0)})
    res = LoopResult(False, correspondences_from([(0, 0, 0.9)]))
    m = evaluate([res, res], gt, _graph(3))
    assert m.recall == 0.0 and m.precision is None and m.match_score is None
    assert evaluate([], gt, _graph(3)) == Metrics(0.0, None, None)


def test_full_correct_match():
    gt = GroundTruth(pairs={(k, k) for k in range(4)})
    corrs = correspondences_from((k, k, 0.9) for k in range(4))
    m = evaluate([LoopResult(True, corrs)], gt, _graph(4))
    assert (m.precision, m.match_score) == (1.0, 1.0)


def test_recall_counts_steps():
    gt = GroundTruth(pairs={(k, k) for k in range(4)})
    hit = LoopResult(True, correspondences_from((k, k, 0.9) for k in range(4)))
    miss = LoopResult(False, correspondences_from([]))
    m = evaluate([miss, hit, miss, hit], gt, _graph(4))
    assert m.recall == 0.5 and m.steps == 4 and m.matches == 8


def test_dynamic_endpoint_counts_wrong():
    gt = GroundTruth(pairs={(0, 0), (1, 1)}, dynamic_active={1})
    m = evaluate([LoopResult(True, correspondences_from([(0, 0, 1), (1, 1, 1)]))], gt, _graph(2))
    assert m.precision == 0.5


def test_either_split_fragment_counts_correct():
    g, _ = generate_scene(SceneSpec(placements=(Placement("chair", 1, "isolated"),), seed=2))
    p, gt = perturb_scene(g, PerturbationSpec(split_fraction=1.0))
    (orig,) = [v for v, x in g.vertices.items() if x.label == "chair"]
    frags = [v for v, x in p.vertices.items() if x.label == "chair"]
    for f in frags:
        m = evaluate([LoopResult(True, correspondences_from([(f, orig, 0.9)]))], gt, p)
        assert m.precision == 1.0
    wrong = next(v for v in g.ids() if v != orig)
    m = evaluate([LoopResult(True, correspondences_from([(frags[0], wrong, 0.9)]))], gt, p)
    assert m.precision == 0.0


@given(st.permutations(range(6)), st.permutations(range(12)), st.lists(st.booleans(), min_size=6, max_size=6))
def test_metrics_invariant_under_relabel(pa, pi, correct):
    pairs = [(k, k if ok else k + 6, 0.9) for k, ok in enumerate(correct)]
    gt = GroundTruth(pairs={(k, k) for k in range(6)}, dynamic_active={5}, dynamic_inactive={4})
    g = _graph(6)
    base = evaluate([LoopResult(True, correspondences_from(pairs))], gt, g)

    ra = {k: 100 + pa[k] for k in range(6)}
    ri = {k: 200 + pi[k] for k in range(12)}
    gt2 = GroundTruth(
        pairs={(ra[a], ri[b]) for a, b in gt.pairs},
        dynamic_active={ra[v] for v in gt.dynamic_active},
        dynamic_inactive={ri[v] for v in gt.dynamic_inactive},
    )
    moved = correspondences_from((ra[a], ri[b], s) for a, b, s in pairs)
    g2 = SceneGraph.from_vertices([replace(v, id=ra[v.id]) for v in g.vertices.values()])
    assert evaluate([LoopResult(True, moved)], gt2, g2) == base
