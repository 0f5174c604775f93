"""Synthetic indoor scenes, controlled perturbations, ground truth and metrics.

Scenes are rectangular rooms in a frame with the origin at one floor corner.
Vertex ids are assigned floor first (0), then walls, then objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .descriptors import DescriptorConfig, enumerate_walks, neighbor_walk_descriptor
from .graph import GraphConfig, InstanceVertex, Kind, SceneGraph, DEFAULT_VOCABULARY
from .matcher import LoopResult
from .registration import Pose4DoF, transform_vertex

# nominal (width, depth, height) in meters
OBJECT_SIZES: dict[str, tuple[float, float, float]] = {
    "chair": (0.5, 0.5, 0.9),
    "table": (1.2, 0.8, 0.75),
    "sofa": (1.8, 0.9, 0.8),
    "armchair": (0.85, 0.85, 0.9),
    "lamp": (0.4, 0.4, 1.6),
    "bed": (2.0, 1.6, 0.6),
    "cabinet": (0.8, 0.5, 1.8),
    "curtain": (1.4, 0.15, 2.2),
    "desk": (1.2, 0.6, 0.75),
    "shelf": (1.0, 0.35, 1.8),
    "bookshelf": (0.9, 0.3, 2.0),
    "tv": (1.2, 0.2, 0.7),
    "plant": (0.4, 0.4, 1.0),
    "nightstand": (0.5, 0.4, 0.55),
    "box": (0.4, 0.4, 0.4),
    "sink": (0.6, 0.5, 0.85),
    "toilet": (0.4, 0.7, 0.8),
    "pillow": (0.5, 0.35, 0.15),
}

TWIN_LABELS = ("chair", "nightstand", "armchair", "box")
ANCHOR_LABELS = ("table", "desk", "bed", "tv", "cabinet", "sofa")
SPACINGS = ("random", "wall", "isolated", "near")

WALL_THICKNESS = 0.1
FLOOR_THICKNESS = 0.05
PLACEMENT_GAP = 0.05
# keep generated geometry this far from every edge threshold
THRESHOLD_MARGIN = 0.1
PERP_MARGIN = 0.04


class PlacementError(RuntimeError):
    """Raised when a scene cannot be laid out within the retry budget."""


@dataclass(frozen=True)
class Placement:
    label: str
    count: int = 1
    # random: anywhere; wall: backed against a wall (walls taken round-robin);
    # isolated: clear of walls and of every other object's edge range;
    # near: within edge range of an already placed isolated object
    spacing: str = "random"

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("placement count must be non-negative")
        if self.spacing not in SPACINGS:
            raise ValueError(f"unknown spacing {self.spacing!r}; expected one of {SPACINGS}")


@dataclass(frozen=True)
class SceneSpec:
    width: float = 4.2
    depth: float = 3.8
    height: float = 2.5
    wall_count: int = 4
    placements: tuple[Placement, ...] = ()
    twins: int = 0
    seed: int = 0
    session_id: str = "inactive"
    size_jitter: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "placements", tuple(self.placements))
        if self.width <= 0 or self.depth <= 0 or self.height <= 0:
            raise ValueError("room dimensions must be positive")
        if self.wall_count != 0 and self.wall_count < 4:
            raise ValueError("wall_count must be 0 or at least 4")
        if self.twins < 0:
            raise ValueError("twins must be non-negative")


@dataclass
class SceneLayout:
    width: float
    depth: float
    height: float
    floor_id: int
    wall_ids: list[int]
    twin_pairs: list[tuple[int, int]] = field(default_factory=list)
    anchors: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "depth": self.depth,
            "height": self.height,
            "floor_id": self.floor_id,
            "wall_ids": list(self.wall_ids),
            "twin_pairs": [list(p) for p in self.twin_pairs],
            "anchors": list(self.anchors),
        }


@dataclass(frozen=True)
class PerturbationSpec:
    keep_fraction: float = 1.0
    split_fraction: float = 0.0
    move_labels: frozenset[str] = frozenset()
    move_fraction: float = 0.0
    move_max: float = 0.0
    jitter_sigma: float = 0.0
    # a Pose4DoF, or "random" for a uniformly drawn yaw and translation
    transform: Pose4DoF | str = field(default_factory=Pose4DoF)
    relabel_ids: bool = False
    seed: int = 0
    session_id: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "move_labels", frozenset(self.move_labels))
        for name in ("keep_fraction", "split_fraction", "move_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.move_max < 0 or self.jitter_sigma < 0:
            raise ValueError("move_max and jitter_sigma must be non-negative")
        if isinstance(self.transform, str) and self.transform != "random":
            raise ValueError("transform must be a Pose4DoF or 'random'")


@dataclass
class GroundTruth:
    """Correct (active, inactive) pairs; dynamic vertices never count as correct."""

    pairs: set[tuple[int, int]] = field(default_factory=set)
    dynamic_active: set[int] = field(default_factory=set)
    dynamic_inactive: set[int] = field(default_factory=set)
    pose: Pose4DoF = field(default_factory=Pose4DoF)

    def is_correct(self, active_id: int, inactive_id: int) -> bool:
        if active_id in self.dynamic_active or inactive_id in self.dynamic_inactive:
            return False
        return (active_id, inactive_id) in self.pairs


@dataclass(frozen=True)
class Metrics:
    recall: float
    precision: float | None
    match_score: float | None
    steps: int = 0
    matches: int = 0

    def as_dict(self) -> dict:
        return {
            "recall": self.recall,
            "precision": self.precision,
            "match_score": self.match_score,
            "steps": self.steps,
            "matches": self.matches,
        }


# -- generation -----------------------------------------------------------------


def _box_overlap(c1, s1, c2, s2, gap: float = PLACEMENT_GAP) -> bool:
    return abs(c1[0] - c2[0]) < (s1[0] + s2[0]) / 2 + gap and abs(c1[1] - c2[1]) < (s1[1] + s2[1]) / 2 + gap


@dataclass
class _Room:
    spec: SceneSpec
    cfg: GraphConfig
    walls: list[InstanceVertex]
    objects: list[InstanceVertex] = field(default_factory=list)
    # placed twins, used to keep other objects off their symmetry-breaking ranges
    twin_pairs: list[tuple[InstanceVertex, InstanceVertex]] = field(default_factory=list)
    isolated: list[InstanceVertex] = field(default_factory=list)

    def inside(self, c, size) -> bool:
        margin = WALL_THICKNESS / 2 + PLACEMENT_GAP
        return (
            margin + size[0] / 2 <= c[0] <= self.spec.width - margin - size[0] / 2
            and margin + size[1] / 2 <= c[1] <= self.spec.depth - margin - size[1] / 2
        )

    def free(self, c, size) -> bool:
        return not any(_box_overlap(c, size, o.centroid, o.bbox) for o in self.objects)

    def _near_threshold(self, d: float, threshold: float) -> bool:
        return abs(d - threshold) < THRESHOLD_MARGIN

    def respects_thresholds(self, c) -> bool:
        """The candidate centroid must sit clearly on one side of every edge threshold."""
        for o in self.objects:
            if self._near_threshold(math.dist(c, o.centroid), self.cfg.obj_obj_dist_max):
                return False
        for w in self.walls:
            if abs(_perp(c, w) - self.cfg.obj_wall_perp_max) < PERP_MARGIN:
                return False
        return True

    def keeps_twins(self, c) -> bool:
        """A new object must be adjacent to both or neither member of every twin pair."""
        for u, v in self.twin_pairs:
            du = math.dist(c, u.centroid) < self.cfg.obj_obj_dist_max
            dv = math.dist(c, v.centroid) < self.cfg.obj_obj_dist_max
            if du != dv:
                return False
        return True

    def keeps_isolation(self, c, spacing: str) -> bool:
        limit = self.cfg.obj_obj_dist_max + THRESHOLD_MARGIN
        if spacing == "isolated":
            return all(math.dist(c, o.centroid) > limit for o in self.objects) and all(
                _perp(c, w) > self.cfg.obj_wall_perp_max + THRESHOLD_MARGIN for w in self.walls
            )
        # nothing else may join the range of an isolated object
        if spacing != "near":
            return all(math.dist(c, o.centroid) > limit for o in self.isolated)
        return True


def _perp(c, wall: InstanceVertex) -> float:
    n, p = wall.normal, wall.centroid
    return abs(sum(n[k] * (c[k] - p[k]) for k in range(3)))


def _wall_vertices(spec: SceneSpec, first_id: int) -> list[InstanceVertex]:
    if spec.wall_count == 0:
        return []
    W, D, H = spec.width, spec.depth, spec.height
    # distribute segments over sides in proportion to side length, one per side minimum
    sides = [
        ("south", W, (0.0, 1.0, 0.0)),
        ("east", D, (-1.0, 0.0, 0.0)),
        ("north", W, (0.0, -1.0, 0.0)),
        ("west", D, (1.0, 0.0, 0.0)),
    ]
    counts = [1, 1, 1, 1]
    perimeter = 2 * (W + D)
    for _ in range(spec.wall_count - 4):
        shares = [length / perimeter * spec.wall_count - c for (_, length, _), c in zip(sides, counts)]
        counts[int(np.argmax(shares))] += 1
    walls = []
    vid = first_id
    for (name, length, normal), n_seg in zip(sides, counts):
        seg = length / n_seg
        for s in range(n_seg):
            along = seg * (s + 0.5)
            if name == "south":
                c, b = (along, 0.0, H / 2), (seg, WALL_THICKNESS, H)
            elif name == "north":
                c, b = (W - along, D, H / 2), (seg, WALL_THICKNESS, H)
            elif name == "east":
                c, b = (W, along, H / 2), (WALL_THICKNESS, seg, H)
            else:
                c, b = (0.0, D - along, H / 2), (WALL_THICKNESS, seg, H)
            walls.append(InstanceVertex(vid, "wall", Kind.WALL, c, b, normal, 1.0, _points(b)))
            vid += 1
    return walls


def _points(size) -> int:
    a, b, c = sorted(size, reverse=True)
    return max(200, int(4000 * a * b))


def _sized(label: str, rng: np.random.Generator, jitter: float) -> tuple[float, float, float]:
    base = OBJECT_SIZES.get(label, (0.5, 0.5, 0.5))
    return tuple(float(x * (1.0 + rng.uniform(-jitter, jitter))) for x in base)


def _make_object(vid: int, label: str, c2, size, rng: np.random.Generator) -> InstanceVertex:
    centroid = (float(c2[0]), float(c2[1]), size[2] / 2)
    return InstanceVertex(vid, label, Kind.OBJECT, centroid, size, None, float(rng.uniform(0.7, 1.0)), _points(size))


def _place_twin_cluster(room: _Room, rng: np.random.Generator, next_id: int, used: set[str]):
    """Place every twin pair as one cluster mirrored about a line through an anchor.

    The mirror maps each twin onto its partner and fixes the anchor, so it is a
    label-preserving graph automorphism as long as later objects and walls see
    both members of every pair alike.
    """
    spec = room.spec
    n = spec.twins
    if n > len(TWIN_LABELS):
        raise PlacementError(f"at most {len(TWIN_LABELS)} twin pairs are supported")
    anchor_label = next((a for a in ANCHOR_LABELS if a not in used), "table")
    for _ in range(3000):
        axis = int(rng.integers(2))
        e = np.array([1.0, 0.0] if axis == 0 else [0.0, 1.0])
        side = e[::-1].copy()
        center = np.array([rng.uniform(0.5, spec.width - 0.5), rng.uniform(0.5, spec.depth - 0.5)])
        # pair 0 flanks the anchor; further pairs sit in rows beside it
        rows = [0.0]
        sign = 1.0 if rng.random() < 0.5 else -1.0
        for t in range(1, n):
            rows.append(sign * (0.75 + 0.05 * rng.random()) * (1 if t % 2 else -1) * ((t + 1) // 2))
        anchor_size = _sized(anchor_label, rng, spec.size_jitter)
        if axis == 1:
            anchor_size = (anchor_size[1], anchor_size[0], anchor_size[2])
        placed = [_make_object(next_id, anchor_label, center, anchor_size, rng)]
        pairs = []
        for t in range(n):
            label = TWIN_LABELS[t]
            base = _sized(label, rng, spec.size_jitter)
            half_anchor = anchor_size[axis] / 2 if t == 0 else 0.0
            r = half_anchor + base[axis] / 2 + PLACEMENT_GAP + rng.uniform(0.0, 0.2)
            if t > 0:
                r = max(r, base[axis] / 2 + PLACEMENT_GAP + rng.uniform(0.05, 0.25))
            off = center + rows[t] * side
            # twins share a height so the mirror is exact in z as well
            size_u = (base[0], base[1], base[2])
            size_v = (base[0] * (1 + rng.uniform(-0.03, 0.03)), base[1] * (1 + rng.uniform(-0.03, 0.03)), base[2])
            vid = next_id + 1 + 2 * t
            u = _make_object(vid, label, off + r * e, size_u, rng)
            v = _make_object(vid + 1, label, off - r * e, size_v, rng)
            placed.extend([u, v])
            pairs.append((u, v))
        ok = all(room.inside(o.centroid, o.bbox) and room.free(o.centroid, o.bbox) for o in placed)
        ok = ok and all(room.respects_thresholds(o.centroid) for o in placed)
        for i, a in enumerate(placed):
            for b in placed[i + 1 :]:
                ok = ok and not _box_overlap(a.centroid, a.bbox, b.centroid, b.bbox)
                ok = ok and abs(math.dist(a.centroid, b.centroid) - room.cfg.obj_obj_dist_max) >= THRESHOLD_MARGIN
        for u, v in pairs:
            for w in room.walls:
                ok = ok and (_perp(u.centroid, w) < room.cfg.obj_wall_perp_max) == (
                    _perp(v.centroid, w) < room.cfg.obj_wall_perp_max
                )
        if ok:
            room.objects.extend(placed)
            room.twin_pairs.extend(pairs)
            return placed[0], pairs
    raise PlacementError(f"could not place a cluster of {n} twin pairs")


def _candidate(room: _Room, label: str, spacing: str, rng: np.random.Generator, wall_slot: int):
    """Propose a centroid (x, y) and box size for one object."""
    spec = room.spec
    size = _sized(label, rng, spec.size_jitter)
    if spacing == "wall" and room.walls:
        wall = room.walls[wall_slot % len(room.walls)]
        n = wall.normal
        along_x = abs(n[1]) > 0.5
        if not along_x:
            size = (size[1], size[0], size[2])
        depth = size[1] if along_x else size[0]
        # back face a few centimetres off the inner wall surface
        offset = WALL_THICKNESS / 2 + PLACEMENT_GAP + depth / 2 + rng.uniform(0.0, 0.03)
        half = (wall.bbox[0] if along_x else wall.bbox[1]) / 2
        slide = rng.uniform(-half, half)
        c = (
            wall.centroid[0] + n[0] * offset + (slide if along_x else 0.0),
            wall.centroid[1] + n[1] * offset + (0.0 if along_x else slide),
        )
        return c, size
    if spacing == "near" and room.isolated:
        host = room.isolated[int(rng.integers(len(room.isolated)))]
        ang = rng.uniform(-math.pi, math.pi)
        dist = rng.uniform(0.7, room.cfg.obj_obj_dist_max - THRESHOLD_MARGIN - 0.2)
        return (host.centroid[0] + dist * math.cos(ang), host.centroid[1] + dist * math.sin(ang)), size
    return (rng.uniform(0, spec.width), rng.uniform(0, spec.depth)), size


def generate_scene(
    spec: SceneSpec, cfg: GraphConfig | None = None, max_tries: int = 2000, max_layouts: int = 25
) -> tuple[SceneGraph, SceneLayout]:
    """Lay out a room and build its scene graph; deterministic given ``spec.seed``."""
    cfg = cfg or GraphConfig()
    rng = np.random.default_rng([spec.seed & ((1 << 64) - 1), 0x5CE7E])
    error = None
    for _ in range(max_layouts):
        try:
            return _layout(spec, cfg, rng, max_tries)
        except PlacementError as exc:
            error = exc
    raise PlacementError(f"no feasible layout after {max_layouts} attempts: {error}")


def _layout(spec: SceneSpec, cfg: GraphConfig, rng: np.random.Generator, max_tries: int):
    W, D = spec.width, spec.depth
    floor_size = (W, D, FLOOR_THICKNESS)
    floor = InstanceVertex(0, "floor", Kind.FLOOR, (W / 2, D / 2, 0.0), floor_size, (0.0, 0.0, 1.0), 1.0, _points(floor_size))
    walls = _wall_vertices(spec, 1)
    room = _Room(spec, cfg, walls)
    layout = SceneLayout(W, D, spec.height, 0, [w.id for w in walls])
    next_id = 1 + len(walls)

    if spec.twins:
        anchor, pairs = _place_twin_cluster(room, rng, next_id, {p.label for p in spec.placements})
        layout.anchors.append(anchor.id)
        layout.twin_pairs.extend((u.id, v.id) for u, v in pairs)
        next_id += 1 + 2 * spec.twins

    wall_slot = int(rng.integers(max(len(walls), 1)))
    rank = {"isolated": 0, "wall": 1, "random": 1, "near": 2}
    order = sorted(spec.placements, key=lambda p: rank[p.spacing])
    for placement in order:
        for _ in range(placement.count):
            for _attempt in range(max_tries):
                # rotate to another wall if the assigned one stays blocked
                c, size = _candidate(room, placement.label, placement.spacing, rng, wall_slot + _attempt // 200)
                c3 = (c[0], c[1], size[2] / 2)
                if (
                    room.inside(c, size)
                    and room.free(c, size)
                    and room.respects_thresholds(c3)
                    and room.keeps_twins(c3)
                    and room.keeps_isolation(c3, placement.spacing)
                ):
                    break
            else:
                raise PlacementError(f"could not place {placement.label!r} after {max_tries} tries")
            obj = _make_object(next_id, placement.label, c, size, rng)
            room.objects.append(obj)
            if placement.spacing == "isolated":
                room.isolated.append(obj)
            if placement.spacing == "wall":
                wall_slot += 1
            next_id += 1

    vocabulary = dict(DEFAULT_VOCABULARY)
    for p in spec.placements:
        vocabulary.setdefault(p.label, Kind.OBJECT)
    graph = SceneGraph.from_vertices([floor, *walls, *room.objects], cfg, session_id=spec.session_id, vocabulary=vocabulary)
    if layout.twin_pairs:
        _check_twins(graph, layout, distinct=bool(spec.placements))
    return graph, layout


def _check_twins(graph: SceneGraph, layout: SceneLayout, distinct: bool = True) -> None:
    # a bare mirrored cluster is symmetric under neighbor walks too; only
    # surrounding furniture can break that, so demand it only when present
    cfg = DescriptorConfig()
    for u, v in layout.twin_pairs:
        if not (graph.neighbors(u) & graph.neighbors(v)) - {layout.floor_id}:
            raise PlacementError(f"twins {u} and {v} share no neighbor")
        if not twin_walks_tie(graph, u, v, cfg.k):
            raise PlacementError(f"twins {u} and {v} differ under walk enumeration")
        if distinct and neighbor_walk_descriptor(graph, u, cfg) == neighbor_walk_descriptor(graph, v, cfg):
            raise PlacementError(f"twins {u} and {v} are also identical under neighbor walks")


def twin_walks_tie(graph: SceneGraph, u: int, v: int, k: int = 4) -> bool:
    """True when both vertices have identical enumerated random-walk rows."""
    return enumerate_walks(graph, u, k) == enumerate_walks(graph, v, k)


# -- perturbation ---------------------------------------------------------------


def _split(v: InstanceVertex, new_id: int) -> tuple[InstanceVertex, InstanceVertex]:
    axis = 0 if v.bbox[0] >= v.bbox[1] else 1
    half = list(v.bbox)
    half[axis] /= 2.0
    out = []
    for sign, vid in ((-1.0, v.id), (1.0, new_id)):
        c = list(v.centroid)
        c[axis] += sign * half[axis] / 2.0
        out.append(
            InstanceVertex(vid, v.label, v.kind, tuple(c), tuple(half), v.normal, v.confidence, max(1, v.point_count // 2))
        )
    return out[0], out[1]


def perturb_scene(
    scene: SceneGraph, p: PerturbationSpec, cfg: GraphConfig | None = None
) -> tuple[SceneGraph, GroundTruth]:
    """Re-observe ``scene`` under ``p``; the result plays the active session.

    Steps run in a fixed order: subset retention, over-segmentation splits,
    low-dynamic moves, centroid jitter, rigid transform, optional id shuffle.
    Ground-truth pairs are (new id, original id).
    """
    cfg = cfg or GraphConfig()
    rng = np.random.default_rng([p.seed & ((1 << 64) - 1), 0x9E27])
    ids = scene.ids()
    n_keep = int(round(p.keep_fraction * len(ids)))
    kept = sorted(rng.choice(ids, size=n_keep, replace=False).tolist()) if n_keep < len(ids) else list(ids)
    verts = [scene.vertices[vid] for vid in kept]
    origin = {v.id: v.id for v in verts}

    next_id = max(scene.vertices, default=-1) + 1
    objects = [v for v in verts if v.kind is Kind.OBJECT]
    n_split = int(round(p.split_fraction * len(objects)))
    if n_split:
        chosen = set(rng.choice([v.id for v in objects], size=n_split, replace=False).tolist())
        out = []
        for v in verts:
            if v.id in chosen:
                a, b = _split(v, next_id)
                origin[b.id] = v.id
                next_id += 1
                out.extend([a, b])
            else:
                out.append(v)
        verts = out

    movable = [v.id for v in verts if v.label in p.move_labels]
    n_move = int(math.floor(p.move_fraction * len(movable) + 1e-9))
    if n_move and p.move_max > 0:
        moving = set(rng.choice(movable, size=n_move, replace=False).tolist())
        out = []
        for v in verts:
            if v.id in moving:
                ang = rng.uniform(-math.pi, math.pi)
                d = rng.uniform(0.0, p.move_max)
                c = (v.centroid[0] + d * math.cos(ang), v.centroid[1] + d * math.sin(ang), v.centroid[2])
                v = InstanceVertex(v.id, v.label, v.kind, c, v.bbox, v.normal, v.confidence, v.point_count)
            out.append(v)
        verts = out

    if p.jitter_sigma > 0:
        noise = rng.normal(0.0, p.jitter_sigma, size=(len(verts), 3))
        verts = [
            InstanceVertex(v.id, v.label, v.kind, tuple(np.asarray(v.centroid) + noise[k]), v.bbox, v.normal, v.confidence, v.point_count)
            for k, v in enumerate(verts)
        ]

    pose = Pose4DoF.random(rng) if isinstance(p.transform, str) else p.transform
    verts = [transform_vertex(v, pose) for v in verts]

    if p.relabel_ids:
        perm = rng.permutation(len(verts))
        base = next_id + 100
        remap = {v.id: base + int(perm[k]) for k, v in enumerate(verts)}
        verts = [InstanceVertex(remap[v.id], v.label, v.kind, v.centroid, v.bbox, v.normal, v.confidence, v.point_count) for v in verts]
        origin = {remap[a]: b for a, b in origin.items() if a in remap}

    graph = SceneGraph.from_vertices(verts, cfg, session_id=p.session_id or scene.session_id, vocabulary=scene.vocabulary)
    gt = GroundTruth(
        pairs={(a, b) for a, b in origin.items()},
        dynamic_active={v.id for v in verts if v.label in p.move_labels},
        dynamic_inactive={vid for vid, v in scene.vertices.items() if v.label in p.move_labels},
        pose=pose,
    )
    return graph, gt


# -- evaluation -----------------------------------------------------------------


def evaluate(session: Sequence[LoopResult], gt: GroundTruth, g_a: SceneGraph) -> Metrics:
    """Recall over steps, precision over matches of recalled steps, final match score."""
    steps = len(session)
    if steps == 0:
        return Metrics(0.0, None, None)
    recalled = [r for r in session if r.recalled]
    recall = len(recalled) / steps
    total = sum(len(r.correspondences) for r in recalled)
    if not recalled or total == 0:
        return Metrics(recall, None, None, steps, 0)
    correct = sum(gt.is_correct(c.active_id, c.inactive_id) for r in recalled for c in r.correspondences)
    final = session[-1]
    match_score = len(final.correspondences) / len(g_a) if final.recalled and len(g_a) else 0.0
    return Metrics(recall, correct / total, match_score, steps, total)
