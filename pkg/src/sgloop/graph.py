"""Semantic scene graph: instance vertices, construction rules and incremental updates.

Vertices live in a gravity-aligned frame (z up). Edges are stored as a
symmetric adjacency map ``id -> frozenset(neighbor ids)`` that lists every
vertex, isolated ones included.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

Vec3 = tuple[float, float, float]


class GraphError(ValueError):
    """Raised when graph data violates a structural invariant."""


class Kind(str, Enum):
    OBJECT = "object"
    WALL = "wall"
    FLOOR = "floor"


SURFACE_KINDS = (Kind.WALL, Kind.FLOOR)

DEFAULT_VOCABULARY: dict[str, Kind] = {
    "wall": Kind.WALL,
    "floor": Kind.FLOOR,
    "chair": Kind.OBJECT,
    "table": Kind.OBJECT,
    "sofa": Kind.OBJECT,
    "lamp": Kind.OBJECT,
    "bed": Kind.OBJECT,
    "cabinet": Kind.OBJECT,
    "curtain": Kind.OBJECT,
    "desk": Kind.OBJECT,
    "shelf": Kind.OBJECT,
    "tv": Kind.OBJECT,
    "plant": Kind.OBJECT,
    "nightstand": Kind.OBJECT,
    "armchair": Kind.OBJECT,
    "bookshelf": Kind.OBJECT,
    "sink": Kind.OBJECT,
    "toilet": Kind.OBJECT,
    "pillow": Kind.OBJECT,
    "box": Kind.OBJECT,
}


def check_vocabulary(vocabulary: Mapping[str, Kind]) -> dict[str, Kind]:
    vocab = {str(name): Kind(kind) for name, kind in vocabulary.items()}
    if vocab.get("wall") is not Kind.WALL:
        raise GraphError("vocabulary must assign 'wall' the wall kind")
    if vocab.get("floor") is not Kind.FLOOR:
        raise GraphError("vocabulary must assign 'floor' the floor kind")
    return vocab


def resolve_kind(vocabulary: Mapping[str, Kind], label: str) -> Kind:
    try:
        return vocabulary[label]
    except KeyError:
        raise GraphError(
            f"unknown label {label!r}; vocabulary is {sorted(vocabulary)}"
        ) from None


def _vec3(value: Sequence[float]) -> Vec3:
    x, y, z = (float(v) for v in value)
    return (x, y, z)


@dataclass(frozen=True)
class InstanceVertex:
    id: int
    label: str
    kind: Kind
    centroid: Vec3
    bbox: Vec3
    normal: Vec3 | None = None
    confidence: float = 1.0
    point_count: int = 0

    def __post_init__(self):
        object.__setattr__(self, "id", int(self.id))
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "centroid", _vec3(self.centroid))
        object.__setattr__(self, "bbox", _vec3(self.bbox))
        if self.normal is not None:
            object.__setattr__(self, "normal", _vec3(self.normal))
        object.__setattr__(self, "confidence", float(self.confidence))
        object.__setattr__(self, "point_count", int(self.point_count))

    @property
    def diagonal(self) -> float:
        return math.sqrt(sum(e * e for e in self.bbox))

    def check(self) -> None:
        """Raise GraphError if the normal does not agree with the kind."""
        if self.kind in SURFACE_KINDS:
            if self.normal is None:
                raise GraphError(f"vertex {self.id} ({self.kind.value}) has no normal")
            norm = math.sqrt(sum(c * c for c in self.normal))
            if abs(norm - 1.0) > 1e-6:
                raise GraphError(f"vertex {self.id} normal is not unit length ({norm})")
        elif self.normal is not None:
            raise GraphError(f"object vertex {self.id} must not carry a normal")


@dataclass(frozen=True)
class RawNode:
    """One segment as delivered by the upstream segmentation front-end."""

    id: int
    label: str
    centroid: Vec3
    bbox: Vec3
    normal: Vec3 | None = None
    confidence: float = 1.0
    point_count: int = 0

    def __post_init__(self):
        object.__setattr__(self, "id", int(self.id))
        object.__setattr__(self, "centroid", _vec3(self.centroid))
        object.__setattr__(self, "bbox", _vec3(self.bbox))
        if self.normal is not None:
            object.__setattr__(self, "normal", _vec3(self.normal))
        object.__setattr__(self, "confidence", float(self.confidence))
        object.__setattr__(self, "point_count", int(self.point_count))

    @classmethod
    def from_vertex(cls, v: InstanceVertex) -> RawNode:
        return cls(v.id, v.label, v.centroid, v.bbox, v.normal, v.confidence, v.point_count)


@dataclass
class RawSegmentInput:
    nodes: list[RawNode] = field(default_factory=list)
    same_part_pairs: list[tuple[int, int]] = field(default_factory=list)

    def validate(self) -> None:
        ids = [n.id for n in self.nodes]
        if len(ids) != len(set(ids)):
            raise GraphError("raw segment ids must be unique")
        known = set(ids)
        for a, b in self.same_part_pairs:
            if a not in known or b not in known:
                raise GraphError(f"same_part pair ({a}, {b}) references a missing node")

    @staticmethod
    def concat(batches: Iterable[RawSegmentInput]) -> RawSegmentInput:
        """Concatenate batches; a later node with a known id replaces the earlier one."""
        nodes: dict[int, RawNode] = {}
        pairs: set[tuple[int, int]] = set()
        for batch in batches:
            for n in batch.nodes:
                nodes[n.id] = n
            pairs.update(_norm_pair(a, b) for a, b in batch.same_part_pairs)
        return RawSegmentInput(list(nodes.values()), sorted(pairs))


@dataclass(frozen=True)
class GraphConfig:
    obj_obj_dist_max: float = 2.0
    obj_wall_perp_max: float = 0.5
    wall_wall_dist_max: float = 3.0
    wall_wall_angle_min: float = 45.0
    min_confidence: float = 0.5
    min_diagonal: float = 0.1
    min_points: int = 50

    def __post_init__(self):
        for name, value in vars(self).items():
            if value < 0:
                raise GraphError(f"GraphConfig.{name} must be non-negative, got {value}")


Adjacency = dict[int, frozenset[int]]


@dataclass
class SceneGraph:
    vertices: dict[int, InstanceVertex] = field(default_factory=dict)
    adjacency: Adjacency = field(default_factory=dict)
    session_id: str = "session"
    revision: int = 0
    vocabulary: dict[str, Kind] = field(default_factory=lambda: dict(DEFAULT_VOCABULARY))
    # raw segment state accumulated by update_graph; not part of graph identity
    segments: dict[int, RawNode] = field(default_factory=dict, compare=False, repr=False)
    same_part: frozenset[tuple[int, int]] = field(
        default_factory=frozenset, compare=False, repr=False
    )

    def __len__(self) -> int:
        return len(self.vertices)

    def neighbors(self, vid: int) -> frozenset[int]:
        return self.adjacency.get(vid, frozenset())

    def edges(self) -> list[tuple[int, int]]:
        return sorted((a, b) for a, nbrs in self.adjacency.items() for b in nbrs if a < b)

    def ids(self) -> list[int]:
        return sorted(self.vertices)

    def check(self) -> None:
        """Validate vertex and adjacency invariants."""
        for vid, v in self.vertices.items():
            if vid != v.id:
                raise GraphError(f"vertex stored under {vid} has id {v.id}")
            v.check()
            resolve_kind(self.vocabulary, v.label)
        if set(self.adjacency) != set(self.vertices):
            raise GraphError("adjacency keys must equal the vertex id set")
        for a, nbrs in self.adjacency.items():
            for b in nbrs:
                if b == a:
                    raise GraphError(f"self-loop on vertex {a}")
                if b not in self.vertices:
                    raise GraphError(f"edge ({a}, {b}) references missing vertex {b}")
                if a not in self.adjacency[b]:
                    raise GraphError(f"edge ({a}, {b}) is not symmetric")

    @classmethod
    def from_vertices(
        cls,
        vertices: Iterable[InstanceVertex],
        cfg: GraphConfig | None = None,
        *,
        session_id: str = "session",
        revision: int = 0,
        vocabulary: Mapping[str, Kind] | None = None,
        edges: Iterable[tuple[int, int]] | None = None,
    ) -> SceneGraph:
        """Assemble a graph from finished vertices; edges are built unless given."""
        verts = {v.id: v for v in vertices}
        if edges is None:
            adjacency = build_edges(verts.values(), cfg or GraphConfig())
        else:
            adjacency = adjacency_from_edges(verts, edges)
        vocab = check_vocabulary(vocabulary if vocabulary is not None else DEFAULT_VOCABULARY)
        return cls(
            verts,
            adjacency,
            session_id,
            revision,
            vocab,
            segments={vid: RawNode.from_vertex(v) for vid, v in verts.items()},
        )


def _norm_pair(a: int, b: int) -> tuple[int, int]:
    a, b = int(a), int(b)
    return (a, b) if a <= b else (b, a)


def within_hops(adjacency: Mapping[int, Iterable[int]], seeds: Iterable[int], hops: int) -> set[int]:
    """Vertices reachable from ``seeds`` in at most ``hops`` steps (seeds included)."""
    reached = set(seeds)
    frontier = set(reached)
    for _ in range(hops):
        frontier = {u for vid in frontier for u in adjacency.get(vid, ())} - reached
        if not frontier:
            break
        reached |= frontier
    return reached


def adjacency_from_edges(vertex_ids: Iterable[int], edges: Iterable[tuple[int, int]]) -> Adjacency:
    ids = set(vertex_ids)
    nbrs: dict[int, set[int]] = {vid: set() for vid in ids}
    for a, b in edges:
        if a not in ids or b not in ids:
            raise GraphError(f"edge ({a}, {b}) references a missing vertex")
        if a == b:
            raise GraphError(f"self-loop on vertex {a}")
        nbrs[a].add(b)
        nbrs[b].add(a)
    return {vid: frozenset(s) for vid, s in nbrs.items()}


# -- construction -------------------------------------------------------------


def merge_same_part(
    raw: RawSegmentInput,
    vocabulary: Mapping[str, Kind] = DEFAULT_VOCABULARY,
    diagnostics: list[str] | None = None,
) -> list[InstanceVertex]:
    """Collapse same-part connected components into single instances.

    The merged id is the smallest member id. Components mixing kinds are
    dropped and reported through ``diagnostics`` and the module logger.
    Output is sorted by id and does not depend on input order.
    """
    raw.validate()
    nodes = {n.id: n for n in raw.nodes}
    parent = {vid: vid for vid in nodes}

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in raw.same_part_pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    components: dict[int, list[RawNode]] = {}
    for vid in sorted(nodes):
        components.setdefault(find(vid), []).append(nodes[vid])

    merged = []
    for root in sorted(components):
        members = components[root]
        kinds = {resolve_kind(vocabulary, m.label) for m in members}
        if len(kinds) > 1:
            msg = (
                f"rejected same-part component {[m.id for m in members]}: "
                f"mixed kinds {sorted(k.value for k in kinds)}"
            )
            logger.warning(msg)
            if diagnostics is not None:
                diagnostics.append(msg)
            continue
        merged.append(_merge_members(min(m.id for m in members), members, kinds.pop()))
    return merged


def _merge_members(vid: int, members: list[RawNode], kind: Kind) -> InstanceVertex:
    if len(members) == 1:
        m = members[0]
        return InstanceVertex(vid, m.label, kind, m.centroid, m.bbox, m.normal, m.confidence, m.point_count)
    # dominant member: most points, then smaller label name, then smaller id
    dominant = min(members, key=lambda m: (-m.point_count, m.label, m.id))
    weights = np.array([m.point_count for m in members], dtype=float)
    cents = np.array([m.centroid for m in members])
    if weights.sum() > 0:
        centroid = (weights[:, None] * cents).sum(axis=0) / weights.sum()
    else:
        centroid = cents.mean(axis=0)
    half = np.array([m.bbox for m in members]) / 2.0
    lo = (cents - half).min(axis=0)
    hi = (cents + half).max(axis=0)
    return InstanceVertex(
        vid,
        dominant.label,
        kind,
        tuple(centroid),
        tuple(hi - lo),
        dominant.normal,
        max(m.confidence for m in members),
        int(weights.sum()),
    )


def filter_instances(
    instances: Iterable[InstanceVertex], cfg: GraphConfig
) -> list[InstanceVertex]:
    """Keep confident, large-enough instances; all thresholds are inclusive."""
    return [
        v
        for v in instances
        if v.confidence >= cfg.min_confidence
        and v.diagonal >= cfg.min_diagonal
        and v.point_count >= cfg.min_points
        and min(v.bbox) > 0.0
    ]


def build_edges(vertices: Iterable[InstanceVertex], cfg: GraphConfig) -> Adjacency:
    """Connect vertices according to the kind-specific geometric rules."""
    verts = sorted(vertices, key=lambda v: v.id)
    ids = [v.id for v in verts]
    n = len(verts)
    if n == 0:
        return {}
    for v in verts:
        if v.kind in SURFACE_KINDS and v.normal is None:
            raise GraphError(f"{v.kind.value} vertex {v.id} has no normal")

    kinds = np.array([v.kind.value for v in verts])
    is_obj = kinds == Kind.OBJECT.value
    is_wall = kinds == Kind.WALL.value
    is_floor = kinds == Kind.FLOOR.value
    P = np.array([v.centroid for v in verts])
    B = np.array([v.bbox for v in verts])
    N = np.array([v.normal if v.normal is not None else (0.0, 0.0, 0.0) for v in verts])

    diff = P[:, None, :] - P[None, :, :]  # diff[i, j] = p_i - p_j
    dist = np.sqrt((diff**2).sum(axis=2))

    adj = np.zeros((n, n), dtype=bool)
    adj |= np.outer(is_obj, is_obj) & (dist < cfg.obj_obj_dist_max)

    # object i against the plane of wall j
    perp = np.abs((diff * N[None, :, :]).sum(axis=2))
    ow = np.outer(is_obj, is_wall) & (perp < cfg.obj_wall_perp_max)
    adj |= ow | ow.T

    cos = np.clip(np.abs(N @ N.T), 0.0, 1.0)
    angle = np.degrees(np.arccos(cos))
    adj |= np.outer(is_wall, is_wall) & (dist < cfg.wall_wall_dist_max) & (angle > cfg.wall_wall_angle_min)

    half = B[:, :2] / 2.0
    overlap = np.all(np.abs(diff[:, :, :2]) < half[:, None, :] + half[None, :, :], axis=2)
    touches_floor = is_floor[:, None] | is_floor[None, :]
    adj |= touches_floor & overlap

    np.fill_diagonal(adj, False)
    adj &= adj.T
    return {ids[i]: frozenset(ids[j] for j in np.flatnonzero(adj[i])) for i in range(n)}


def build_graph(
    raw: RawSegmentInput,
    cfg: GraphConfig | None = None,
    *,
    session_id: str = "session",
    vocabulary: Mapping[str, Kind] | None = None,
) -> SceneGraph:
    """Batch construction: merge, filter, connect."""
    empty = SceneGraph(
        session_id=session_id,
        vocabulary=check_vocabulary(vocabulary if vocabulary is not None else DEFAULT_VOCABULARY),
    )
    graph, _ = update_graph(empty, raw, cfg or GraphConfig())
    return graph


def update_graph(
    graph: SceneGraph, raw: RawSegmentInput, cfg: GraphConfig
) -> tuple[SceneGraph, set[int]]:
    """Fold a new batch of segments into ``graph``.

    Returns the new graph value and the dirty set: every vertex (present or
    removed) whose attributes or incident edges changed, grown by two hops
    through both the old and new adjacency. The input graph is not mutated.
    """
    segments = dict(graph.segments)
    for n in raw.nodes:
        segments[n.id] = n
    pairs = set(graph.same_part) | {_norm_pair(a, b) for a, b in raw.same_part_pairs}
    combined = RawSegmentInput(list(segments.values()), sorted(pairs))

    vertices = {v.id: v for v in filter_instances(merge_same_part(combined, graph.vocabulary), cfg)}
    adjacency = build_edges(vertices.values(), cfg)

    old_v, old_adj = graph.vertices, graph.adjacency
    seeds = {
        vid
        for vid in set(old_v) | set(vertices)
        if old_v.get(vid) != vertices.get(vid) or old_adj.get(vid) != adjacency.get(vid)
    }
    dirty = set(seeds)
    for adj in (old_adj, adjacency):
        dirty |= within_hops(adj, seeds, 2)

    new = replace(
        graph,
        vertices=vertices if seeds else dict(old_v),
        adjacency=adjacency if seeds else dict(old_adj),
        revision=graph.revision + 1 if seeds else graph.revision,
        segments=segments,
        same_part=frozenset(pairs),
    )
    return new, dirty
