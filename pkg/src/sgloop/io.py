"""JSON documents for scene graphs, raw segments, loop results and ground truth.

Every document carries a ``format`` tag. Floats are written with ``repr``
precision, so loading a saved graph gives back an equal graph.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Iterable

import jsonschema
import yaml

from .descriptors import DescriptorConfig, DescriptorStore, WalkDescriptor, WalkKind, compute_descriptors
from .graph import (
    DEFAULT_VOCABULARY,
    GraphError,
    InstanceVertex,
    Kind,
    RawNode,
    RawSegmentInput,
    SceneGraph,
    adjacency_from_edges,
    check_vocabulary,
    resolve_kind,
)
from .matcher import CorrespondenceSet, LoopResult, correspondences_from
from .registration import Pose4DoF, RegistrationResult
from .synth import GroundTruth

SCENE_FORMAT = "sgloop.scene_graph"
SEGMENTS_FORMAT = "sgloop.raw_segments"
RESULT_FORMAT = "sgloop.loop_result"
TRUTH_FORMAT = "sgloop.ground_truth"
LINES_FORMAT = "sgloop.line_set"


class SchemaError(GraphError):
    """A document does not match its schema; the message names the location."""


_NUM = {"type": "number"}
_VEC3 = {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3}
_ID = {"type": "integer"}
_PAIR = {"type": "array", "items": _ID, "minItems": 2, "maxItems": 2}
_ROWS = {"type": "array", "items": {"type": "array", "items": {"type": "string"}}}
_DESC = {
    "type": "object",
    "required": ["row_len", "rows"],
    "properties": {"row_len": {"type": "integer", "minimum": 1}, "rows": _ROWS},
    "additionalProperties": False,
}

_NODE_PROPS = {
    "id": _ID,
    "label": {"type": "string"},
    "centroid": _VEC3,
    "bbox": _VEC3,
    "normal": {"oneOf": [_VEC3, {"type": "null"}]},
    "confidence": {"type": "number", "minimum": 0, "maximum": 1},
    "point_count": {"type": "integer", "minimum": 0},
}

_VOCAB = {"type": "object", "additionalProperties": {"enum": [k.value for k in Kind]}}

SCENE_SCHEMA = {
    "type": "object",
    "required": ["format", "session_id", "revision", "vocabulary", "vertices", "edges"],
    "properties": {
        "format": {"const": SCENE_FORMAT},
        "session_id": {"type": "string"},
        "revision": {"type": "integer", "minimum": 0},
        "vocabulary": _VOCAB,
        "vertices": {
            "type": "array",
            "items": {
                "type": "object",
                "required": list(_NODE_PROPS),
                "properties": _NODE_PROPS,
                "additionalProperties": False,
            },
        },
        "edges": {"type": "array", "items": _PAIR},
        "descriptors": {
            "type": "object",
            "required": ["config", "random", "neighbor"],
            "properties": {
                "config": {"type": "object"},
                "random": {"type": "object", "additionalProperties": _DESC},
                "neighbor": {"type": "object", "additionalProperties": _DESC},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

SEGMENTS_SCHEMA = {
    "type": "object",
    "required": ["format", "nodes"],
    "properties": {
        "format": {"const": SEGMENTS_FORMAT},
        "session_id": {"type": "string"},
        "vocabulary": _VOCAB,
        "nodes": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "label", "centroid", "bbox"],
                "properties": _NODE_PROPS,
                "additionalProperties": False,
            },
        },
        "same_part_pairs": {"type": "array", "items": _PAIR},
    },
    "additionalProperties": False,
}

_POSE = {
    "type": "object",
    "required": ["yaw", "translation"],
    "properties": {
        "yaw": _NUM,
        "yaw_deg": _NUM,
        "translation": _VEC3,
        "matrix": {"type": "array", "items": {"type": "array", "items": _NUM}},
    },
}

RESULT_SCHEMA = {
    "type": "object",
    "required": ["format", "recalled", "correspondences"],
    "properties": {
        "format": {"const": RESULT_FORMAT},
        "recalled": {"type": "boolean"},
        "correspondences": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["active_id", "inactive_id", "score"],
                "properties": {"active_id": _ID, "inactive_id": _ID, "score": _NUM},
            },
        },
        "registration": {
            "type": "object",
            "required": ["pose"],
            "properties": {"pose": _POSE},
        },
    },
}

TRUTH_SCHEMA = {
    "type": "object",
    "required": ["format", "pairs", "dynamic_active", "dynamic_inactive", "pose"],
    "properties": {
        "format": {"const": TRUTH_FORMAT},
        "pairs": {"type": "array", "items": _PAIR},
        "dynamic_active": {"type": "array", "items": _ID},
        "dynamic_inactive": {"type": "array", "items": _ID},
        "pose": _POSE,
    },
    "additionalProperties": False,
}


def _location(path: Iterable) -> str:
    out = "$"
    for part in path:
        out += f"[{part}]" if isinstance(part, int) else f".{part}"
    return out


def validate(doc: Any, schema: dict, source: str = "<document>") -> None:
    error = jsonschema.exceptions.best_match(jsonschema.Draft7Validator(schema).iter_errors(doc))
    if error is not None:
        raise SchemaError(f"{source}: {_location(error.absolute_path)}: {error.message}")


def read_json(path: str | Path) -> Any:
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def dumps(doc: Any) -> str:
    return json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n"


def write_json(doc: Any, path: str | Path) -> None:
    Path(path).write_text(dumps(doc))


def load_vocabulary(path: str | Path) -> dict[str, Kind]:
    """Read a ``name: kind`` mapping from YAML or JSON."""
    with open(path) as fh:
        data = yaml.safe_load(fh)
    validate(data, _VOCAB, str(path))
    return check_vocabulary(data)


# -- scene graphs ----------------------------------------------------------------


def _vertex_doc(v: InstanceVertex) -> dict:
    return {
        "id": v.id,
        "label": v.label,
        "centroid": list(v.centroid),
        "bbox": list(v.bbox),
        "normal": None if v.normal is None else list(v.normal),
        "confidence": v.confidence,
        "point_count": v.point_count,
    }


def _descriptor_doc(d: WalkDescriptor) -> dict:
    return {"row_len": d.row_len, "rows": [list(r) for r in d.rows]}


def descriptor_config_doc(cfg: DescriptorConfig) -> dict:
    return {
        "k": cfg.k,
        "q": cfg.q,
        "n_walks": cfg.n_walks,
        "gap_max": cfg.gap_max,
        "seed": cfg.seed,
        "exclude_labels": sorted(cfg.exclude_labels),
    }


def scene_graph_doc(graph: SceneGraph, store: DescriptorStore | None = None) -> dict:
    doc = {
        "format": SCENE_FORMAT,
        "session_id": graph.session_id,
        "revision": graph.revision,
        "vocabulary": {name: kind.value for name, kind in sorted(graph.vocabulary.items())},
        "vertices": [_vertex_doc(graph.vertices[v]) for v in graph.ids()],
        "edges": [list(e) for e in graph.edges()],
    }
    if store is not None:
        store.check_current(graph)
        doc["descriptors"] = {
            "config": descriptor_config_doc(store.cfg),
            "random": {str(v): _descriptor_doc(d) for v, d in sorted(store.random.items())},
            "neighbor": {str(v): _descriptor_doc(d) for v, d in sorted(store.neighbor.items())},
        }
    return doc


def _finite(values, where: str) -> None:
    if any(not math.isfinite(x) for x in values):
        raise SchemaError(f"{where}: values must be finite")


def _graph_from_doc(doc: dict, source: str) -> SceneGraph:
    try:
        vocabulary = check_vocabulary({k: Kind(v) for k, v in doc["vocabulary"].items()})
    except GraphError as exc:
        raise SchemaError(f"{source}: $.vocabulary: {exc}") from exc
    vertices = {}
    for n, item in enumerate(doc["vertices"]):
        where = f"{source}: $.vertices[{n}]"
        if item["id"] in vertices:
            raise SchemaError(f"{where}.id: duplicate vertex id {item['id']}")
        try:
            kind = resolve_kind(vocabulary, item["label"])
        except GraphError as exc:
            raise SchemaError(f"{where}.label: {exc}") from exc
        _finite(item["centroid"] + item["bbox"] + (item["normal"] or []), where)
        v = InstanceVertex(kind=kind, **item)
        try:
            v.check()
        except GraphError as exc:
            raise SchemaError(f"{where}: {exc}") from exc
        vertices[v.id] = v
    for n, (a, b) in enumerate(doc["edges"]):
        for end in (a, b):
            if end not in vertices:
                raise SchemaError(f"{source}: $.edges[{n}]: edge ({a}, {b}) references missing vertex {end}")
        if a == b:
            raise SchemaError(f"{source}: $.edges[{n}]: self-loop on vertex {a}")
    return SceneGraph(
        vertices,
        adjacency_from_edges(vertices, [tuple(e) for e in doc["edges"]]),
        doc["session_id"],
        doc["revision"],
        vocabulary,
        segments={vid: RawNode.from_vertex(v) for vid, v in vertices.items()},
    )


def _store_from_doc(doc: dict, graph: SceneGraph, source: str) -> DescriptorStore:
    try:
        raw_cfg = dict(doc["config"])
        raw_cfg["exclude_labels"] = frozenset(raw_cfg.get("exclude_labels", ()))
        cfg = DescriptorConfig(**raw_cfg)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{source}: $.descriptors.config: {exc}") from exc
    store = DescriptorStore(cfg, graph.session_id, graph.revision, adjacency=dict(graph.adjacency))
    ids = {str(v) for v in graph.vertices}
    for kind, target in ((WalkKind.RANDOM, store.random), (WalkKind.NEIGHBOR, store.neighbor)):
        table = doc[kind.value]
        if set(table) != ids:
            missing = sorted(ids ^ set(table), key=int)
            raise SchemaError(f"{source}: $.descriptors.{kind.value}: ids do not match the vertices ({missing[:5]})")
        for key in sorted(table, key=int):
            item = table[key]
            try:
                target[int(key)] = WalkDescriptor(kind, item["row_len"], tuple(tuple(r) for r in item["rows"]))
            except ValueError as exc:
                raise SchemaError(f"{source}: $.descriptors.{kind.value}.{key}: {exc}") from exc
    store.refreshed = frozenset(graph.vertices)
    return store


def load_scene(
    path: str | Path,
    descriptor_cfg: DescriptorConfig | None = None,
    recompute: bool = False,
    threads: int = 1,
) -> tuple[SceneGraph, DescriptorStore | None]:
    """Load a graph and its descriptor payload.

    With ``descriptor_cfg`` given, a missing payload, a payload built with a
    different config, or ``recompute=True`` all yield freshly computed
    descriptors. Without it the stored payload (or None) is returned as is.
    """
    doc = read_json(path)
    validate(doc, SCENE_SCHEMA, str(path))
    graph = _graph_from_doc(doc, str(path))
    store = _store_from_doc(doc["descriptors"], graph, str(path)) if "descriptors" in doc else None
    if descriptor_cfg is not None and (recompute or store is None or store.cfg != descriptor_cfg):
        store = compute_descriptors(graph, descriptor_cfg, threads)
    elif recompute and store is not None:
        store = compute_descriptors(graph, store.cfg, threads)
    return graph, store


def load_scene_graph(path: str | Path) -> SceneGraph:
    return load_scene(path)[0]


def save_scene_graph(graph: SceneGraph, path: str | Path, store: DescriptorStore | None = None) -> None:
    write_json(scene_graph_doc(graph, store), path)


# -- raw segments ----------------------------------------------------------------


def segments_doc(raw: RawSegmentInput, session_id: str | None = None) -> dict:
    doc = {
        "format": SEGMENTS_FORMAT,
        "nodes": [
            {
                "id": n.id,
                "label": n.label,
                "centroid": list(n.centroid),
                "bbox": list(n.bbox),
                "normal": None if n.normal is None else list(n.normal),
                "confidence": n.confidence,
                "point_count": n.point_count,
            }
            for n in sorted(raw.nodes, key=lambda n: n.id)
        ],
        "same_part_pairs": [list(p) for p in raw.same_part_pairs],
    }
    if session_id is not None:
        doc["session_id"] = session_id
    return doc


def load_segments(path: str | Path) -> tuple[RawSegmentInput, dict]:
    """Returns the segments plus header fields (``session_id``, ``vocabulary``) when present."""
    doc = read_json(path)
    validate(doc, SEGMENTS_SCHEMA, str(path))
    nodes = []
    for n, item in enumerate(doc["nodes"]):
        _finite(item["centroid"] + item["bbox"] + (item.get("normal") or []), f"{path}: $.nodes[{n}]")
        nodes.append(RawNode(**item))
    raw = RawSegmentInput(nodes, [tuple(p) for p in doc.get("same_part_pairs", [])])
    try:
        raw.validate()
    except GraphError as exc:
        raise SchemaError(f"{path}: $.nodes: {exc}") from exc
    header = {}
    if "session_id" in doc:
        header["session_id"] = doc["session_id"]
    if "vocabulary" in doc:
        try:
            header["vocabulary"] = check_vocabulary({k: Kind(v) for k, v in doc["vocabulary"].items()})
        except GraphError as exc:
            raise SchemaError(f"{path}: $.vocabulary: {exc}") from exc
    return raw, header


def save_segments(raw: RawSegmentInput, path: str | Path, session_id: str | None = None) -> None:
    write_json(segments_doc(raw, session_id), path)


# -- loop results, poses and ground truth -----------------------------------------


def pose_doc(pose: Pose4DoF) -> dict:
    return {
        "yaw": pose.yaw,
        "yaw_deg": math.degrees(pose.yaw),
        "translation": list(pose.translation),
        "matrix": pose.matrix().tolist(),
    }


def pose_from_doc(doc: dict) -> Pose4DoF:
    return Pose4DoF(doc["yaw"], tuple(doc["translation"]))


def loop_result_doc(
    result: LoopResult,
    epsilon: int | None = None,
    active: str | None = None,
    inactive: str | None = None,
) -> dict:
    doc = {
        "format": RESULT_FORMAT,
        "recalled": result.recalled,
        "correspondences": [
            {"active_id": p.active_id, "inactive_id": p.inactive_id, "score": p.score} for p in result.correspondences
        ],
    }
    if epsilon is not None:
        doc["epsilon"] = epsilon
    if active is not None:
        doc["active_session"] = active
    if inactive is not None:
        doc["inactive_session"] = inactive
    return doc


def registration_doc(result: RegistrationResult) -> dict:
    return {
        "pose": pose_doc(result.pose),
        "rmse": result.rmse,
        "inlier_count": result.inlier_count,
        "degenerate": result.degenerate,
    }


def load_loop_result(path: str | Path) -> tuple[LoopResult, dict]:
    """Returns the loop result and the raw document (for its registration block)."""
    doc = read_json(path)
    validate(doc, RESULT_SCHEMA, str(path))
    try:
        corrs = correspondences_from((c["active_id"], c["inactive_id"], c["score"]) for c in doc["correspondences"])
    except ValueError as exc:
        raise SchemaError(f"{path}: $.correspondences: {exc}") from exc
    return LoopResult(doc["recalled"], corrs), doc


def check_references(corrs: CorrespondenceSet, g_a: SceneGraph, g_i: SceneGraph, source: str = "<result>") -> None:
    for n, p in enumerate(corrs):
        if p.active_id not in g_a.vertices:
            raise SchemaError(f"{source}: $.correspondences[{n}].active_id: unknown vertex {p.active_id}")
        if p.inactive_id not in g_i.vertices:
            raise SchemaError(f"{source}: $.correspondences[{n}].inactive_id: unknown vertex {p.inactive_id}")


def line_set_doc(corrs: CorrespondenceSet, g_a: SceneGraph, g_i: SceneGraph, pose: Pose4DoF | None = None) -> dict:
    """Point pairs joining matched centroids; inactive points moved by ``pose`` when given."""
    points, lines = [], []
    for p in corrs:
        a = list(g_a.vertices[p.active_id].centroid)
        b = g_i.vertices[p.inactive_id].centroid
        b = list(pose.apply(b)) if pose is not None else list(b)
        lines.append([len(points), len(points) + 1])
        points.extend([a, b])
    return {"format": LINES_FORMAT, "points": points, "lines": lines}


def ground_truth_doc(gt: GroundTruth) -> dict:
    return {
        "format": TRUTH_FORMAT,
        "pairs": [list(p) for p in sorted(gt.pairs)],
        "dynamic_active": sorted(gt.dynamic_active),
        "dynamic_inactive": sorted(gt.dynamic_inactive),
        "pose": pose_doc(gt.pose),
    }


def load_ground_truth(path: str | Path) -> GroundTruth:
    doc = read_json(path)
    validate(doc, TRUTH_SCHEMA, str(path))
    return GroundTruth(
        {tuple(p) for p in doc["pairs"]},
        set(doc["dynamic_active"]),
        set(doc["dynamic_inactive"]),
        pose_from_doc(doc["pose"]),
    )


__all__ = [
    "SchemaError",
    "DEFAULT_VOCABULARY",
    "load_scene",
    "load_scene_graph",
    "save_scene_graph",
    "load_segments",
    "save_segments",
    "load_loop_result",
    "load_ground_truth",
]
