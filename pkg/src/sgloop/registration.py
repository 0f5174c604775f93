"""4-DoF (yaw + translation) registration between matched graphs, and graph fusion."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .graph import GraphConfig, InstanceVertex, RawNode, SceneGraph, Vec3
from .matcher import CorrespondenceSet

DEGENERATE_XY = 1e-9


def wrap_angle(angle: float) -> float:
    """Map an angle to (-pi, pi]."""
    a = math.remainder(angle, 2.0 * math.pi)
    return math.pi if a <= -math.pi else a


@dataclass(frozen=True)
class Pose4DoF:
    """Maps inactive-frame points into the active frame: p -> R(yaw) p + t."""

    yaw: float = 0.0
    translation: Vec3 = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))
        object.__setattr__(self, "translation", tuple(float(x) for x in self.translation))

    @classmethod
    def identity(cls) -> Pose4DoF:
        return cls()

    @classmethod
    def random(cls, rng: np.random.Generator, max_xy: float = 5.0, max_z: float = 0.5) -> Pose4DoF:
        yaw = rng.uniform(-math.pi, math.pi)
        t = (rng.uniform(-max_xy, max_xy), rng.uniform(-max_xy, max_xy), rng.uniform(-max_z, max_z))
        return cls(yaw, t)

    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation().T + np.asarray(self.translation)

    def rotate(self, vectors) -> np.ndarray:
        return np.asarray(vectors, dtype=float) @ self.rotation().T

    def inverse(self) -> Pose4DoF:
        t = -(self.rotation().T @ np.asarray(self.translation))
        return Pose4DoF(-self.yaw, tuple(t))

    def compose(self, other: Pose4DoF) -> Pose4DoF:
        """``self`` after ``other``."""
        t = self.rotation() @ np.asarray(other.translation) + np.asarray(self.translation)
        return Pose4DoF(self.yaw + other.yaw, tuple(t))

    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.rotation()
        M[:3, 3] = self.translation
        return M

    @classmethod
    def from_matrix(cls, M) -> Pose4DoF:
        M = np.asarray(M, dtype=float)
        return cls(math.atan2(M[1, 0], M[0, 0]), tuple(M[:3, 3]))


@dataclass(frozen=True)
class RegistrationResult:
    pose: Pose4DoF
    rmse: float
    inlier_count: int
    degenerate: bool = False


@dataclass(frozen=True)
class RegistrationOptions:
    inlier_threshold: float = 0.3
    # reject loops whose alignment rmse exceeds this; None disables the gate
    max_rmse: float | None = None


def align_4dof(active_pts, inactive_pts) -> tuple[Pose4DoF, bool]:
    """Closed-form least-squares yaw + translation taking inactive onto active points."""
    a = np.asarray(active_pts, dtype=float)
    b = np.asarray(inactive_pts, dtype=float)
    a_mean, b_mean = a.mean(axis=0), b.mean(axis=0)
    ac, bc = a - a_mean, b - b_mean
    degenerate = bool(np.all(np.abs(ac[:, :2]) <= DEGENERATE_XY) or np.all(np.abs(bc[:, :2]) <= DEGENERATE_XY))
    if degenerate:
        yaw = 0.0
    else:
        cross = np.sum(bc[:, 0] * ac[:, 1] - bc[:, 1] * ac[:, 0])
        dot = np.sum(bc[:, 0] * ac[:, 0] + bc[:, 1] * ac[:, 1])
        yaw = math.atan2(cross, dot)
    R = Pose4DoF(yaw).rotation()
    return Pose4DoF(yaw, tuple(a_mean - R @ b_mean)), degenerate


def estimate_pose_4dof(
    corrs: CorrespondenceSet,
    g_a: SceneGraph,
    g_i: SceneGraph,
    options: RegistrationOptions | None = None,
    refine: Callable[[Pose4DoF, CorrespondenceSet, SceneGraph, SceneGraph], Pose4DoF] | None = None,
) -> RegistrationResult:
    """Align matched centroids; ``refine`` may polish the pose with denser data."""
    options = options or RegistrationOptions()
    if len(corrs) < 2:
        raise ValueError(f"insufficient correspondences: need 2, got {len(corrs)}")
    a = np.array([g_a.vertices[p.active_id].centroid for p in corrs])
    b = np.array([g_i.vertices[p.inactive_id].centroid for p in corrs])
    pose, degenerate = align_4dof(a, b)
    if refine is not None:
        pose = refine(pose, corrs, g_a, g_i)
    residual = np.linalg.norm(a - pose.apply(b), axis=1)
    rmse = float(np.sqrt(np.mean(residual**2)))
    inliers = int(np.sum(residual <= options.inlier_threshold))
    return RegistrationResult(pose, rmse, inliers, degenerate)


def passes_geometric_gate(result: RegistrationResult, options: RegistrationOptions) -> bool:
    return options.max_rmse is None or result.rmse <= options.max_rmse


def _refit(bbox: Sequence[float], pose: Pose4DoF) -> Vec3:
    return tuple(np.abs(pose.rotation()) @ np.asarray(bbox))


def transform_vertex(v: InstanceVertex, pose: Pose4DoF, refit_bbox: bool = False) -> InstanceVertex:
    if pose == Pose4DoF.identity():
        return v
    centroid = tuple(pose.apply(v.centroid))
    normal = None if v.normal is None else tuple(pose.rotate(v.normal))
    bbox = _refit(v.bbox, pose) if refit_bbox else v.bbox
    return replace(v, centroid=centroid, normal=normal, bbox=bbox)


def apply_pose(graph: SceneGraph, pose: Pose4DoF, refit_bbox: bool = False) -> SceneGraph:
    """Move every vertex by ``pose``; adjacency is carried over untouched.

    Boxes keep their extents unless ``refit_bbox`` asks for the axis-aligned
    hull of the rotated box, which inflates diagonals by up to sqrt(2).
    """
    vertices = {vid: transform_vertex(v, pose, refit_bbox) for vid, v in graph.vertices.items()}
    return replace(
        graph,
        vertices=vertices,
        adjacency=dict(graph.adjacency),
        segments={vid: RawNode.from_vertex(v) for vid, v in vertices.items()},
        same_part=frozenset(),
    )


def _merge_pair(a: InstanceVertex, b: InstanceVertex) -> InstanceVertex:
    wa, wb = a.point_count, b.point_count
    pa, pb = np.asarray(a.centroid), np.asarray(b.centroid)
    centroid = (wa * pa + wb * pb) / (wa + wb) if wa + wb > 0 else (pa + pb) / 2.0
    ha, hb = np.asarray(a.bbox) / 2.0, np.asarray(b.bbox) / 2.0
    lo = np.minimum(pa - ha, pb - hb)
    hi = np.maximum(pa + ha, pb + hb)
    return replace(
        a,
        centroid=tuple(centroid),
        bbox=tuple(hi - lo),
        confidence=max(a.confidence, b.confidence),
        point_count=wa + wb,
    )


def fuse_graphs(
    g_a: SceneGraph,
    g_i: SceneGraph,
    pose: Pose4DoF,
    corrs: CorrespondenceSet,
    cfg: GraphConfig | None = None,
) -> SceneGraph:
    """Bring ``g_i`` into the active frame and merge it into ``g_a``.

    Matched pairs collapse onto the active vertex (id, label and normal kept);
    unmatched inactive vertices get fresh ids above the active maximum.
    Edges are rebuilt from scratch.
    """
    cfg = cfg or GraphConfig()
    moved = apply_pose(g_i, pose)
    vertices = dict(g_a.vertices)
    matched = corrs.as_map()
    for aid, iid in matched.items():
        vertices[aid] = _merge_pair(vertices[aid], moved.vertices[iid])
    consumed = set(matched.values())
    next_id = max(vertices, default=-1) + 1
    for iid in moved.ids():
        if iid in consumed:
            continue
        vertices[next_id] = replace(moved.vertices[iid], id=next_id)
        next_id += 1
    vocabulary = {**g_i.vocabulary, **g_a.vocabulary}
    fused = SceneGraph.from_vertices(
        vertices.values(), cfg, session_id=g_a.session_id, revision=g_a.revision + 1, vocabulary=vocabulary
    )
    fused.check()
    return fused
