"""Score matrix, one-to-one correspondence extraction and the loop decision."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .descriptors import DescriptorStore, WalkDescriptor, WalkKind
from .graph import Kind, SceneGraph

TIE_RTOL = 1e-9


@dataclass(frozen=True)
class MatchConfig:
    lambda_r: float = 1.0
    lambda_n: float = 0.5
    lambda_v: float = 0.6
    tau: float = 0.5
    epsilon: int = 4
    # "symmetric": 1 - |dl| / max(l); "literal": (l_i - l_j) / max(l), unbounded below
    volume_mode: str = "symmetric"
    # labels used for topology but never offered as correspondences
    exclude_labels: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "exclude_labels", frozenset(self.exclude_labels))
        if min(self.lambda_r, self.lambda_n, self.lambda_v) < 0:
            raise ValueError("weights must be non-negative")
        if self.lambda_r + self.lambda_n + self.lambda_v <= 0:
            raise ValueError("at least one weight must be positive")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.epsilon < 1:
            raise ValueError("epsilon must be at least 1")
        if self.volume_mode not in ("symmetric", "literal"):
            raise ValueError(f"unknown volume_mode {self.volume_mode!r}")


def row_overlap(d_i: WalkDescriptor, d_j: WalkDescriptor) -> int:
    """Size of the multiset intersection of the two row collections."""
    if d_i.kind is not d_j.kind:
        raise ValueError(f"cannot compare {d_i.kind.value} and {d_j.kind.value} descriptors")
    if d_i.row_len != d_j.row_len:
        return 0
    a, b = d_i.counts, d_j.counts
    if len(a) > len(b):
        a, b = b, a
    return sum(min(c, b[r]) for r, c in a.items() if r in b)


def sigma_r(d_i: WalkDescriptor, d_j: WalkDescriptor) -> float:
    if d_i.kind is not WalkKind.RANDOM or d_j.kind is not WalkKind.RANDOM:
        raise ValueError("sigma_r expects random-walk descriptors")
    denom = min(len(d_i), len(d_j))
    return row_overlap(d_i, d_j) / denom if denom else 0.0


def sigma_n(d_i: WalkDescriptor, d_j: WalkDescriptor) -> float:
    if d_i.kind is not WalkKind.NEIGHBOR or d_j.kind is not WalkKind.NEIGHBOR:
        raise ValueError("sigma_n expects neighbor-walk descriptors")
    denom = max(len(d_i), len(d_j))
    return row_overlap(d_i, d_j) / denom if denom else 0.0


def box_diagonal(b: Sequence[float]) -> float:
    return math.sqrt(sum(float(x) ** 2 for x in b))


def sigma_v(b_i: Sequence[float], b_j: Sequence[float], mode: str = "symmetric") -> float:
    li, lj = box_diagonal(b_i), box_diagonal(b_j)
    if li <= 0 or lj <= 0:
        raise ValueError("bounding-box diagonals must be positive")
    if mode == "literal":
        return (li - lj) / max(li, lj)
    return 1.0 - abs(li - lj) / max(li, lj)


@dataclass
class ScoreMatrix:
    entries: np.ndarray
    row_ids: list[int]
    col_ids: list[int]

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=float)
        if self.entries.shape != (len(self.row_ids), len(self.col_ids)):
            raise ValueError("entries shape does not match the id maps")

    def at(self, active_id: int, inactive_id: int) -> float:
        return float(self.entries[self.row_ids.index(active_id), self.col_ids.index(inactive_id)])

    def transpose(self) -> ScoreMatrix:
        return ScoreMatrix(self.entries.T.copy(), list(self.col_ids), list(self.row_ids))


@dataclass(frozen=True, order=True)
class Correspondence:
    active_id: int
    inactive_id: int
    score: float


@dataclass(frozen=True)
class CorrespondenceSet:
    pairs: tuple[Correspondence, ...] = ()

    def __post_init__(self):
        pairs = tuple(sorted(self.pairs))
        object.__setattr__(self, "pairs", pairs)
        if len({p.active_id for p in pairs}) != len(pairs):
            raise ValueError("active ids must be distinct")
        if len({p.inactive_id for p in pairs}) != len(pairs):
            raise ValueError("inactive ids must be distinct")

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[Correspondence]:
        return iter(self.pairs)

    def as_map(self) -> dict[int, int]:
        return {p.active_id: p.inactive_id for p in self.pairs}

    def id_pairs(self) -> set[tuple[int, int]]:
        return {(p.active_id, p.inactive_id) for p in self.pairs}

    def swapped(self) -> CorrespondenceSet:
        return CorrespondenceSet(tuple(Correspondence(p.inactive_id, p.active_id, p.score) for p in self.pairs))


@dataclass
class LoopResult:
    recalled: bool
    correspondences: CorrespondenceSet
    score_matrix: ScoreMatrix | None = field(default=None, repr=False)


def _is_candidate(graph: SceneGraph, vid: int, cfg: MatchConfig) -> bool:
    v = graph.vertices[vid]
    return v.kind is not Kind.FLOOR and v.label not in cfg.exclude_labels


def score_matrix(
    g_a: SceneGraph,
    g_i: SceneGraph,
    store_a: DescriptorStore,
    store_i: DescriptorStore,
    cfg: MatchConfig,
) -> ScoreMatrix:
    """Weighted, normalized similarity for every same-label candidate pair."""
    store_a.check_current(g_a)
    store_i.check_current(g_i)
    rows, cols = g_a.ids(), g_i.ids()
    entries = np.zeros((len(rows), len(cols)))
    total = cfg.lambda_r + cfg.lambda_n + cfg.lambda_v
    by_label: dict[str, list[int]] = {}
    for j, vid in enumerate(cols):
        if _is_candidate(g_i, vid, cfg):
            by_label.setdefault(g_i.vertices[vid].label, []).append(j)
    for i, aid in enumerate(rows):
        if not _is_candidate(g_a, aid, cfg):
            continue
        va = g_a.vertices[aid]
        for j in by_label.get(va.label, ()):
            iid = cols[j]
            s = 0.0
            if cfg.lambda_r:
                s += cfg.lambda_r * sigma_r(store_a.random[aid], store_i.random[iid])
            if cfg.lambda_n:
                s += cfg.lambda_n * sigma_n(store_a.neighbor[aid], store_i.neighbor[iid])
            if cfg.lambda_v:
                s += cfg.lambda_v * sigma_v(va.bbox, g_i.vertices[iid].bbox, cfg.volume_mode)
            entries[i, j] = s / total
    return ScoreMatrix(entries, rows, cols)


def _unique_argmax(values: np.ndarray) -> int | None:
    if values.size == 0:
        return None
    best = int(np.argmax(values))
    peak = values[best]
    close = np.abs(values - peak) <= TIE_RTOL * abs(peak)
    return best if int(close.sum()) == 1 else None


def find_correspondences(S: ScoreMatrix, cfg: MatchConfig) -> CorrespondenceSet:
    """Mutual strict row/column maxima above ``cfg.tau``; ties select nothing."""
    E = S.entries
    n_rows, n_cols = E.shape
    col_best = [_unique_argmax(E[:, j]) for j in range(n_cols)]
    pairs = []
    for i in range(n_rows):
        j = _unique_argmax(E[i])
        if j is not None and col_best[j] == i and E[i, j] > cfg.tau:
            pairs.append(Correspondence(S.row_ids[i], S.col_ids[j], float(E[i, j])))
    return CorrespondenceSet(tuple(pairs))


def _is_wall_pair(p: Correspondence, g_a: SceneGraph, g_i: SceneGraph) -> bool:
    return g_a.vertices[p.active_id].kind is Kind.WALL and g_i.vertices[p.inactive_id].kind is Kind.WALL


def verify_wall_matches(corrs: CorrespondenceSet, g_a: SceneGraph, g_i: SceneGraph) -> CorrespondenceSet:
    """Keep a wall pair only if a pair of their neighbors is (transitively) verified.

    Non-wall pairs are verified outright; wall pairs become verified once a
    neighbor of the active wall is matched to a neighbor of the inactive wall
    by an already verified pair. Repeats until nothing changes, so wall pairs
    that only support each other are dropped.
    """
    verified: dict[int, int] = {}
    pending = []
    for p in corrs:
        if _is_wall_pair(p, g_a, g_i):
            pending.append(p)
        else:
            verified[p.active_id] = p.inactive_id
    kept = [p for p in corrs if not _is_wall_pair(p, g_a, g_i)]
    progress = True
    while pending and progress:
        progress = False
        still = []
        for p in pending:
            nbrs_i = g_i.neighbors(p.inactive_id)
            if any(verified.get(u) in nbrs_i for u in g_a.neighbors(p.active_id) if u in verified):
                verified[p.active_id] = p.inactive_id
                kept.append(p)
                progress = True
            else:
                still.append(p)
        pending = still
    return CorrespondenceSet(tuple(kept))


def detect_loop(
    g_a: SceneGraph,
    g_i: SceneGraph,
    store_a: DescriptorStore,
    store_i: DescriptorStore,
    cfg: MatchConfig,
) -> LoopResult:
    S = score_matrix(g_a, g_i, store_a, store_i, cfg)
    corrs = verify_wall_matches(find_correspondences(S, cfg), g_a, g_i)
    return LoopResult(len(corrs) >= cfg.epsilon, corrs, S)


def correspondences_from(pairs: Iterable[tuple[int, int, float]]) -> CorrespondenceSet:
    return CorrespondenceSet(tuple(Correspondence(int(a), int(b), float(s)) for a, b, s in pairs))
