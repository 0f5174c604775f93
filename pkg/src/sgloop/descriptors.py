"""Random-walk and neighbor-walk topology descriptors.

A random-walk descriptor records label sequences of sampled simple walks
rooted at a vertex (macro topology). A neighbor-walk descriptor records label
sequences of the vertex's direct neighbors taken in anticlockwise azimuth
order (micro topology). Floor vertices are never walked over.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable

import numpy as np

from .graph import Adjacency, GraphError, Kind, SceneGraph, within_hops

MASK64 = (1 << 64) - 1
# degrees; neighbors closer than this in azimuth count as tied
AZIMUTH_TOL = 1e-9
# meters; neighbors with a smaller horizontal offset are left out of neighbor walks
STACKED_TOL = 1e-9

Row = tuple[str, ...]


class WalkKind(str, Enum):
    RANDOM = "random"
    NEIGHBOR = "neighbor"


@dataclass(frozen=True)
class WalkDescriptor:
    kind: WalkKind
    row_len: int
    rows: tuple[Row, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", WalkKind(self.kind))
        rows = tuple(sorted(tuple(str(x) for x in r) for r in self.rows))
        object.__setattr__(self, "rows", rows)
        if self.row_len < 1:
            raise ValueError("row_len must be positive")
        for r in rows:
            if len(r) != self.row_len:
                raise ValueError(f"row {r} does not have length {self.row_len}")

    def __len__(self) -> int:
        return len(self.rows)

    @cached_property
    def counts(self) -> Counter:
        return Counter(self.rows)

    def distinct(self) -> set[Row]:
        return set(self.rows)


@dataclass(frozen=True)
class DescriptorConfig:
    k: int = 4
    q: int = 4
    n_walks: int = 200
    gap_max: float = 150.0
    seed: int = 0
    # labels treated like floors: skipped by walks and given empty descriptors
    exclude_labels: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "exclude_labels", frozenset(self.exclude_labels))
        if self.k < 2:
            raise ValueError("k must be at least 2")
        if self.q < 1:
            raise ValueError("q must be at least 1")
        if self.n_walks < 1:
            raise ValueError("n_walks must be at least 1")
        if not 0.0 < self.gap_max < 360.0:
            raise ValueError("gap_max must lie in (0, 360)")


def _blocked(graph: SceneGraph, vid: int, exclude: frozenset[str]) -> bool:
    v = graph.vertices[vid]
    return v.kind is Kind.FLOOR or v.label in exclude


def _require(graph: SceneGraph, vid: int) -> None:
    if vid not in graph.vertices:
        raise KeyError(f"unknown vertex id {vid}")


def _walkable_neighbors(graph: SceneGraph, vid: int, exclude: frozenset[str]) -> list[int]:
    return sorted(u for u in graph.neighbors(vid) if not _blocked(graph, u, exclude))


def random_walk_descriptor(graph: SceneGraph, vertex_id: int, cfg: DescriptorConfig) -> WalkDescriptor:
    """Sample ``cfg.n_walks`` simple walks of ``cfg.k`` vertices from ``vertex_id``.

    Each step picks uniformly among unvisited, non-floor neighbors; walks that
    dead-end early are discarded. The random stream depends only on
    ``(cfg.seed, vertex_id)``.
    """
    _require(graph, vertex_id)
    k = cfg.k
    if _blocked(graph, vertex_id, cfg.exclude_labels):
        return WalkDescriptor(WalkKind.RANDOM, k)
    rng = np.random.default_rng([cfg.seed & MASK64, vertex_id & MASK64])
    draws = rng.random((cfg.n_walks, k - 1))
    cache: dict[int, list[int]] = {}
    labels = {vid: v.label for vid, v in graph.vertices.items()}
    rows = []
    for w in range(cfg.n_walks):
        path = [vertex_id]
        for step in range(k - 1):
            head = path[-1]
            if head not in cache:
                cache[head] = _walkable_neighbors(graph, head, cfg.exclude_labels)
            cands = [u for u in cache[head] if u not in path]
            if not cands:
                break
            path.append(cands[int(draws[w, step] * len(cands))])
        if len(path) == k:
            rows.append(tuple(labels[u] for u in path))
    return WalkDescriptor(WalkKind.RANDOM, k, tuple(rows))


def enumerate_walks(
    graph: SceneGraph, vertex_id: int, k: int, exclude_labels: Iterable[str] = ()
) -> WalkDescriptor:
    """Every simple path of ``k`` non-floor vertices from ``vertex_id``, one row each."""
    _require(graph, vertex_id)
    exclude = frozenset(exclude_labels)
    if _blocked(graph, vertex_id, exclude):
        return WalkDescriptor(WalkKind.RANDOM, k)
    rows: list[Row] = []

    def extend(path: list[int]) -> None:
        if len(path) == k:
            rows.append(tuple(graph.vertices[u].label for u in path))
            return
        for u in _walkable_neighbors(graph, path[-1], exclude):
            if u not in path:
                path.append(u)
                extend(path)
                path.pop()

    extend([vertex_id])
    return WalkDescriptor(WalkKind.RANDOM, k, tuple(rows))


def _cyclic_order(keyed: list[tuple[float, float, int]]) -> tuple[list[int], list[float]]:
    """Anticlockwise neighbor order and the gap after each position.

    Azimuths within AZIMUTH_TOL are one tied group, ordered by radius then
    id, with zero gaps inside; rotation noise must not reorder them. The
    cycle is cut at a real gap so a group straddling +-180 degrees stays
    together. If every neighbor is tied, closing the cycle is a full turn.
    """
    keyed = sorted(keyed)
    m = len(keyed)
    if m < 2:
        return [u for _, _, u in keyed], [360.0] * m
    raw = [(keyed[(i + 1) % m][0] - keyed[i][0]) % 360.0 for i in range(m)]
    cut = next((i for i in range(m) if AZIMUTH_TOL < raw[i] < 360.0 - AZIMUTH_TOL), None)
    if cut is None:
        ordered = sorted(keyed, key=lambda t: (t[1], t[2]))
        return [u for _, _, u in ordered], [0.0] * (m - 1) + [360.0]
    ring = keyed[cut + 1 :] + keyed[: cut + 1]
    groups = [[ring[0]]]
    for prev, cur in zip(ring, ring[1:]):
        d = (cur[0] - prev[0]) % 360.0
        if d <= AZIMUTH_TOL or d >= 360.0 - AZIMUTH_TOL:
            groups[-1].append(cur)
        else:
            groups.append([cur])
    order, gaps = [], []
    for n, group in enumerate(groups):
        group.sort(key=lambda t: (t[1], t[2]))
        nxt = groups[(n + 1) % len(groups)][0][0]
        order += [u for _, _, u in group]
        gaps += [0.0] * (len(group) - 1) + [(nxt - group[0][0]) % 360.0]
    return order, gaps


def neighbor_walk_descriptor(graph: SceneGraph, vertex_id: int, cfg: DescriptorConfig) -> WalkDescriptor:
    """Cyclic walks over the azimuth-sorted direct neighbors of ``vertex_id``.

    Neighbors stacked directly above or below the owner have no azimuth and
    are skipped. With M eligible neighbors every one of the M cyclic starts yields a walk
    of ``min(q, M)`` neighbors; a walk is rejected when any anticlockwise gap
    between consecutive visited neighbors exceeds ``cfg.gap_max`` degrees.
    """
    _require(graph, vertex_id)
    if _blocked(graph, vertex_id, cfg.exclude_labels):
        return WalkDescriptor(WalkKind.NEIGHBOR, cfg.q)
    owner = graph.vertices[vertex_id].centroid
    keyed = []
    for u in _walkable_neighbors(graph, vertex_id, cfg.exclude_labels):
        p = graph.vertices[u].centroid
        dx, dy = p[0] - owner[0], p[1] - owner[1]
        r = math.hypot(dx, dy)
        # straight above or below the owner: no azimuth to order by
        if r > STACKED_TOL:
            keyed.append((math.degrees(math.atan2(dy, dx)), r, u))
    order, gaps = _cyclic_order(keyed)
    m = len(order)
    if m == 0:
        return WalkDescriptor(WalkKind.NEIGHBOR, cfg.q)
    length = min(cfg.q, m)
    labels = [graph.vertices[u].label for u in order]
    rows = []
    for start in range(m):
        if any(gaps[(start + t) % m] > cfg.gap_max for t in range(length - 1)):
            continue
        rows.append(tuple(labels[(start + t) % m] for t in range(length)))
    return WalkDescriptor(WalkKind.NEIGHBOR, length, tuple(rows))


@dataclass
class DescriptorStore:
    """Per-vertex descriptors valid for one graph revision."""

    cfg: DescriptorConfig
    session_id: str
    revision: int
    random: dict[int, WalkDescriptor] = field(default_factory=dict)
    neighbor: dict[int, WalkDescriptor] = field(default_factory=dict)
    # adjacency the store was computed against, used to widen later refreshes
    adjacency: Adjacency = field(default_factory=dict, compare=False, repr=False)
    refreshed: frozenset[int] = field(default_factory=frozenset, compare=False, repr=False)

    def is_current(self, graph: SceneGraph) -> bool:
        return (
            self.session_id == graph.session_id
            and self.revision == graph.revision
            and set(self.random) == set(graph.vertices)
        )

    def check_current(self, graph: SceneGraph) -> None:
        if not self.is_current(graph):
            raise GraphError(
                f"stale descriptor store: store is {self.session_id}@{self.revision}, "
                f"graph is {graph.session_id}@{graph.revision}"
            )


def _describe(graph: SceneGraph, cfg: DescriptorConfig, ids: Iterable[int], threads: int):
    ids = sorted(ids)

    def one(vid):
        return vid, random_walk_descriptor(graph, vid, cfg), neighbor_walk_descriptor(graph, vid, cfg)

    if threads > 1 and len(ids) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, ids))
    return [one(vid) for vid in ids]


def compute_descriptors(graph: SceneGraph, cfg: DescriptorConfig, threads: int = 1) -> DescriptorStore:
    store = DescriptorStore(cfg, graph.session_id, graph.revision, adjacency=dict(graph.adjacency))
    for vid, dr, dn in _describe(graph, cfg, graph.vertices, threads):
        store.random[vid] = dr
        store.neighbor[vid] = dn
    store.refreshed = frozenset(graph.vertices)
    return store


def refresh_descriptors(
    store: DescriptorStore,
    graph: SceneGraph,
    dirty: Iterable[int],
    cfg: DescriptorConfig | None = None,
    threads: int = 1,
) -> DescriptorStore:
    """Recompute descriptors near ``dirty`` vertices and return a new store.

    Vertices within ``k - 1`` hops of a dirty vertex, in either the store's
    adjacency or the graph's, are recomputed; others are carried over. A
    changed config or session forces a full recomputation.
    """
    cfg = cfg or store.cfg
    if cfg != store.cfg or store.session_id != graph.session_id:
        return compute_descriptors(graph, cfg, threads)
    dirty = set(dirty)
    hops = cfg.k - 1
    touched = within_hops(graph.adjacency, dirty & set(graph.vertices), hops)
    touched |= within_hops(store.adjacency, dirty, hops)
    touched |= set(graph.vertices) - set(store.random)
    touched &= set(graph.vertices)

    new = DescriptorStore(cfg, graph.session_id, graph.revision, adjacency=dict(graph.adjacency))
    for vid in graph.vertices:
        if vid not in touched:
            new.random[vid] = store.random[vid]
            new.neighbor[vid] = store.neighbor[vid]
    for vid, dr, dn in _describe(graph, cfg, touched, threads):
        new.random[vid] = dr
        new.neighbor[vid] = dn
    new.random = dict(sorted(new.random.items()))
    new.neighbor = dict(sorted(new.neighbor.items()))
    new.refreshed = frozenset(touched)
    return new
