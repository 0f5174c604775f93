"""Scenario suites and the benchmark runner.

Each run generates an inactive scene, re-observes it as an active session,
streams the active vertices in batches through ``update_graph`` and runs
loop detection after every batch.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .descriptors import DescriptorConfig, compute_descriptors, refresh_descriptors
from .graph import GraphConfig, RawNode, RawSegmentInput, SceneGraph, update_graph
from .matcher import LoopResult, MatchConfig, detect_loop
from .synth import (
    GroundTruth,
    Metrics,
    PerturbationSpec,
    Placement,
    SceneSpec,
    evaluate,
    generate_scene,
    perturb_scene,
)

DYNAMIC_LABELS = frozenset({"chair", "curtain"})

MODES = ("combined", "rwd", "nwd", "filtered")


@dataclass(frozen=True)
class Scenario:
    name: str
    scene: Callable[[int], SceneSpec]
    perturbation: Callable[[int], PerturbationSpec]
    steps: int = 1
    dynamic_labels: frozenset[str] = frozenset()


def _ambiguity_scene(seed: int) -> SceneSpec:
    return SceneSpec(
        placements=(
            Placement("lamp", 1, "random"),
            Placement("plant", 1, "wall"),
            Placement("shelf", 1, "wall"),
            Placement("cabinet", 1, "wall"),
            Placement("tv", 1, "wall"),
        ),
        twins=2,
        seed=seed,
    )


def _living_scene(seed: int) -> SceneSpec:
    return SceneSpec(
        placements=(
            Placement("sofa", 1, "wall"),
            Placement("tv", 1, "wall"),
            Placement("cabinet", 1, "wall"),
            Placement("shelf", 1, "wall"),
            Placement("table", 1, "random"),
            Placement("lamp", 1, "random"),
            Placement("curtain", 1, "wall"),
            Placement("chair", 4, "random"),
        ),
        seed=seed,
    )


def _sparse_scene(seed: int) -> SceneSpec:
    # persistent furniture only connects through chairs and curtains
    return SceneSpec(
        width=6.0,
        depth=5.0,
        placements=(
            Placement("desk", 1, "isolated"),
            Placement("bookshelf", 1, "isolated"),
            Placement("cabinet", 1, "isolated"),
            Placement("bed", 1, "isolated"),
            Placement("chair", 4, "near"),
            Placement("curtain", 2, "wall"),
        ),
        seed=seed,
    )


SCENARIOS: dict[str, Scenario] = {
    "identity": Scenario(
        "identity",
        _ambiguity_scene,
        lambda seed: PerturbationSpec(seed=seed, session_id="active"),
    ),
    "ambiguity": Scenario(
        "ambiguity",
        _ambiguity_scene,
        lambda seed: PerturbationSpec(transform="random", relabel_ids=True, seed=seed, session_id="active"),
    ),
    "viewpoint": Scenario(
        "viewpoint",
        _ambiguity_scene,
        lambda seed: PerturbationSpec(
            keep_fraction=0.85, split_fraction=0.1, transform="random", relabel_ids=True, seed=seed, session_id="active"
        ),
        steps=4,
    ),
    "changed": Scenario(
        "changed",
        _living_scene,
        lambda seed: PerturbationSpec(
            move_labels=DYNAMIC_LABELS,
            move_fraction=0.2,
            move_max=1.0,
            transform="random",
            relabel_ids=True,
            seed=seed,
            session_id="active",
        ),
        steps=2,
        dynamic_labels=DYNAMIC_LABELS,
    ),
    "sparse": Scenario(
        "sparse",
        _sparse_scene,
        lambda seed: PerturbationSpec(
            move_labels=DYNAMIC_LABELS,
            move_fraction=0.2,
            move_max=1.0,
            transform="random",
            relabel_ids=True,
            seed=seed,
            session_id="active",
        ),
        steps=2,
        dynamic_labels=DYNAMIC_LABELS,
    ),
}


def mode_configs(
    mode: str,
    dynamic_labels: frozenset[str] = frozenset(),
    descriptor: DescriptorConfig | None = None,
    match: MatchConfig | None = None,
) -> tuple[DescriptorConfig, MatchConfig]:
    """Descriptor and match settings for one comparison mode."""
    descriptor = descriptor or DescriptorConfig()
    match = replace(match or MatchConfig(), exclude_labels=frozenset(dynamic_labels))
    if mode == "combined":
        return descriptor, match
    if mode == "rwd":
        return descriptor, replace(match, lambda_n=0.0, lambda_v=0.0)
    if mode == "nwd":
        return descriptor, replace(match, lambda_r=0.0, lambda_v=0.0)
    if mode == "filtered":
        return replace(descriptor, exclude_labels=frozenset(dynamic_labels)), match
    raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")


def session_batches(graph: SceneGraph, steps: int, rng: np.random.Generator) -> list[RawSegmentInput]:
    """Split a graph's vertices into ``steps`` batches by a sweep of azimuth about its center."""
    ids = graph.ids()
    if steps <= 1:
        return [RawSegmentInput([RawNode.from_vertex(graph.vertices[v]) for v in ids])]
    pts = np.array([graph.vertices[v].centroid for v in ids])
    center = pts.mean(axis=0)
    start = rng.uniform(-math.pi, math.pi)
    az = (np.arctan2(pts[:, 1] - center[1], pts[:, 0] - center[0]) - start) % (2 * math.pi)
    order = [ids[k] for k in np.argsort(az, kind="stable")]
    chunks = np.array_split(np.array(order), steps)
    return [RawSegmentInput([RawNode.from_vertex(graph.vertices[int(v)]) for v in chunk]) for chunk in chunks]


@dataclass
class RunRecord:
    scenario: str
    mode: str
    seed: int
    metrics: Metrics
    results: list[LoopResult] = field(default_factory=list, repr=False)
    ground_truth: GroundTruth | None = field(default=None, repr=False)


def run_session(
    inactive: SceneGraph,
    batches: list[RawSegmentInput],
    descriptor: DescriptorConfig,
    match: MatchConfig,
    graph_cfg: GraphConfig,
    session_id: str = "active",
) -> tuple[SceneGraph, list[LoopResult]]:
    """Grow an active graph batch by batch and detect loops after each batch."""
    store_i = compute_descriptors(inactive, descriptor)
    active = SceneGraph(session_id=session_id, vocabulary=dict(inactive.vocabulary))
    store_a = compute_descriptors(active, descriptor)
    results = []
    for batch in batches:
        active, dirty = update_graph(active, batch, graph_cfg)
        store_a = refresh_descriptors(store_a, active, dirty, descriptor)
        if len(active) and len(inactive):
            results.append(detect_loop(active, inactive, store_a, store_i, match))
    return active, results


def run_scenario(
    name: str,
    mode: str,
    seed: int,
    graph_cfg: GraphConfig | None = None,
    descriptor: DescriptorConfig | None = None,
    match: MatchConfig | None = None,
) -> RunRecord:
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; expected one of {sorted(SCENARIOS)}")
    graph_cfg = graph_cfg or GraphConfig()
    sc = SCENARIOS[name]
    inactive, _ = generate_scene(sc.scene(seed), graph_cfg)
    active_full, gt = perturb_scene(inactive, sc.perturbation(seed), graph_cfg)
    d_cfg, m_cfg = mode_configs(mode, sc.dynamic_labels, descriptor, match)
    rng = np.random.default_rng([seed, 0xBA7C])
    batches = session_batches(active_full, sc.steps, rng)
    active, results = run_session(inactive, batches, d_cfg, m_cfg, graph_cfg, active_full.session_id)
    return RunRecord(name, mode, seed, evaluate(results, gt, active), results, gt)


def _mean(values):
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


@dataclass
class BenchConfig:
    suites: tuple[str, ...] = ("ambiguity",)
    modes: tuple[str, ...] = ("combined",)
    seeds: int = 20
    master_seed: int = 0
    graph: GraphConfig = field(default_factory=GraphConfig)
    descriptor: DescriptorConfig = field(default_factory=DescriptorConfig)
    match: MatchConfig = field(default_factory=MatchConfig)


def run_benchmark(cfg: BenchConfig) -> dict:
    """Run every suite x mode over ``cfg.seeds`` seeds and aggregate the metrics."""
    for name in cfg.suites:
        if name not in SCENARIOS:
            raise ValueError(f"unknown scenario {name!r}; expected one of {sorted(SCENARIOS)}")
    for mode in cfg.modes:
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    seeds = [cfg.master_seed * 1000 + k for k in range(cfg.seeds)]
    rows = []
    for name in cfg.suites:
        for mode in cfg.modes:
            runs = [run_scenario(name, mode, s, cfg.graph, cfg.descriptor, cfg.match) for s in seeds]
            precisions = [r.metrics.precision for r in runs]
            rows.append(
                {
                    "scenario": name,
                    "mode": mode,
                    "seeds": len(runs),
                    "recall": _mean(r.metrics.recall for r in runs),
                    "precision": _mean(precisions),
                    "match_score": _mean(r.metrics.match_score for r in runs),
                    "precision_defined": sum(p is not None for p in precisions),
                    "imperfect_seeds": sum(p is not None and p < 1.0 for p in precisions),
                    "per_seed": [dict(seed=r.seed, **r.metrics.as_dict()) for r in runs],
                }
            )
    return {"master_seed": cfg.master_seed, "seeds": cfg.seeds, "rows": rows}


def _pct(value) -> str:
    return "N/A" if value is None else f"{100.0 * value:.1f}"


def format_report(report: dict) -> str:
    """Plain-text table with one line per scenario x mode; metrics in percent."""
    header = f"{'scenario':<10} {'mode':<9} {'Rec.':>6} {'Pre.':>6} {'MS':>6} {'imperfect':>9} {'seeds':>5}"
    lines = [header, "-" * len(header)]
    for row in report["rows"]:
        lines.append(
            f"{row['scenario']:<10} {row['mode']:<9} {_pct(row['recall']):>6} {_pct(row['precision']):>6} "
            f"{_pct(row['match_score']):>6} {row['imperfect_seeds']:>9} {row['seeds']:>5}"
        )
    return "\n".join(lines) + "\n"


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"
