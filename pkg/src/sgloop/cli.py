"""``sgloop`` command line.

Exit status: 0 on success, 1 on a usage error, 2 on a data error. ``match``
exits 0 whether or not a loop was recalled; the verdict is in its output.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from . import io
from .bench import MODES, SCENARIOS, BenchConfig, format_report, report_json, run_benchmark
from .config import (
    ConfigError,
    PipelineConfig,
    load_config,
    perturbation_from_dict,
    scene_spec_from_dict,
)
from .graph import DEFAULT_VOCABULARY, GraphError, SceneGraph, update_graph
from .matcher import detect_loop
from .registration import estimate_pose_4dof, fuse_graphs, passes_geometric_gate
from .synth import PlacementError, evaluate, generate_scene, perturb_scene

logger = logging.getLogger("sgloop")

USAGE_ERROR = 1
DATA_ERROR = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _describe_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--recompute", action="store_true", help="ignore descriptor payloads stored in the input files")


def _cmd_build(args, cfg: PipelineConfig) -> int:
    vocabulary = io.load_vocabulary(cfg.paths.vocabulary) if cfg.paths.vocabulary else DEFAULT_VOCABULARY
    graph = None
    for path in args.segments:
        raw, header = io.load_segments(path)
        if graph is None:
            graph = SceneGraph(
                session_id=args.session_id or header.get("session_id", "session"),
                vocabulary=header.get("vocabulary", vocabulary),
            )
        try:
            graph, dirty = update_graph(graph, raw, cfg.graph)
        except GraphError as exc:
            raise GraphError(f"{path}: {exc}") from exc
        logger.info("%s: %d dirty vertices", path, len(dirty))
    io.save_scene_graph(graph, args.out)
    print(f"wrote {args.out}: {len(graph)} vertices, {len(graph.edges())} edges, revision {graph.revision}")
    return 0


def _cmd_describe(args, cfg: PipelineConfig) -> int:
    graph, store = io.load_scene(args.graph, cfg.descriptor, args.recompute, args.threads)
    io.save_scene_graph(graph, args.out, store)
    print(f"wrote {args.out}: descriptors for {len(store.random)} vertices")
    return 0


def _cmd_match(args, cfg: PipelineConfig) -> int:
    g_a, store_a = io.load_scene(args.active, cfg.descriptor, args.recompute, args.threads)
    g_i, store_i = io.load_scene(args.inactive, cfg.descriptor, args.recompute, args.threads)
    result = detect_loop(g_a, g_i, store_a, store_i, cfg.match)
    doc = io.loop_result_doc(result, cfg.match.epsilon, g_a.session_id, g_i.session_id)
    _emit(io.dumps(doc), args.out)
    if args.lines:
        io.write_json(io.line_set_doc(result.correspondences, g_a, g_i), args.lines)
    return 0


def _cmd_register(args, cfg: PipelineConfig) -> int:
    result, doc = io.load_loop_result(args.result)
    g_a = io.load_scene_graph(args.active)
    g_i = io.load_scene_graph(args.inactive)
    io.check_references(result.correspondences, g_a, g_i, args.result)
    reg = estimate_pose_4dof(result.correspondences, g_a, g_i, cfg.registration)
    doc["registration"] = io.registration_doc(reg)
    doc["registration"]["gate_passed"] = passes_geometric_gate(reg, cfg.registration)
    _emit(io.dumps(doc), args.out)
    if args.lines:
        io.write_json(io.line_set_doc(result.correspondences, g_a, g_i, reg.pose), args.lines)
    return 0


def _cmd_fuse(args, cfg: PipelineConfig) -> int:
    result, doc = io.load_loop_result(args.result)
    if "registration" not in doc:
        raise GraphError(f"{args.result}: $.registration: missing; run `sgloop register` first")
    g_a = io.load_scene_graph(args.active)
    g_i = io.load_scene_graph(args.inactive)
    io.check_references(result.correspondences, g_a, g_i, args.result)
    pose = io.pose_from_doc(doc["registration"]["pose"])
    fused = fuse_graphs(g_a, g_i, pose, result.correspondences, cfg.graph)
    io.save_scene_graph(fused, args.out)
    print(f"wrote {args.out}: {len(fused)} vertices, {len(fused.edges())} edges")
    return 0


def _cmd_synth(args, cfg: PipelineConfig) -> int:
    if args.scenario:
        sc = SCENARIOS[args.scenario]
        scene_spec, pert = sc.scene(args.seed), sc.perturbation(args.seed)
    else:
        with open(args.spec) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict) or "scene" not in data:
            raise ConfigError(f"{args.spec}: expected a mapping with a 'scene' section")
        scene_spec = scene_spec_from_dict(data["scene"], args.seed)
        pert = perturbation_from_dict(data.get("perturbation"), args.seed)
    inactive, layout = generate_scene(scene_spec, cfg.graph)
    active, gt = perturb_scene(inactive, pert, cfg.graph)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.save_scene_graph(inactive, out / "inactive.json")
    io.save_scene_graph(active, out / "active.json")
    io.write_json(io.ground_truth_doc(gt), out / "ground_truth.json")
    io.write_json(layout.to_dict(), out / "layout.json")
    print(f"wrote {out}: inactive {len(inactive)} vertices, active {len(active)} vertices")
    return 0


def _cmd_bench(args, cfg: PipelineConfig) -> int:
    bench = BenchConfig(
        suites=tuple(args.suite or ("ambiguity",)),
        modes=tuple(args.mode or ("combined",)),
        seeds=args.seeds,
        master_seed=args.seed,
        graph=cfg.graph,
        descriptor=cfg.descriptor,
        match=cfg.match,
    )
    report = run_benchmark(bench)
    _emit(format_report(report), args.out)
    if args.json:
        Path(args.json).write_text(report_json(report))
    return 0


def _cmd_eval(args, cfg: PipelineConfig) -> int:
    gt = io.load_ground_truth(args.ground_truth)
    g_a = io.load_scene_graph(args.active)
    session = []
    for path in args.results:
        result, _ = io.load_loop_result(path)
        session.append(result)
    metrics = evaluate(session, gt, g_a)
    _emit(io.dumps(metrics.as_dict()), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML pipeline configuration")
    common.add_argument("--seed", type=int, default=0, help="seed for every random choice (default 0)")
    common.add_argument("--threads", type=int, default=1, help="worker cap; outputs do not depend on it")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="sgloop", description="Loop detection between semantic scene graphs.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("build", parents=[common], help="raw segment files -> scene-graph file")
    p.add_argument("segments", nargs="+", help="segment files, applied in order as update batches")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--session-id")
    p.set_defaults(run=_cmd_build)

    p = sub.add_parser("describe", parents=[common], help="attach descriptors to a scene-graph file")
    p.add_argument("graph")
    p.add_argument("-o", "--out", required=True)
    _describe_opts(p)
    p.set_defaults(run=_cmd_describe)

    p = sub.add_parser("match", parents=[common], help="active + inactive graph -> loop result")
    p.add_argument("active")
    p.add_argument("inactive")
    p.add_argument("-o", "--out")
    p.add_argument("--lines", help="also write a line set joining matched centroids")
    _describe_opts(p)
    p.set_defaults(run=_cmd_match)

    p = sub.add_parser("register", parents=[common], help="loop result -> 4-DoF pose")
    p.add_argument("result")
    p.add_argument("active")
    p.add_argument("inactive")
    p.add_argument("-o", "--out")
    p.add_argument("--lines", help="line set with inactive centroids moved into the active frame")
    p.set_defaults(run=_cmd_register)

    p = sub.add_parser("fuse", parents=[common], help="merge the inactive graph into the active one")
    p.add_argument("active")
    p.add_argument("inactive")
    p.add_argument("result", help="registered loop result")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(run=_cmd_fuse)

    p = sub.add_parser("synth", parents=[common], help="generate a scene pair with ground truth")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", choices=sorted(SCENARIOS))
    src.add_argument("--spec", help="YAML with 'scene' and optional 'perturbation' sections")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(run=_cmd_synth)

    p = sub.add_parser("bench", parents=[common], help="run benchmark suites")
    p.add_argument("--suite", action="append", choices=sorted(SCENARIOS))
    p.add_argument("--mode", action="append", choices=MODES)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("-o", "--out", help="text report (stdout by default)")
    p.add_argument("--json", help="machine-readable report")
    p.set_defaults(run=_cmd_bench)

    p = sub.add_parser("eval", parents=[common], help="loop results + ground truth -> metrics")
    p.add_argument("ground_truth")
    p.add_argument("active", help="active graph at the final step")
    p.add_argument("results", nargs="+", help="one loop result per session step, in order")
    p.add_argument("-o", "--out")
    p.set_defaults(run=_cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.threads < 1:
            raise UsageError("sgloop: --threads must be at least 1")
        if getattr(args, "seeds", 1) < 1:
            raise UsageError("sgloop: --seeds must be at least 1")
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return USAGE_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config).with_seed(args.seed)
        return args.run(args, cfg)
    except (GraphError, ConfigError, PlacementError, OSError, ValueError, KeyError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
