"""Command-line entry point: ``msmu-forge <subcommand> ...``.

Exit codes: 0 ok, 1 runtime or partial failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import __version__
from .errors import MsmuError, ValidationError

log = logging.getLogger("msmu_forge")


class UsageError(Exception):
    """Bad combination of command-line arguments (exit status 2)."""


def _grid_arg(text: str) -> tuple[int, int]:
    try:
        h, w = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW, e.g. 24x24, got {text!r}") from None
    return h, w


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="YAML config file (flat dotted keys or nested)")
    p.add_argument("--seed", type=int, default=d, help="global RNG seed")
    p.add_argument("--offline", action="store_true", default=argparse.SUPPRESS if suppress else False, help="disable all network clients")
    p.add_argument("--jobs", type=int, default=d, help="scene-level worker processes")
    p.add_argument("--set", action="append", default=argparse.SUPPRESS if suppress else [], metavar="KEY=VALUE", help="override one config key")
    p.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS if suppress else 0)


def _scene_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument("scene", nargs="?", help="scene directory")
    p.add_argument("--scene", dest="scene_opt", metavar="DIR", help="scene directory (alternative to the positional form)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="msmu-forge", description="Metric spatial QA corpus tooling.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="load and validate a scene directory")
    _scene_arg(p)
    p.add_argument("--check", action="store_true", help="validate only and print a summary")

    p = sub.add_parser("graph", parents=[common], help="build the scene graph JSON")
    _scene_arg(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("rasterize", parents=[common], help="instance masks per sampled view")
    _scene_arg(p)
    p.add_argument("--dump-masks", metavar="DIR", help="write 16-bit instance-id PNGs here")
    p.add_argument("--all-views", action="store_true", help="ignore the frame stride")

    p = sub.add_parser("generate", parents=[common], help="QA pairs for one scene")
    _scene_arg(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("cot", parents=[common], help="CoT rewrites for reference-estimation pairs")
    p.add_argument("--qa", required=True, help="QA JSONL")
    p.add_argument("--scene", help="scene directory holding color/ frames")
    p.add_argument("--out", required=True)

    p = sub.add_parser("dpe", parents=[common], help="depth positional encoding of one depth map")
    p.add_argument("--depth", required=True, help="16-bit millimeter depth PNG")
    p.add_argument("--grid", type=_grid_arg, help="feature grid HxW")
    p.add_argument("--dim", type=int, help="embedding dimension (even)")
    p.add_argument("--alpha", type=float, help="normalization scale")
    p.add_argument("--out", required=True)

    p = sub.add_parser("calibrate", parents=[common], help="intrinsics from segment-length constraints")
    p.add_argument("--constraints", help="JSON file {segments: [{u1,v1,d1,u2,v2,d2,L}, ...]}")
    p.add_argument("--relative", action="store_true", help="depths are relative (fit d = a*d_rel + b too)")
    p.add_argument("--image-size", type=_grid_arg, help="HxW, used for the initial guess")
    p.add_argument("--trend", action="store_true", help="run the noise-robustness sweep instead")
    p.add_argument("--out")

    p = sub.add_parser("eval", parents=[common], help="score predictions against a QA corpus")
    p.add_argument("--truth", required=True)
    p.add_argument("--pred", required=True, help="JSONL of {qa_id, response}")
    p.add_argument("--threshold", type=float)
    p.add_argument("--extraction", choices=("local", "llm"))
    p.add_argument("--judge-url", help="chat-completions base URL for the LLM judge/extractor")
    p.add_argument("--judge-model")
    p.add_argument("--out", help="report JSON")
    p.add_argument("--records", help="per-item records JSONL")

    p = sub.add_parser("stats", parents=[common], help="per-category counts of a corpus")
    p.add_argument("corpus")

    p = sub.add_parser("run", parents=[common], help="full pipeline over the configured scene roots")
    p.add_argument("--scenes", nargs="*", help="scene roots (override config)")
    p.add_argument("--out", help="output directory (override config)")

    p = sub.add_parser("synth-scene", parents=[common], help="write the bundled synthetic scene")
    p.add_argument("out")
    return parser


def _config(args):
    from .config import load_config, parse_set

    over = parse_set(getattr(args, "set", []) or [])
    if args.seed is not None:
        over["seed"] = args.seed
    if args.offline:
        over["offline"] = True
    if args.jobs is not None:
        over["jobs"] = args.jobs
    if args.command == "run":
        if args.scenes:
            over["scene_roots"] = list(args.scenes)
        if args.out:
            over["output_dir"] = args.out
    if args.command == "eval":
        if args.threshold is not None:
            over["score.threshold"] = args.threshold
        if args.extraction:
            over["score.extraction"] = args.extraction
        if args.judge_url:
            over["clients.eval_judge.base_url"] = args.judge_url
            over.setdefault("score.judging", "llm")
        if args.judge_model:
            over["clients.eval_judge.model"] = args.judge_model
    if args.command == "dpe":
        if args.grid:
            over["dpe.grid"] = list(args.grid)
        if args.dim:
            over["dpe.embed_dim"] = args.dim
        if args.alpha:
            over["dpe.alpha"] = args.alpha
    return load_config(args.config, over)


def cmd_ingest(args, cfg) -> int:
    from .ingest import load_scene, scene_summary

    cloud, views = load_scene(args.scene)
    summary = scene_summary(cloud, views)
    print(json.dumps(summary, sort_keys=True) if args.check else json.dumps({"scene": Path(args.scene).name, **summary}, sort_keys=True))
    return 0


def cmd_graph(args, cfg) -> int:
    from .ingest import load_scene
    from .scene_graph import build_scene_graph

    cloud, _ = load_scene(args.scene)
    g = build_scene_graph(cloud, Path(args.scene).name)
    g.save(args.out, cfg.header())
    print(f"{len(g.objects)} objects, {len(g.dropped)} dropped -> {args.out}")
    return 0


def cmd_rasterize(args, cfg) -> int:
    from .ingest import load_scene
    from .projection import rasterize
    from .selection import sample_frames

    cloud, views = load_scene(args.scene)
    frames = views if args.all_views else sample_frames(views, cfg.selection)
    if args.dump_masks:
        Path(args.dump_masks).mkdir(parents=True, exist_ok=True)
    for v in frames:
        m = rasterize(cloud, v)
        if args.dump_masks:
            if m.grid.max(initial=0) > 65535:
                raise ValidationError("instance ids above 65535 cannot be stored in a 16-bit mask")
            Image.fromarray(m.grid.astype(np.uint16)).save(Path(args.dump_masks) / f"{v.view_id}.png")
        row = {str(i): {"pixels": s.pixel_count, "visible_fraction": round(s.visible_fraction, 4)} for i, s in sorted(m.stats.items())}
        print(json.dumps({"view_id": v.view_id, "low_confidence": m.low_confidence, "instances": row}, sort_keys=True))
    return 0


def cmd_generate(args, cfg) -> int:
    from .pipeline import generate_scene
    from .qa_gen import format_stats_table, write_jsonl

    pairs, stats, _, _ = generate_scene(Path(args.scene), cfg)
    write_jsonl(pairs, args.out, cfg.header())
    print(format_stats_table(stats["qa_pairs"]))
    return 0


def cmd_cot(args, cfg) -> int:
    from .clients import ChatClient
    from .cot import run_cot
    from .ingest import load_scene
    from .qa_gen import read_corpus, write_jsonl

    pairs = read_corpus(args.qa)
    images = {}
    if args.scene:
        images = {v.view_id: v.image_path for v in load_scene(args.scene)[1]}
    missing = [r for r in ("cot_generator", "cot_judge") if r not in cfg.clients]
    if cfg.offline or missing:
        log.warning("CoT skipped: %s", "offline" if cfg.offline else f"no client configured for {', '.join(missing)}")
        write_jsonl([], args.out, cfg.header())
        return 0
    with ChatClient(cfg.clients["cot_generator"]) as gen, ChatClient(cfg.clients["cot_judge"]) as judge:
        out = run_cot(pairs, lambda p: images.get(p.view_id), gen, judge, cfg.cot.accept_threshold)
    write_jsonl(out, args.out, cfg.header())
    print(f"{len(out)} rewrites, {sum(c.accepted for c in out)} accepted -> {args.out}")
    return 0


def cmd_dpe(args, cfg) -> int:
    from .dpe import encode, write_grid
    from .ingest import read_depth_png

    depth = read_depth_png(Path(args.depth))
    grid = encode(depth, cfg.dpe)
    write_grid(grid, args.out)
    h, w, d = grid.shape
    print(f"{h}x{w}x{d} depth embedding -> {args.out}")
    return 0


def cmd_calibrate(args, cfg) -> int:
    from .calib import METRIC, RELATIVE, CalibrationMode, calibrate, load_constraints
    from .pipeline import calibration_trend

    if args.trend:
        trend = calibration_trend(cfg)
        for r in trend["rows"]:
            print(f"N={r['n']:>4d}  median relative error {r['median_error']:.5f}")
        print("non-increasing" if trend["non_increasing"] else "NOT non-increasing")
        if args.out:
            Path(args.out).write_text(json.dumps(trend, indent=1, sort_keys=True) + "\n")
        return 0
    if not args.constraints:
        raise UsageError("calibrate needs --constraints (or --trend)")
    mode = CalibrationMode(variant=RELATIVE if args.relative else METRIC, image_size=args.image_size)
    res = calibrate(load_constraints(args.constraints), mode)
    text = json.dumps(res.to_dict(), indent=1, sort_keys=True)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return 0 if res.converged else 1


def cmd_eval(args, cfg) -> int:
    from .clients import ChatClient
    from .evalharness import aggregate, evaluate
    from .qa_gen import read_corpus, read_jsonl

    pairs = read_corpus(args.truth)
    preds = {d["qa_id"]: d.get("response", "") for d in read_jsonl(args.pred)}
    judge = None
    needs_llm = cfg.score.judging == "llm" or cfg.score.extraction == "llm"
    if needs_llm and not cfg.offline and "eval_judge" in cfg.clients:
        judge = ChatClient(cfg.clients["eval_judge"])
    elif needs_llm:
        log.warning("no judge client available; scoring locally")
    try:
        records = evaluate(pairs, preds, cfg.score, judge=judge, extractor=judge)
    finally:
        if judge:
            judge.close()
    report = aggregate(records, cfg.score.threshold)
    print(report.to_text())
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n")
    if args.records:
        with open(args.records, "w") as fh:
            for r in records:
                fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
    return 0


def cmd_stats(args, cfg) -> int:
    from .qa_gen import category_counts, format_stats_table, read_corpus

    print(format_stats_table(category_counts(read_corpus(args.corpus))))
    return 0


def cmd_run(args, cfg) -> int:
    from .pipeline import run_pipeline

    outcomes, stats = run_pipeline(cfg)
    for o in outcomes:
        print(f"{o.scene_id}: {o.status} ({o.qa_count} pairs)" + (f" - {o.error}" if o.error else ""))
    print(f"{stats['total_qa_pairs']} pairs -> {Path(cfg.output_dir) / 'corpus.jsonl'}")
    return 1 if any(o.status == "failed" for o in outcomes) else 0


def cmd_synth_scene(args, cfg) -> int:
    from .synthetic import make_scene

    cloud, views = make_scene(args.out)
    print(f"{len(cloud)} points, {len(views)} views -> {args.out}")
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "graph": cmd_graph,
    "rasterize": cmd_rasterize,
    "generate": cmd_generate,
    "cot": cmd_cot,
    "dpe": cmd_dpe,
    "calibrate": cmd_calibrate,
    "eval": cmd_eval,
    "stats": cmd_stats,
    "run": cmd_run,
    "synth-scene": cmd_synth_scene,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command in ("ingest", "graph", "rasterize", "generate"):
        args.scene = args.scene_opt or args.scene
        if not args.scene:
            parser.error(f"{args.command}: a scene directory is required")
    level = logging.WARNING - 10 * min(2, args.verbose)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
    except ValidationError as exc:
        print(f"msmu-forge: configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"msmu-forge: {exc}", file=sys.stderr)
        return 2
    except (MsmuError, OSError, ValueError) as exc:
        print(f"msmu-forge: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
