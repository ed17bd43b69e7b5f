"""End-to-end corpus generation over a set of scene directories.

Layout under ``output_dir``::

    scenes/<scene_id>/scene_graph.json
    scenes/<scene_id>/qa.jsonl
    scenes/<scene_id>/cot.jsonl      (only when CoT is enabled)
    scenes/<scene_id>/done.json      (config hash + input digest; written last)
    corpus.jsonl, cot.jsonl, stats.json

A scene is skipped when its ``done.json`` matches the current config hash and
input digest, so deleting a scene's directory regenerates just that scene.
"""

from __future__ import annotations

import hashlib
import json
import logging
import shutil
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import httpx

from .calib import CalibrationMode, noise_trend
from .clients import ChatClient, RelabelClient
from .config import PipelineConfig
from .cot import run_cot
from .ingest import Intrinsics, load_scene
from .projection import rasterize
from .qa_gen import QaPair, category_counts, generate_for_view, read_jsonl, write_jsonl
from .scene_graph import build_scene_graph
from .selection import disambiguate, rejection_reason, sample_frames, select_objects
from .templates import CATEGORIES

log = logging.getLogger(__name__)

SCENE_FILES = ("points.ply", "instances.json", "trajectory.json")


@dataclass
class SceneOutcome:
    scene_id: str
    status: str  # generated | skipped | failed
    qa_count: int = 0
    error: str | None = None
    stats: dict = field(default_factory=dict)


def discover_scenes(roots: tuple[str, ...]) -> list[Path]:
    """A root is either a scene directory itself or a directory of scene directories."""
    found: dict[str, Path] = {}
    for r in roots:
        root = Path(r)
        cands = [root] if (root / "trajectory.json").is_file() else sorted(p for p in root.iterdir() if p.is_dir())
        for p in cands:
            if p.name in found and found[p.name].resolve() != p.resolve():
                raise ValueError(f"duplicate scene id {p.name!r} under {found[p.name]} and {p}")
            found[p.name] = p
    return [found[k] for k in sorted(found)]


def input_digest(scene_dir: Path) -> str:
    h = hashlib.sha256()
    files = [scene_dir / f for f in SCENE_FILES]
    for sub in ("depth", "color"):
        if (scene_dir / sub).is_dir():
            files.extend(sorted((scene_dir / sub).iterdir()))
    for f in files:
        if not f.is_file():
            continue
        h.update(str(f.relative_to(scene_dir)).encode() + b"\0")
        with open(f, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    return h.hexdigest()


def _client(cfg: PipelineConfig, role: str, transport: httpx.BaseTransport | None) -> ChatClient | None:
    if cfg.offline or role not in cfg.clients:
        return None
    return ChatClient(cfg.clients[role], transport=transport)


def _is_current(out: Path, cfg: PipelineConfig, digest: str) -> bool:
    done = out / "done.json"
    if not done.is_file():
        return False
    try:
        d = json.loads(done.read_text())
    except ValueError:
        return False
    if d.get("config_hash") != cfg.config_hash or d.get("input_digest") != digest:
        return False
    return all((out / f).is_file() for f in d.get("files", []))


def generate_scene(scene_dir: Path, cfg: PipelineConfig, transport: httpx.BaseTransport | None = None):
    """QA pairs, per-scene stats, the scene graph and the colour image of each view."""
    scene_id = scene_dir.name
    cloud, views = load_scene(scene_dir)
    graph = build_scene_graph(cloud, scene_id)
    relabel_chat = _client(cfg, "relabel", transport)
    relabel = RelabelClient(relabel_chat) if relabel_chat else None
    rejections: Counter = Counter()
    frames = sample_frames(views, cfg.selection)
    pairs: list[QaPair] = []
    empty_views = 0
    low_conf = 0
    try:
        for view in frames:
            mask = rasterize(cloud, view)
            low_conf += mask.low_confidence
            for iid in mask.visible_ids():
                reason = rejection_reason(graph, mask, iid, cfg.selection)
                if reason:
                    rejections[reason] += 1
            sel = select_objects(graph, mask, cfg.selection)
            if not sel:
                empty_views += 1
                continue
            sel = disambiguate(sel, view.image_path, relabel, cfg.selection, view.view_id)
            pairs.extend(
                generate_for_view(graph, sel, mask, view, cfg.qa, cfg.seed, cfg.selection.excluded_categories)
            )
    finally:
        if relabel_chat:
            relabel_chat.close()
    if frames and empty_views == len(frames):
        log.warning("scene %s: no view has a selectable object", scene_id)
    stats = {
        "views": len(views),
        "sampled_views": len(frames),
        "empty_views": empty_views,
        "low_confidence_views": low_conf,
        "objects": len(graph.objects),
        "dropped_instances": len(graph.dropped),
        "rejections": dict(sorted(rejections.items())),
        "qa_pairs": category_counts(pairs),
    }
    return pairs, stats, graph, {v.view_id: v.image_path for v in views}


def process_scene(scene_dir: Path, cfg: PipelineConfig, transport: httpx.BaseTransport | None = None) -> SceneOutcome:
    scene_id = scene_dir.name
    out = Path(cfg.output_dir) / "scenes" / scene_id
    try:
        digest = input_digest(scene_dir)
        if _is_current(out, cfg, digest):
            stats = json.loads((out / "done.json").read_text()).get("stats", {})
            return SceneOutcome(scene_id, "skipped", sum(stats.get("qa_pairs", {}).values()), stats=stats)
        pairs, stats, graph, images = generate_scene(scene_dir, cfg, transport)
        tmp = out.with_name(out.name + ".partial")
        shutil.rmtree(tmp, ignore_errors=True)
        tmp.mkdir(parents=True)
        header = cfg.header()
        graph.save(tmp / "scene_graph.json", header)
        write_jsonl(pairs, tmp / "qa.jsonl", header)
        files = ["scene_graph.json", "qa.jsonl"]
        if cfg.cot.enabled:
            files.append("cot.jsonl")
            gen, judge = _client(cfg, "cot_generator", transport), _client(cfg, "cot_judge", transport)
            cot = []
            if gen and judge:
                try:
                    cot = run_cot(pairs, lambda p: images.get(p.view_id), gen, judge, cfg.cot.accept_threshold)
                finally:
                    gen.close()
                    judge.close()
            else:
                log.info("scene %s: CoT clients unavailable; CoT skipped", scene_id)
            write_jsonl(cot, tmp / "cot.jsonl", header)
            stats["cot"] = {"candidates": len(cot), "accepted": sum(c.accepted for c in cot)}
        done = {"config_hash": cfg.config_hash, "input_digest": digest, "files": files, "header": header, "stats": stats}
        (tmp / "done.json").write_text(json.dumps(done, indent=1, sort_keys=True) + "\n")
        shutil.rmtree(out, ignore_errors=True)
        tmp.rename(out)
        return SceneOutcome(scene_id, "generated", len(pairs), stats=stats)
    except Exception as exc:  # one bad scene must not stop the run
        log.error("scene %s failed: %s", scene_id, exc)
        return SceneOutcome(scene_id, "failed", error=f"{type(exc).__name__}: {exc}")


def _process_scene_job(args: tuple[str, PipelineConfig]) -> SceneOutcome:
    logging.basicConfig(level=logging.WARNING)
    return process_scene(Path(args[0]), args[1])


def calibration_trend(cfg: PipelineConfig) -> dict:
    c = cfg.calib
    k = Intrinsics(*c.reference_intrinsics)
    rows = noise_trend(k, ns=c.trend_ns, seeds=c.trend_seeds, sigma=c.noise_sigma, mode=CalibrationMode(variant=c.variant))
    med = [r["median_error"] for r in rows]
    return {
        "reference_intrinsics": list(c.reference_intrinsics),
        "noise": "gaussian depth noise, sigma in meters",
        "rows": rows,
        "non_increasing": all(b <= a for a, b in zip(med, med[1:])),
    }


def assemble(cfg: PipelineConfig, outcomes: list[SceneOutcome]) -> dict:
    """Merge per-scene outputs into the corpus files and the stats report."""
    out = Path(cfg.output_dir)
    header = cfg.header()
    ok = sorted((o for o in outcomes if o.status != "failed"), key=lambda o: o.scene_id)
    records: list[dict] = []
    cot_records: list[dict] = []
    for o in ok:
        records.extend(read_jsonl(out / "scenes" / o.scene_id / "qa.jsonl"))
        cot_path = out / "scenes" / o.scene_id / "cot.jsonl"
        if cfg.cot.enabled and cot_path.is_file():
            cot_records.extend(read_jsonl(cot_path))
    write_jsonl(records, out / "corpus.jsonl", header)
    if cfg.cot.enabled:
        write_jsonl(cot_records, out / "cot.jsonl", header)
    totals = Counter(r["category"] for r in records)
    stats = {
        "header": header,
        "scenes": {o.scene_id: o.stats for o in ok},
        "failed_scenes": {o.scene_id: o.error for o in outcomes if o.status == "failed"},
        "qa_pairs": {c: totals.get(c, 0) for c in CATEGORIES},
        "total_qa_pairs": len(records),
        "calibration_noise_trend": calibration_trend(cfg),
    }
    (out / "stats.json").write_text(json.dumps(stats, indent=1, sort_keys=True) + "\n")
    return stats


def run_pipeline(cfg: PipelineConfig, transport: httpx.BaseTransport | None = None) -> tuple[list[SceneOutcome], dict]:
    """Process every scene (in parallel when ``cfg.jobs > 1``), then assemble corpus and stats.

    ``transport`` is handed to every HTTP client in the in-process path; it is
    how tests prove that offline runs never touch the network.
    """
    cfg.validate_paths()
    scenes = discover_scenes(cfg.scene_roots)
    Path(cfg.output_dir, "scenes").mkdir(parents=True, exist_ok=True)
    if cfg.jobs > 1 and len(scenes) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            outcomes = list(ex.map(_process_scene_job, [(str(s), cfg) for s in scenes]))
    else:
        outcomes = [process_scene(s, cfg, transport) for s in scenes]
    for o in outcomes:
        log.info("scene %s: %s (%d pairs)", o.scene_id, o.status, o.qa_count)
    stats = assemble(cfg, outcomes)
    return outcomes, stats
