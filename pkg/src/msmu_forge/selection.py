"""Frame sampling, per-view object selection and label disambiguation."""

from __future__ import annotations

import io
import logging
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from PIL import Image

from .clients import clean_term
from .errors import ClientError, ValidationError
from .ingest import CameraView
from .projection import InstanceMask, PixelCoord, mask_centroid
from .scene_graph import SceneGraph

log = logging.getLogger(__name__)

DEFAULT_EXCLUDED = frozenset({"wall", "ceiling", "floor", "doorframe"})

ORDINALS = (
    "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth", "tenth",
    "eleventh", "twelfth", "thirteenth", "fourteenth", "fifteenth", "sixteenth", "seventeenth",
    "eighteenth", "nineteenth", "twentieth",
)


@dataclass(frozen=True)
class SelectionConfig:
    frame_stride: int = 20
    min_pixels: int = 50
    min_visible_fraction: float = 0.6
    border_margin: int = 2
    excluded_categories: frozenset[str] = DEFAULT_EXCLUDED
    crop_padding: float = 0.1
    relabel_all: bool = False
    max_in_flight: int = 4

    def __post_init__(self) -> None:
        object.__setattr__(self, "excluded_categories", frozenset(c.lower() for c in self.excluded_categories))
        if self.frame_stride < 1:
            raise ValidationError("frame_stride must be >= 1")
        if self.min_pixels <= 0 or self.border_margin < 0:
            raise ValidationError("min_pixels must be positive and border_margin non-negative")
        if not 0 < self.min_visible_fraction <= 1:
            raise ValidationError("min_visible_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class SelectedObject:
    instance_id: int
    category: str
    display_label: str
    grounding_uv: PixelCoord
    pixel_count: int
    visible_fraction: float
    bbox_uv: tuple[int, int, int, int]
    refined: bool = False


def sample_frames(views: list[CameraView], cfg: SelectionConfig) -> list[CameraView]:
    ordered = sorted(views, key=lambda v: v.view_id)
    return ordered[:: cfg.frame_stride]


def default_label(category: str) -> str:
    return f"the {category}"


def is_truncated(bbox_uv: tuple[int, int, int, int], shape: tuple[int, int], margin: int) -> bool:
    """True when the box reaches into the ``margin``-pixel frame along the image border."""
    H, W = shape
    u0, v0, u1, v1 = bbox_uv
    return u0 < margin or v0 < margin or u1 > W - 1 - margin or v1 > H - 1 - margin


def rejection_reason(graph: SceneGraph, mask: InstanceMask, instance_id: int, cfg: SelectionConfig) -> str | None:
    if instance_id not in graph:
        return "not in scene graph"
    obj = graph[instance_id]
    st = mask.stats.get(instance_id)
    if obj.category.lower() in cfg.excluded_categories:
        return "excluded category"
    if st is None or st.pixel_count < cfg.min_pixels:
        return "too small"
    if st.visible_fraction < cfg.min_visible_fraction:
        return "occluded"
    if is_truncated(st.bbox_uv, mask.shape, cfg.border_margin):
        return "truncated"
    return None


def select_objects(graph: SceneGraph, mask: InstanceMask, cfg: SelectionConfig) -> list[SelectedObject]:
    out = []
    for iid in mask.visible_ids():
        if rejection_reason(graph, mask, iid, cfg) is not None:
            continue
        obj = graph[iid]
        st = mask.stats[iid]
        out.append(
            SelectedObject(
                instance_id=iid,
                category=obj.category,
                display_label=default_label(obj.category),
                grounding_uv=mask_centroid(mask, iid),
                pixel_count=st.pixel_count,
                visible_fraction=st.visible_fraction,
                bbox_uv=st.bbox_uv,
            )
        )
    out.sort(key=lambda s: (-s.pixel_count, s.instance_id))
    return out


def crop_png(image_path: str | Path, bbox_uv: tuple[int, int, int, int], padding: float = 0.1) -> bytes:
    u0, v0, u1, v1 = bbox_uv
    pu = (u1 - u0 + 1) * padding
    pv = (v1 - v0 + 1) * padding
    with Image.open(image_path) as im:
        W, H = im.size
        box = (
            max(0, int(u0 - pu)),
            max(0, int(v0 - pv)),
            min(W, int(u1 + 1 + pu)),
            min(H, int(v1 + 1 + pv)),
        )
        buf = io.BytesIO()
        im.convert("RGB").crop(box).save(buf, format="PNG")
    return buf.getvalue()


def _normalize_term(term: str) -> str:
    term = " ".join(clean_term(term).split())
    if not term:
        raise ClientError("empty relabel term")
    low = term.lower()
    if not (low.startswith("the ") or low.startswith("a ") or low.startswith("an ")):
        term = "the " + term
    elif not low.startswith("the "):
        term = "the " + term.split(" ", 1)[1]
    return term[0].lower() + term[1:]


def _ordinal(i: int) -> str:
    if i < len(ORDINALS):
        return ORDINALS[i]
    n = i + 1
    suffix = "th" if 10 <= n % 100 <= 20 else {1: "st", 2: "nd", 3: "rd"}.get(n % 10, "th")
    return f"{n}{suffix}"


def ordinal_labels(group: list[SelectedObject]) -> dict[int, str]:
    ranked = sorted(group, key=lambda s: (-s.pixel_count, s.instance_id))
    return {s.instance_id: f"the {_ordinal(i)} {s.category}" for i, s in enumerate(ranked)}


def disambiguate(
    selected: list[SelectedObject],
    image: str | Path | None,
    client=None,
    cfg: SelectionConfig | None = None,
    view_id: str = "",
) -> list[SelectedObject]:
    """Give every selected object in one view a distinct display label.

    Same-category objects are relabelled by ``client`` from padded crops of
    ``image``. When the client is missing, offline or fails, or when its terms
    still collide, the group falls back to ordinal labels ranked by pixel count.
    """
    cfg = cfg or SelectionConfig()
    groups: dict[str, list[SelectedObject]] = defaultdict(list)
    for s in selected:
        groups[s.category].append(s)
    targets = [s for s in selected if cfg.relabel_all or len(groups[s.category]) > 1]
    labels = {s.instance_id: s.display_label for s in selected}
    refined: set[int] = set()
    if not targets:
        return list(selected)

    terms: dict[int, str | None] = {}
    usable = client is not None and not getattr(client, "offline", False) and image is not None and Path(image).is_file()
    if usable:
        def ask(s: SelectedObject) -> tuple[int, str | None]:
            try:
                return s.instance_id, _normalize_term(client.relabel(crop_png(image, s.bbox_uv, cfg.crop_padding)))
            except (ClientError, OSError) as exc:
                log.warning("view %s: relabel of instance %d failed (%s); using fallback", view_id, s.instance_id, exc)
                return s.instance_id, None

        with ThreadPoolExecutor(max_workers=max(1, cfg.max_in_flight)) as pool:
            terms = dict(pool.map(ask, targets))
    else:
        log.info("view %s: relabel client unavailable; ordinal fallback for %d objects", view_id, len(targets))

    fallback_groups: set[str] = set()
    for cat, group in groups.items():
        members = [s for s in group if s in targets]
        if not members:
            continue
        got = [terms.get(s.instance_id) for s in members]
        if len(group) > 1 and (any(t is None for t in got) or len(set(got)) < len(got)):
            fallback_groups.add(cat)
            continue
        for s, t in zip(members, got):
            if t is not None:
                labels[s.instance_id] = t
                refined.add(s.instance_id)

    def apply_fallback(cat: str) -> None:
        for iid, lab in ordinal_labels(groups[cat]).items():
            labels[iid] = lab
            refined.discard(iid)

    for cat in sorted(fallback_groups):
        apply_fallback(cat)

    # cross-group collisions, e.g. a refined term equal to another group's label
    for _ in range(len(groups) + 1):
        seen: dict[str, list[int]] = defaultdict(list)
        for s in selected:
            seen[labels[s.instance_id]].append(s.instance_id)
        clashes = [ids for ids in seen.values() if len(ids) > 1]
        if not clashes:
            break
        cats = {next(s.category for s in selected if s.instance_id == i) for ids in clashes for i in ids}
        progressed = False
        for cat in sorted(cats):
            if len(groups[cat]) > 1 and cat not in fallback_groups:
                fallback_groups.add(cat)
                apply_fallback(cat)
                progressed = True
        if not progressed:
            for ids in clashes:
                for i in ids[1:]:
                    labels[i] = f"{labels[i]} {i}"
    return [replace(s, display_label=labels[s.instance_id], refined=s.instance_id in refined) for s in selected]


def drop_empty_images(per_view: dict[str, list[SelectedObject]]) -> dict[str, list[SelectedObject]]:
    kept = {vid: objs for vid, objs in per_view.items() if objs}
    if per_view and not kept:
        log.warning("all %d views have zero selected objects", len(per_view))
    return kept
