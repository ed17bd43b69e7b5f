"""Per-scene object registry with axis-aligned boxes and pairwise metrics."""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .ingest import LabeledPointCloud

log = logging.getLogger(__name__)

TIE_EPSILON = 0.01  # meters
MIN_INSTANCE_POINTS = 3
DISTANCE_MODES = ("centroid", "surface_aabb")


@dataclass(frozen=True)
class ObjectInstance:
    instance_id: int
    category: str
    centroid: tuple[float, float, float]
    dims: tuple[float, float, float]  # (length, width, height)
    point_count: int
    refined_label: str | None = None
    # raw (x, y, z) extents; dims reorders the horizontal pair
    xyz_extent: tuple[float, float, float] | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if any(not (d > 0) for d in self.dims):
            raise ValidationError(f"instance {self.instance_id}: dims must be > 0, got {self.dims}")

    @property
    def length(self) -> float:
        return self.dims[0]

    @property
    def width(self) -> float:
        return self.dims[1]

    @property
    def height(self) -> float:
        return self.dims[2]

    @property
    def volume(self) -> float:
        return self.dims[0] * self.dims[1] * self.dims[2]

    @property
    def label(self) -> str:
        return self.refined_label or self.category

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        """World-frame (min corner, max corner).

        Length/width are sorted extents, so the per-axis half sizes come from
        ``extent_xyz`` rather than from ``dims``.
        """
        c = np.asarray(self.centroid)
        half = np.asarray(self.extent_xyz) / 2.0
        return c - half, c + half

    @property
    def extent_xyz(self) -> tuple[float, float, float]:
        return self.xyz_extent if self.xyz_extent is not None else self.dims


@dataclass(frozen=True)
class DegenerateInstance:
    instance_id: int
    category: str
    point_count: int
    reason: str


@dataclass(frozen=True)
class SceneGraph:
    scene_id: str
    objects: tuple[ObjectInstance, ...]
    dropped: tuple[DegenerateInstance, ...] = ()
    up_axis: str = "+z"

    def __post_init__(self) -> None:
        ids = [o.instance_id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"scene {self.scene_id}: duplicate instance ids")

    def __getitem__(self, instance_id: int) -> ObjectInstance:
        for o in self.objects:
            if o.instance_id == instance_id:
                return o
        raise KeyError(instance_id)

    def __contains__(self, instance_id: object) -> bool:
        return any(o.instance_id == instance_id for o in self.objects)

    def categories(self) -> set[str]:
        return {o.category for o in self.objects}

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "up_axis": self.up_axis,
            "objects": [
                {
                    "instance_id": o.instance_id,
                    "category": o.category,
                    "refined_label": o.refined_label,
                    "centroid": list(o.centroid),
                    "dims": list(o.dims),
                    "extent_xyz": list(o.extent_xyz),
                    "point_count": o.point_count,
                }
                for o in self.objects
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneGraph":
        objs = []
        for o in d["objects"]:
            dims = tuple(float(x) for x in o["dims"])
            extent = tuple(float(x) for x in o.get("extent_xyz", dims))
            objs.append(
                ObjectInstance(
                    instance_id=int(o["instance_id"]),
                    category=o["category"],
                    centroid=tuple(float(x) for x in o["centroid"]),
                    dims=dims,
                    point_count=int(o["point_count"]),
                    refined_label=o.get("refined_label"),
                    xyz_extent=extent,
                )
            )
        return cls(d["scene_id"], tuple(objs), up_axis=d.get("up_axis", "+z"))

    def save(self, path: str | os.PathLike, header: dict | None = None) -> None:
        payload = self.to_dict()
        if header is not None:
            payload = {"header": header, **payload}
        Path(path).write_text(json.dumps(payload, indent=1) + "\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "SceneGraph":
        return cls.from_dict(json.loads(Path(path).read_text()))


def box_from_points(pts: np.ndarray) -> tuple[tuple[float, float, float], tuple[float, float, float], tuple[float, float, float]]:
    """(centroid, (length, width, height), per-axis extents) of an AABB."""
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    center = (lo + hi) / 2.0
    ext = hi - lo
    length, width = (float(ext[0]), float(ext[1])) if ext[0] >= ext[1] else (float(ext[1]), float(ext[0]))
    return (
        tuple(float(c) for c in center),
        (length, width, float(ext[2])),
        tuple(float(e) for e in ext),
    )


def build_scene_graph(cloud: LabeledPointCloud, scene_id: str) -> SceneGraph:
    objects = []
    dropped = []
    ids = cloud.instance_ids
    order = np.argsort(ids, kind="stable")
    sorted_ids = ids[order]
    uniq, starts = np.unique(sorted_ids, return_index=True)
    bounds = list(starts) + [len(sorted_ids)]
    for k, iid in enumerate(uniq):
        iid = int(iid)
        if iid == 0:
            continue
        pts = cloud.points[order[bounds[k] : bounds[k + 1]]]
        cat = cloud.categories[iid]
        if len(pts) < MIN_INSTANCE_POINTS:
            log.warning("scene %s: instance %d (%s) has %d points; dropped", scene_id, iid, cat, len(pts))
            dropped.append(DegenerateInstance(iid, cat, len(pts), "fewer than 3 points"))
            continue
        center, dims, ext = box_from_points(pts)
        if min(dims) <= 0:
            log.warning("scene %s: instance %d (%s) has a flat box; dropped", scene_id, iid, cat)
            dropped.append(DegenerateInstance(iid, cat, len(pts), "zero extent"))
            continue
        objects.append(ObjectInstance(iid, cat, center, dims, len(pts), xyz_extent=ext))
    return SceneGraph(scene_id, tuple(objects), tuple(dropped))


def with_refined_labels(graph: SceneGraph, labels: dict[int, str]) -> SceneGraph:
    objs = tuple(replace(o, refined_label=labels.get(o.instance_id, o.refined_label)) for o in graph.objects)
    return replace(graph, objects=objs)


def centroid_distance(a: ObjectInstance, b: ObjectInstance) -> float:
    return math.dist(a.centroid, b.centroid)


def aabb_distance(a: ObjectInstance, b: ObjectInstance) -> float:
    """Euclidean gap between two axis-aligned boxes (0 when they overlap)."""
    alo, ahi = a.aabb()
    blo, bhi = b.aabb()
    gap = np.maximum(0.0, np.maximum(alo - bhi, blo - ahi))
    return float(np.sqrt(np.sum(gap * gap)))


def object_distance(a: ObjectInstance, b: ObjectInstance, mode: str = "centroid") -> float:
    if mode == "centroid":
        return centroid_distance(a, b)
    if mode == "surface_aabb":
        return aabb_distance(a, b)
    raise ValueError(f"unknown distance_mode {mode!r}; expected one of {DISTANCE_MODES}")


class Ordering(Enum):
    FIRST = "first"  # a has the larger value
    SECOND = "second"
    TIE = "tie"


def scalar_attr(o: ObjectInstance, attr: str) -> float:
    if attr == "height":
        return o.height
    if attr == "volume":
        return o.volume
    raise ValueError(f"unknown comparison attribute {attr!r}")


def compare_scalar(a: ObjectInstance, b: ObjectInstance, attr: str, tie_epsilon: float = TIE_EPSILON) -> Ordering:
    va, vb = scalar_attr(a, attr), scalar_attr(b, attr)
    if abs(va - vb) < tie_epsilon:
        return Ordering.TIE
    return Ordering.FIRST if va > vb else Ordering.SECOND


def extreme_of(objs: list[ObjectInstance], attr: str, largest: bool = True, tie_epsilon: float = TIE_EPSILON) -> ObjectInstance | None:
    """The unique max (or min) of ``attr``; None if the runner-up is within tie_epsilon."""
    if not objs:
        return None
    vals = sorted(((scalar_attr(o, attr), i) for i, o in enumerate(objs)), reverse=largest)
    if len(vals) > 1 and abs(vals[0][0] - vals[1][0]) < tie_epsilon:
        return None
    return objs[vals[0][1]]
