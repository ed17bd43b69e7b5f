"""A small synthetic indoor scan: five furniture boxes on a floor in front of a wall.

Objects are sampled densely over their box surfaces (edges included), so the
box extents of every instance are known exactly. Sensor depth is rendered
from the labelled cloud with the same splatting the rasterizer uses.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .ingest import CameraView, DepthMap, Intrinsics, LabeledPointCloud, write_scene
from .projection import rasterize, render_depth


@dataclass(frozen=True)
class Box:
    instance_id: int
    category: str
    center_xy: tuple[float, float]
    size: tuple[float, float, float]  # x extent, y extent, z extent
    base_z: float = 0.0


SCENE_ID = "synthetic_room"

BOXES = (
    Box(1, "table", (0.0, 2.0), (1.2, 0.8, 0.75)),
    Box(2, "chair", (-1.05, 1.9), (0.5, 0.5, 0.9)),
    Box(3, "chair", (1.05, 2.1), (0.55, 0.5, 0.95)),
    Box(4, "cabinet", (-1.9, 3.3), (0.9, 0.5, 1.8)),
    Box(5, "sofa", (1.9, 3.3), (1.8, 0.9, 0.8)),
)
FLOOR_ID, WALL_ID = 6, 7
ROOM_X = (-3.0, 3.0)
ROOM_Y = (-2.0, 4.0)
WALL_HEIGHT = 2.8

INTRINSICS = Intrinsics(525.0, 525.0, 319.5, 239.5)
IMAGE_SIZE = (480, 640)  # (H, W)
EYES = (
    ((0.0, -1.4, 1.7), (0.0, 2.6, 0.55)),
    ((-0.5, -1.3, 1.6), (0.15, 2.6, 0.55)),
    ((0.5, -1.3, 1.8), (-0.15, 2.6, 0.55)),
)

PALETTE = {
    0: (40, 40, 40),
    1: (150, 100, 50),
    2: (200, 30, 30),
    3: (30, 60, 200),
    4: (230, 230, 220),
    5: (60, 140, 60),
    FLOOR_ID: (120, 120, 120),
    WALL_ID: (210, 200, 170),
}


def _axis(lo: float, hi: float, spacing: float) -> np.ndarray:
    n = max(2, int(math.ceil((hi - lo) / spacing)) + 1)
    return np.linspace(lo, hi, n)


def _grid(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    A, B = np.meshgrid(a, b, indexing="ij")
    return A.ravel(), B.ravel()


def box_surface(lo: np.ndarray, hi: np.ndarray, spacing: float) -> np.ndarray:
    """Points on all six faces of an axis-aligned box; corners land exactly on ``lo``/``hi``."""
    xs, ys, zs = (_axis(lo[i], hi[i], spacing) for i in range(3))
    faces = []
    for x in (lo[0], hi[0]):
        y, z = _grid(ys, zs)
        faces.append(np.column_stack([np.full_like(y, x), y, z]))
    for y in (lo[1], hi[1]):
        x, z = _grid(xs, zs)
        faces.append(np.column_stack([x, np.full_like(x, y), z]))
    for z in (lo[2], hi[2]):
        x, y = _grid(xs, ys)
        faces.append(np.column_stack([x, y, np.full_like(x, z)]))
    return np.unique(np.vstack(faces), axis=0)


def box_bounds(b: Box) -> tuple[np.ndarray, np.ndarray]:
    cx, cy = b.center_xy
    sx, sy, sz = b.size
    lo = np.array([cx - sx / 2, cy - sy / 2, b.base_z])
    return lo, lo + np.array([sx, sy, sz])


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """World-to-camera pose for a camera at ``eye`` facing ``target`` (x right, y down, z forward)."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd /= np.linalg.norm(fwd)
    right = np.cross(fwd, up)
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    c2w = np.eye(4)
    c2w[:3, :3] = np.column_stack([right, down, fwd])
    c2w[:3, 3] = eye
    w2c = np.eye(4)
    w2c[:3, :3] = c2w[:3, :3].T
    w2c[:3, 3] = -c2w[:3, :3].T @ eye
    return w2c


def build_cloud(object_spacing: float = 0.015, room_spacing: float = 0.03) -> LabeledPointCloud:
    pts, ids = [], []
    for b in BOXES:
        p = box_surface(*box_bounds(b), object_spacing)
        pts.append(p)
        ids.append(np.full(len(p), b.instance_id))
    fx, fy = _grid(_axis(*ROOM_X, room_spacing), _axis(*ROOM_Y, room_spacing))
    pts.append(np.column_stack([fx, fy, np.zeros_like(fx)]))
    ids.append(np.full(len(fx), FLOOR_ID))
    wx, wz = _grid(_axis(*ROOM_X, room_spacing), _axis(0.0, WALL_HEIGHT, room_spacing))
    pts.append(np.column_stack([wx, np.full_like(wx, ROOM_Y[1]), wz]))
    ids.append(np.full(len(wx), WALL_ID))
    cats = {b.instance_id: b.category for b in BOXES}
    cats.update({FLOOR_ID: "floor", WALL_ID: "wall"})
    return LabeledPointCloud(np.vstack(pts), np.concatenate(ids), cats)


def build_views(cloud: LabeledPointCloud) -> list[CameraView]:
    views = []
    for i, (eye, target) in enumerate(EYES):
        pose = look_at(eye, target)
        depth = render_depth(cloud, pose, INTRINSICS, IMAGE_SIZE)
        views.append(CameraView(f"{i:06d}", INTRINSICS, pose, DepthMap.from_array(depth), IMAGE_SIZE))
    return views


def color_frame(cloud: LabeledPointCloud, view: CameraView) -> np.ndarray:
    """Flat-shaded RGB frame: each pixel painted with its instance colour."""
    grid = rasterize(cloud, view).grid
    lut = np.zeros((max(PALETTE) + 1, 3), dtype=np.uint8)
    for k, rgb in PALETTE.items():
        lut[k] = rgb
    return lut[grid]


def make_scene(out_dir: str | os.PathLike, with_color: bool = True) -> tuple[LabeledPointCloud, list[CameraView]]:
    """Write the synthetic scene to ``out_dir`` in the standard scene layout."""
    cloud = build_cloud()
    views = build_views(cloud)
    colors = {v.view_id: color_frame(cloud, v) for v in views} if with_color else None
    write_scene(cloud, views, out_dir, colors)
    return cloud, views
