"""Pinhole projection, back-projection and z-buffered instance splatting.

Pixel convention: ``u`` is the column, ``v`` the row, origin at the top-left
pixel center. A point projected to (u, v) lands in pixel
(round(v), round(u)).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ContractError, NotVisibleError
from .ingest import CameraView, Intrinsics, LabeledPointCloud

log = logging.getLogger(__name__)

OCCLUSION_SLACK = 0.05  # meters
BASE_SPLAT_RADIUS = 2  # pixels at 640x480


class PixelCoord(NamedTuple):
    u: float
    v: float


class Point3(NamedTuple):
    X: float
    Y: float
    Z: float


def backproject(p: PixelCoord | tuple[float, float], d: float, k: Intrinsics) -> Point3:
    """Lift pixel ``p`` at metric depth ``d`` into the camera frame."""
    if not d > 0:
        raise ContractError(f"depth must be > 0, got {d}")
    u, v = p
    return Point3((u - k.cx) * d / k.fx, (v - k.cy) * d / k.fy, float(d))


def project(P: Point3 | tuple[float, float, float], k: Intrinsics) -> PixelCoord:
    X, Y, Z = P
    if not Z > 0:
        raise ContractError(f"point is behind the camera (Z={Z})")
    return PixelCoord(k.fx * X / Z + k.cx, k.fy * Y / Z + k.cy)


def backproject_many(uv: np.ndarray, d: np.ndarray, k: Intrinsics) -> np.ndarray:
    uv = np.asarray(uv, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if np.any(d <= 0):
        raise ContractError("all depths must be > 0")
    return np.column_stack([(uv[:, 0] - k.cx) * d / k.fx, (uv[:, 1] - k.cy) * d / k.fy, d])


def project_many(P: np.ndarray, k: Intrinsics) -> np.ndarray:
    P = np.asarray(P, dtype=np.float64)
    if np.any(P[:, 2] <= 0):
        raise ContractError("all points must have Z > 0")
    return np.column_stack([k.fx * P[:, 0] / P[:, 2] + k.cx, k.fy * P[:, 1] / P[:, 2] + k.cy])


def default_splat_radius(width: int, height: int) -> int:
    scale = max(width / 640.0, height / 480.0)
    return max(1, int(math.floor(BASE_SPLAT_RADIUS * scale + 0.5)))


def disc_offsets(radius: int) -> np.ndarray:
    r = int(radius)
    dv, du = np.mgrid[-r : r + 1, -r : r + 1]
    keep = du * du + dv * dv <= r * r
    return np.column_stack([dv[keep], du[keep]])


@dataclass(frozen=True)
class InstanceStats:
    pixel_count: int
    centroid_uv: tuple[float, float]
    bbox_uv: tuple[int, int, int, int]  # (u_min, v_min, u_max, v_max), inclusive
    visible_fraction: float
    footprint: int  # pixels covered with no competition and no occlusion test


@dataclass(frozen=True, eq=False)
class InstanceMask:
    view_id: str
    grid: np.ndarray  # (H, W) int64, 0 = background
    zbuffer: np.ndarray  # (H, W) winning splat depth, inf where empty
    stats: dict[int, InstanceStats] = field(default_factory=dict)
    low_confidence: bool = False

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape  # type: ignore[return-value]

    def visible_ids(self) -> list[int]:
        return sorted(i for i, s in self.stats.items() if s.pixel_count > 0)


def _splat(cam_pts: np.ndarray, ids: np.ndarray, k: Intrinsics, H: int, W: int, radius: int):
    """Expand every in-front point to its disc of pixels.

    Returns flat pixel index, depth, instance id per (point, offset) pair that
    lands inside the image.
    """
    front = cam_pts[:, 2] > 0
    cam_pts = cam_pts[front]
    ids = ids[front]
    if len(cam_pts) == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, np.empty(0), empty
    z = cam_pts[:, 2]
    u = k.fx * cam_pts[:, 0] / z + k.cx
    v = k.fy * cam_pts[:, 1] / z + k.cy
    # round half up keeps pixel assignment independent of banker's rounding
    col = np.floor(u + 0.5)
    row = np.floor(v + 0.5)
    near = (col >= -radius) & (col < W + radius) & (row >= -radius) & (row < H + radius)
    col, row, z, ids = col[near].astype(np.int64), row[near].astype(np.int64), z[near], ids[near]
    offs = disc_offsets(radius)
    rr = (row[:, None] + offs[None, :, 0]).ravel()
    cc = (col[:, None] + offs[None, :, 1]).ravel()
    zz = np.repeat(z, len(offs))
    ii = np.repeat(ids, len(offs))
    inside = (rr >= 0) & (rr < H) & (cc >= 0) & (cc < W)
    return rr[inside] * W + cc[inside], zz[inside], ii[inside]


def _zbuffer_winners(flat: np.ndarray, z: np.ndarray, ids: np.ndarray):
    """Nearest splat per pixel; ties go to the smaller instance id."""
    if len(flat) == 0:
        return flat, z, ids
    order = np.lexsort((ids, z, flat))
    flat, z, ids = flat[order], z[order], ids[order]
    first = np.ones(len(flat), dtype=bool)
    first[1:] = flat[1:] != flat[:-1]
    return flat[first], z[first], ids[first]


def render_depth(cloud: LabeledPointCloud, view_pose: np.ndarray, k: Intrinsics, image_size: tuple[int, int], splat_radius: int | None = None) -> np.ndarray:
    """Z-buffered splat depth image (0 where nothing lands). Used to fake sensor depth."""
    H, W = image_size
    radius = default_splat_radius(W, H) if splat_radius is None else splat_radius
    cam = cloud.points @ np.asarray(view_pose)[:3, :3].T + np.asarray(view_pose)[:3, 3]
    flat, z, _ = _splat(cam, cloud.instance_ids, k, H, W, radius)
    flat, z, _ = _zbuffer_winners(flat, z, np.zeros_like(flat))
    out = np.zeros(H * W)
    out[flat] = z
    return out.reshape(H, W)


def rasterize(
    cloud: LabeledPointCloud,
    view: CameraView,
    splat_radius: int | None = None,
    occlusion_slack: float = OCCLUSION_SLACK,
) -> InstanceMask:
    """Splat the labelled cloud into ``view`` and label each pixel with the nearest instance.

    A splat is discarded where the sensor depth is valid and the splat lies
    more than ``occlusion_slack`` behind it. ``visible_fraction`` compares the
    pixels an instance wins against the pixels it would cover alone.
    """
    H, W = view.image_size
    radius = default_splat_radius(W, H) if splat_radius is None else int(splat_radius)
    if radius < 0:
        raise ContractError("splat_radius must be >= 0")
    cam = view.world_to_camera(cloud.points)
    flat, z, ids = _splat(cam, cloud.instance_ids, view.intrinsics, H, W, radius)

    # footprint ignores other instances and the sensor test
    foot_keys = np.unique(ids * (H * W) + flat)
    foot_ids, foot_counts = np.unique(foot_keys // (H * W), return_counts=True)
    footprint = dict(zip(foot_ids.tolist(), foot_counts.tolist()))

    sensor_valid = view.depth.valid.ravel()
    low_conf = not sensor_valid.any()
    if low_conf:
        log.warning("view %s: no valid sensor depth; z-buffer only, low confidence", view.view_id)
    else:
        sensor = view.depth.values.ravel()
        keep = ~sensor_valid[flat] | (z <= sensor[flat] + occlusion_slack)
        flat, z, ids = flat[keep], z[keep], ids[keep]

    flat, z, ids = _zbuffer_winners(flat, z, ids)
    grid = np.zeros(H * W, dtype=np.int64)
    grid[flat] = ids
    zbuf = np.full(H * W, np.inf)
    zbuf[flat] = z
    grid = grid.reshape(H, W)
    zbuf = zbuf.reshape(H, W)
    grid.setflags(write=False)
    zbuf.setflags(write=False)

    stats = {}
    rows, cols = np.nonzero(grid)
    labels = grid[rows, cols]
    order = np.argsort(labels, kind="stable")
    rows, cols, labels = rows[order], cols[order], labels[order]
    uniq, starts, counts = np.unique(labels, return_index=True, return_counts=True)
    for iid, s, n in zip(uniq.tolist(), starts.tolist(), counts.tolist()):
        r = rows[s : s + n]
        c = cols[s : s + n]
        fp = footprint.get(iid, n)
        stats[iid] = InstanceStats(
            pixel_count=n,
            centroid_uv=(float(c.mean()), float(r.mean())),
            bbox_uv=(int(c.min()), int(r.min()), int(c.max()), int(r.max())),
            visible_fraction=min(1.0, n / fp) if fp else 0.0,
            footprint=fp,
        )
    for iid, fp in footprint.items():
        if iid != 0 and iid not in stats:
            stats[iid] = InstanceStats(0, (math.nan, math.nan), (-1, -1, -1, -1), 0.0, fp)
    stats.pop(0, None)
    return InstanceMask(view.view_id, grid, zbuf, stats, low_conf)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def mask_centroid(mask: InstanceMask, instance_id: int) -> PixelCoord:
    """Integer grounding coordinate: mean pixel of the instance, rounded half up."""
    st = mask.stats.get(instance_id)
    if st is None or st.pixel_count == 0:
        raise NotVisibleError(f"instance {instance_id} is not visible in view {mask.view_id}")
    u, v = st.centroid_uv
    return PixelCoord(round_half_up(u), round_half_up(v))
