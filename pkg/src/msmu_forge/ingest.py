"""Scene assets: in-memory types and the neutral on-disk layout.

A scene directory looks like::

    <scene_dir>/
        points.ply          vertex x, y, z (meters, world frame) + int instance_id
        instances.json      {"<instance_id>": "<category>", ...}
        trajectory.json     {"views": [{view_id, pose, fx, fy, cx, cy, width, height}, ...]}
        depth/<view_id>.png 16-bit single channel, millimeters, 0 = invalid
        color/<view_id>.png optional RGB frame (used for relabel / CoT crops)

``pose`` in trajectory.json is the 4x4 camera-to-world matrix, row-major.
The loader inverts it once; every in-memory ``CameraView.pose`` is
world-to-camera.

Instance id 0 marks unannotated points. They take part in occlusion but are
never turned into objects and need no entry in instances.json.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from plyfile import PlyData, PlyElement

from .errors import SceneLoadError, ValidationError

log = logging.getLogger(__name__)

POINTS_FILE = "points.ply"
INSTANCES_FILE = "instances.json"
TRAJECTORY_FILE = "trajectory.json"
DEPTH_DIR = "depth"
COLOR_DIR = "color"

DEPTH_SCALE = 1000.0  # PNG units per meter
_DEPTH_MAX_MM = np.iinfo(np.uint16).max
ORTHONORMAL_TOL = 1e-6


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self) -> None:
        for name in ("fx", "fy", "cx", "cy"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"intrinsics {name} is not finite")
        if self.fx <= 0 or self.fy <= 0:
            raise ValidationError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.fx, self.fy, self.cx, self.cy)

    def check_principal_point(self, width: int, height: int) -> bool:
        """Warn (never raise) when the principal point lies outside the image."""
        ok = 0 <= self.cx < width and 0 <= self.cy < height
        if not ok:
            log.warning("principal point (%.1f, %.1f) outside %dx%d image", self.cx, self.cy, width, height)
        return ok


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Metric depth in meters with an explicit validity mask.

    Invalid pixels always hold 0 in ``values``.
    """

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if values.ndim != 2 or values.shape != valid.shape:
            raise ValidationError(f"depth values {values.shape} and mask {valid.shape} must be equal 2D shapes")
        good = values[valid]
        if good.size and (not np.all(np.isfinite(good)) or np.any(good < 0)):
            raise ValidationError("valid depth entries must be finite and >= 0")
        values = np.where(valid, values, 0.0)
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "valid", _frozen(valid))

    @classmethod
    def from_array(cls, values: np.ndarray) -> "DepthMap":
        """Wrap a raw array; non-finite and non-positive entries become invalid."""
        values = np.asarray(values, dtype=np.float64)
        valid = np.isfinite(values) & (values > 0)
        return cls(np.where(valid, values, 0.0), valid)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]


def rigid_inverse(T: np.ndarray) -> np.ndarray:
    R = T[:3, :3]
    t = T[:3, 3]
    out = np.eye(4)
    out[:3, :3] = R.T
    out[:3, 3] = -R.T @ t
    return out


def validate_pose(T: np.ndarray, what: str = "pose") -> np.ndarray:
    T = np.asarray(T, dtype=np.float64)
    if T.shape != (4, 4):
        raise ValidationError(f"{what} must be 4x4, got {T.shape}")
    if not np.all(np.isfinite(T)):
        raise ValidationError(f"{what} has non-finite entries")
    if not np.allclose(T[3], [0.0, 0.0, 0.0, 1.0], atol=ORTHONORMAL_TOL, rtol=0):
        raise ValidationError(f"{what} bottom row must be [0, 0, 0, 1]")
    R = T[:3, :3]
    err = np.max(np.abs(R.T @ R - np.eye(3)))
    if err >= ORTHONORMAL_TOL:
        raise ValidationError(f"{what} rotation is not orthonormal (max |R^T R - I| = {err:.3g})")
    if np.linalg.det(R) <= 0:
        raise ValidationError(f"{what} rotation has determinant <= 0")
    return T


@dataclass(frozen=True, eq=False)
class CameraView:
    view_id: str
    intrinsics: Intrinsics
    pose: np.ndarray  # world-to-camera
    depth: DepthMap
    image_size: tuple[int, int]  # (H, W)
    image_path: Path | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "pose", _frozen(validate_pose(self.pose, f"view {self.view_id} pose")))
        H, W = (int(x) for x in self.image_size)
        object.__setattr__(self, "image_size", (H, W))
        if self.depth.shape != (H, W):
            raise ValidationError(
                f"view {self.view_id}: depth is {self.depth.shape[1]}x{self.depth.shape[0]} "
                f"but image size is {W}x{H}"
            )
        self.intrinsics.check_principal_point(W, H)

    @property
    def height(self) -> int:
        return self.image_size[0]

    @property
    def width(self) -> int:
        return self.image_size[1]

    @property
    def camera_to_world(self) -> np.ndarray:
        return rigid_inverse(self.pose)

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return points @ self.pose[:3, :3].T + self.pose[:3, 3]


@dataclass(frozen=True, eq=False)
class LabeledPointCloud:
    points: np.ndarray  # (N, 3) meters
    instance_ids: np.ndarray  # (N,) int64
    categories: dict[int, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        ids = np.asarray(self.instance_ids).reshape(-1)
        if ids.size and not np.issubdtype(ids.dtype, np.integer):
            if not np.all(ids == np.round(ids)):
                raise ValidationError("instance ids must be integers")
        ids = ids.astype(np.int64)
        if len(points) != len(ids):
            raise ValidationError(f"{len(points)} points but {len(ids)} instance ids")
        if not np.all(np.isfinite(points)):
            raise ValidationError("point coordinates must be finite")
        if ids.size and ids.min() < 0:
            raise ValidationError("instance ids must be non-negative")
        cats = {int(k): str(v) for k, v in self.categories.items()}
        present = {int(i) for i in np.unique(ids)} - {0}
        missing = sorted(present - cats.keys())
        if missing:
            raise ValidationError(f"instance ids without a category: {missing[:10]}")
        object.__setattr__(self, "points", _frozen(points))
        object.__setattr__(self, "instance_ids", _frozen(ids))
        object.__setattr__(self, "categories", cats)

    def __len__(self) -> int:
        return len(self.points)

    def instance_points(self, instance_id: int) -> np.ndarray:
        return self.points[self.instance_ids == instance_id]


def quantize_depth(values: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Meters -> uint16 millimeters, round half up, 0 for invalid pixels."""
    mm = np.floor(np.asarray(values, dtype=np.float64) * DEPTH_SCALE + 0.5)
    mm = np.where(valid, mm, 0)
    if np.any(mm > _DEPTH_MAX_MM):
        raise ValidationError(f"depth above {_DEPTH_MAX_MM / DEPTH_SCALE} m cannot be stored")
    return mm.astype(np.uint16)


def write_depth_png(depth: DepthMap, path: Path) -> None:
    Image.fromarray(quantize_depth(depth.values, depth.valid)).save(path)


def read_depth_png(path: Path) -> DepthMap:
    with Image.open(path) as im:
        raw = np.array(im)
    if raw.ndim != 2:
        raise SceneLoadError(f"{path}: depth must be single channel, got shape {raw.shape}")
    raw = raw.astype(np.float64)
    valid = raw > 0
    return DepthMap(raw / DEPTH_SCALE, valid)


def _read_json(path: Path):
    if not path.is_file():
        raise SceneLoadError(f"missing file: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SceneLoadError(f"{path}: invalid JSON ({exc})") from exc


def read_point_cloud(path: Path, categories: dict[int, str]) -> LabeledPointCloud:
    if not path.is_file():
        raise SceneLoadError(f"missing file: {path}")
    ply = PlyData.read(str(path))
    if "vertex" not in ply:
        raise SceneLoadError(f"{path}: no vertex element")
    v = ply["vertex"].data
    names = v.dtype.names or ()
    for prop in ("x", "y", "z", "instance_id"):
        if prop not in names:
            raise SceneLoadError(f"{path}: vertex property '{prop}' missing")
    pts = np.column_stack([v["x"], v["y"], v["z"]]).astype(np.float64)
    ids = np.asarray(v["instance_id"]).astype(np.int64)
    present = {int(i) for i in np.unique(ids)}
    unknown = sorted(set(categories) - present)
    if unknown:
        raise SceneLoadError(f"{INSTANCES_FILE} lists instance ids absent from the cloud: {unknown[:10]}")
    try:
        return LabeledPointCloud(pts, ids, categories)
    except ValidationError as exc:
        raise SceneLoadError(f"{path}: {exc}") from exc


def write_point_cloud(cloud: LabeledPointCloud, path: Path, binary: bool = True) -> None:
    vertex = np.empty(len(cloud), dtype=[("x", "f8"), ("y", "f8"), ("z", "f8"), ("instance_id", "i4")])
    vertex["x"], vertex["y"], vertex["z"] = cloud.points.T
    vertex["instance_id"] = cloud.instance_ids
    PlyData([PlyElement.describe(vertex, "vertex")], text=not binary).write(str(path))


def _parse_view(entry: dict, scene_dir: Path) -> CameraView:
    try:
        view_id = str(entry["view_id"])
        pose = np.asarray(entry["pose"], dtype=np.float64).reshape(4, 4)
        k = Intrinsics(float(entry["fx"]), float(entry["fy"]), float(entry["cx"]), float(entry["cy"]))
        W, H = int(entry["width"]), int(entry["height"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SceneLoadError(f"{TRAJECTORY_FILE}: malformed view entry {entry!r}: {exc}") from exc
    depth_path = scene_dir / DEPTH_DIR / f"{view_id}.png"
    if not depth_path.is_file():
        raise SceneLoadError(f"missing file: {depth_path}")
    depth = read_depth_png(depth_path)
    if depth.shape != (H, W):
        raise SceneLoadError(
            f"{depth_path}: depth is {depth.shape[1]}x{depth.shape[0]} but trajectory declares {W}x{H}"
        )
    try:
        c2w = validate_pose(pose, f"view {view_id} pose")
    except ValidationError as exc:
        raise SceneLoadError(str(exc)) from exc
    image_path = None
    for ext in (".png", ".jpg", ".jpeg"):
        p = scene_dir / COLOR_DIR / f"{view_id}{ext}"
        if p.is_file():
            image_path = p
            break
    return CameraView(view_id, k, rigid_inverse(c2w), depth, (H, W), image_path)


def load_scene(scene_dir: str | os.PathLike) -> tuple[LabeledPointCloud, list[CameraView]]:
    """Load and validate a scene directory. Views come back sorted by view_id."""
    scene_dir = Path(scene_dir)
    if not scene_dir.is_dir():
        raise SceneLoadError(f"missing scene directory: {scene_dir}")
    raw_cats = _read_json(scene_dir / INSTANCES_FILE)
    try:
        categories = {int(k): str(v) for k, v in raw_cats.items()}
    except (AttributeError, ValueError) as exc:
        raise SceneLoadError(f"{INSTANCES_FILE}: expected {{instance_id: label}} map") from exc
    cloud = read_point_cloud(scene_dir / POINTS_FILE, categories)
    traj = _read_json(scene_dir / TRAJECTORY_FILE)
    entries = traj.get("views", []) if isinstance(traj, dict) else None
    if entries is None:
        raise SceneLoadError(f"{TRAJECTORY_FILE}: expected an object with a 'views' list")
    views = [_parse_view(e, scene_dir) for e in entries]
    ids = [v.view_id for v in views]
    if len(set(ids)) != len(ids):
        raise SceneLoadError(f"{TRAJECTORY_FILE}: duplicate view ids")
    views.sort(key=lambda v: v.view_id)
    return cloud, views


def write_scene(
    cloud: LabeledPointCloud,
    views: list[CameraView],
    scene_dir: str | os.PathLike,
    colors: dict[str, np.ndarray] | None = None,
) -> None:
    """Write a scene directory that ``load_scene`` reads back.

    Depth is stored as millimeters, so reloaded depth differs from the input by
    at most 0.5 mm. ``colors`` optionally maps view_id to an HxWx3 uint8 frame.
    """
    scene_dir = Path(scene_dir)
    try:
        (scene_dir / DEPTH_DIR).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise SceneLoadError(f"cannot create {scene_dir}: {exc}") from exc
    write_point_cloud(cloud, scene_dir / POINTS_FILE)
    cats = {str(k): v for k, v in sorted(cloud.categories.items())}
    (scene_dir / INSTANCES_FILE).write_text(json.dumps(cats, indent=1) + "\n")
    entries = []
    for v in sorted(views, key=lambda v: v.view_id):
        k = v.intrinsics
        entries.append(
            {
                "view_id": v.view_id,
                "pose": v.camera_to_world.tolist(),
                "fx": k.fx,
                "fy": k.fy,
                "cx": k.cx,
                "cy": k.cy,
                "width": v.width,
                "height": v.height,
            }
        )
        write_depth_png(v.depth, scene_dir / DEPTH_DIR / f"{v.view_id}.png")
    (scene_dir / TRAJECTORY_FILE).write_text(json.dumps({"views": entries}, indent=1) + "\n")
    if colors:
        (scene_dir / COLOR_DIR).mkdir(exist_ok=True)
        for view_id, rgb in colors.items():
            Image.fromarray(np.asarray(rgb, dtype=np.uint8)).save(scene_dir / COLOR_DIR / f"{view_id}.png")


def scene_summary(cloud: LabeledPointCloud, views: list[CameraView]) -> dict:
    return {
        "points": len(cloud),
        "views": len(views),
        "instances": len(cloud.categories),
    }
