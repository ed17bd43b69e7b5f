"""Independent re-derivation of every numeric a QA pair embeds.

Works from the raw labelled points and the instance grid only; it does not
call the scene-graph or QA code.
"""

import math
import re

import numpy as np

TOL = 1e-6


def box(points):
    lo, hi = points.min(axis=0), points.max(axis=0)
    ext = hi - lo
    return {
        "center": (lo + hi) / 2,
        "length": max(ext[0], ext[1]),
        "width": min(ext[0], ext[1]),
        "height": ext[2],
    }


def expected_value(num, cloud, grid, categories):
    pts = lambda i: cloud.points[cloud.instance_ids == i]  # noqa: E731
    if num.kind in ("length", "width", "height"):
        (i,) = num.objects
        return box(pts(i))[num.kind]
    if num.kind == "distance":
        a, b = num.objects
        return float(np.linalg.norm(box(pts(a))["center"] - box(pts(b))["center"]))
    if num.kind == "count":
        cats = {categories[i] for i in num.objects}
        assert len(cats) == 1, "counted objects must share a category"
        visible = {int(i) for i in np.unique(grid) if i and categories.get(int(i)) in cats}
        assert visible == set(num.objects), "count must cover exactly the visible instances"
        return len(num.objects)
    if num.kind in ("u", "v"):
        (i,) = num.objects
        rows, cols = np.nonzero(grid == i)
        mean = cols.mean() if num.kind == "u" else rows.mean()
        return math.floor(mean + 0.5)
    raise AssertionError(f"unknown numeric kind {num.kind}")


def numbers_in(text):
    return [float(x) for x in re.findall(r"\d+(?:\.\d+)?", text)]


def check_pair(pair, cloud, grid, categories):
    """List of problems with ``pair``; empty when every numeric is reproduced."""
    problems = []
    for num in pair.numerics:
        want = expected_value(num, cloud, grid, categories)
        if abs(num.value - want) > TOL:
            problems.append(f"{pair.qa_id} {num.name}: {num.value} vs oracle {want}")
    # every number printed in the answer is one of the recorded numerics, after rounding
    printed = numbers_in(pair.answer)
    left = list(pair.numerics)
    for x in printed:
        hit = next((n for n in left if abs(x - n.value) <= (0.005 + 1e-9 if n.unit == "m" else 0)), None)
        if hit is None:
            problems.append(f"{pair.qa_id}: printed {x} matches no numeric")
        else:
            left.remove(hit)
    if left:
        problems.append(f"{pair.qa_id}: numerics not printed: {[n.name for n in left]}")
    return problems


def random_scene(seed, n_boxes=6):
    """A second scene with randomly placed, non-overlapping boxes and a random camera ring."""
    from msmu_forge.ingest import CameraView, DepthMap, LabeledPointCloud
    from msmu_forge.projection import render_depth
    from msmu_forge.synthetic import IMAGE_SIZE, INTRINSICS, box_surface, look_at

    rng = np.random.default_rng(seed)
    cats = ["desk", "chair", "chair", "bookshelf", "lamp", "bed", "box", "stool"]
    pts, ids, names, placed = [], [], {}, []
    iid = 1
    while len(placed) < n_boxes:
        c = rng.uniform([-2.0, 1.0], [2.0, 4.0])
        size = rng.uniform([0.3, 0.3, 0.3], [1.5, 1.0, 1.8])
        if any(np.all(np.abs(c - pc) < (size[:2] + ps[:2]) / 2 + 0.1) for pc, ps in placed):
            continue
        placed.append((c, size))
        lo = np.array([c[0] - size[0] / 2, c[1] - size[1] / 2, 0.0])
        p = box_surface(lo, lo + size, 0.02)
        pts.append(p)
        ids.append(np.full(len(p), iid))
        names[iid] = cats[int(rng.integers(len(cats)))]
        iid += 1
    cloud = LabeledPointCloud(np.vstack(pts), np.concatenate(ids), names)
    views = []
    for i in range(3):
        eye = (rng.uniform(-1.0, 1.0), rng.uniform(-1.8, -1.0), rng.uniform(1.4, 2.0))
        pose = look_at(eye, (0.0, 2.5, 0.5))
        depth = render_depth(cloud, pose, INTRINSICS, IMAGE_SIZE)
        views.append(CameraView(f"{i:06d}", INTRINSICS, pose, DepthMap.from_array(depth), IMAGE_SIZE))
    return cloud, views
