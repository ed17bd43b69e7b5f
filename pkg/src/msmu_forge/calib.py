"""Recover pinhole intrinsics from pixel segments of known physical length.

Each segment contributes one residual

    E_i = ||d1 K^-1 p1 - d2 K^-1 p2||^2 - L_i^2

and the intrinsics minimize ||r||^2 with a Levenberg-Marquardt loop. With a
relative depth map (d = a * d_rel + b) the affine pair (a, b) joins the
unknowns.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CalibrationError, ValidationError
from .ingest import Intrinsics

METRIC = "metric_depth"
RELATIVE = "relative_depth"
MIN_SEGMENTS = {METRIC: 4, RELATIVE: 6}


@dataclass(frozen=True)
class SegmentConstraint:
    p1: tuple[float, float]
    p2: tuple[float, float]
    d1: float
    d2: float
    L: float

    def __post_init__(self) -> None:
        if not self.L > 0:
            raise ValidationError(f"segment length must be > 0, got {self.L}")
        if not (self.d1 > 0 and self.d2 > 0):
            raise ValidationError(f"endpoint depths must be > 0, got {self.d1}, {self.d2}")

    def to_dict(self) -> dict:
        return {"u1": self.p1[0], "v1": self.p1[1], "d1": self.d1, "u2": self.p2[0], "v2": self.p2[1], "d2": self.d2, "L": self.L}

    @classmethod
    def from_dict(cls, d: dict) -> "SegmentConstraint":
        return cls((float(d["u1"]), float(d["v1"])), (float(d["u2"]), float(d["v2"])), float(d["d1"]), float(d["d2"]), float(d["L"]))


@dataclass(frozen=True)
class CalibrationMode:
    variant: str = METRIC
    initial: tuple[float, ...] | None = None  # (fx, fy, cx, cy[, a, b])
    image_size: tuple[int, int] | None = None  # (H, W), used for the default guess
    max_iterations: int = 200
    gtol: float = 1e-10
    xtol: float = 1e-12
    residual_kind: str = "squared"  # squared | length
    lambda0: float = 1e-3
    max_rejections: int = 30

    def __post_init__(self) -> None:
        if self.variant not in MIN_SEGMENTS:
            raise ValidationError(f"unknown calibration variant {self.variant!r}")
        if self.residual_kind not in ("squared", "length"):
            raise ValidationError(f"unknown residual kind {self.residual_kind!r}")

    @property
    def n_params(self) -> int:
        return 4 if self.variant == METRIC else 6


@dataclass
class CalibrationResult:
    intrinsics: Intrinsics | None
    params: np.ndarray
    relative: tuple[float, float] | None
    cost: float  # ||r||^2
    iterations: int
    converged: bool
    gradient_measure: float
    stop_reason: str
    condition_number: float
    cost_history: list[float] = field(default_factory=list)
    seconds: float = 0.0

    def to_dict(self) -> dict:
        k = self.intrinsics
        return {
            "fx": k.fx if k else None,
            "fy": k.fy if k else None,
            "cx": k.cx if k else None,
            "cy": k.cy if k else None,
            "a": self.relative[0] if self.relative else None,
            "b": self.relative[1] if self.relative else None,
            "residual_norm_sq": self.cost,
            "iterations": self.iterations,
            "converged": self.converged,
            "gradient_measure": self.gradient_measure,
            "stop_reason": self.stop_reason,
            "condition_number": self.condition_number,
        }


def _arrays(constraints: list[SegmentConstraint]) -> tuple[np.ndarray, ...]:
    a = np.array([(c.p1[0], c.p1[1], c.d1, c.p2[0], c.p2[1], c.d2, c.L) for c in constraints], dtype=np.float64)
    return tuple(a.T)


def segment_sq_lengths(params: np.ndarray, data: tuple[np.ndarray, ...], variant: str = METRIC) -> np.ndarray:
    """E_i for every segment under ``params``."""
    u1, v1, d1, u2, v2, d2, _ = data
    fx, fy, cx, cy = params[:4]
    if variant == RELATIVE:
        a, b = params[4], params[5]
        d1 = a * d1 + b
        d2 = a * d2 + b
    dx = ((u1 - cx) * d1 - (u2 - cx) * d2) / fx
    dy = ((v1 - cy) * d1 - (v2 - cy) * d2) / fy
    dz = d1 - d2
    return dx * dx + dy * dy + dz * dz


def residual_vector(params: np.ndarray, data: tuple[np.ndarray, ...], variant: str = METRIC, kind: str = "squared") -> np.ndarray:
    E = segment_sq_lengths(params, data, variant)
    L = data[6]
    if kind == "squared":
        return E - L * L
    return np.sqrt(E) - L


def residual(c: SegmentConstraint, k: Intrinsics) -> float:
    """Squared-length residual of one segment under metric depth."""
    return float(residual_vector(np.array(k.as_tuple()), _arrays([c]))[0])


def metric_jacobian(params: np.ndarray, data: tuple[np.ndarray, ...], kind: str = "squared") -> np.ndarray:
    u1, v1, d1, u2, v2, d2, _ = data
    fx, fy, cx, cy = params
    dd = d1 - d2
    A = u1 * d1 - u2 * d2 - cx * dd
    B = v1 * d1 - v2 * d2 - cy * dd
    J = np.column_stack(
        [
            -2.0 * A * A / fx**3,
            -2.0 * B * B / fy**3,
            -2.0 * A * dd / fx**2,
            -2.0 * B * dd / fy**2,
        ]
    )
    if kind == "length":
        E = A * A / fx**2 + B * B / fy**2 + dd * dd
        J = J / (2.0 * np.sqrt(np.maximum(E, 1e-300)))[:, None]
    return J


def numeric_jacobian(fun, params: np.ndarray, rel_step: float = 1e-6) -> np.ndarray:
    """Central differences with h = rel_step * max(|p|, 1)."""
    r0 = fun(params)
    J = np.empty((r0.size, params.size))
    for j in range(params.size):
        h = rel_step * max(abs(params[j]), 1.0)
        hi = params.copy()
        lo = params.copy()
        hi[j] += h
        lo[j] -= h
        J[:, j] = (fun(hi) - fun(lo)) / (2.0 * h)
    return J


def gradient_measure(J: np.ndarray, r: np.ndarray, target_norm: float) -> float:
    """Scale-free gradient norm: max_j |(J^T r)_j| / (||J_j|| * ||target||).

    ``target_norm`` is the norm of the fitted values (L^2 or L), so the
    measure vanishes at any stationary point, including exact fits where
    ``r`` is pure round-off.
    """
    cn = np.linalg.norm(J, axis=0)
    g = np.abs(J.T @ r)
    with np.errstate(divide="ignore", invalid="ignore"):
        m = np.where(cn > 0, g / (cn * target_norm), 0.0)
    return float(m.max())


def scaled_condition(J: np.ndarray) -> float:
    cn = np.linalg.norm(J, axis=0)
    cn[cn == 0] = 1.0
    s = np.linalg.svd(J / cn, compute_uv=False)
    return float(s[0] / s[-1]) if s[-1] > 0 else math.inf


def default_initial(mode: CalibrationMode, constraints: list[SegmentConstraint]) -> np.ndarray:
    if mode.initial is not None:
        p = np.array(mode.initial, dtype=np.float64)
        if p.size == 4 and mode.variant == RELATIVE:
            p = np.concatenate([p, [1.0, 0.0]])
        if p.size != mode.n_params:
            raise CalibrationError(f"initial guess needs {mode.n_params} values, got {p.size}")
    else:
        if mode.image_size is not None:
            H, W = mode.image_size
        else:
            us = [x for c in constraints for x in (c.p1[0], c.p2[0])]
            vs = [y for c in constraints for y in (c.p1[1], c.p2[1])]
            W, H = math.ceil(max(us)) + 1, math.ceil(max(vs)) + 1
        p = np.array([max(W, H), max(W, H), W / 2.0, H / 2.0] + ([1.0, 0.0] if mode.variant == RELATIVE else []), dtype=np.float64)
    if p[0] <= 0 or p[1] <= 0:
        raise CalibrationError("initial focal lengths must be positive")
    return p


def calibrate(constraints: list[SegmentConstraint], mode: CalibrationMode | None = None) -> CalibrationResult:
    mode = mode or CalibrationMode()
    need = MIN_SEGMENTS[mode.variant]
    if len(constraints) < need:
        raise CalibrationError(f"{mode.variant} calibration needs at least {need} segments, got {len(constraints)}")
    t0 = time.perf_counter()
    data = _arrays(constraints)
    kind = mode.residual_kind

    def fun(p: np.ndarray) -> np.ndarray:
        return residual_vector(p, data, mode.variant, kind)

    if mode.variant == METRIC:
        def jac(p: np.ndarray) -> np.ndarray:
            return metric_jacobian(p, data, kind)
    else:
        def jac(p: np.ndarray) -> np.ndarray:
            return numeric_jacobian(fun, p)

    L = data[6]
    target_norm = float(np.linalg.norm(L * L if kind == "squared" else L))
    p = default_initial(mode, constraints)
    r = fun(p)
    cost = float(r @ r)
    history = [cost]
    lam = mode.lambda0
    stop = "max_iterations"
    it = 0
    J = jac(p)
    for it in range(1, mode.max_iterations + 1):
        g = J.T @ r
        if gradient_measure(J, r, target_norm) <= mode.gtol:
            stop = "gradient"
            it -= 1
            break
        A = J.T @ J
        diag = np.diag(A).copy()
        diag[diag <= 0] = 1e-300
        rejections = 0
        step = np.zeros_like(p)
        while True:
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(A + lam * np.diag(diag), -g, rcond=None)[0]
            p_new = p + step
            if p_new[0] > 0 and p_new[1] > 0:
                r_new = fun(p_new)
                cost_new = float(r_new @ r_new)
                if np.isfinite(cost_new) and cost_new < cost:
                    break
            lam *= 10.0
            rejections += 1
            if rejections >= mode.max_rejections:
                break
        if rejections >= mode.max_rejections:
            stop = "damping_exhausted"
            break
        p, r, cost = p_new, r_new, cost_new
        history.append(cost)
        lam = max(lam / 10.0, 1e-15)
        J = jac(p)
        if np.linalg.norm(step) <= mode.xtol * (np.linalg.norm(p) + mode.xtol):
            stop = "stagnation"
            break

    gm = gradient_measure(J, r, target_norm)
    converged = gm <= mode.gtol
    k = Intrinsics(*(float(x) for x in p[:4])) if p[0] > 0 and p[1] > 0 else None
    return CalibrationResult(
        intrinsics=k,
        params=p,
        relative=(float(p[4]), float(p[5])) if mode.variant == RELATIVE else None,
        cost=cost,
        iterations=it,
        converged=bool(converged),
        gradient_measure=gm,
        stop_reason=stop,
        condition_number=scaled_condition(J),
        cost_history=history,
        seconds=time.perf_counter() - t0,
    )


def synth_constraints(
    k: Intrinsics,
    n: int,
    rng_seed: int = 0,
    depth_noise_sigma: float = 0.0,
    image_size: tuple[int, int] | None = None,
    noise: str = "absolute",
    depth_range: tuple[float, float] = (0.5, 5.0),
) -> list[SegmentConstraint]:
    """Random segments between in-frustum camera points, with true lengths.

    Endpoints are drawn as a pixel inside the image and a depth in
    ``depth_range``, i.e. a camera-frame point that projects into the frame.
    ``noise="absolute"`` perturbs each depth by ``sigma * N(0, 1)`` meters;
    ``"relative"`` by ``d * sigma * N(0, 1)``.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    if image_size is None:
        image_size = (int(round(2 * k.cy)), int(round(2 * k.cx)))
    H, W = image_size
    rng = np.random.default_rng(rng_seed)
    out = []
    while len(out) < n:
        uv = rng.uniform([0, 0], [W - 1, H - 1], size=(2, 2))
        d = rng.uniform(*depth_range, size=2)
        P = np.column_stack([(uv[:, 0] - k.cx) * d / k.fx, (uv[:, 1] - k.cy) * d / k.fy, d])
        L = float(np.linalg.norm(P[0] - P[1]))
        if L < 1e-6:
            continue
        dn = d.copy()
        if depth_noise_sigma > 0:
            eps = rng.standard_normal(2)
            dn = d + (d * depth_noise_sigma * eps if noise == "relative" else depth_noise_sigma * eps)
            dn = np.maximum(dn, 1e-3)
        out.append(SegmentConstraint((float(uv[0, 0]), float(uv[0, 1])), (float(uv[1, 0]), float(uv[1, 1])), float(dn[0]), float(dn[1]), L))
    return out


def relative_error(k_est: Intrinsics | None, k_true: Intrinsics) -> float:
    """Worst relative error over (fx, fy, cx, cy)."""
    if k_est is None:
        return math.inf
    est = np.array(k_est.as_tuple())
    true = np.array(k_true.as_tuple())
    return float(np.max(np.abs(est - true) / np.abs(true)))


def noise_trend(
    k_true: Intrinsics,
    ns: tuple[int, ...] = (6, 10, 20, 50, 100),
    seeds: int = 20,
    sigma: float = 0.01,
    mode: CalibrationMode | None = None,
) -> list[dict]:
    """Median worst-parameter error over ``seeds`` noisy trials, per segment count."""
    mode = mode or CalibrationMode(image_size=(int(round(2 * k_true.cy)), int(round(2 * k_true.cx))))
    rows = []
    for n in ns:
        errs = []
        for s in range(seeds):
            cons = synth_constraints(k_true, n, rng_seed=1000 * n + s, depth_noise_sigma=sigma)
            errs.append(relative_error(calibrate(cons, mode).intrinsics, k_true))
        rows.append({"n": n, "median_error": float(np.median(errs)), "seeds": seeds, "sigma": sigma})
    return rows


def load_constraints(path: str | os.PathLike) -> list[SegmentConstraint]:
    data = json.loads(Path(path).read_text())
    return [SegmentConstraint.from_dict(s) for s in data["segments"]]


def save_constraints(constraints: list[SegmentConstraint], path: str | os.PathLike) -> None:
    Path(path).write_text(json.dumps({"segments": [c.to_dict() for c in constraints]}, indent=1) + "\n")
