"""Pipeline configuration: one YAML file with flat dotted keys (or nested maps), flags on top."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from . import TOOL_NAME, __version__
from .calib import METRIC, MIN_SEGMENTS
from .clients import EndpointConfig
from .dpe import DpeConfig
from .errors import ValidationError
from .evalharness import ScoreConfig
from .qa_gen import QaGenConfig
from .selection import SelectionConfig

CLIENT_ROLES = ("relabel", "cot_generator", "cot_judge", "eval_judge")


@dataclass(frozen=True)
class CalibDefaults:
    variant: str = METRIC
    noise_sigma: float = 0.01
    trend_seeds: int = 20
    trend_ns: tuple[int, ...] = (6, 10, 20, 50, 100)
    reference_intrinsics: tuple[float, float, float, float] = (525.0, 525.0, 319.5, 239.5)

    def __post_init__(self) -> None:
        if self.variant not in MIN_SEGMENTS:
            raise ValidationError(f"calib.variant must be one of {sorted(MIN_SEGMENTS)}")
        if self.noise_sigma < 0 or self.trend_seeds < 1 or not self.trend_ns:
            raise ValidationError("calib trend settings must be non-negative with at least one seed and one N")


@dataclass(frozen=True)
class CotSettings:
    enabled: bool = False
    accept_threshold: int = 8

    def __post_init__(self) -> None:
        if not 0 <= self.accept_threshold <= 10:
            raise ValidationError("cot.accept_threshold must lie in 0..10")


@dataclass(frozen=True)
class PipelineConfig:
    scene_roots: tuple[str, ...] = ()
    output_dir: str = "out"
    seed: int = 0
    offline: bool = False
    jobs: int = 1
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    qa: QaGenConfig = field(default_factory=QaGenConfig)
    dpe: DpeConfig = field(default_factory=DpeConfig)
    score: ScoreConfig = field(default_factory=ScoreConfig)
    calib: CalibDefaults = field(default_factory=CalibDefaults)
    cot: CotSettings = field(default_factory=CotSettings)
    clients: dict[str, EndpointConfig] = field(default_factory=dict)

    def validate_paths(self) -> None:
        if not self.scene_roots:
            raise ValidationError("no scene roots configured")
        for r in self.scene_roots:
            if not Path(r).is_dir():
                raise ValidationError(f"scene root does not exist: {r}")
        if self.jobs < 1:
            raise ValidationError("jobs must be >= 1")

    def hash_payload(self) -> dict:
        """Everything that can change generated content. Paths and parallelism are left out."""
        d = _to_plain(self)
        for k in ("scene_roots", "output_dir", "jobs"):
            d.pop(k)
        d["tool"] = TOOL_NAME
        d["version"] = __version__
        return d

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.hash_payload(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def header(self) -> dict:
        return {"tool": TOOL_NAME, "version": __version__, "config_hash": self.config_hash, "seed": self.seed}


def _to_plain(obj: Any) -> Any:
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): _to_plain(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = [_to_plain(v) for v in obj]
        return sorted(items) if isinstance(obj, (set, frozenset)) else items
    return obj


def flatten(d: dict, prefix: str = "") -> dict[str, Any]:
    """Nested maps become dotted keys: {"selection": {"min_pixels": 50}} -> {"selection.min_pixels": 50}."""
    out: dict[str, Any] = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


_SECTIONS = {
    "selection": SelectionConfig,
    "qa": QaGenConfig,
    "dpe": DpeConfig,
    "score": ScoreConfig,
    "calib": CalibDefaults,
    "cot": CotSettings,
}
_TOP = {"scene_roots", "output_dir", "seed", "offline", "jobs"}


def _coerce(cls, name: str, value: Any) -> Any:
    default = next(f for f in dataclasses.fields(cls) if f.name == name)
    ref = default.default if default.default is not dataclasses.MISSING else default.default_factory()  # type: ignore[misc]
    if isinstance(ref, (tuple, list, frozenset)):
        if isinstance(value, str):
            value = [v.strip() for v in value.split(",") if v.strip()]
        if isinstance(ref, frozenset):
            return frozenset(value)
        if name == "grid":
            return tuple(int(v) for v in value)
        return tuple(value)
    if isinstance(ref, bool):
        if isinstance(value, str):
            return value.strip().lower() in ("1", "true", "yes", "on")
        return bool(value)
    if isinstance(ref, int) and not isinstance(ref, bool):
        return int(value)
    if isinstance(ref, float):
        return float(value)
    return value


def build_config(flat: dict[str, Any]) -> PipelineConfig:
    """Assemble a validated config from dotted keys; unknown keys raise ValidationError."""
    top: dict[str, Any] = {}
    sections: dict[str, dict[str, Any]] = {s: {} for s in _SECTIONS}
    clients: dict[str, dict[str, Any]] = {}
    for key, value in flat.items():
        head, _, rest = key.partition(".")
        if not rest:
            if head not in _TOP:
                raise ValidationError(f"unknown config key: {key}")
            top[head] = value
        elif head in _SECTIONS:
            names = {f.name for f in dataclasses.fields(_SECTIONS[head])}
            if rest not in names:
                raise ValidationError(f"unknown config key: {key}")
            sections[head][rest] = _coerce(_SECTIONS[head], rest, value)
        elif head == "clients":
            role, _, attr = rest.partition(".")
            if role not in CLIENT_ROLES or attr not in {f.name for f in dataclasses.fields(EndpointConfig)}:
                raise ValidationError(f"unknown config key: {key}")
            clients.setdefault(role, {})[attr] = _coerce(EndpointConfig, attr, value)
        else:
            raise ValidationError(f"unknown config key: {key}")
    roots = top.get("scene_roots", ())
    if isinstance(roots, str):
        roots = [r for r in roots.split(",") if r]
    try:
        return PipelineConfig(
            scene_roots=tuple(str(r) for r in roots),
            output_dir=str(top.get("output_dir", "out")),
            seed=int(top.get("seed", 0)),
            offline=_coerce(PipelineConfig, "offline", top.get("offline", False)),
            jobs=int(top.get("jobs", 1)),
            clients={r: EndpointConfig(**kw) for r, kw in sorted(clients.items())},
            **{s: _SECTIONS[s](**kw) for s, kw in sections.items()},
        )
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"invalid configuration: {exc}") from exc


def load_config(path: str | os.PathLike | None = None, overrides: dict[str, Any] | None = None) -> PipelineConfig:
    flat: dict[str, Any] = {}
    if path is not None:
        try:
            raw = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ValidationError(f"{path}: expected a mapping at top level")
        flat = flatten(raw)
    flat.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_config(flat)


def parse_set(items: list[str]) -> dict[str, Any]:
    """``key=value`` pairs from the command line, values parsed as YAML scalars."""
    out = {}
    for item in items:
        key, sep, val = item.partition("=")
        if not sep or not key:
            raise ValidationError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = yaml.safe_load(val)
    return out
