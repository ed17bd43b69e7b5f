"""Depth positional encoding.

A depth map is min-max normalized to ``[0, alpha]``, mean-pooled onto the
image feature grid, embedded with interleaved sine/cosine channels of
geometrically spaced frequencies, and added to the image features.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from .errors import ContractError
from .ingest import DepthMap

MAGIC = b"DPE1"
_HEADER = struct.Struct("<4sIII")  # magic, H', W', d


@dataclass(frozen=True)
class DpeConfig:
    alpha: float = 100.0
    embed_dim: int = 1024
    grid: tuple[int, int] = (24, 24)

    def __post_init__(self) -> None:
        if self.alpha <= 0:
            raise ContractError("alpha must be > 0")
        if self.embed_dim < 2 or self.embed_dim % 2:
            raise ContractError(f"embed_dim must be even and >= 2, got {self.embed_dim}")
        if min(self.grid) < 1:
            raise ContractError(f"grid must be positive, got {self.grid}")


@dataclass(frozen=True, eq=False)
class PooledDepthGrid:
    values: np.ndarray  # (H', W')
    empty: np.ndarray  # (H', W') True where the patch had no valid pixel


@dataclass(frozen=True, eq=False)
class FeatureGrid:
    values: np.ndarray  # (H', W', d)
    empty: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape  # type: ignore[return-value]

    def flatten(self) -> np.ndarray:
        """Row-major token sequence: cell (i, j) lands at index i * W' + j."""
        h, w, d = self.values.shape
        return self.values.reshape(h * w, d)


def normalize_depth(D: DepthMap, alpha: float = 100.0) -> DepthMap:
    valid = D.valid
    if not valid.any():
        raise ContractError("depth map has no valid pixels")
    vals = D.values[valid]
    lo, hi = vals.min(), vals.max()
    out = np.zeros_like(D.values)
    if hi > lo:
        out[valid] = (vals - lo) / (hi - lo) * alpha
    return DepthMap(out, valid)


def patch_edges(n: int, parts: int) -> np.ndarray:
    """Start indices of ``parts`` near-equal spans of ``n``, plus the end."""
    return (np.arange(parts + 1) * n) // parts


def pool_depth(D: DepthMap, grid: tuple[int, int]) -> PooledDepthGrid:
    H, W = D.shape
    gh, gw = grid
    if not (1 <= gh <= H and 1 <= gw <= W):
        raise ContractError(f"grid {gh}x{gw} must fit inside a {H}x{W} depth map")
    re = patch_edges(H, gh)
    ce = patch_edges(W, gw)
    vals = np.where(D.valid, D.values, 0.0)
    cnt = D.valid.astype(np.float64)
    # sum over row spans, then column spans
    s = np.add.reduceat(np.add.reduceat(vals, re[:-1], axis=0), ce[:-1], axis=1)
    n = np.add.reduceat(np.add.reduceat(cnt, re[:-1], axis=0), ce[:-1], axis=1)
    empty = n == 0
    pooled = np.divide(s, n, out=np.zeros_like(s), where=~empty)
    return PooledDepthGrid(pooled, empty)


def embedding_frequencies(d: int) -> np.ndarray:
    """Divisors 10000^(2t/d) for t = 0 .. d/2 - 1."""
    t = np.arange(d // 2, dtype=np.float64)
    return np.power(10000.0, 2.0 * t / d)


class EmbeddingProvider(Protocol):
    def __call__(self, pooled: PooledDepthGrid, d: int) -> FeatureGrid: ...


def depth_embedding(pooled: PooledDepthGrid, d: int) -> FeatureGrid:
    if d < 2 or d % 2:
        raise ContractError(f"embedding dim must be even and >= 2, got {d}")
    x = pooled.values[..., None] / embedding_frequencies(d)
    out = np.empty(pooled.values.shape + (d,))
    out[..., 0::2] = np.sin(x)
    out[..., 1::2] = np.cos(x)
    return FeatureGrid(out, pooled.empty)


def fuse(image: FeatureGrid, depth: FeatureGrid) -> FeatureGrid:
    if image.values.shape != depth.values.shape:
        raise ContractError(f"feature shapes differ: {image.values.shape} vs {depth.values.shape}")
    return FeatureGrid(image.values + depth.values, depth.empty)


def encode(D: DepthMap, cfg: DpeConfig, provider: EmbeddingProvider = depth_embedding) -> FeatureGrid:
    """normalize -> pool -> embed. Ready to add onto an image feature grid."""
    return provider(pool_depth(normalize_depth(D, cfg.alpha), cfg.grid), cfg.embed_dim)


def write_grid(grid: FeatureGrid, path: str | os.PathLike) -> None:
    """Little-endian: 4-byte magic, uint32 H', W', d, then float32 payload row-major."""
    h, w, d = grid.values.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, h, w, d))
        fh.write(np.ascontiguousarray(grid.values, dtype="<f4").tobytes())


def read_grid(path: str | os.PathLike) -> FeatureGrid:
    raw = Path(path).read_bytes()
    magic, h, w, d = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    payload = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    if payload.size != h * w * d:
        raise ValueError(f"{path}: payload has {payload.size} floats, expected {h * w * d}")
    return FeatureGrid(payload.reshape(h, w, d).astype(np.float64))
