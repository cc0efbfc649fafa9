"""A from-scratch promptable memory segmenter over patch statistics.

Five stages, all deterministic functions of their inputs and the config:

1. encode_image: per-patch (mean, std, mean gradient magnitude) pushed
   through a fixed seeded linear projection, concatenated with positional
   channels (row/Gh * lambda_pos, col/Gw * lambda_pos).
2. encode_prompt: per-patch foreground fraction of a binary mask.
3. encode_memory: pairs an image grid (keys) with a prompt grid (values).
4. memory_attention: per query cell, softmax over every cell of every
   memory entry of -||f_q - f_m||^2 / T; output is the weighted mean of
   the memory values, hence a convex combination in [0, 1].
5. decode_mask: nearest-neighbor upsample to pixel resolution, then
   threshold (>= rule).

lambda_pos tunes how much the matcher trusts position over appearance;
large values reproduce the drifted-target/decoy confusion the phantom
generator is built to expose.

Grids are float32 at every stage boundary so in-process results match the
float32 wire encoding bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from revseg import kernels
from revseg.volume import ValidationError

POS_CHANNELS = 2


@dataclass(frozen=True)
class BackboneConfig:
    patch: int = 8
    feat_dim: int = 8
    temperature: float = 0.05
    lambda_pos: float = 0.5
    threshold: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.patch < 1:
            raise ValidationError(f"patch must be >= 1, got {self.patch}")
        if self.feat_dim < POS_CHANNELS + 1:
            raise ValidationError(
                f"feat_dim must be >= {POS_CHANNELS + 1}, got {self.feat_dim}"
            )
        if self.temperature <= 0:
            raise ValidationError(f"temperature must be > 0, got {self.temperature}")
        if self.lambda_pos < 0:
            raise ValidationError(f"lambda_pos must be >= 0, got {self.lambda_pos}")
        if not (0.0 < self.threshold < 1.0):
            raise ValidationError(f"threshold must be in (0,1), got {self.threshold}")

    def to_dict(self) -> dict:
        return {
            "patch": self.patch,
            "feat_dim": self.feat_dim,
            "temperature": self.temperature,
            "lambda_pos": self.lambda_pos,
            "threshold": self.threshold,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class FeatureGrid:
    """(Gh, Gw, D) float32 per-cell features."""

    data: np.ndarray = field(repr=False)

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.data.shape[:2]

    def __eq__(self, other):
        return isinstance(other, FeatureGrid) and np.array_equal(self.data, other.data)


@dataclass(frozen=True)
class PromptGrid:
    """(Gh, Gw) float32 per-cell foreground fractions in [0, 1]."""

    data: np.ndarray = field(repr=False)

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.data.shape

    def __eq__(self, other):
        return isinstance(other, PromptGrid) and np.array_equal(self.data, other.data)


@dataclass(frozen=True)
class MemoryEntry:
    keys: FeatureGrid
    values: PromptGrid
    kind: str  # support | conditional | recent

    def __post_init__(self):
        if self.keys.grid_shape != self.values.grid_shape:
            raise ValidationError(
                f"key grid {self.keys.grid_shape} != value grid {self.values.grid_shape}"
            )
        if self.kind not in ("support", "conditional", "recent"):
            raise ValidationError(f"unknown memory kind {self.kind!r}")

    def __eq__(self, other):
        return (
            isinstance(other, MemoryEntry)
            and self.kind == other.kind
            and self.keys == other.keys
            and self.values == other.values
        )


@lru_cache(maxsize=32)
def _projection(seed: int, feat_dim: int) -> np.ndarray:
    """Fixed random projection from the 3 patch statistics, one per config."""
    rng = np.random.default_rng(seed)
    p = rng.standard_normal((3, feat_dim - POS_CHANNELS))
    p.setflags(write=False)
    return p


def _check_divisible(shape: tuple[int, int], patch: int) -> tuple[int, int]:
    h, w = shape
    if h % patch or w % patch:
        raise ValidationError(
            f"slice shape ({h}, {w}) not divisible by patch {patch}"
        )
    return h // patch, w // patch


def _pool(img: np.ndarray, patch: int) -> np.ndarray:
    h, w = img.shape
    return img.reshape(h // patch, patch, w // patch, patch)


def encode_image(slice2d: np.ndarray, cfg: BackboneConfig) -> FeatureGrid:
    img = np.asarray(slice2d, dtype=np.float64)
    gh, gw = _check_divisible(img.shape, cfg.patch)

    padded = np.pad(img, 1, mode="edge")
    gy = (padded[2:, 1:-1] - padded[:-2, 1:-1]) * 0.5
    gx = (padded[1:-1, 2:] - padded[1:-1, :-2]) * 0.5
    gmag = np.sqrt(gx * gx + gy * gy)

    blocks = _pool(img, cfg.patch)
    mean = blocks.mean(axis=(1, 3))
    sq = (blocks * blocks).mean(axis=(1, 3))
    std = np.sqrt(np.maximum(sq - mean * mean, 0.0))
    grad = _pool(gmag, cfg.patch).mean(axis=(1, 3))

    stats = np.stack([mean, std, grad], axis=-1)  # (gh, gw, 3)
    feats = stats @ _projection(cfg.seed, cfg.feat_dim)

    rows = (np.arange(gh, dtype=np.float64)[:, None] / gh) * cfg.lambda_pos
    cols = (np.arange(gw, dtype=np.float64)[None, :] / gw) * cfg.lambda_pos
    pos = np.empty((gh, gw, POS_CHANNELS), dtype=np.float64)
    pos[..., 0] = rows
    pos[..., 1] = cols

    out = np.concatenate([feats, pos], axis=-1).astype(np.float32)
    return FeatureGrid(out)


def encode_prompt(mask2d: np.ndarray, cfg: BackboneConfig) -> PromptGrid:
    mask = np.asarray(mask2d)
    if not np.isin(mask, (0, 1)).all():
        raise ValidationError("prompt mask must be binary {0,1}")
    _check_divisible(mask.shape, cfg.patch)
    frac = _pool(mask.astype(np.float64), cfg.patch).mean(axis=(1, 3))
    return PromptGrid(frac.astype(np.float32))


def encode_memory(img: FeatureGrid, prompt: PromptGrid, kind: str) -> MemoryEntry:
    return MemoryEntry(keys=img, values=prompt, kind=kind)


def memory_attention(
    query: FeatureGrid, memory: list[MemoryEntry], cfg: BackboneConfig
) -> np.ndarray:
    """(Gh, Gw) float32 probabilities, a convex combination of memory values."""
    if not memory:
        raise ValidationError("memory must contain at least one entry")
    gh, gw = query.grid_shape
    for e in memory:
        if e.keys.grid_shape != (gh, gw):
            raise ValidationError(
                f"memory grid {e.keys.grid_shape} != query grid {(gh, gw)}"
            )
    d = query.data.shape[2]
    q = query.data.reshape(gh * gw, d).astype(np.float64)
    k = np.concatenate([e.keys.data.reshape(-1, d) for e in memory]).astype(np.float64)
    v = np.concatenate([e.values.data.reshape(-1) for e in memory]).astype(np.float64)
    probs = kernels.attend(q, k, v, cfg.temperature)
    return probs.reshape(gh, gw).astype(np.float32)


def decode_mask(
    probs: np.ndarray, shape: tuple[int, int], cfg: BackboneConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-neighbor upsample to `shape`; mask is soft >= threshold."""
    probs = np.asarray(probs, dtype=np.float32)
    h, w = shape
    gh, gw = _check_divisible((h, w), cfg.patch)
    if probs.shape != (gh, gw):
        raise ValidationError(
            f"probability grid {probs.shape} inconsistent with "
            f"shape {(h, w)} and patch {cfg.patch}"
        )
    soft = np.repeat(np.repeat(probs, cfg.patch, axis=0), cfg.patch, axis=1)
    mask = (soft >= np.float32(cfg.threshold)).astype(np.uint8)
    return mask, soft
