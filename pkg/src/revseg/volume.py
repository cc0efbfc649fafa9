"""Core value types: intensity volumes, binary mask volumes, support sets.

Axis 0 is always the slice (propagation) axis; a volume of shape (M, H, W)
holds M slices of H rows by W columns.  Intensities live in [0, 1] as
float32 so that file round-trips are bit-exact; masks are uint8 in {0, 1}.
All three types are immutable value objects and safe to share across
threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ValidationError(ValueError):
    """Raised when a value violates its structural invariants."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Volume:
    """A stack of 2D intensity slices, shape (M, H, W), values in [0, 1]."""

    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim != 3:
            raise ValidationError(f"volume must be 3D (M,H,W), got ndim={d.ndim}")
        m, h, w = d.shape
        if m < 1 or h < 8 or w < 8:
            raise ValidationError(f"volume shape {d.shape} violates M>=1, H>=8, W>=8")
        d = d.astype(np.float32, copy=False)
        if not np.all(np.isfinite(d)):
            raise ValidationError("volume contains non-finite intensities")
        if d.min() < 0.0 or d.max() > 1.0:
            raise ValidationError(
                f"intensities outside [0,1]: min={d.min()}, max={d.max()}"
            )
        object.__setattr__(self, "data", _frozen(d))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def n_slices(self) -> int:
        return self.data.shape[0]

    def slice(self, i: int) -> np.ndarray:
        return self.data[i]


@dataclass(frozen=True)
class MaskVolume:
    """A stack of binary label slices, shape (M, H, W), values in {0, 1}."""

    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim != 3:
            raise ValidationError(f"mask volume must be 3D, got ndim={d.ndim}")
        if not np.isin(d, (0, 1)).all():
            raise ValidationError("mask contains values outside {0,1}")
        object.__setattr__(self, "data", _frozen(d.astype(np.uint8)))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def n_slices(self) -> int:
        return self.data.shape[0]

    def slice(self, i: int) -> np.ndarray:
        return self.data[i]

    def foreground_count(self) -> int:
        return int(self.data.sum())


@dataclass(frozen=True)
class SupportSet:
    """N labeled 2D slices defining the segmentation task.

    slices[i] and masks[i] must agree in shape, every pair shares the same
    (H, W), and at least one mask must contain foreground (otherwise there
    is nothing to propagate).
    """

    slices: tuple[np.ndarray, ...]
    masks: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.slices) < 1:
            raise ValidationError("support set needs at least one slice")
        if len(self.slices) != len(self.masks):
            raise ValidationError(
                f"{len(self.slices)} slices but {len(self.masks)} masks"
            )
        slices, masks = [], []
        shape = None
        for i, (s, y) in enumerate(zip(self.slices, self.masks)):
            s = np.asarray(s, dtype=np.float32)
            y = np.asarray(y)
            if s.ndim != 2 or y.ndim != 2:
                raise ValidationError(f"support pair {i} is not 2D")
            if s.shape != y.shape:
                raise ValidationError(
                    f"support pair {i}: slice {s.shape} vs mask {y.shape}"
                )
            if shape is None:
                shape = s.shape
            elif s.shape != shape:
                raise ValidationError(
                    f"support slice {i} shape {s.shape} != {shape}"
                )
            if not np.isin(y, (0, 1)).all():
                raise ValidationError(f"support mask {i} is not binary")
            slices.append(_frozen(s))
            masks.append(_frozen(y.astype(np.uint8)))
        if not any(m.any() for m in masks):
            raise ValidationError("no support mask has any foreground")
        object.__setattr__(self, "slices", tuple(slices))
        object.__setattr__(self, "masks", tuple(masks))

    def __len__(self) -> int:
        return len(self.slices)

    @property
    def slice_shape(self) -> tuple[int, int]:
        return self.slices[0].shape
