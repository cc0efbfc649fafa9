"""Overlap and surface metrics plus the report aggregation used everywhere.

Conventions (fixed here, relied on throughout the pipeline):

* Dice of two empty masks is 1.0, of one empty mask 0.0.  This keeps the
  reverse-propagation score well defined on background-only slices.
* NSD boundaries are foreground voxels with at least one background
  face-neighbor (array edges count as background); distances are Euclidean
  in voxel units.
* Percentages in reports are rounded to 2 decimals only at presentation.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage


def _check_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a).astype(bool)
    b = np.asarray(b).astype(bool)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def dice(a: np.ndarray, b: np.ndarray) -> float:
    """Dice overlap 2|A∩B| / (|A|+|B|) for 2D or 3D binary masks."""
    a, b = _check_pair(a, b)
    na, nb = int(a.sum()), int(b.sum())
    if na == 0 and nb == 0:
        return 1.0
    inter = int(np.logical_and(a, b).sum())
    return 2.0 * inter / (na + nb)


def avg_dice(preds: Sequence[np.ndarray], gts: Sequence[np.ndarray]) -> float:
    """Arithmetic mean of per-slice dice over paired mask lists."""
    if len(preds) != len(gts):
        raise ValueError(f"length mismatch: {len(preds)} preds vs {len(gts)} gts")
    if len(preds) == 0:
        raise ValueError("need at least one pair")
    return float(np.mean([dice(p, g) for p, g in zip(preds, gts)]))


def boundary(mask: np.ndarray) -> np.ndarray:
    """Foreground voxels with >=1 background face-neighbor (edges count)."""
    m = np.asarray(mask).astype(bool)
    if m.ndim not in (2, 3):
        raise ValueError(f"mask must be 2D or 3D, got ndim={m.ndim}")
    eroded = ndimage.binary_erosion(
        m, structure=ndimage.generate_binary_structure(m.ndim, 1), border_value=0
    )
    return m & ~eroded


def nsd(a: np.ndarray, b: np.ndarray, tol: float = 1.0) -> float:
    """Normalized surface dice at a voxel-unit tolerance.

    (|∂A within tol of ∂B| + |∂B within tol of ∂A|) / (|∂A| + |∂B|).
    Both masks empty: 1.0; exactly one empty: 0.0.
    """
    a, b = _check_pair(a, b)
    if tol < 0:
        raise ValueError(f"tolerance must be >= 0, got {tol}")
    ea, eb = not a.any(), not b.any()
    if ea and eb:
        return 1.0
    if ea or eb:
        return 0.0
    ba, bb = boundary(a), boundary(b)
    # EDT of the complement gives each voxel's distance to the nearest
    # boundary voxel of the other mask.
    dist_to_b = ndimage.distance_transform_edt(~bb)
    dist_to_a = ndimage.distance_transform_edt(~ba)
    hits_a = int((dist_to_b[ba] <= tol).sum())
    hits_b = int((dist_to_a[bb] <= tol).sum())
    return (hits_a + hits_b) / (int(ba.sum()) + int(bb.sum()))


def _average_ranks(x: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties replaced by the mean of their rank positions."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x), dtype=np.float64)
    sx = x[order]
    i = 0
    while i < len(sx):
        j = i
        while j + 1 < len(sx) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation with average ranks for ties.

    Returns NaN when either input is constant (correlation undefined).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("inputs must be 1D of equal length")
    if len(x) < 2:
        raise ValueError("need at least two points")
    rx, ry = _average_ranks(x), _average_ranks(y)
    sx, sy = rx.std(), ry.std()
    if sx == 0.0 or sy == 0.0:
        return math.nan
    return float(((rx - rx.mean()) * (ry - ry.mean())).mean() / (sx * sy))


@dataclass(frozen=True)
class EvalRow:
    cls: str
    group: str
    dsc: float  # percent
    nsd: float  # percent


@dataclass(frozen=True)
class EvalReport:
    """Per-class/per-group rows plus class-then-group mean aggregates."""

    rows: tuple[EvalRow, ...]
    group_dsc: dict[str, float]
    group_nsd: dict[str, float]
    mdsc: float
    mnsd: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["class", "group", "dsc", "nsd"])
        for r in self.rows:
            w.writerow([r.cls, r.group, f"{r.dsc:.2f}", f"{r.nsd:.2f}"])
        w.writerow(["mDSC", "", f"{self.mdsc:.2f}", ""])
        w.writerow(["mNSD", "", "", f"{self.mnsd:.2f}"])
        return buf.getvalue()


def aggregate(rows: Iterable[EvalRow]) -> EvalReport:
    """Mean per-class within each group, then mean over groups.

    With a single group this reduces to the plain arithmetic mean of the
    class values.
    """
    rows = tuple(rows)
    if not rows:
        raise ValueError("no rows to aggregate")
    for r in rows:
        if not (0.0 <= r.dsc <= 100.0 and 0.0 <= r.nsd <= 100.0):
            raise ValueError(f"percentage out of range in row {r}")
    groups: dict[str, list[EvalRow]] = {}
    for r in rows:
        groups.setdefault(r.group, []).append(r)
    group_dsc = {g: float(np.mean([r.dsc for r in rs])) for g, rs in groups.items()}
    group_nsd = {g: float(np.mean([r.nsd for r in rs])) for g, rs in groups.items()}
    mdsc = float(np.mean(list(group_dsc.values())))
    mnsd = float(np.mean(list(group_nsd.values())))
    return EvalReport(rows, group_dsc, group_nsd, mdsc, mnsd)
