"""Deterministic synthetic phantoms: a drifting ellipsoidal target, an
optional appearance-identical decoy, Gaussian noise.

The target's per-slice center follows center0 + j*drift, so a matcher that
leans on position will lose it on late slices; the decoy gives that matcher
something plausible to latch onto instead.  The ground-truth mask is exactly
the set of voxels inside the target ellipsoid; the decoy exists only in the
intensities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from revseg.volume import MaskVolume, ValidationError, Volume

BG_MEAN = 0.1


@dataclass(frozen=True)
class Ellipsoid:
    """center (cz, cy, cx), radii (rz, ry, rx) in voxel units."""

    center: tuple[float, float, float]
    radii: tuple[float, float, float]

    def __post_init__(self):
        if len(self.center) != 3 or len(self.radii) != 3:
            raise ValidationError("ellipsoid needs 3D center and radii")
        if any(r <= 0 for r in self.radii):
            raise ValidationError(f"radii must be positive, got {self.radii}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "radii", tuple(float(r) for r in self.radii))


@dataclass(frozen=True)
class PhantomSpec:
    shape: tuple[int, int, int]
    target: Ellipsoid
    mean: float = 0.75
    sigma: float = 0.0  # per-voxel texture inside target/decoy
    decoy: Ellipsoid | None = None
    drift: tuple[float, float] = (0.0, 0.0)  # target (dy, dx) voxels per slice
    noise_sigma: float = 0.0
    seed: int = 0
    support_slice: int = 0  # slice on which target/decoy disjointness is enforced

    def __post_init__(self):
        m, h, w = self.shape
        if m < 1 or h < 8 or w < 8:
            raise ValidationError(f"shape {self.shape} violates M>=1, H>=8, W>=8")
        if not (0.0 <= self.mean <= 1.0):
            raise ValidationError(f"target mean {self.mean} outside [0,1]")
        if self.sigma < 0 or self.noise_sigma < 0:
            raise ValidationError("sigmas must be >= 0")
        if not (0 <= self.support_slice < m):
            raise ValidationError(
                f"support slice {self.support_slice} outside [0,{m})"
            )
        object.__setattr__(self, "shape", tuple(int(v) for v in self.shape))
        object.__setattr__(self, "drift", tuple(float(v) for v in self.drift))
        self._validate_bounds()
        self._validate_disjoint()

    def _slice_ellipse(self, e: Ellipsoid, j: int, drifting: bool):
        """In-plane (cy, cx, ry_j, rx_j) of an ellipsoid's slice-j cross
        section, or None when slice j misses the ellipsoid entirely."""
        cz, cy, cx = e.center
        rz, ry, rx = e.radii
        dz = (j - cz) / rz
        if abs(dz) > 1.0:
            return None
        s = float(np.sqrt(1.0 - dz * dz))
        if drifting:
            cy, cx = cy + j * self.drift[0], cx + j * self.drift[1]
        return cy, cx, ry * s, rx * s

    def _validate_bounds(self):
        m, h, w = self.shape
        shapes = [("target", self.target, True)]
        if self.decoy is not None:
            shapes.append(("decoy", self.decoy, False))
        for name, e, drifting in shapes:
            for j in range(m):
                sec = self._slice_ellipse(e, j, drifting)
                if sec is None:
                    continue
                cy, cx, ry_j, rx_j = sec
                if cy - ry_j < 0 or cy + ry_j > h - 1 or cx - rx_j < 0 or cx + rx_j > w - 1:
                    raise ValidationError(
                        f"{name} ellipsoid leaves bounds on slice {j}: "
                        f"center=({cy:.1f},{cx:.1f}) in-plane radii=({ry_j:.1f},{rx_j:.1f})"
                    )

    def _validate_disjoint(self):
        if self.decoy is None:
            return
        j = self.support_slice
        t = _inside(self, self.target, j, drifting=True)
        d = _inside(self, self.decoy, j, drifting=False)
        if np.logical_and(t, d).any():
            raise ValidationError(
                f"target and decoy overlap on support slice {j}"
            )


def _inside(spec: PhantomSpec, e: Ellipsoid, j: int, drifting: bool) -> np.ndarray:
    """Boolean (H, W) of voxels satisfying the ellipsoid inequality on slice j."""
    _, h, w = spec.shape
    cz, cy, cx = e.center
    rz, ry, rx = e.radii
    if drifting:
        cy, cx = cy + j * spec.drift[0], cx + j * spec.drift[1]
    yy = (np.arange(h, dtype=np.float64)[:, None] - cy) / ry
    xx = (np.arange(w, dtype=np.float64)[None, :] - cx) / rx
    zz = (j - cz) / rz
    return zz * zz + yy * yy + xx * xx <= 1.0


def gen_phantom(spec: PhantomSpec) -> tuple[Volume, MaskVolume]:
    """Generate (intensities, ground-truth mask); bit-identical per spec."""
    m, h, w = spec.shape
    rng = np.random.default_rng(spec.seed)
    vol = np.full((m, h, w), BG_MEAN, dtype=np.float64)
    mask = np.zeros((m, h, w), dtype=np.uint8)
    for j in range(m):
        t = _inside(spec, spec.target, j, drifting=True)
        mask[j][t] = 1
        fill = t
        if spec.decoy is not None:
            # decoy shares the target's intensity statistics, never the mask
            fill = t | _inside(spec, spec.decoy, j, drifting=False)
        vol[j][fill] = spec.mean
        if spec.sigma > 0:
            vol[j][fill] += rng.normal(0.0, spec.sigma, size=int(fill.sum()))
    if spec.noise_sigma > 0:
        vol += rng.normal(0.0, spec.noise_sigma, size=vol.shape)
    np.clip(vol, 0.0, 1.0, out=vol)
    return Volume(vol.astype(np.float32)), MaskVolume(mask)


def spec_from_dict(doc: dict) -> PhantomSpec:
    """Parse a JSON-shaped dict; unknown keys are rejected."""
    known = {
        "shape", "target", "mean", "sigma", "decoy",
        "drift", "noise_sigma", "seed", "support_slice",
    }
    unknown = set(doc) - known
    if unknown:
        raise ValidationError(f"unknown phantom spec keys: {sorted(unknown)}")

    def ell(d):
        extra = set(d) - {"center", "radii"}
        if extra:
            raise ValidationError(f"unknown ellipsoid keys: {sorted(extra)}")
        return Ellipsoid(tuple(d["center"]), tuple(d["radii"]))

    return PhantomSpec(
        shape=tuple(doc["shape"]),
        target=ell(doc["target"]),
        mean=doc.get("mean", 0.75),
        sigma=doc.get("sigma", 0.0),
        decoy=ell(doc["decoy"]) if doc.get("decoy") else None,
        drift=tuple(doc.get("drift", (0.0, 0.0))),
        noise_sigma=doc.get("noise_sigma", 0.0),
        seed=doc.get("seed", 0),
        support_slice=doc.get("support_slice", 0),
    )


def spec_to_dict(spec: PhantomSpec) -> dict:
    doc = {
        "shape": list(spec.shape),
        "target": {"center": list(spec.target.center), "radii": list(spec.target.radii)},
        "mean": spec.mean,
        "sigma": spec.sigma,
        "drift": list(spec.drift),
        "noise_sigma": spec.noise_sigma,
        "seed": spec.seed,
        "support_slice": spec.support_slice,
    }
    if spec.decoy is not None:
        doc["decoy"] = {
            "center": list(spec.decoy.center),
            "radii": list(spec.decoy.radii),
        }
    return doc
