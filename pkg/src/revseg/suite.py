"""The pinned decoy-phantom suite behind the ablation, sweep, and
score-curve commands and the acceptance thresholds.

Everything here is a reproducible constant: episode geometry, seeds, and
the backbone configuration.  The construction exercises one failure mode:
a position-weighted matcher loses a target that drifts one voxel per
slice, and an appearance-identical decoy parked on the drift path gives
it something wrong to latch onto.

Episode layout (40 slices of 64x64):

* query volume: target starts at column 14 and drifts +1 column per
  slice; the decoy sits mid-path inside the target's row band; Gaussian
  noise everywhere.
* supports: N slices drawn from three separate support volumes that
  differ from the query (and from each other) in target brightness,
  target cross-section (their targets pinch toward the volume ends), and
  decoy placement below the target band.  Their targets creep only a
  quarter column per slice, so supports cover just the early part of the
  query's drift.

The three-volume structure is what separates the N=10 and N=1 regimes:
ten supports triangulate away any single volume's brightness offset,
decoy position, and cross-section luck, while a lone support carries its
volume's idiosyncrasies into every reverse score.
"""

from __future__ import annotations

import numpy as np

from revseg.backbone import BackboneConfig
from revseg.phantom import Ellipsoid, PhantomSpec, gen_phantom
from revseg.volume import MaskVolume, SupportSet, Volume

STANDARD_SEEDS = tuple(range(20))
SHAPE = (40, 64, 64)
DRIFT = (0.0, 1.0)
N_SUPPORT = 10
N_SUPPORT_VOLUMES = 3

BG_TARGET_MEAN = 0.45
SUPPORT_MEAN_OFFSETS = (0.16, 0.24, 0.32)
SUPPORT_DECOY_COLS = (16.0, 26.0, 36.0)
NOISE_SIGMA = 0.02

# Position weight high enough that the 39-voxel drift overwhelms the
# appearance match, temperature low enough that attention is close to
# nearest neighbor at patch granularity 4.
SUITE_BACKBONE = BackboneConfig(
    patch=4,
    feat_dim=8,
    temperature=0.01,
    lambda_pos=3.0,
    threshold=0.5,
    seed=0,
)


def query_spec(seed: int) -> PhantomSpec:
    return PhantomSpec(
        shape=SHAPE,
        target=Ellipsoid(center=(19.5, 32.0, 14.0), radii=(60.0, 7.0, 7.0)),
        decoy=Ellipsoid(center=(19.5, 30.0, 29.0), radii=(60.0, 5.0, 5.0)),
        mean=BG_TARGET_MEAN,
        sigma=0.0,
        drift=DRIFT,
        noise_sigma=NOISE_SIGMA,
        seed=1_000_003 + seed,
        support_slice=0,
    )


def support_spec(seed: int, volume_index: int) -> PhantomSpec:
    if not (0 <= volume_index < N_SUPPORT_VOLUMES):
        raise ValueError(f"volume index {volume_index} out of range")
    return PhantomSpec(
        shape=SHAPE,
        target=Ellipsoid(center=(19.5, 32.0, 14.0), radii=(26.0, 7.0, 7.0)),
        decoy=Ellipsoid(
            center=(19.5, 45.5, SUPPORT_DECOY_COLS[volume_index]),
            radii=(60.0, 4.0, 8.0),
        ),
        mean=BG_TARGET_MEAN + SUPPORT_MEAN_OFFSETS[volume_index],
        sigma=0.0,
        drift=(0.0, 0.25),
        noise_sigma=NOISE_SIGMA,
        seed=2_000_003 + 7919 * volume_index + seed,
        support_slice=0,
    )


def build_support(seed: int, n_support: int = N_SUPPORT) -> SupportSet:
    """Draw n support slices across the three support volumes, seeded."""
    vols = [
        gen_phantom(support_spec(seed, v)) for v in range(N_SUPPORT_VOLUMES)
    ]
    picks = [(v, s) for v in range(N_SUPPORT_VOLUMES) for s in range(SHAPE[0])]
    rng = np.random.default_rng(3_000_017 + seed)
    chosen = rng.choice(len(picks), size=n_support, replace=False)
    slices, masks = [], []
    for c in sorted(chosen.tolist()):
        v, s = picks[c]
        slices.append(vols[v][0].slice(s))
        masks.append(vols[v][1].slice(s))
    return SupportSet(tuple(slices), tuple(masks))


def build_episode(
    seed: int, n_support: int = N_SUPPORT
) -> tuple[SupportSet, Volume, MaskVolume]:
    support = build_support(seed, n_support)
    vol, gt = gen_phantom(query_spec(seed))
    return support, vol, gt
