import numpy as np
import pytest

from revseg.backbone import BackboneConfig
from revseg.phantom import Ellipsoid, PhantomSpec, gen_phantom
from revseg.volume import SupportSet


@pytest.fixture(scope="session")
def toy_cfg():
    # suite-style settings at small scale: patch 4 keeps grids 8x8 on 32x32
    return BackboneConfig(patch=4, feat_dim=8, temperature=0.01, lambda_pos=3.0, seed=0)


def tiny_episode(m=10, hw=32, seed=3, n_support=3, drift=(0.0, 1.0)):
    """A small drifting-target episode for fast pipeline tests."""
    qspec = PhantomSpec(
        shape=(m, hw, hw),
        target=Ellipsoid(center=((m - 1) / 2, hw / 2, 8.0), radii=(3 * m, 4.0, 4.0)),
        mean=0.45,
        drift=drift,
        noise_sigma=0.02,
        seed=100 + seed,
    )
    sspec = PhantomSpec(
        shape=(m, hw, hw),
        target=Ellipsoid(center=((m - 1) / 2, hw / 2, 8.0), radii=(3 * m, 4.0, 4.0)),
        mean=0.50,
        drift=(drift[0] * 0.25, drift[1] * 0.25),
        noise_sigma=0.02,
        seed=200 + seed,
    )
    q, qgt = gen_phantom(qspec)
    s, sgt = gen_phantom(sspec)
    rng = np.random.default_rng(300 + seed)
    idx = sorted(rng.choice(m, size=n_support, replace=False).tolist())
    support = SupportSet(
        tuple(s.slice(i) for i in idx), tuple(sgt.slice(i) for i in idx)
    )
    return support, q, qgt


@pytest.fixture()
def small_episode():
    return tiny_episode()
