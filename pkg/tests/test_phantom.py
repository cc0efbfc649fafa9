import numpy as np
import pytest

from revseg.phantom import BG_MEAN, Ellipsoid, PhantomSpec, gen_phantom, spec_from_dict, spec_to_dict
from revseg.volume import ValidationError


def base_spec(**overrides):
    kw = dict(
        shape=(6, 32, 32),
        target=Ellipsoid(center=(2.5, 16.0, 10.0), radii=(20.0, 5.0, 5.0)),
        mean=0.7,
        drift=(0.0, 1.0),
        noise_sigma=0.02,
        seed=7,
    )
    kw.update(overrides)
    return PhantomSpec(**kw)


def test_same_seed_bit_identical():
    a_vol, a_mask = gen_phantom(base_spec())
    b_vol, b_mask = gen_phantom(base_spec())
    assert a_vol.data.tobytes() == b_vol.data.tobytes()
    assert a_mask.data.tobytes() == b_mask.data.tobytes()


def test_different_seed_differs():
    a_vol, _ = gen_phantom(base_spec(seed=7))
    b_vol, _ = gen_phantom(base_spec(seed=8))
    assert a_vol.data.tobytes() != b_vol.data.tobytes()


def test_mask_is_exactly_the_ellipsoid_inequality():
    spec = base_spec(noise_sigma=0.0)
    _, mask = gen_phantom(spec)
    m, h, w = spec.shape
    cz, cy0, cx0 = spec.target.center
    rz, ry, rx = spec.target.radii
    for j in range(m):
        cy = cy0 + j * spec.drift[0]
        cx = cx0 + j * spec.drift[1]
        for y in range(h):
            for x in range(w):
                inside = ((j - cz) / rz) ** 2 + ((y - cy) / ry) ** 2 + (
                    (x - cx) / rx
                ) ** 2 <= 1.0
                assert bool(mask.data[j, y, x]) == inside


def test_noiseless_intensities_equal_means():
    spec = base_spec(noise_sigma=0.0)
    vol, mask = gen_phantom(spec)
    fg = mask.data.astype(bool)
    assert np.all(vol.data[fg] == np.float32(spec.mean))
    assert np.all(vol.data[~fg] == np.float32(BG_MEAN))


def test_drift_moves_center_linearly():
    spec = base_spec(noise_sigma=0.0, drift=(1.0, 0.0), shape=(4, 40, 40),
                     target=Ellipsoid(center=(1.5, 10.0, 20.0), radii=(20.0, 4.0, 4.0)))
    _, mask = gen_phantom(spec)
    for j in range(4):
        ys, _ = np.nonzero(mask.data[j])
        assert ys.mean() == pytest.approx(10.0 + j * 1.0, abs=0.3)


def test_decoy_in_intensities_never_in_mask():
    decoy = Ellipsoid(center=(2.5, 16.0, 24.0), radii=(20.0, 4.0, 4.0))
    spec = base_spec(noise_sigma=0.0, decoy=decoy)
    vol, mask = gen_phantom(spec)
    # decoy voxels carry target intensity but no label
    dy, dx = 16, 24
    assert vol.data[0, dy, dx] == np.float32(spec.mean)
    assert mask.data[0, dy, dx] == 0


def test_out_of_bounds_target_names_slice():
    with pytest.raises(ValidationError, match="slice 5"):
        base_spec(drift=(0.0, 4.0))  # col 10 + 5*4 + r5 > 31 on the last slice


def test_decoy_overlap_on_support_slice_rejected():
    decoy = Ellipsoid(center=(2.5, 16.0, 12.0), radii=(20.0, 4.0, 4.0))
    with pytest.raises(ValidationError, match="support slice"):
        base_spec(decoy=decoy)


def test_decoy_may_overlap_target_off_support_slice():
    # drifting target reaches the decoy later; only slice 0 must be disjoint
    decoy = Ellipsoid(center=(2.5, 16.0, 21.0), radii=(20.0, 4.0, 4.0))
    spec = base_spec(decoy=decoy, noise_sigma=0.0)
    vol, mask = gen_phantom(spec)
    t5 = mask.data[5].astype(bool)
    d5 = np.zeros_like(t5)
    yy = (np.arange(32)[:, None] - 16.0) / 4.0
    xx = (np.arange(32)[None, :] - 21.0) / 4.0
    d5 |= ((5 - 2.5) / 20.0) ** 2 + yy**2 + xx**2 <= 1.0
    assert (t5 & d5).any()


def test_intensities_clipped_to_unit_interval():
    vol, _ = gen_phantom(base_spec(noise_sigma=0.5, seed=3))
    assert vol.data.min() >= 0.0
    assert vol.data.max() <= 1.0


def test_sigma_texture_inside_target():
    spec = base_spec(noise_sigma=0.0, sigma=0.05)
    vol, mask = gen_phantom(spec)
    fg = mask.data.astype(bool)
    assert vol.data[fg].std() > 0.01
    assert np.all(vol.data[~fg] == np.float32(BG_MEAN))


def test_spec_dict_round_trip():
    decoy = Ellipsoid(center=(2.5, 16.0, 24.0), radii=(20.0, 4.0, 4.0))
    spec = base_spec(decoy=decoy)
    again = spec_from_dict(spec_to_dict(spec))
    assert again == spec


def test_spec_dict_rejects_unknown_keys():
    doc = spec_to_dict(base_spec())
    doc["surprise"] = 1
    with pytest.raises(ValidationError, match="unknown"):
        spec_from_dict(doc)
