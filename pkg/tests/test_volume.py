import numpy as np
import pytest

from revseg.volume import MaskVolume, SupportSet, ValidationError, Volume


def test_volume_accepts_valid_and_freezes():
    v = Volume(np.full((2, 8, 8), 0.5, dtype=np.float32))
    assert v.shape == (2, 8, 8)
    assert v.data.dtype == np.float32
    with pytest.raises(ValueError):
        v.data[0, 0, 0] = 1.0  # read-only


@pytest.mark.parametrize("shape", [(0, 8, 8), (1, 7, 8), (1, 8, 7)])
def test_volume_minimum_dims(shape):
    with pytest.raises(ValidationError):
        Volume(np.zeros(shape, dtype=np.float32))


def test_volume_rejects_out_of_range():
    with pytest.raises(ValidationError, match="\\[0,1\\]"):
        Volume(np.full((1, 8, 8), 1.5, dtype=np.float32))


def test_volume_rejects_non_finite():
    data = np.zeros((1, 8, 8), dtype=np.float32)
    data[0, 0, 0] = np.nan
    with pytest.raises(ValidationError, match="finite"):
        Volume(data)


def test_mask_volume_rejects_non_binary():
    with pytest.raises(ValidationError):
        MaskVolume(np.full((1, 8, 8), 2, dtype=np.uint8))


def test_support_set_requires_foreground():
    s = np.zeros((8, 8), dtype=np.float32)
    y = np.zeros((8, 8), dtype=np.uint8)
    with pytest.raises(ValidationError, match="foreground"):
        SupportSet((s,), (y,))


def test_support_set_shape_consistency():
    s = np.zeros((8, 8), dtype=np.float32)
    y = np.ones((8, 8), dtype=np.uint8)
    with pytest.raises(ValidationError, match="shape"):
        SupportSet((s, np.zeros((10, 10), dtype=np.float32)), (y, np.ones((10, 10), dtype=np.uint8)))
    with pytest.raises(ValidationError, match="slice"):
        SupportSet((s,), (np.ones((10, 10), dtype=np.uint8),))


def test_support_set_pair_count():
    s = np.zeros((8, 8), dtype=np.float32)
    y = np.ones((8, 8), dtype=np.uint8)
    with pytest.raises(ValidationError, match="masks"):
        SupportSet((s, s), (y,))
    sup = SupportSet((s, s), (y, y))
    assert len(sup) == 2
    assert sup.slice_shape == (8, 8)
