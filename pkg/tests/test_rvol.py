import numpy as np
import pytest

from revseg.rvol import (
    HEADER,
    FormatError,
    parse_volume,
    read_support_manifest,
    read_volume,
    write_support_manifest,
    write_volume,
)
from revseg.volume import MaskVolume, Volume


def test_volume_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    v = Volume(rng.random((3, 8, 10)).astype(np.float32))
    p = tmp_path / "v.rvol"
    write_volume(p, v)
    back = read_volume(p)
    assert isinstance(back, Volume)
    assert back.data.tobytes() == v.data.tobytes()
    assert back.shape == v.shape


def test_mask_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    m = MaskVolume((rng.random((2, 8, 8)) < 0.5).astype(np.uint8))
    p = tmp_path / "m.rvol"
    write_volume(p, m)
    back = read_volume(p)
    assert isinstance(back, MaskVolume)
    assert np.array_equal(back.data, m.data)
    assert set(np.unique(back.data)) <= {0, 1}


def test_header_is_20_bytes_and_file_size_formula(tmp_path):
    assert HEADER.size == 20
    v = Volume(np.zeros((1, 8, 8), dtype=np.float32))
    p = tmp_path / "z.rvol"
    write_volume(p, v)
    assert p.stat().st_size == 20 + 256  # header + 64 float32 payload


def test_wrong_magic_names_expected(tmp_path):
    p = tmp_path / "bad.rvol"
    write_volume(p, Volume(np.zeros((1, 8, 8), dtype=np.float32)))
    blob = bytearray(p.read_bytes())
    blob[:4] = b"JUNK"
    with pytest.raises(FormatError, match="RVOL"):
        parse_volume(bytes(blob))


def test_truncated_payload_reports_offset(tmp_path):
    p = tmp_path / "t.rvol"
    write_volume(p, Volume(np.zeros((1, 8, 8), dtype=np.float32)))
    blob = p.read_bytes()[:100]
    with pytest.raises(FormatError, match="offset 100"):
        parse_volume(blob)


def test_truncated_header_reports_offset():
    with pytest.raises(FormatError, match="offset 10"):
        parse_volume(b"RVOL" + b"\x00" * 6)


def test_dimension_overflow_rejected():
    header = HEADER.pack(b"RVOL", 1, 0, 0, 2**31, 2**31, 4)
    with pytest.raises(FormatError, match="overflow"):
        parse_volume(header)


def test_trailing_garbage_rejected(tmp_path):
    p = tmp_path / "g.rvol"
    write_volume(p, Volume(np.zeros((1, 8, 8), dtype=np.float32)))
    with pytest.raises(FormatError, match="trailing"):
        parse_volume(p.read_bytes() + b"x")


def test_unknown_dtype_rejected():
    header = HEADER.pack(b"RVOL", 1, 9, 0, 1, 8, 8)
    with pytest.raises(FormatError, match="dtype"):
        parse_volume(header + b"\x00" * 64)


def test_manifest_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    slices = [rng.random((8, 8)).astype(np.float32) for _ in range(3)]
    masks = [(rng.random((8, 8)) < 0.4).astype(np.uint8) for _ in range(3)]
    masks[0][0, 0] = 1
    pairs = []
    for i, (s, m) in enumerate(zip(slices, masks)):
        si, mi = f"s{i}.rvol", f"m{i}.rvol"
        write_volume(tmp_path / si, Volume(s[None]))
        write_volume(tmp_path / mi, MaskVolume(m[None]))
        pairs.append((si, mi))
    write_support_manifest(tmp_path / "manifest.json", pairs, "organ")
    sup = read_support_manifest(tmp_path / "manifest.json")
    assert len(sup) == 3
    for i in range(3):
        assert np.array_equal(sup.slices[i], slices[i])
        assert np.array_equal(sup.masks[i], masks[i])


def test_manifest_rejects_swapped_files(tmp_path):
    rng = np.random.default_rng(3)
    s = rng.random((8, 8)).astype(np.float32)
    m = np.ones((8, 8), dtype=np.uint8)
    write_volume(tmp_path / "s.rvol", Volume(s[None]))
    write_volume(tmp_path / "m.rvol", MaskVolume(m[None]))
    write_support_manifest(tmp_path / "manifest.json", [("m.rvol", "s.rvol")], "x")
    with pytest.raises(FormatError, match="mixes up"):
        read_support_manifest(tmp_path / "manifest.json")
