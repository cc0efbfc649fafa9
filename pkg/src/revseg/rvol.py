"""RVOL binary volume format and support-set manifests.

Layout (little-endian throughout):

    offset  size  field
    0       4     magic  b"RVOL"
    4       2     version, u16, currently 1
    6       1     dtype, u8: 0 = float32 intensities, 1 = uint8 mask
    7       1     reserved, must be 0
    8       12    dims, u32 x 3: (M, H, W)
    20      ...   payload, slice-major raw values

Writes are bit-exact round trips: a Volume stores float32, so read(write(v))
reproduces the same bytes; masks travel as uint8 {0,1}.  Every parse error
names the byte offset it was detected at.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from revseg.volume import MaskVolume, SupportSet, Volume

MAGIC = b"RVOL"
VERSION = 1
DTYPE_F32 = 0
DTYPE_U8 = 1
HEADER = struct.Struct("<4sHBBIII")  # 20 bytes

# Guards against absurd dims from corrupt headers (1 TiB of float32).
_MAX_VOXELS = 1 << 38


class FormatError(ValueError):
    """Malformed RVOL data; message carries the byte offset."""


def write_volume(path, v: Volume | MaskVolume) -> None:
    path = Path(path)
    if isinstance(v, MaskVolume):
        dtype, payload = DTYPE_U8, v.data.astype(np.uint8)
    elif isinstance(v, Volume):
        dtype, payload = DTYPE_F32, v.data.astype("<f4")
    else:
        raise TypeError(f"cannot write {type(v).__name__} as RVOL")
    m, h, w = v.shape
    header = HEADER.pack(MAGIC, VERSION, dtype, 0, m, h, w)
    path.write_bytes(header + payload.tobytes(order="C"))


def read_volume(path) -> Volume | MaskVolume:
    blob = Path(path).read_bytes()
    return parse_volume(blob)


def parse_volume(blob: bytes) -> Volume | MaskVolume:
    if len(blob) < HEADER.size:
        raise FormatError(
            f"truncated header at offset {len(blob)}: need {HEADER.size} bytes"
        )
    magic, version, dtype, reserved, m, h, w = HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version} at offset 4")
    if dtype not in (DTYPE_F32, DTYPE_U8):
        raise FormatError(f"unknown dtype {dtype} at offset 6")
    if reserved != 0:
        raise FormatError(f"nonzero reserved byte at offset 7")
    n = m * h * w
    if n == 0 or n > _MAX_VOXELS:
        raise FormatError(f"dimension overflow ({m}x{h}x{w}) at offset 8")
    itemsize = 4 if dtype == DTYPE_F32 else 1
    expected = HEADER.size + n * itemsize
    if len(blob) < expected:
        raise FormatError(
            f"truncated payload at offset {len(blob)}: expected {expected} bytes"
        )
    if len(blob) > expected:
        raise FormatError(f"trailing garbage at offset {expected}")
    raw = blob[HEADER.size :]
    if dtype == DTYPE_F32:
        data = np.frombuffer(raw, dtype="<f4").reshape(m, h, w)
        return Volume(data)
    data = np.frombuffer(raw, dtype=np.uint8).reshape(m, h, w)
    return MaskVolume(data)


def write_support_manifest(path, pairs: list[tuple[str, str]], class_name: str) -> None:
    """JSON manifest listing (slice file, mask file) pairs for one class."""
    doc = {
        "class": class_name,
        "pairs": [{"slice": s, "mask": m} for s, m in pairs],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def read_support_manifest(path) -> SupportSet:
    """Load a manifest and the RVOL files it references into a SupportSet.

    Referenced paths are resolved relative to the manifest's directory.
    Each referenced volume must be single-slice (1, H, W).
    """
    path = Path(path)
    doc = json.loads(path.read_text())
    base = path.parent
    slices, masks = [], []
    for pair in doc["pairs"]:
        sv = read_volume(base / pair["slice"])
        mv = read_volume(base / pair["mask"])
        if not isinstance(sv, Volume) or not isinstance(mv, MaskVolume):
            raise FormatError(
                f"manifest pair {pair} mixes up intensity and mask files"
            )
        if sv.n_slices != 1 or mv.n_slices != 1:
            raise FormatError(f"manifest pair {pair} is not single-slice")
        slices.append(sv.slice(0))
        masks.append(mv.slice(0))
    return SupportSet(tuple(slices), tuple(masks))
