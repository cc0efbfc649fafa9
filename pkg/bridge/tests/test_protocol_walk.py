"""Protocol conformance against the mock model: every opcode, every error
path, no weights involved."""

import io

import numpy as np
import pytest

from sam2_bridge import framing
from sam2_bridge.config import BridgeConfig
from sam2_bridge.server import serve

HW = 32  # engine-side slice resolution used in these tests


def drive(frames):
    stdin = io.BytesIO(b"".join(frames))
    stdout = io.BytesIO()
    serve(BridgeConfig(), stdin, stdout)
    out, replies = stdout.getvalue(), []
    stream = io.BytesIO(out)
    while True:
        try:
            replies.append(framing.read_frame(stream))
        except EOFError:
            return replies


def init_frame(version=framing.PROTOCOL_VERSION):
    return framing.encode_frame(framing.OP_INIT, {"protocol_version": version})


def image_frame(seed=0):
    rng = np.random.default_rng(seed)
    img = rng.random((HW, HW)).astype("<f4")
    return framing.encode_frame(
        framing.OP_ENCODE_IMAGE, {"shape": [HW, HW]}, img.tobytes()
    )


def prompt_frame():
    mask = np.zeros((HW, HW), dtype=np.uint8)
    mask[8:20, 8:20] = 1
    return framing.encode_frame(
        framing.OP_ENCODE_PROMPT, {"shape": [HW, HW]}, mask.tobytes()
    )


def memory_frame(grid, keys, values):
    return framing.encode_frame(
        framing.OP_ENCODE_MEMORY,
        {"kind": "support", "grid": grid},
        keys + values,
    )


def test_full_opcode_walk():
    walk = [init_frame(), image_frame(), prompt_frame()]
    replies = drive(walk)
    assert replies[0][0] == framing.OP_INIT
    assert replies[0][1]["accepted"] is True
    grid = replies[1][1]["grid"]  # (gh, gw, d) from encode_image
    assert replies[1][0] == framing.OP_ENCODE_IMAGE
    assert len(replies[1][2]) == grid[0] * grid[1] * grid[2] * 4
    pgrid = replies[2][1]["grid"]
    assert pgrid == grid[:2]

    keys, values = replies[1][2], replies[2][2]
    walk.append(memory_frame(grid, keys, values))
    walk.append(
        framing.encode_frame(
            framing.OP_ATTEND, {"grid": grid, "entry_ids": [1]}, keys
        )
    )
    replies = drive(walk)
    assert replies[3][1] == {"entry_id": 1}
    assert replies[4][0] == framing.OP_ATTEND
    probs = replies[4][2]
    assert len(probs) == grid[0] * grid[1] * 4

    walk.append(
        framing.encode_frame(
            framing.OP_DECODE, {"grid": grid[:2], "shape": [HW, HW]}, probs
        )
    )
    walk.append(framing.encode_frame(framing.OP_RESET, {}))
    replies = drive(walk)
    op, header, payload = replies[5]
    assert op == framing.OP_DECODE
    assert header["shape"] == [HW, HW]
    mask = np.frombuffer(payload[: HW * HW], dtype=np.uint8)
    soft = np.frombuffer(payload[HW * HW :], dtype="<f4")
    assert mask.size == HW * HW and soft.size == HW * HW
    assert set(np.unique(mask)) <= {0, 1}
    assert replies[6][1] == {"ok": True}


def test_identical_request_streams_identical_responses():
    walk = [init_frame(), image_frame(3), prompt_frame()]
    a = drive(walk)
    b = drive(walk)
    assert [(op, h, p) for op, h, p in a] == [(op, h, p) for op, h, p in b]


def test_opcode_before_init_is_state_error():
    replies = drive([image_frame()])
    assert replies[0][0] == framing.OP_ERROR
    assert replies[0][1]["code"] == "STATE"


def test_protocol_version_mismatch_rejected():
    replies = drive([init_frame(version=42)])
    assert replies[0][1]["code"] == "STATE"


def test_double_init_rejected():
    replies = drive([init_frame(), init_frame()])
    assert replies[0][1]["accepted"] is True
    assert replies[1][1]["code"] == "STATE"


def test_unknown_opcode():
    bogus = framing.encode_frame(framing.OP_ERROR, {})
    replies = drive([bogus])
    assert replies[0][1]["code"] == "UNKNOWN_OP"


def test_payload_size_mismatch_is_bad_shape():
    bad = framing.encode_frame(
        framing.OP_ENCODE_IMAGE, {"shape": [HW, HW]}, b"\x00" * 7
    )
    replies = drive([init_frame(), bad])
    assert replies[1][1]["code"] == "BAD_SHAPE"


def test_attend_unknown_entry_is_state_error():
    walk = [init_frame(), image_frame()]
    replies = drive(walk)
    grid = replies[1][1]["grid"]
    walk.append(
        framing.encode_frame(
            framing.OP_ATTEND, {"grid": grid, "entry_ids": [99]}, replies[1][2]
        )
    )
    replies = drive(walk)
    assert replies[2][1]["code"] == "STATE"


def test_reset_frees_all_ids():
    walk = [init_frame(), image_frame(), prompt_frame()]
    replies = drive(walk)
    grid = replies[1][1]["grid"]
    keys, values = replies[1][2], replies[2][2]
    walk += [
        memory_frame(grid, keys, values),
        framing.encode_frame(framing.OP_RESET, {}),
        framing.encode_frame(
            framing.OP_ATTEND, {"grid": grid, "entry_ids": [1]}, keys
        ),
    ]
    replies = drive(walk)
    assert replies[3][1] == {"entry_id": 1}
    assert replies[4][1] == {"ok": True}
    assert replies[5][1]["code"] == "STATE"


def test_malformed_frame_answered_and_process_survives():
    lying = bytearray(framing.encode_frame(framing.OP_RESET, {}, b"abc"))
    lying[5:9] = (10**7).to_bytes(4, "little")  # header_len lies
    replies = drive([bytes(lying), init_frame()])
    assert replies[0][1]["code"] == "BAD_MAGIC"
    assert replies[1][1]["accepted"] is True


def test_slice_shape_pinned_per_session():
    other = np.zeros((16, 16), dtype="<f4")
    walk = [
        init_frame(),
        image_frame(),
        framing.encode_frame(
            framing.OP_ENCODE_IMAGE, {"shape": [16, 16]}, other.tobytes()
        ),
    ]
    replies = drive(walk)
    assert replies[2][1]["code"] == "BAD_SHAPE"


def test_nonbinary_prompt_rejected():
    mask = np.full((HW, HW), 7, dtype=np.uint8)
    walk = [
        init_frame(),
        framing.encode_frame(
            framing.OP_ENCODE_PROMPT, {"shape": [HW, HW]}, mask.tobytes()
        ),
    ]
    replies = drive(walk)
    assert replies[1][1]["code"] == "BAD_SHAPE"
