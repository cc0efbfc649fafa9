"""Wire framing, kept dependency-free so the bridge can live in the model's
own environment.

Frame layout (little-endian):

    u32  total      length of everything after this field
    u8   opcode
    u32  header_len
    ...  header     UTF-8 JSON object, header_len bytes
    ...  payload    total - 5 - header_len raw bytes

Length prefixes are authoritative; a reader never consumes past `total`.
Payloads are float32 little-endian for features/probabilities and uint8
for masks.
"""

from __future__ import annotations

import json
import struct

OP_INIT = 1
OP_ENCODE_IMAGE = 2
OP_ENCODE_PROMPT = 3
OP_ENCODE_MEMORY = 4
OP_ATTEND = 5
OP_DECODE = 6
OP_RESET = 7
OP_ERROR = 255

OPCODES = {
    OP_INIT,
    OP_ENCODE_IMAGE,
    OP_ENCODE_PROMPT,
    OP_ENCODE_MEMORY,
    OP_ATTEND,
    OP_DECODE,
    OP_RESET,
    OP_ERROR,
}

PROTOCOL_VERSION = 1
MAX_FRAME = 1 << 28

_U32 = struct.Struct("<I")


class WireError(ValueError):
    def __init__(self, code: str, detail: str):
        super().__init__(f"{code}: {detail}")
        self.code = code
        self.detail = detail


def encode_frame(opcode: int, header: dict, payload: bytes = b"") -> bytes:
    hb = json.dumps(header, separators=(",", ":")).encode("utf-8")
    total = 1 + 4 + len(hb) + len(payload)
    return _U32.pack(total) + bytes([opcode]) + _U32.pack(len(hb)) + hb + payload


def read_exact(stream, n: int) -> bytes:
    chunks, got = [], 0
    while got < n:
        c = stream.read(n - got)
        if not c:
            raise EOFError(f"stream closed after {got} of {n} bytes")
        chunks.append(c)
        got += len(c)
    return b"".join(chunks)


def read_frame(stream) -> tuple[int, dict, bytes]:
    """Read one frame; EOFError at a frame boundary means clean shutdown."""
    head = stream.read(4)
    if not head:
        raise EOFError("stream closed")
    if len(head) < 4:
        head += read_exact(stream, 4 - len(head))
    (total,) = _U32.unpack_from(head, 0)
    if total < 5 or total > MAX_FRAME:
        raise WireError("BAD_MAGIC", f"frame length {total} out of range")
    body = read_exact(stream, total)
    opcode = body[0]
    (header_len,) = _U32.unpack_from(body, 1)
    if header_len > total - 5:
        raise WireError(
            "BAD_MAGIC", f"header length {header_len} exceeds frame capacity {total - 5}"
        )
    try:
        header = json.loads(body[5 : 5 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise WireError("BAD_MAGIC", f"header is not valid JSON: {e}") from None
    if not isinstance(header, dict):
        raise WireError("BAD_MAGIC", "header JSON must be an object")
    if opcode not in OPCODES:
        raise WireError("UNKNOWN_OP", f"opcode {opcode} not in protocol")
    return opcode, header, body[5 + header_len :]


def write_frame(stream, opcode: int, header: dict, payload: bytes = b"") -> None:
    stream.write(encode_frame(opcode, header, payload))
    stream.flush()
