"""Length-prefixed binary framing for backend subprocess sessions.

Frame layout (little-endian):

    u32  total     length of everything after this field
    u8   opcode
    u32  header_len
    ...  header     UTF-8 JSON, header_len bytes
    ...  payload    raw bytes, total - 5 - header_len bytes

The length prefixes are authoritative: a reader never consumes bytes past
`total`, so concatenated frames re-parse unambiguously and a lying header
length is detected without overreading.  Payload numeric conventions:
float32 little-endian for features/probabilities, uint8 for masks.
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

# 256 MiB; anything larger is a corrupt or hostile length field.
MAX_FRAME = 1 << 28

_U32 = struct.Struct("<I")
_OPC = struct.Struct("<B")


class ProtocolError(ValueError):
    """Malformed frame; carries a machine-readable code."""

    def __init__(self, code: str, detail: str):
        super().__init__(f"{code}: {detail}")
        self.code = code
        self.detail = detail


def encode_frame(opcode: int, header: dict, payload: bytes = b"") -> bytes:
    if opcode not in OPCODES:
        raise ProtocolError("UNKNOWN_OP", f"opcode {opcode} not in protocol")
    hb = json.dumps(header, separators=(",", ":")).encode("utf-8")
    total = 1 + 4 + len(hb) + len(payload)
    return _U32.pack(total) + _OPC.pack(opcode) + _U32.pack(len(hb)) + hb + payload


def parse_frame(buf: bytes) -> tuple[int, dict, bytes, int]:
    """Parse one frame from the head of `buf`.

    Returns (opcode, header, payload, consumed).  Raises ProtocolError on a
    structurally invalid frame and EOFError when more bytes are needed.
    """
    if len(buf) < 4:
        raise EOFError("need more bytes for frame length")
    (total,) = _U32.unpack_from(buf, 0)
    if total < 5:
        raise ProtocolError("BAD_MAGIC", f"frame length {total} below minimum 5")
    if total > MAX_FRAME:
        raise ProtocolError("BAD_MAGIC", f"frame length {total} exceeds cap {MAX_FRAME}")
    if len(buf) < 4 + total:
        raise EOFError("need more bytes for frame body")
    opcode = buf[4]
    (header_len,) = _U32.unpack_from(buf, 5)
    if header_len > total - 5:
        raise ProtocolError(
            "BAD_MAGIC",
            f"header length {header_len} exceeds frame capacity {total - 5}",
        )
    hb = buf[9 : 9 + header_len]
    payload = buf[9 + header_len : 4 + total]
    try:
        header = json.loads(hb.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ProtocolError("BAD_MAGIC", f"header is not valid JSON: {e}") from None
    if not isinstance(header, dict):
        raise ProtocolError("BAD_MAGIC", "header JSON must be an object")
    if opcode not in OPCODES:
        raise ProtocolError("UNKNOWN_OP", f"opcode {opcode} not in protocol")
    return opcode, header, payload, 4 + total


def write_frame(stream, opcode: int, header: dict, payload: bytes = b"") -> None:
    stream.write(encode_frame(opcode, header, payload))
    stream.flush()


def read_exact(stream, n: int) -> bytes:
    chunks = []
    got = 0
    while got < n:
        c = stream.read(n - got)
        if not c:
            raise EOFError(f"stream closed after {got} of {n} bytes")
        chunks.append(c)
        got += len(c)
    return b"".join(chunks)


def read_frame(stream) -> tuple[int, dict, bytes]:
    """Blocking read of one frame from a binary stream.

    EOFError at a frame boundary means clean shutdown; mid-frame EOF and
    structural violations raise ProtocolError via parse_frame semantics.
    """
    head = stream.read(4)
    if not head:
        raise EOFError("stream closed")
    if len(head) < 4:
        head += read_exact(stream, 4 - len(head))
    (total,) = _U32.unpack_from(head, 0)
    if total < 5 or total > MAX_FRAME:
        raise ProtocolError("BAD_MAGIC", f"frame length {total} out of range")
    body = read_exact(stream, total)
    opcode, header, payload, consumed = parse_frame(head + body)
    assert consumed == 4 + total
    return opcode, header, payload
