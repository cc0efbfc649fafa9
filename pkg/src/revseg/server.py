"""Wire-protocol server wrapping the in-process toy segmenter.

Run as `revseg serve-toy` (or `python -m revseg.server`); speaks framed
messages on stdin/stdout.  One session per process, strictly sequential.
State machine: INIT must arrive first; ENCODE_MEMORY hands out integer
entry ids; ATTEND resolves an explicit ordered id list, so the memory-bank
policy stays entirely on the client; RESET frees all ids.

Protocol violations are answered with an ERROR frame and the process keeps
serving; only EOF (or an unframeable stream) ends the loop.
"""

from __future__ import annotations

import sys

import numpy as np

from revseg import protocol
from revseg.backbone import (
    BackboneConfig,
    FeatureGrid,
    PromptGrid,
    decode_mask,
    encode_image,
    encode_memory,
    encode_prompt,
    memory_attention,
)
from revseg.volume import ValidationError


class ToyServer:
    def __init__(self):
        self.cfg: BackboneConfig | None = None
        self.entries: dict[int, object] = {}
        self.next_id = 1
        self.slice_shape: tuple[int, int] | None = None

    # -- per-opcode handlers; each returns (header, payload) ------------

    def _require_init(self):
        if self.cfg is None:
            raise protocol.ProtocolError("STATE", "INIT must precede this opcode")

    def _check_slice_shape(self, shape):
        shape = (int(shape[0]), int(shape[1]))
        if self.slice_shape is None:
            self.slice_shape = shape
        elif shape != self.slice_shape:
            raise protocol.ProtocolError(
                "BAD_SHAPE", f"slice shape {shape} != negotiated {self.slice_shape}"
            )
        return shape

    def on_init(self, header, payload):
        if self.cfg is not None:
            raise protocol.ProtocolError("STATE", "session already initialized")
        version = header.get("protocol_version")
        if version != protocol.PROTOCOL_VERSION:
            raise protocol.ProtocolError(
                "STATE", f"protocol version {version} unsupported"
            )
        try:
            self.cfg = BackboneConfig(
                patch=int(header["patch"]),
                feat_dim=int(header["feat_dim"]),
                temperature=float(header["temperature"]),
                lambda_pos=float(header["lambda_pos"]),
                threshold=float(header["threshold"]),
                seed=int(header["seed"]),
            )
        except (KeyError, ValidationError) as e:
            raise protocol.ProtocolError("STATE", f"bad init config: {e}") from None
        return {
            "accepted": True,
            "patch": self.cfg.patch,
            "feat_dim": self.cfg.feat_dim,
        }, b""

    def on_encode_image(self, header, payload):
        self._require_init()
        h, w = self._check_slice_shape(header["shape"])
        if len(payload) != h * w * 4:
            raise protocol.ProtocolError(
                "BAD_SHAPE", f"payload {len(payload)} bytes != {h * w * 4}"
            )
        img = np.frombuffer(payload, dtype="<f4").reshape(h, w)
        try:
            grid = encode_image(img, self.cfg)
        except ValidationError as e:
            raise protocol.ProtocolError("BAD_SHAPE", str(e)) from None
        data = np.ascontiguousarray(grid.data, dtype="<f4")
        return {"grid": list(data.shape)}, data.tobytes()

    def on_encode_prompt(self, header, payload):
        self._require_init()
        h, w = self._check_slice_shape(header["shape"])
        if len(payload) != h * w:
            raise protocol.ProtocolError(
                "BAD_SHAPE", f"payload {len(payload)} bytes != {h * w}"
            )
        mask = np.frombuffer(payload, dtype=np.uint8).reshape(h, w)
        try:
            grid = encode_prompt(mask, self.cfg)
        except ValidationError as e:
            raise protocol.ProtocolError("BAD_SHAPE", str(e)) from None
        data = np.ascontiguousarray(grid.data, dtype="<f4")
        return {"grid": list(data.shape)}, data.tobytes()

    def on_encode_memory(self, header, payload):
        self._require_init()
        gh, gw, d = (int(v) for v in header["grid"])
        kind = header.get("kind", "support")
        nk = gh * gw * d * 4
        nv = gh * gw * 4
        if len(payload) != nk + nv:
            raise protocol.ProtocolError(
                "BAD_SHAPE", f"payload {len(payload)} bytes != {nk + nv}"
            )
        keys = FeatureGrid(np.frombuffer(payload[:nk], dtype="<f4").reshape(gh, gw, d))
        values = PromptGrid(np.frombuffer(payload[nk:], dtype="<f4").reshape(gh, gw))
        try:
            entry = encode_memory(keys, values, kind)
        except ValidationError as e:
            raise protocol.ProtocolError("BAD_SHAPE", str(e)) from None
        eid = self.next_id
        self.next_id += 1
        self.entries[eid] = entry
        return {"entry_id": eid}, b""

    def on_attend(self, header, payload):
        self._require_init()
        gh, gw, d = (int(v) for v in header["grid"])
        if len(payload) != gh * gw * d * 4:
            raise protocol.ProtocolError(
                "BAD_SHAPE", f"payload {len(payload)} bytes != {gh * gw * d * 4}"
            )
        query = FeatureGrid(np.frombuffer(payload, dtype="<f4").reshape(gh, gw, d))
        memory = []
        for eid in header.get("entry_ids", []):
            entry = self.entries.get(eid)
            if entry is None:
                raise protocol.ProtocolError("STATE", f"unknown memory entry id {eid}")
            memory.append(entry)
        try:
            probs = memory_attention(query, memory, self.cfg)
        except ValidationError as e:
            raise protocol.ProtocolError("BAD_SHAPE", str(e)) from None
        data = np.ascontiguousarray(probs, dtype="<f4")
        return {"grid": list(data.shape)}, data.tobytes()

    def on_decode(self, header, payload):
        self._require_init()
        gh, gw = (int(v) for v in header["grid"])
        h, w = (int(v) for v in header["shape"])
        if len(payload) != gh * gw * 4:
            raise protocol.ProtocolError(
                "BAD_SHAPE", f"payload {len(payload)} bytes != {gh * gw * 4}"
            )
        probs = np.frombuffer(payload, dtype="<f4").reshape(gh, gw)
        try:
            mask, soft = decode_mask(probs, (h, w), self.cfg)
        except ValidationError as e:
            raise protocol.ProtocolError("BAD_SHAPE", str(e)) from None
        out = mask.astype(np.uint8).tobytes() + np.ascontiguousarray(
            soft, dtype="<f4"
        ).tobytes()
        return {"shape": [h, w]}, out

    def handle(self, opcode, header, payload):
        handlers = {
            protocol.OP_INIT: self.on_init,
            protocol.OP_ENCODE_IMAGE: self.on_encode_image,
            protocol.OP_ENCODE_PROMPT: self.on_encode_prompt,
            protocol.OP_ENCODE_MEMORY: self.on_encode_memory,
            protocol.OP_ATTEND: self.on_attend,
            protocol.OP_DECODE: self.on_decode,
            protocol.OP_RESET: self.on_reset,
        }
        fn = handlers.get(opcode)
        if fn is None:
            raise protocol.ProtocolError("UNKNOWN_OP", f"opcode {opcode}")
        return fn(header, payload)

    def on_reset(self, header, payload):
        self._require_init()
        self.entries.clear()
        return {"ok": True}, b""


def serve(stdin=None, stdout=None) -> None:
    """Run the request loop until EOF on stdin."""
    stdin = stdin if stdin is not None else sys.stdin.buffer
    stdout = stdout if stdout is not None else sys.stdout.buffer
    server = ToyServer()
    while True:
        try:
            opcode, header, payload = protocol.read_frame(stdin)
        except EOFError:
            return
        except protocol.ProtocolError as e:
            protocol.write_frame(
                stdout, protocol.OP_ERROR, {"code": e.code, "detail": e.detail}
            )
            continue
        try:
            rh, rp = server.handle(opcode, header, payload)
            protocol.write_frame(stdout, opcode, rh, rp)
        except protocol.ProtocolError as e:
            protocol.write_frame(
                stdout, protocol.OP_ERROR, {"code": e.code, "detail": e.detail}
            )


if __name__ == "__main__":
    serve()
