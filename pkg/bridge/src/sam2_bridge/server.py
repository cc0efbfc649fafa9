"""Protocol state machine: frames in, model stages out.

INIT must arrive first and loads the model (mock or checkpoint); a load
failure is answered with ERROR(STATE) and the process stays up so the
client sees a proper error instead of a broken pipe.  ENCODE_MEMORY hands
out integer entry ids, ATTEND resolves an explicit ordered id list (the
engine owns the FIFO policy), RESET frees every id.  Malformed frames get
ERROR(BAD_MAGIC) and the loop continues; only EOF ends it.

The engine's slice resolution is pinned by the first encode call; slices
are resized to the model's native input and decoded masks are resized
back, so the engine stays resolution-agnostic.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from sam2_bridge import framing
from sam2_bridge.adapters import build_adapter, resize_nearest
from sam2_bridge.config import BridgeConfig

MASK_THRESHOLD = 0.5  # fixed: the wire carries u8 masks


class BridgeServer:
    def __init__(self, cfg: BridgeConfig):
        self.cfg = cfg
        self.adapter = None
        self.entries: dict[int, object] = {}
        self.next_id = 1
        self.slice_shape: tuple[int, int] | None = None

    def _require_init(self):
        if self.adapter is None:
            raise framing.WireError("STATE", "INIT must precede this opcode")

    def _pin_shape(self, shape) -> tuple[int, int]:
        shape = (int(shape[0]), int(shape[1]))
        if shape[0] < 1 or shape[1] < 1:
            raise framing.WireError("BAD_SHAPE", f"bad slice shape {shape}")
        if self.slice_shape is None:
            self.slice_shape = shape
        elif shape != self.slice_shape:
            raise framing.WireError(
                "BAD_SHAPE", f"slice shape {shape} != negotiated {self.slice_shape}"
            )
        return shape

    def _native(self) -> tuple[int, int]:
        s = self.adapter.image_size
        return (s, s)

    def on_init(self, header, payload):
        if self.adapter is not None:
            raise framing.WireError("STATE", "session already initialized")
        version = header.get("protocol_version")
        if version != framing.PROTOCOL_VERSION:
            raise framing.WireError("STATE", f"protocol version {version} unsupported")
        try:
            self.adapter = build_adapter(self.cfg)
        except Exception as e:  # checkpoint or dependency failure
            raise framing.WireError("STATE", f"model load failed: {e}") from None
        g = self.adapter.grid
        return {"accepted": True, "grid": [g, g], "native_image_size": self.adapter.image_size}, b""

    def on_encode_image(self, header, payload):
        self._require_init()
        h, w = self._pin_shape(header["shape"])
        if len(payload) != h * w * 4:
            raise framing.WireError(
                "BAD_SHAPE", f"payload {len(payload)} bytes != {h * w * 4}"
            )
        img = np.frombuffer(payload, dtype="<f4").reshape(h, w)
        feat = self.adapter.encode_image(
            resize_nearest(img.astype(np.float64), self._native()).astype(np.float32)
        )
        data = np.ascontiguousarray(feat, dtype="<f4")
        return {"grid": list(data.shape)}, data.tobytes()

    def on_encode_prompt(self, header, payload):
        self._require_init()
        h, w = self._pin_shape(header["shape"])
        if len(payload) != h * w:
            raise framing.WireError(
                "BAD_SHAPE", f"payload {len(payload)} bytes != {h * w}"
            )
        mask = np.frombuffer(payload, dtype=np.uint8).reshape(h, w)
        if mask.max(initial=0) > 1:
            raise framing.WireError("BAD_SHAPE", "prompt mask must be binary")
        grid = self.adapter.encode_prompt(resize_nearest(mask, self._native()))
        data = np.ascontiguousarray(grid, dtype="<f4")
        return {"grid": list(data.shape)}, data.tobytes()

    def on_encode_memory(self, header, payload):
        self._require_init()
        dims = [int(v) for v in header["grid"]]
        if len(dims) != 3:
            raise framing.WireError("BAD_SHAPE", f"memory grid must be 3D, got {dims}")
        gh, gw, d = dims
        nk, nv = gh * gw * d * 4, gh * gw * 4
        if len(payload) != nk + nv:
            raise framing.WireError(
                "BAD_SHAPE", f"payload {len(payload)} bytes != {nk + nv}"
            )
        keys = np.frombuffer(payload[:nk], dtype="<f4").reshape(gh, gw, d)
        values = np.frombuffer(payload[nk:], dtype="<f4").reshape(gh, gw)
        entry = self.adapter.fuse_memory(keys, values)
        eid = self.next_id
        self.next_id += 1
        self.entries[eid] = entry
        return {"entry_id": eid}, b""

    def on_attend(self, header, payload):
        self._require_init()
        dims = [int(v) for v in header["grid"]]
        if len(dims) != 3:
            raise framing.WireError("BAD_SHAPE", f"query grid must be 3D, got {dims}")
        gh, gw, d = dims
        if len(payload) != gh * gw * d * 4:
            raise framing.WireError(
                "BAD_SHAPE", f"payload {len(payload)} bytes != {gh * gw * d * 4}"
            )
        ids = header.get("entry_ids", [])
        if not ids:
            raise framing.WireError("STATE", "attend requires at least one entry id")
        memories = []
        for eid in ids:
            entry = self.entries.get(eid)
            if entry is None:
                raise framing.WireError("STATE", f"unknown memory entry id {eid}")
            memories.append(entry)
        query = np.frombuffer(payload, dtype="<f4").reshape(gh, gw, d)
        probs = self.adapter.attend(query, memories)
        data = np.ascontiguousarray(probs, dtype="<f4")
        return {"grid": list(data.shape)}, data.tobytes()

    def on_decode(self, header, payload):
        self._require_init()
        gh, gw = (int(v) for v in header["grid"])
        h, w = (int(v) for v in header["shape"])
        if len(payload) != gh * gw * 4:
            raise framing.WireError(
                "BAD_SHAPE", f"payload {len(payload)} bytes != {gh * gw * 4}"
            )
        probs = np.frombuffer(payload, dtype="<f4").reshape(gh, gw)
        native_soft = self.adapter.decode(probs)
        soft = resize_nearest(native_soft, (h, w)).astype("<f4")
        mask = (soft >= np.float32(MASK_THRESHOLD)).astype(np.uint8)
        return {"shape": [h, w]}, mask.tobytes() + soft.tobytes()

    def on_reset(self, header, payload):
        self._require_init()
        self.entries.clear()
        return {"ok": True}, b""

    def handle(self, opcode, header, payload):
        handlers = {
            framing.OP_INIT: self.on_init,
            framing.OP_ENCODE_IMAGE: self.on_encode_image,
            framing.OP_ENCODE_PROMPT: self.on_encode_prompt,
            framing.OP_ENCODE_MEMORY: self.on_encode_memory,
            framing.OP_ATTEND: self.on_attend,
            framing.OP_DECODE: self.on_decode,
            framing.OP_RESET: self.on_reset,
        }
        fn = handlers.get(opcode)
        if fn is None:
            raise framing.WireError("UNKNOWN_OP", f"opcode {opcode}")
        return fn(header, payload)


def serve(cfg: BridgeConfig, stdin=None, stdout=None) -> None:
    stdin = stdin if stdin is not None else sys.stdin.buffer
    stdout = stdout if stdout is not None else sys.stdout.buffer
    server = BridgeServer(cfg)
    while True:
        try:
            opcode, header, payload = framing.read_frame(stdin)
        except EOFError:
            return
        except framing.WireError as e:
            framing.write_frame(
                stdout, framing.OP_ERROR, {"code": e.code, "detail": e.detail}
            )
            continue
        try:
            rh, rp = server.handle(opcode, header, payload)
            framing.write_frame(stdout, opcode, rh, rp)
        except framing.WireError as e:
            framing.write_frame(
                stdout, framing.OP_ERROR, {"code": e.code, "detail": e.detail}
            )


def main(argv=None) -> int:
    p = argparse.ArgumentParser(
        prog="sam2-bridge",
        description="serve a segmentation checkpoint over the framed stdio protocol",
    )
    p.add_argument("--checkpoint", help="model weights; omit (or --mock) for the mock model")
    p.add_argument("--mock", action="store_true", help="serve the deterministic mock model")
    p.add_argument("--model-size", default="tiny",
                   choices=["tiny", "small", "base-plus", "large"])
    p.add_argument("--device", default="cpu")
    p.add_argument("--image-size", type=int, default=1024)
    args = p.parse_args(argv)
    if args.mock and args.checkpoint:
        p.error("--mock and --checkpoint are mutually exclusive")
    cfg = BridgeConfig(
        checkpoint=None if args.mock else args.checkpoint,
        model_size=args.model_size,
        device=args.device,
        image_size=args.image_size,
    )
    serve(cfg)
    return 0


if __name__ == "__main__":
    sys.exit(main())
