"""Backend contract plus the three implementations the engine ships with.

A backend exposes the five-stage interface the pipeline is written
against: encode_image / encode_prompt / encode_memory / attend / decode /
reset.  Memory handles returned by encode_memory are opaque; the caller
owns the memory-bank policy and passes an explicit ordered handle list to
every attend call.

Implementations:

* ToyBackend: the in-process patch segmenter (backbone module).
* SubprocessBackend: the same contract spoken over the wire protocol to a
  child process; one synchronous in-flight request per session.
* OracleBackend: returns registered ground truth by construction, making
  every pipeline stage exactly verifiable.  Its "features" are the raw
  pixels (grid shape (H, W, 1)) and decode is a byte-exact lookup.
"""

from __future__ import annotations

import itertools
import shlex
import subprocess
from dataclasses import dataclass

import numpy as np

from revseg import protocol
from revseg.backbone import (
    BackboneConfig,
    FeatureGrid,
    MemoryEntry,
    PromptGrid,
    decode_mask,
    encode_image,
    encode_memory,
    encode_prompt,
    memory_attention,
)
from revseg.volume import ValidationError

_session_counter = itertools.count(1)


class BackendError(RuntimeError):
    """Backend failure surfaced to the pipeline without retry."""

    def __init__(self, code: str, detail: str):
        super().__init__(f"{code}: {detail}")
        self.code = code
        self.detail = detail


@dataclass(frozen=True)
class BackendSession:
    session_id: int
    kind: str  # in-process-toy | subprocess | oracle
    patch: int
    feat_dim: int


class ToyBackend:
    """In-process deterministic patch segmenter."""

    def __init__(self, cfg: BackboneConfig):
        self.cfg = cfg
        self.session = BackendSession(
            next(_session_counter), "in-process-toy", cfg.patch, cfg.feat_dim
        )

    def encode_image(self, slice2d) -> FeatureGrid:
        return encode_image(slice2d, self.cfg)

    def encode_prompt(self, mask2d) -> PromptGrid:
        return encode_prompt(mask2d, self.cfg)

    def encode_memory(self, img: FeatureGrid, prompt: PromptGrid, kind: str):
        return encode_memory(img, prompt, kind)

    def attend(self, query: FeatureGrid, handles: list) -> np.ndarray:
        return memory_attention(query, list(handles), self.cfg)

    def decode(self, probs, shape) -> tuple[np.ndarray, np.ndarray]:
        return decode_mask(probs, shape, self.cfg)

    def reset(self) -> None:
        pass

    def close(self) -> None:
        pass


class OracleBackend:
    """Ground truth by fiat, keyed on exact slice bytes.

    Register every slice the pipeline may decode (query and support) with
    its true mask.  Registration assumes distinct slices have distinct
    bytes, which holds for any noisy phantom.
    """

    def __init__(self):
        self._truth: dict[bytes, np.ndarray] = {}
        self.session = BackendSession(next(_session_counter), "oracle", 1, 1)

    def register(self, slice2d: np.ndarray, gt_mask: np.ndarray) -> None:
        s = np.asarray(slice2d, dtype=np.float32)
        self._truth[s.tobytes()] = np.asarray(gt_mask, dtype=np.uint8)

    def register_volume(self, volume, gt) -> None:
        for i in range(volume.n_slices):
            self.register(volume.slice(i), gt.slice(i))

    def register_support(self, support) -> None:
        for s, y in zip(support.slices, support.masks):
            self.register(s, y)

    def encode_image(self, slice2d) -> FeatureGrid:
        s = np.asarray(slice2d, dtype=np.float32)
        return FeatureGrid(s[:, :, None])

    def encode_prompt(self, mask2d) -> PromptGrid:
        return PromptGrid(np.asarray(mask2d, dtype=np.float32))

    def encode_memory(self, img, prompt, kind):
        return encode_memory(img, prompt, kind)

    def attend(self, query: FeatureGrid, handles: list) -> np.ndarray:
        if not handles:
            raise ValidationError("memory must contain at least one entry")
        # pass the queried slice through; decode resolves it to ground truth
        return query.data[:, :, 0]

    def decode(self, probs, shape) -> tuple[np.ndarray, np.ndarray]:
        key = np.ascontiguousarray(probs, dtype=np.float32).tobytes()
        gt = self._truth.get(key)
        if gt is None:
            raise BackendError("STATE", "oracle has no truth for this slice")
        if gt.shape != tuple(shape):
            raise BackendError("BAD_SHAPE", f"truth {gt.shape} != requested {shape}")
        return gt.copy(), gt.astype(np.float32)

    def reset(self) -> None:
        pass

    def close(self) -> None:
        pass


class SubprocessBackend:
    """Client side of the wire protocol; spawns and owns a server process."""

    def __init__(self, cmd: str, cfg: BackboneConfig):
        self.cfg = cfg
        try:
            self._proc = subprocess.Popen(
                shlex.split(cmd),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
            )
        except OSError as e:
            raise BackendError("STATE", f"cannot spawn backend {cmd!r}: {e}") from None
        self._shape: tuple[int, int] | None = None
        header = {
            "protocol_version": protocol.PROTOCOL_VERSION,
            **cfg.to_dict(),
        }
        reply = self._call(protocol.OP_INIT, header)
        if not reply[0].get("accepted"):
            raise BackendError("STATE", f"backend rejected init: {reply[0]}")
        self.session = BackendSession(
            next(_session_counter), "subprocess", cfg.patch, cfg.feat_dim
        )

    def _call(self, opcode: int, header: dict, payload: bytes = b"") -> tuple[dict, bytes]:
        if self._proc.poll() is not None:
            raise BackendError("STATE", "backend process has exited")
        try:
            protocol.write_frame(self._proc.stdin, opcode, header, payload)
            op, h, p = protocol.read_frame(self._proc.stdout)
        except (EOFError, BrokenPipeError) as e:
            raise BackendError("STATE", f"backend stream closed: {e}") from None
        if op == protocol.OP_ERROR:
            raise BackendError(h.get("code", "STATE"), h.get("detail", ""))
        if op != opcode:
            raise BackendError("STATE", f"reply opcode {op} for request {opcode}")
        return h, p

    def encode_image(self, slice2d) -> FeatureGrid:
        s = np.ascontiguousarray(slice2d, dtype="<f4")
        h, p = self._call(
            protocol.OP_ENCODE_IMAGE, {"shape": list(s.shape)}, s.tobytes()
        )
        grid = np.frombuffer(p, dtype="<f4").reshape(h["grid"])
        return FeatureGrid(grid)

    def encode_prompt(self, mask2d) -> PromptGrid:
        m = np.ascontiguousarray(mask2d, dtype=np.uint8)
        h, p = self._call(
            protocol.OP_ENCODE_PROMPT, {"shape": list(m.shape)}, m.tobytes()
        )
        return PromptGrid(np.frombuffer(p, dtype="<f4").reshape(h["grid"]))

    def encode_memory(self, img: FeatureGrid, prompt: PromptGrid, kind: str) -> int:
        keys = np.ascontiguousarray(img.data, dtype="<f4")
        values = np.ascontiguousarray(prompt.data, dtype="<f4")
        h, _ = self._call(
            protocol.OP_ENCODE_MEMORY,
            {"kind": kind, "grid": list(keys.shape)},
            keys.tobytes() + values.tobytes(),
        )
        return h["entry_id"]

    def attend(self, query: FeatureGrid, handles: list) -> np.ndarray:
        q = np.ascontiguousarray(query.data, dtype="<f4")
        h, p = self._call(
            protocol.OP_ATTEND,
            {"grid": list(q.shape), "entry_ids": list(handles)},
            q.tobytes(),
        )
        return np.frombuffer(p, dtype="<f4").reshape(h["grid"])

    def decode(self, probs, shape) -> tuple[np.ndarray, np.ndarray]:
        pr = np.ascontiguousarray(probs, dtype="<f4")
        h, p = self._call(
            protocol.OP_DECODE,
            {"grid": list(pr.shape), "shape": [int(shape[0]), int(shape[1])]},
            pr.tobytes(),
        )
        hh, ww = h["shape"]
        n = hh * ww
        mask = np.frombuffer(p[:n], dtype=np.uint8).reshape(hh, ww)
        soft = np.frombuffer(p[n:], dtype="<f4").reshape(hh, ww)
        return mask, soft

    def reset(self) -> None:
        self._call(protocol.OP_RESET, {})

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)


def make_backend(selector: str, cfg: BackboneConfig):
    """Build a backend from a CLI-style selector string."""
    if selector == "toy":
        return ToyBackend(cfg)
    if selector == "oracle":
        return OracleBackend()
    if selector.startswith("subprocess:"):
        cmd = selector.split(":", 1)[1]
        if not cmd.strip():
            raise ValidationError("empty subprocess backend command")
        return SubprocessBackend(cmd, cfg)
    raise ValidationError(f"unknown backend selector {selector!r}")
