from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

MODEL_SIZES = ("tiny", "small", "base-plus", "large")


@dataclass(frozen=True)
class BridgeConfig:
    """How to load and drive the model behind the protocol.

    checkpoint None selects the built-in deterministic mock model, used
    for protocol conformance testing without weights.  `image_size` is
    the resolution every incoming slice is resized to before encoding;
    masks are un-resized to the caller's slice shape on the way out.
    """

    checkpoint: str | None = None
    model_size: str = "tiny"
    device: str = "cpu"
    image_size: int = 1024

    def __post_init__(self):
        if self.model_size not in MODEL_SIZES:
            raise ValueError(f"model size {self.model_size!r} not in {MODEL_SIZES}")
        if self.image_size < 8:
            raise ValueError(f"image size {self.image_size} too small")
        if self.checkpoint is not None and not Path(self.checkpoint).exists():
            raise FileNotFoundError(f"checkpoint not found: {self.checkpoint}")
