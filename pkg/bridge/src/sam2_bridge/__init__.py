"""Subprocess adapter that serves a segmentation model checkpoint over the
framed stdin/stdout backend protocol.

The engine on the other end of the pipe owns the memory-bank policy; this
process just executes the five stages (image encoding, prompt encoding,
memory encoding, memory attention, mask decoding) against a model and
hands out opaque integer ids for memory entries.  A deterministic mock
model ships for protocol conformance testing without weights.
"""

from sam2_bridge.config import BridgeConfig

__all__ = ["BridgeConfig"]

__version__ = "0.1.0"
