"""Model adapters: the five-stage contract at native model resolution.

An adapter works entirely at its own resolution and grid geometry; the
server resizes slices on the way in and masks on the way out, so the
engine never needs to know the model's native input size.

MockModel is a deterministic numpy stand-in with the same dataflow as a
real checkpoint: patch statistics with positional channels, distance
softmax over memory cells, nearest-neighbor mask decoding.  It exists so
the protocol surface can be conformance-tested without weights.
"""

from __future__ import annotations

import numpy as np

from sam2_bridge.config import BridgeConfig


def resize_nearest(a: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Deterministic nearest-neighbor resize (floor index mapping)."""
    h_in, w_in = a.shape
    h_out, w_out = shape
    rows = (np.arange(h_out) * h_in) // h_out
    cols = (np.arange(w_out) * w_in) // w_out
    return a[rows][:, cols]


class MockModel:
    """Deterministic promptable memory segmenter used without weights."""

    PATCH = 4
    FEAT_DIM = 4
    TEMPERATURE = 0.05

    def __init__(self, cfg: BridgeConfig):
        self.image_size = min(cfg.image_size, 32)
        self.grid = self.image_size // self.PATCH

    def encode_image(self, img: np.ndarray) -> np.ndarray:
        g, p = self.grid, self.PATCH
        blocks = img.reshape(g, p, g, p)
        mean = blocks.mean(axis=(1, 3))
        sq = (blocks * blocks).mean(axis=(1, 3))
        std = np.sqrt(np.maximum(sq - mean * mean, 0.0))
        rows = np.broadcast_to(np.arange(g)[:, None] / g, (g, g))
        cols = np.broadcast_to(np.arange(g)[None, :] / g, (g, g))
        return np.stack([mean, std, rows, cols], axis=-1).astype(np.float32)

    def encode_prompt(self, mask: np.ndarray) -> np.ndarray:
        g, p = self.grid, self.PATCH
        return (
            mask.astype(np.float64).reshape(g, p, g, p).mean(axis=(1, 3))
        ).astype(np.float32)

    def fuse_memory(self, feat: np.ndarray, prompt: np.ndarray):
        return (feat, prompt)

    def attend(self, query: np.ndarray, memories: list) -> np.ndarray:
        g = self.grid
        q = query.reshape(g * g, -1).astype(np.float64)
        keys = np.concatenate([m[0].reshape(g * g, -1) for m in memories]).astype(np.float64)
        values = np.concatenate([m[1].reshape(-1) for m in memories]).astype(np.float64)
        d2 = ((q[:, None, :] - keys[None, :, :]) ** 2).sum(axis=2)
        logits = -d2 / self.TEMPERATURE
        logits -= logits.max(axis=1, keepdims=True)
        w = np.exp(logits)
        probs = (w @ values) / w.sum(axis=1)
        return probs.reshape(g, g).astype(np.float32)

    def decode(self, probs: np.ndarray) -> np.ndarray:
        """Probabilities at native resolution; thresholding happens server-side."""
        return np.repeat(np.repeat(probs, self.PATCH, axis=0), self.PATCH, axis=1)


class Sam2Adapter:
    """Maps the five-stage contract onto a real checkpoint's modules.

    The public video-predictor API does not expose memory entries as
    addressable units, so this adapter drives the lower-level modules
    directly: image trunk for features, memory encoder for fused
    image+mask entries, memory attention for conditioning, and the mask
    decoder for logits.  Requires torch and the `sam2` package; absence
    surfaces as a load failure at INIT time.
    """

    CONFIGS = {
        "tiny": "configs/sam2.1/sam2.1_hiera_t.yaml",
        "small": "configs/sam2.1/sam2.1_hiera_s.yaml",
        "base-plus": "configs/sam2.1/sam2.1_hiera_b+.yaml",
        "large": "configs/sam2.1/sam2.1_hiera_l.yaml",
    }

    def __init__(self, cfg: BridgeConfig):
        import torch
        from sam2.build_sam import build_sam2

        self._torch = torch
        self.image_size = cfg.image_size
        self.device = cfg.device
        self.model = build_sam2(
            self.CONFIGS[cfg.model_size], cfg.checkpoint, device=cfg.device
        )
        self.model.eval()
        stride = 16  # lowest-resolution trunk output
        self.grid = cfg.image_size // stride

    def _to_tensor(self, img: np.ndarray):
        t = self._torch.from_numpy(img).float()
        t = t[None, None].repeat(1, 3, 1, 1)  # gray to 3-channel
        return t.to(self.device)

    def encode_image(self, img: np.ndarray) -> np.ndarray:
        with self._torch.inference_mode():
            out = self.model.image_encoder(self._to_tensor(img))
            feat = out["backbone_fpn"][-1]  # (1, C, grid, grid)
        return feat[0].permute(1, 2, 0).cpu().numpy().astype(np.float32)

    def encode_prompt(self, mask: np.ndarray) -> np.ndarray:
        g = self.grid
        p = self.image_size // g
        return (
            mask.astype(np.float64).reshape(g, p, g, p).mean(axis=(1, 3))
        ).astype(np.float32)

    def fuse_memory(self, feat: np.ndarray, prompt: np.ndarray):
        torch = self._torch
        with torch.inference_mode():
            pix = torch.from_numpy(feat).permute(2, 0, 1)[None].to(self.device)
            mask = torch.from_numpy(
                resize_nearest(prompt, (self.image_size, self.image_size))
            )[None, None].float().to(self.device)
            mem = self.model.memory_encoder(pix, mask, skip_mask_sigmoid=True)
        return (
            mem["vision_features"][0].permute(1, 2, 0).cpu().numpy(),
            prompt,
        )

    def attend(self, query: np.ndarray, memories: list) -> np.ndarray:
        torch = self._torch
        g = self.grid
        with torch.inference_mode():
            q = torch.from_numpy(query.reshape(g * g, -1))[:, None].to(self.device)
            mem_tokens = torch.cat(
                [torch.from_numpy(m[0].reshape(-1, m[0].shape[-1])) for m in memories]
            )[:, None].to(self.device)
            fused = self.model.memory_attention(
                curr=q, memory=mem_tokens, curr_pos=None, memory_pos=None
            )
            dense = fused.permute(1, 2, 0).reshape(1, -1, g, g)
            sparse = torch.zeros(
                1, 0, self.model.sam_prompt_encoder.embed_dim, device=self.device
            )
            low_res, *_ = self.model.sam_mask_decoder(
                image_embeddings=dense,
                image_pe=self.model.sam_prompt_encoder.get_dense_pe(),
                sparse_prompt_embeddings=sparse,
                dense_prompt_embeddings=torch.zeros_like(dense),
                multimask_output=False,
                repeat_image=False,
            )
            probs = torch.sigmoid(low_res)[0, 0].cpu().numpy()
        return resize_nearest(probs.astype(np.float32), (g, g))

    def decode(self, probs: np.ndarray) -> np.ndarray:
        return resize_nearest(probs, (self.image_size, self.image_size))


def build_adapter(cfg: BridgeConfig):
    if cfg.checkpoint is None:
        return MockModel(cfg)
    return Sam2Adapter(cfg)
