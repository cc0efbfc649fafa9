"""Forward propagation, reverse-propagation scoring, top-k selection, and
FIFO self-propagation over a query volume, written against the backend
contract only.

Stage contracts:

* forward_propagate: every query slice is predicted against a static
  memory holding exactly the support entries, so predictions are
  independent of slice processing order.
* reverse_score: one memory entry built from (query slice, its predicted
  mask) re-segments every support slice; the score is the average dice of
  those re-segmentations against the true support masks.  Pure function.
* select_conditional: top-k by (score desc, slice index asc).
* self_propagate: conditional entries are permanent, their output masks
  frozen; remaining slices are swept in ascending order with a bounded
  FIFO of the most recent predictions (oldest evicted first).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from revseg.metrics import avg_dice, dice
from revseg.volume import MaskVolume, SupportSet, ValidationError, Volume

VARIANTS = ("baseline", "forward_fifo", "random_select", "revprop")


@dataclass(frozen=True)
class PipelineConfig:
    k: int = 7
    tau: int = 7
    variant: str = "revprop"
    random_seed: int = 0
    backend: str = "toy"

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")
        if self.tau < 1:
            raise ValidationError(f"tau must be >= 1, got {self.tau}")
        if self.variant not in VARIANTS:
            raise ValidationError(
                f"variant {self.variant!r} not one of {VARIANTS}"
            )

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "tau": self.tau,
            "variant": self.variant,
            "random_seed": self.random_seed,
            "backend": self.backend,
        }


@dataclass
class ScoredPrediction:
    index: int
    mask: np.ndarray
    soft: np.ndarray
    score: float | None = None


@dataclass
class SliceRecord:
    index: int
    score: float | None
    forward_dice: float | None
    final_dice: float | None


@dataclass
class PipelineReport:
    variant: str
    config: dict
    selected: list[int] | None
    slices: list[SliceRecord]
    wall_clock: float
    volume_dice: float | None = None

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "config": self.config,
            "selected": self.selected,
            "wall_clock": self.wall_clock,
            "volume_dice": self.volume_dice,
            "slices": [
                {
                    "index": r.index,
                    "score": r.score,
                    "forward_dice": r.forward_dice,
                    "final_dice": r.final_dice,
                }
                for r in self.slices
            ],
        }

    def to_csv(self) -> str:
        lines = ["index,score,forward_dice,final_dice"]
        for r in self.slices:
            cells = [
                str(r.index),
                "" if r.score is None else f"{r.score:.6f}",
                "" if r.forward_dice is None else f"{r.forward_dice:.6f}",
                "" if r.final_dice is None else f"{r.final_dice:.6f}",
            ]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


class MemoryBank:
    """Permanent entries plus a capacity-tau FIFO of recent ones.

    Permanent entries are never evicted; push_recent evicts strictly
    oldest-first once the FIFO is full.  view() lists permanent entries
    followed by recent ones newest-first.
    """

    def __init__(self, permanent: list, tau: int):
        if tau < 1:
            raise ValidationError(f"tau must be >= 1, got {tau}")
        self.permanent = list(permanent)
        self.tau = tau
        self._fifo: list = []

    def push_recent(self, handle) -> None:
        if len(self._fifo) == self.tau:
            self._fifo.pop(0)
        self._fifo.append(handle)
        assert len(self._fifo) <= self.tau

    @property
    def recent(self) -> list:
        return list(self._fifo)

    def view(self) -> list:
        return self.permanent + self._fifo[::-1]

    def __len__(self) -> int:
        return len(self.permanent) + len(self._fifo)


def _check_shapes(support: SupportSet, query: Volume) -> tuple[int, int]:
    h, w = query.shape[1], query.shape[2]
    if support.slice_shape != (h, w):
        raise ValidationError(
            f"support slices {support.slice_shape} != query slices {(h, w)}"
        )
    return h, w


def _encode_support(support: SupportSet, backend) -> list:
    return [
        backend.encode_memory(
            backend.encode_image(s), backend.encode_prompt(y), "support"
        )
        for s, y in zip(support.slices, support.masks)
    ]


def forward_propagate(
    support: SupportSet, query: Volume, backend, cfg: PipelineConfig
) -> list[ScoredPrediction]:
    """Predict every query slice from the static support memory."""
    h, w = _check_shapes(support, query)
    entries = _encode_support(support, backend)
    preds = []
    for i in range(query.n_slices):
        grid = backend.encode_image(query.slice(i))
        probs = backend.attend(grid, entries)
        mask, soft = backend.decode(probs, (h, w))
        preds.append(ScoredPrediction(i, mask, soft))
    return preds


def _reverse_score_encoded(
    support_grids: list, support_masks, q_grid, p_mask, backend, shape
) -> float:
    prompt = backend.encode_prompt(p_mask)
    entry = backend.encode_memory(q_grid, prompt, "conditional")
    rev = []
    for grid in support_grids:
        probs = backend.attend(grid, [entry])
        mask, _ = backend.decode(probs, shape)
        rev.append(mask)
    return avg_dice(rev, support_masks)


def reverse_score(
    support: SupportSet, q_slice: np.ndarray, p_mask: np.ndarray, backend, cfg: PipelineConfig
) -> float:
    """Score one (query slice, predicted mask) pair against the supports."""
    shape = support.slice_shape
    grids = [backend.encode_image(s) for s in support.slices]
    q_grid = backend.encode_image(q_slice)
    return _reverse_score_encoded(grids, support.masks, q_grid, p_mask, backend, shape)


def select_conditional(scored: list[ScoredPrediction], k: int) -> list[int]:
    """Indices of the top-k scores, ties broken by ascending slice index."""
    if not scored:
        raise ValidationError("nothing to select from")
    for s in scored:
        if s.score is None:
            raise ValidationError(f"slice {s.index} has no score")
    order = sorted(scored, key=lambda s: (-s.score, s.index))
    return [s.index for s in order[: min(k, len(scored))]]


def _fifo_sweep(
    query: Volume,
    permanent: list,
    frozen: dict[int, np.ndarray],
    backend,
    tau: int,
) -> MaskVolume:
    """Ascending pass over non-frozen slices with a bounded FIFO of recent
    predictions; frozen slices keep their masks and are never re-predicted."""
    m, h, w = query.shape
    bank = MemoryBank(permanent, tau)
    out = np.zeros((m, h, w), dtype=np.uint8)
    for j in range(m):
        if j in frozen:
            out[j] = frozen[j]
            continue
        grid = backend.encode_image(query.slice(j))
        probs = backend.attend(grid, bank.view())
        mask, _ = backend.decode(probs, (h, w))
        out[j] = mask
        bank.push_recent(
            backend.encode_memory(grid, backend.encode_prompt(mask), "recent")
        )
    return MaskVolume(out)


def self_propagate(
    query: Volume,
    conditional: tuple[list[int], list[np.ndarray]],
    backend,
    cfg: PipelineConfig,
) -> MaskVolume:
    """Propagate frozen conditional masks through the rest of the volume."""
    indices, masks = conditional
    if not indices:
        raise ValidationError("conditional set must be non-empty")
    if len(indices) != len(masks):
        raise ValidationError("conditional indices and masks disagree in length")
    if len(set(indices)) != len(indices):
        raise ValidationError("conditional indices must be unique")
    for i in indices:
        if not (0 <= i < query.n_slices):
            raise ValidationError(f"conditional index {i} outside volume")
    frozen = {}
    for i, p in zip(indices, masks):
        p = np.asarray(p)
        if not np.isin(p, (0, 1)).all():
            raise ValidationError(f"conditional mask for slice {i} is not binary")
        frozen[i] = p.astype(np.uint8)
    permanent = [
        backend.encode_memory(
            backend.encode_image(query.slice(i)),
            backend.encode_prompt(frozen[i]),
            "conditional",
        )
        for i in sorted(frozen)
    ]
    return _fifo_sweep(query, permanent, frozen, backend, cfg.tau)


def _report(
    variant: str,
    cfg: PipelineConfig,
    preds: list[ScoredPrediction] | None,
    selected: list[int] | None,
    out: MaskVolume,
    gt: MaskVolume | None,
    t0: float,
) -> PipelineReport:
    slices = []
    m = out.n_slices
    for i in range(m):
        score = fwd = fin = None
        if preds is not None:
            score = preds[i].score
            if gt is not None:
                fwd = dice(preds[i].mask, gt.slice(i))
        if gt is not None:
            fin = dice(out.slice(i), gt.slice(i))
        slices.append(SliceRecord(i, score, fwd, fin))
    vol_dice = dice(out.data, gt.data) if gt is not None else None
    return PipelineReport(
        variant=variant,
        config=cfg.to_dict(),
        selected=selected,
        slices=slices,
        wall_clock=time.perf_counter() - t0,
        volume_dice=vol_dice,
    )


def run_pipeline(
    support: SupportSet,
    query: Volume,
    backend,
    cfg: PipelineConfig,
    gt: MaskVolume | None = None,
) -> tuple[MaskVolume, PipelineReport]:
    """forward -> reverse score -> top-k select -> self-propagate."""
    t0 = time.perf_counter()
    backend.reset()
    h, w = _check_shapes(support, query)
    preds = forward_propagate(support, query, backend, cfg)
    support_grids = [backend.encode_image(s) for s in support.slices]
    for p in preds:
        q_grid = backend.encode_image(query.slice(p.index))
        p.score = _reverse_score_encoded(
            support_grids, support.masks, q_grid, p.mask, backend, (h, w)
        )
    selected = select_conditional(preds, cfg.k)
    out = self_propagate(
        query, (selected, [preds[i].mask for i in selected]), backend, cfg
    )
    return out, _report("revprop", cfg, preds, selected, out, gt, t0)


def run_variant(
    variant: str,
    support: SupportSet,
    query: Volume,
    backend,
    cfg: PipelineConfig,
    gt: MaskVolume | None = None,
) -> tuple[MaskVolume, PipelineReport]:
    """Dispatch one of the four pipeline variants.

    baseline       forward propagation only
    forward_fifo   support entries permanent, FIFO sweep over all slices
    random_select  k uniformly chosen conditional slices (seeded)
    revprop        the full reverse-scored pipeline
    """
    if variant not in VARIANTS:
        raise ValidationError(f"variant {variant!r} not one of {VARIANTS}")
    t0 = time.perf_counter()
    if variant == "revprop":
        return run_pipeline(support, query, backend, cfg, gt)
    backend.reset()
    _check_shapes(support, query)
    if variant == "baseline":
        preds = forward_propagate(support, query, backend, cfg)
        out = MaskVolume(np.stack([p.mask for p in preds]))
        return out, _report(variant, cfg, preds, None, out, gt, t0)
    if variant == "forward_fifo":
        permanent = _encode_support(support, backend)
        out = _fifo_sweep(query, permanent, {}, backend, cfg.tau)
        return out, _report(variant, cfg, None, None, out, gt, t0)
    # random_select
    preds = forward_propagate(support, query, backend, cfg)
    rng = np.random.default_rng(cfg.random_seed)
    m = query.n_slices
    selected = sorted(rng.choice(m, size=min(cfg.k, m), replace=False).tolist())
    out = self_propagate(
        query, (selected, [preds[i].mask for i in selected]), backend, cfg
    )
    return out, _report(variant, cfg, preds, selected, out, gt, t0)
