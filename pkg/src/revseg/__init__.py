"""Memory-bank label propagation for volumetric segmentation.

A small set of labeled 2D support slices defines the task; the engine
forward-propagates their fused image/mask features onto every slice of a
query volume, scores each predicted slice by reverse-propagating it back
onto the supports, keeps the top-k scoring predictions as conditional
anchors, and finally sweeps the remaining slices with a bounded FIFO of
recent predictions.  Backends are pluggable: a deterministic in-process
patch segmenter, the same segmenter behind a subprocess wire protocol, or
a ground-truth oracle for verification.
"""

from revseg.backbone import BackboneConfig
from revseg.metrics import avg_dice, dice, nsd, spearman
from revseg.phantom import PhantomSpec, gen_phantom
from revseg.pipeline import PipelineConfig, run_pipeline, run_variant
from revseg.rvol import read_volume, write_volume
from revseg.volume import MaskVolume, SupportSet, Volume

__all__ = [
    "BackboneConfig",
    "MaskVolume",
    "PhantomSpec",
    "PipelineConfig",
    "SupportSet",
    "Volume",
    "avg_dice",
    "dice",
    "gen_phantom",
    "nsd",
    "read_volume",
    "run_pipeline",
    "run_variant",
    "spearman",
    "write_volume",
]

__version__ = "0.1.0"
