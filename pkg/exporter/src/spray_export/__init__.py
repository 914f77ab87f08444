"""spray-export: bridge trained segmentation checkpoints (or the reference
toy architecture) to the sprayeval pipeline, either by serving the framed
stdio engine protocol or by dumping per-image TNSR outputs."""

from .torch_backend import ARCHITECTURES, BACKBONES, CheckpointSpec, make_engine

__version__ = "0.1.0"
