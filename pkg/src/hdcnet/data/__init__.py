"""Dataset IO: PNM images, synthetic scene generation, on-disk samples,
and the checkpoint container."""

from .pnm import read_pgm, read_ppm, write_pgm, write_ppm, write_error_map
from .synthetic import SceneSpec, generate_scene
from .dataset import DepthSample, load_manifest, load_sample, load_split, write_sample, write_split
from .checkpoint import save_checkpoint, load_checkpoint, CheckpointError

__all__ = [
    "read_pgm",
    "read_ppm",
    "write_pgm",
    "write_ppm",
    "write_error_map",
    "SceneSpec",
    "generate_scene",
    "DepthSample",
    "load_manifest",
    "load_sample",
    "load_split",
    "write_sample",
    "write_split",
    "save_checkpoint",
    "load_checkpoint",
    "CheckpointError",
]
