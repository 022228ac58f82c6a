from .dataset import SPLIT_OFFSETS, build_dataset, flip_horizontal, load_samples, make_sample, read_manifest
from .describe import describe, relation_of
from .pgm import read_pgm, write_pgm
from .scenes import generate_scene, quadrant_of, rasterize, render

__all__ = [
    'generate_scene', 'render', 'rasterize', 'quadrant_of', 'describe', 'relation_of',
    'write_pgm', 'read_pgm', 'build_dataset', 'make_sample', 'read_manifest', 'load_samples',
    'flip_horizontal', 'SPLIT_OFFSETS',
]
