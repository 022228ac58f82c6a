from .checkpoint import load_checkpoint, load_into, save_checkpoint
from .decoder import MaskDecoder, binarize, decode
from .encoders import ImageEncoder, TextEncoder, encode_image, encode_text
from .mixer import MixerBlock, build_mixer, mix, mix_block
from .segmenter import TextGuidedSegmenter
from .vocab import Vocabulary

__all__ = [
    'Vocabulary', 'ImageEncoder', 'TextEncoder', 'encode_image', 'encode_text',
    'MixerBlock', 'mix_block', 'mix', 'build_mixer', 'MaskDecoder', 'decode', 'binarize',
    'TextGuidedSegmenter', 'save_checkpoint', 'load_checkpoint', 'load_into',
]
