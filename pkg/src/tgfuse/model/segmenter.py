import logging
from typing import Tuple

import numpy as np

from ..autodiff.tensor import Tensor
from ..config import ModelConfig
from ..models import Prediction
from ..nn.module import Module
from .decoder import MaskDecoder, decode
from .encoders import ImageEncoder, TextEncoder, encode_image, encode_text, set_frozen
from .mixer import build_mixer, mix
from .vocab import Vocabulary

logger = logging.getLogger(__name__)


class TextGuidedSegmenter(Module):
    """Image encoder, text encoder, stacked feature mixer and mask decoder."""

    def __init__(self, config: ModelConfig, vocab_size: int, seed: int = 0):
        rng = np.random.default_rng(seed)
        self._config = config
        self.image_encoder = ImageEncoder(config, rng)
        self.text_encoder = TextEncoder(config, vocab_size, rng)
        self.mixer = build_mixer(config, rng)
        self.decoder = MaskDecoder(config, rng)
        logger.info("model parameters=%d dim=%d mixer_depth=%d",
                    self.num_parameters(), config.dim, config.mixer_depth)

    @property
    def config(self) -> ModelConfig:
        return self._config

    def freeze_encoders(self, flag: bool) -> None:
        set_frozen(self.image_encoder, flag)
        set_frozen(self.text_encoder, flag)

    def forward(self, images: np.ndarray, tokens: np.ndarray) -> Tuple[Prediction, Tensor]:
        """Return the prediction and the pooled EOS text feature."""
        tokens = np.asarray(tokens, dtype=np.int64)
        f_im = encode_image(images, self.image_encoder)
        f_text, eos_feature = encode_text(tokens, self.text_encoder)
        text_mask = tokens != Vocabulary.PAD
        fused = mix(f_im, f_text, self.mixer, text_mask)
        return decode(fused, self.decoder, text_mask), eos_feature

    __call__ = forward
