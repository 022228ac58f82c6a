import logging
from typing import Sequence, Tuple, Union

import numpy as np

from ..autodiff.tensor import Parameter, Tensor, getitem
from ..config import ModelConfig
from ..exceptions import ConfigurationError
from ..nn.layers import Embedding, LayerNorm, Linear, PatchEmbed, TransformerBlock
from ..nn.module import Module
from ..utils.model_utils import validate_image, validate_token_sequence
from .vocab import Vocabulary

logger = logging.getLogger(__name__)

TokenInput = Union[Sequence[int], Sequence[Sequence[int]], np.ndarray]


class ImageEncoder(Module):
    """ViT-style encoder: patch embedding followed by pre-norm transformer blocks."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        self._config = config
        std = config.init_std
        self.patch_embed = PatchEmbed(config.image_size, config.patch, config.channels, config.dim, rng, std)
        self.blocks = [
            TransformerBlock(config.dim, config.heads, config.ffn_ratio * config.dim, rng, std,
                             causal=False, activation=config.encoder_activation, eps=config.ln_eps)
            for _ in range(config.image_layers)
        ]
        self.ln_out = LayerNorm(config.dim, config.ln_eps)

    @property
    def config(self) -> ModelConfig:
        return self._config

    def __call__(self, images: np.ndarray) -> Tensor:
        return encode_image(images, self)


def encode_image(img: Union[np.ndarray, Tensor], enc: ImageEncoder) -> Tensor:
    """
    F_im = E_image(I).

    Accepts H×W×C (or H×W) grids, optionally with a leading batch axis, and
    returns (..., N_tok, d) with N_tok = (H/p)(W/p).
    """
    data = img.data if isinstance(img, Tensor) else img
    arr = validate_image(data)
    h, w, c = arr.shape[-3:]
    p = enc.patch_embed.patch
    if h % p or w % p:
        raise ConfigurationError(f"image {h}x{w} is not divisible by patch size {p}")
    if c != enc.config.channels:
        raise ConfigurationError(f"image has {c} channels, encoder expects {enc.config.channels}")
    x = enc.patch_embed(img if isinstance(img, Tensor) else Tensor(arr))
    for block in enc.blocks:
        x = block(x)
    return enc.ln_out(x)


class TextEncoder(Module):
    """Causal transformer over word tokens with a final layer norm and projection."""

    def __init__(self, config: ModelConfig, vocab_size: int, rng: np.random.Generator):
        self._config = config
        std = config.init_std
        self.token_embed = Embedding(vocab_size, config.dim, rng, std)
        self.pos = Parameter(rng.normal(0.0, std, size=(config.text_max_len, config.dim)))
        self.blocks = [
            TransformerBlock(config.dim, config.heads, config.ffn_ratio * config.dim, rng, std,
                             causal=True, activation=config.encoder_activation, eps=config.ln_eps)
            for _ in range(config.text_layers)
        ]
        self.ln_final = LayerNorm(config.dim, config.ln_eps)
        self.proj = Linear(config.dim, config.dim, rng, std, bias=False)

    @property
    def config(self) -> ModelConfig:
        return self._config

    def __call__(self, tokens: TokenInput) -> Tuple[Tensor, Tensor]:
        return encode_text(tokens, self)


def encode_text(tokens: TokenInput, enc: TextEncoder) -> Tuple[Tensor, Tensor]:
    """
    F_text = E_text(T).

    Returns the full projected sequence (..., L, d) and the projected EOS
    activation (..., d).
    """
    ids = np.asarray(tokens, dtype=np.int64)
    batched = ids.ndim == 2
    rows = ids if batched else ids[None, :]
    eos = np.array([validate_token_sequence(row, enc.config.text_max_len) for row in rows], dtype=np.int64)

    length = rows.shape[1]
    x = enc.token_embed(rows) + getitem(enc.pos, slice(0, length))
    for block in enc.blocks:
        x = block(x)
    features = enc.proj(enc.ln_final(x))
    eos_feature = getitem(features, (np.arange(rows.shape[0]), eos))
    if not batched:
        return features.reshape(length, -1), eos_feature.reshape(-1)
    return features, eos_feature


def set_frozen(enc: Module, flag: bool) -> None:
    """Frozen encoders still pass gradients through but receive no optimizer updates."""
    enc.frozen = flag
    logger.info("encoder=%s frozen=%s", type(enc).__name__, flag)
