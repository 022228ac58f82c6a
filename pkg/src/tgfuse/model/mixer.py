from typing import Optional, Sequence

import numpy as np

from ..autodiff.tensor import Tensor, as_tensor
from ..config import ModelConfig
from ..exceptions import ConfigurationError, ShapeError
from ..models import FusedFeatures
from ..nn.layers import AttentionBlock, FeedForward, LayerNorm
from ..nn.module import Module


class MixerBlock(Module):
    """
    Query-based image-text fusion block.

    Text tokens attend to themselves, then to the image; a feed-forward layer
    refines them; finally image tokens attend to the fused text. Every sub-block
    is pre-normed and wrapped in a residual.
    """

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        d, heads, std, eps = config.dim, config.heads, config.init_std, config.ln_eps
        self._image_residual = config.image_residual
        self.ln_text = LayerNorm(d, eps)
        self.self_attn = AttentionBlock(d, heads, rng, std)
        self.ln_text_query = LayerNorm(d, eps)
        self.ln_image_kv = LayerNorm(d, eps)
        self.cross_text = AttentionBlock(d, heads, rng, std)
        self.ln_ffn = LayerNorm(d, eps)
        self.ffn = FeedForward(d, config.ffn_ratio * d, rng, std, config.encoder_activation)
        self.ln_image_query = LayerNorm(d, eps)
        self.ln_text_kv = LayerNorm(d, eps)
        self.cross_image = AttentionBlock(d, heads, rng, std)

    @property
    def image_residual(self) -> bool:
        return self._image_residual


def mix_block(f_im: Tensor, f_text: Tensor, block: MixerBlock, text_mask: Optional[np.ndarray] = None) -> FusedFeatures:
    """
    Apply one fusion block.

        F_text,1     = F_text + attn(F_text, F_text)
        F_text,2     = F_text,1 + cross_attn(F_text,1 -> F_im)
        F_fused_text = F_text,2 + FFN(F_text,2)
        F_fused_im   = F_im + cross_attn(F_im -> F_fused_text)

    With `image_residual` the second residual is F_im, which is only
    defined when the text and image sequences have the same length.
    """
    f_im, f_text = as_tensor(f_im), as_tensor(f_text)
    d = block.self_attn.dim
    if f_im.shape[-1] != d or f_text.shape[-1] != d:
        raise ShapeError(f"mixer expects dim {d}, got F_im={f_im.shape} F_text={f_text.shape}")

    h = block.ln_text(f_text)
    text_1 = f_text + block.self_attn(h, h, h, text_mask)

    image_kv = block.ln_image_kv(f_im)
    cross = block.cross_text(block.ln_text_query(text_1), image_kv, image_kv)
    if block.image_residual:
        if f_im.shape != text_1.shape:
            raise ShapeError(f"image residual needs L_t == N_tok, got {text_1.shape} vs {f_im.shape}")
        text_2 = f_im + cross
    else:
        text_2 = text_1 + cross

    fused_text = text_2 + block.ffn(block.ln_ffn(text_2))

    text_kv = block.ln_text_kv(fused_text)
    fused_im = f_im + block.cross_image(block.ln_image_query(f_im), text_kv, text_kv, text_mask)
    return FusedFeatures(fused_im=fused_im, fused_text=fused_text)


def mix(f_im: Tensor, f_text: Tensor, blocks: Sequence[MixerBlock], text_mask: Optional[np.ndarray] = None) -> FusedFeatures:
    """Run the blocks in sequence, each consuming the previous block's outputs."""
    if not blocks:
        raise ConfigurationError("feature mixer needs at least one block")
    fused = FusedFeatures(fused_im=as_tensor(f_im), fused_text=as_tensor(f_text))
    for block in blocks:
        fused = mix_block(fused.fused_im, fused.fused_text, block, text_mask)
    return fused


def build_mixer(config: ModelConfig, rng: np.random.Generator):
    if config.mixer_depth < 1:
        raise ConfigurationError("model.mixer_depth must be >= 1")
    return [MixerBlock(config, rng) for _ in range(config.mixer_depth)]
