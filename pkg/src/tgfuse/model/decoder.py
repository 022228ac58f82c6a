import math
from typing import Optional

import numpy as np

from ..autodiff import functional as F
from ..autodiff.tensor import Tensor, concat, getitem
from ..config import ModelConfig
from ..exceptions import ConfigurationError, ValidationError
from ..models import FusedFeatures, Prediction
from ..nn.layers import AttentionBlock, LayerNorm, Linear, UpConv2x, activate
from ..nn.module import Module


class MLP(Module):
    def __init__(self, in_dim: int, hidden: int, out_dim: int, rng: np.random.Generator,
                 std: float = 0.02, activation: str = "relu"):
        self.fc1 = Linear(in_dim, hidden, rng, std)
        self.fc2 = Linear(hidden, out_dim, rng, std)
        self._activation = activation

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(activate(self.fc1(x), self._activation))


class MaskDecoder(Module):
    """
    Two up-convolutions, a bidirectional cross-attention pair and two heads.

    The mask head emits a C/4 hyper-weight vector that is dotted with every
    pixel of the upsampled feature map; the box head emits (x1, y1, x2, y2).
    """

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        d, std, eps = config.dim, config.init_std, config.ln_eps
        self._resize_mode = config.resize_mode
        self._output_size = config.image_size
        self.up1 = UpConv2x(d, rng, std)
        self.up2 = UpConv2x(d // 2, rng, std)
        self.ln_image_query = LayerNorm(d, eps)
        self.ln_text_kv = LayerNorm(d, eps)
        self.image_to_text = AttentionBlock(d, config.heads, rng, std)
        self.ln_text_query = LayerNorm(d, eps)
        self.ln_image_kv = LayerNorm(d, eps)
        self.text_to_image = AttentionBlock(d, config.heads, rng, std)
        self.mask_mlp = MLP(d, d, d // 4, rng, std, config.decoder_activation)
        self.bbox_mlp = MLP(d, d, 4, rng, std, config.decoder_activation)

    @property
    def resize_mode(self) -> str:
        return self._resize_mode

    @property
    def output_size(self) -> int:
        return self._output_size


def bilinear_matrix(out_size: int, in_size: int) -> np.ndarray:
    """Row-stochastic interpolation matrix (half-pixel centers, edge clamped)."""
    matrix = np.zeros((out_size, in_size), dtype=np.float64)
    scale = in_size / out_size
    for i in range(out_size):
        src = min(max((i + 0.5) * scale - 0.5, 0.0), in_size - 1)
        lo = int(math.floor(src))
        hi = min(lo + 1, in_size - 1)
        frac = src - lo
        matrix[i, lo] += 1.0 - frac
        matrix[i, hi] += frac
    return matrix


def resize_logits(logits: Tensor, size: int) -> Tensor:
    """Bilinear resize of the last two axes to size×size."""
    h, w = logits.shape[-2:]
    if (h, w) == (size, size):
        return logits
    return Tensor(bilinear_matrix(size, h)) @ logits @ Tensor(bilinear_matrix(size, w).T)


def canonical_box(raw: Tensor) -> Tensor:
    """Order a (..., 4) box so that x1 <= x2 and y1 <= y2."""
    a, b = getitem(raw, (Ellipsis, slice(0, 1))), getitem(raw, (Ellipsis, slice(1, 2)))
    c, d = getitem(raw, (Ellipsis, slice(2, 3))), getitem(raw, (Ellipsis, slice(3, 4)))
    return concat([F.minimum(a, c), F.minimum(b, d), F.maximum(a, c), F.maximum(b, d)], axis=-1)


def decode(fused: FusedFeatures, dec: MaskDecoder, text_mask: Optional[np.ndarray] = None,
           resize: bool = True) -> Prediction:
    """
    F1 = UpConv2x(grid), F2 = UpConv2x(F1), F3 = bidirectional cross-attention,
    Mask = <MLP_mask(F3), F2[p]>, Bounding_Box = sigmoid(MLP_bbox(F3)).
    """
    f_im, f_text = fused.fused_im, fused.fused_text
    *lead, n_tok, d = f_im.shape
    side = math.isqrt(n_tok)
    if side * side != n_tok:
        raise ConfigurationError(f"fused image has {n_tok} tokens, which is not a square grid")

    grid = f_im.reshape(*lead, side, side, d)
    f1 = F.gelu(dec.up1(grid))
    f2 = F.gelu(dec.up2(f1))

    text_kv = dec.ln_text_kv(f_text)
    image = f_im + dec.image_to_text(dec.ln_image_query(f_im), text_kv, text_kv, text_mask)
    image_kv = dec.ln_image_kv(image)
    text = f_text + dec.text_to_image(dec.ln_text_query(f_text), image_kv, image_kv)
    f3 = getitem(text, (Ellipsis, 0, slice(None)))

    hyper = dec.mask_mlp(f3)
    channels = f2.shape[-1]
    out_side = 4 * side
    pixels = f2.reshape(*lead, out_side * out_side, channels)
    logits = (pixels @ hyper.reshape(*lead, channels, 1)).reshape(*lead, out_side, out_side)
    if resize and dec.resize_mode == "bilinear":
        logits = resize_logits(logits, dec.output_size)

    bbox = canonical_box(F.sigmoid(dec.bbox_mlp(f3)))
    return Prediction(mask_logits=logits, mask_probs=F.sigmoid(logits), bbox=bbox)


def binarize(mask_probs: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Pixels with probability >= threshold become 1."""
    if not 0.0 < threshold < 1.0:
        raise ValidationError(f"threshold must lie in (0, 1), got {threshold}")
    probs = mask_probs.data if isinstance(mask_probs, Tensor) else np.asarray(mask_probs)
    return (probs >= threshold).astype(np.uint8)
