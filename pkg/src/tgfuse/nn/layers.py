import math
from typing import Optional

import numpy as np

from ..autodiff import functional as F
from ..autodiff.tensor import Parameter, Tensor, as_tensor
from ..exceptions import ConfigurationError, ShapeError
from .module import Module

_MASKED = -1e30


def _normal(rng: np.random.Generator, shape: tuple, std: float) -> np.ndarray:
    return rng.normal(0.0, std, size=shape)


def activate(x: Tensor, kind: str) -> Tensor:
    if kind == "gelu":
        return F.gelu(x)
    if kind == "relu":
        return F.relu(x)
    raise ConfigurationError(f"unknown activation {kind!r}")


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, std: float = 0.02, bias: bool = True):
        self.weight = Parameter(_normal(rng, (in_dim, out_dim), std))
        self.bias: Optional[Parameter] = Parameter(np.zeros(out_dim)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = as_tensor(x) @ self.weight
        return y + self.bias if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gain = Parameter(np.ones(dim))
        self.bias = Parameter(np.zeros(dim))
        self._eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.gain, self.bias, self._eps)


class Embedding(Module):
    def __init__(self, count: int, dim: int, rng: np.random.Generator, std: float = 0.02):
        self.table = Parameter(_normal(rng, (count, dim), std))

    def __call__(self, ids: np.ndarray) -> Tensor:
        return F.embedding(self.table, ids)


class AttentionBlock(Module):
    """Multi-head scaled dot-product attention with d×d projections."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator, std: float = 0.02, causal: bool = False):
        if dim % heads:
            raise ConfigurationError(f"attention dim {dim} is not divisible by {heads} heads")
        self._dim = dim
        self._heads = heads
        self._causal = causal
        self.wq = Parameter(_normal(rng, (dim, dim), std))
        self.wk = Parameter(_normal(rng, (dim, dim), std))
        self.wv = Parameter(_normal(rng, (dim, dim), std))
        self.wo = Parameter(_normal(rng, (dim, dim), std))

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def heads(self) -> int:
        return self._heads

    @property
    def causal(self) -> bool:
        return self._causal

    def __call__(self, q: Tensor, k: Tensor, v: Tensor, key_mask: Optional[np.ndarray] = None) -> Tensor:
        return attn(q, k, v, self, key_mask)


def _split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, length, dim = x.shape
    return x.reshape(*lead, length, heads, dim // heads).swapaxes(-3, -2)


def _merge_heads(x: Tensor) -> Tensor:
    x = x.swapaxes(-3, -2)
    *lead, length, heads, head_dim = x.shape
    return x.reshape(*lead, length, heads * head_dim)


def attn(q: Tensor, k: Tensor, v: Tensor, block: AttentionBlock, key_mask: Optional[np.ndarray] = None) -> Tensor:
    """
    Attention of queries `q` over keys `k` / values `v`.

    `key_mask`, when given, has shape (..., Lk) and is True for keys that may be
    attended to. The causal flag of `block` hides keys after each query.
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    d = block.dim
    if q.shape[-1] != d or k.shape[-1] != d or v.shape[-1] != d:
        raise ShapeError(f"attention expects last dim {d}, got q={q.shape} k={k.shape} v={v.shape}")
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"keys and values differ in length: {k.shape} vs {v.shape}")
    lq, lk = q.shape[-2], k.shape[-2]
    if block.causal and lq != lk:
        raise ShapeError(f"causal attention needs equal lengths, got {lq} and {lk}")

    qh = _split_heads(q @ block.wq, block.heads)
    kh = _split_heads(k @ block.wk, block.heads)
    vh = _split_heads(v @ block.wv, block.heads)
    scores = (qh @ kh.T) * (1.0 / math.sqrt(d // block.heads))

    hidden = np.zeros((lq, lk), dtype=bool)
    if block.causal:
        hidden = np.triu(np.ones((lq, lk), dtype=bool), k=1)
    if key_mask is not None:
        key_mask = np.asarray(key_mask, dtype=bool)
        hidden = hidden | ~key_mask[..., None, None, :]
    if np.any(hidden):
        scores = F.masked_fill(scores, hidden, _MASKED)

    weights = F.softmax(scores, axis=-1)
    return _merge_heads(weights @ vh) @ block.wo


class FeedForward(Module):
    def __init__(self, dim: int, hidden: int, rng: np.random.Generator, std: float = 0.02, activation: str = "gelu"):
        self.w1 = Parameter(_normal(rng, (dim, hidden), std))
        self.b1 = Parameter(np.zeros(hidden))
        self.w2 = Parameter(_normal(rng, (hidden, dim), std))
        self.b2 = Parameter(np.zeros(dim))
        self._activation = activation

    @property
    def activation(self) -> str:
        return self._activation

    def __call__(self, x: Tensor) -> Tensor:
        return feed_forward(x, self)


def feed_forward(x: Tensor, block: FeedForward) -> Tensor:
    x = as_tensor(x)
    if x.shape[-1] != block.w1.shape[0]:
        raise ShapeError(f"feed-forward expects last dim {block.w1.shape[0]}, got {x.shape}")
    return activate(x @ block.w1 + block.b1, block.activation) @ block.w2 + block.b2


class PatchEmbed(Module):
    """Non-overlapping p×p patches, linearly projected, plus learned positions."""

    def __init__(self, image_size: int, patch: int, channels: int, dim: int, rng: np.random.Generator, std: float = 0.02):
        if image_size % patch:
            raise ConfigurationError(f"patch size {patch} does not divide image size {image_size}")
        self._patch = patch
        self.proj = Linear(patch * patch * channels, dim, rng, std)
        self.pos = Parameter(_normal(rng, ((image_size // patch) ** 2, dim), std))

    @property
    def patch(self) -> int:
        return self._patch

    def __call__(self, image: Tensor) -> Tensor:
        return patch_embed(image, self)


def _interleave(x: Tensor) -> Tensor:
    # (..., A, B, C, D, E) -> (..., A, C, B, D, E)
    n = x.ndim
    return x.transpose(*range(n - 5), n - 5, n - 3, n - 4, n - 2, n - 1)


def patch_embed(image: Tensor, block: PatchEmbed) -> Tensor:
    image = as_tensor(image)
    *lead, h, w, c = image.shape
    p = block.patch
    if h % p or w % p:
        raise ConfigurationError(f"image {h}x{w} is not divisible by patch size {p}")
    patches = _interleave(image.reshape(*lead, h // p, p, w // p, p, c))
    tokens = patches.reshape(*lead, (h // p) * (w // p), p * p * c)
    if tokens.shape[-2] != block.pos.shape[0]:
        raise ShapeError(f"image yields {tokens.shape[-2]} patches, positional table has {block.pos.shape[0]}")
    return block.proj(tokens) + block.pos


class UpConv2x(Module):
    """Stride-2, kernel-2 transposed convolution: doubles H and W, halves channels."""

    def __init__(self, channels: int, rng: np.random.Generator, std: float = 0.02):
        if channels % 2:
            raise ConfigurationError(f"UpConv2x needs an even channel count, got {channels}")
        self._channels = channels
        self.weight = Parameter(_normal(rng, (channels, 4 * (channels // 2)), std))
        self.bias = Parameter(np.zeros(channels // 2))

    @property
    def in_channels(self) -> int:
        return self._channels

    @property
    def out_channels(self) -> int:
        return self._channels // 2

    def __call__(self, x: Tensor) -> Tensor:
        return upconv2x(x, self)


def upconv2x(x: Tensor, block: UpConv2x) -> Tensor:
    x = as_tensor(x)
    *lead, h, w, c = x.shape
    if c % 2:
        raise ConfigurationError(f"upconv2x needs an even channel count, got {c}")
    if c != block.in_channels:
        raise ShapeError(f"upconv2x block expects {block.in_channels} channels, got {c}")
    half = block.out_channels
    y = (x @ block.weight).reshape(*lead, h, w, 2, 2, half)
    return _interleave(y).reshape(*lead, 2 * h, 2 * w, half) + block.bias


class TransformerBlock(Module):
    """Pre-norm self-attention + feed-forward block with residuals."""

    def __init__(self, dim: int, heads: int, ffn_hidden: int, rng: np.random.Generator, std: float = 0.02,
                 causal: bool = False, activation: str = "gelu", eps: float = 1e-5):
        self.ln_attn = LayerNorm(dim, eps)
        self.attn = AttentionBlock(dim, heads, rng, std, causal=causal)
        self.ln_ffn = LayerNorm(dim, eps)
        self.ffn = FeedForward(dim, ffn_hidden, rng, std, activation)

    def __call__(self, x: Tensor, key_mask: Optional[np.ndarray] = None) -> Tensor:
        h = self.ln_attn(x)
        x = x + self.attn(h, h, h, key_mask)
        return x + self.ffn(self.ln_ffn(x))
