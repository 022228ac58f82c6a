from typing import Tuple

import numpy as np
from scipy.special import erf, expit

from ..exceptions import ShapeError
from .tensor import ArrayLike, Tensor, as_tensor, getitem, make_result, unbroadcast

_INV_SQRT2 = 0.7071067811865476
_INV_SQRT2PI = 0.3989422804014327


def exp(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    y = np.exp(x.data)
    return make_result("exp", (x,), y, lambda g: (g * y,))


def log(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    return make_result("log", (x,), np.log(xd), lambda g: (g / xd,))


def relu(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    gate = (x.data > 0).astype(np.float64)
    return make_result("relu", (x,), x.data * gate, lambda g: (g * gate,))


def gelu(x: ArrayLike) -> Tensor:
    """Exact (erf) GELU."""
    x = as_tensor(x)
    xd = x.data
    cdf = 0.5 * (1.0 + erf(xd * _INV_SQRT2))

    def _backward(g: np.ndarray) -> Tuple[np.ndarray]:
        pdf = _INV_SQRT2PI * np.exp(-0.5 * xd * xd)
        return (g * (cdf + xd * pdf),)

    return make_result("gelu", (x,), xd * cdf, _backward)


def sigmoid(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    s = expit(x.data)
    return make_result("sigmoid", (x,), s, lambda g: (g * s * (1.0 - s),))


def clip(x: ArrayLike, low: float, high: float) -> Tensor:
    x = as_tensor(x)
    inside = ((x.data > low) & (x.data < high)).astype(np.float64)
    return make_result("clip", (x,), np.clip(x.data, low, high), lambda g: (g * inside,))


def minimum(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    take_a = a.data <= b.data
    return make_result("minimum", (a, b), np.where(take_a, a.data, b.data),
                       lambda g: (unbroadcast(g * take_a, a.shape), unbroadcast(g * ~take_a, b.shape)))


def maximum(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    take_a = a.data >= b.data
    return make_result("maximum", (a, b), np.where(take_a, a.data, b.data),
                       lambda g: (unbroadcast(g * take_a, a.shape), unbroadcast(g * ~take_a, b.shape)))


def masked_fill(x: ArrayLike, mask: np.ndarray, value: float) -> Tensor:
    """Replace entries where `mask` is True by a constant; no gradient flows there."""
    x = as_tensor(x)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    keep = (~mask).astype(np.float64)
    return make_result("masked_fill", (x,), np.where(mask, value, x.data), lambda g: (g * keep,))


def softmax(x: ArrayLike, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"softmax axis {axis} out of range for shape {x.shape}")
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / np.sum(e, axis=axis, keepdims=True)

    def _backward(g: np.ndarray) -> Tuple[np.ndarray]:
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return make_result("softmax", (x,), y, _backward)


def layer_norm(x: ArrayLike, gain: ArrayLike, bias: ArrayLike, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply `gain` and `bias`."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    if x.shape[-1] < 1:
        raise ShapeError("layer_norm needs a non-empty last axis")
    n = x.shape[-1]
    mu = np.mean(x.data, axis=-1, keepdims=True)
    centered = x.data - mu
    inv_std = 1.0 / np.sqrt(np.mean(centered * centered, axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std
    gd = gain.data

    def _backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        gxhat = g * gd
        gx = inv_std / n * (n * gxhat
                            - np.sum(gxhat, axis=-1, keepdims=True)
                            - xhat * np.sum(gxhat * xhat, axis=-1, keepdims=True))
        return gx, unbroadcast(g * xhat, gain.shape), unbroadcast(g, bias.shape)

    return make_result("layer_norm", (x, gain, bias), xhat * gd + bias.data, _backward)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"token id out of range for table of size {table.shape[0]}")
    return getitem(table, ids)


def smooth_l1(pred: ArrayLike, target: ArrayLike, beta: float = 1.0) -> Tensor:
    """Mean Huber-style smooth L1 distance."""
    pred, target = as_tensor(pred), as_tensor(target)
    d = pred.data - target.data
    small = np.abs(d) < beta
    values = np.where(small, 0.5 * d * d / beta, np.abs(d) - 0.5 * beta)
    count = float(d.size)

    def _backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        local = np.where(small, d / beta, np.sign(d)) * (g / count)
        return unbroadcast(local, pred.shape), unbroadcast(-local, target.shape)

    return make_result("smooth_l1", (pred, target), np.asarray(values.sum() / count), _backward)
