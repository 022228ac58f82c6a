from typing import Sequence, Union

import numpy as np

from .autodiff import functional as F
from .autodiff.tensor import Tensor, as_tensor
from .exceptions import ShapeError, ValidationError
from .models import LossBreakdown, Prediction

EPS = 1e-7
DICE_SMOOTH = 1e-6

Grid = Union[Tensor, np.ndarray]


def _check_pair(a: Tensor, g: np.ndarray, name: str) -> None:
    if a.shape != g.shape:
        raise ShapeError(f"{name}: prediction shape {a.shape} != target shape {g.shape}")
    if g.size == 0:
        raise ValidationError(f"{name}: empty grid")


def _binary_target(g: Union[np.ndarray, Sequence], name: str) -> np.ndarray:
    arr = np.asarray(g, dtype=np.float64)
    if not np.all((arr == 0.0) | (arr == 1.0)):
        raise ValidationError(f"{name}: target must be binary")
    return arr


def bce_loss(a: Grid, g: np.ndarray) -> Tensor:
    """
    Mean binary cross-entropy of probabilities `a` against binary `g`.

    Probabilities are clamped to [EPS, 1 - EPS] before the logs.
    """
    a = as_tensor(a)
    g = _binary_target(g, "bce_loss")
    _check_pair(a, g, "bce_loss")
    clamped = F.clip(a, EPS, 1.0 - EPS)
    ll = g * F.log(clamped) + (1.0 - g) * F.log(1.0 - clamped)
    return -ll.mean()


def dice_loss(a: Grid, g: np.ndarray) -> Tensor:
    """
    Squared-denominator soft Dice loss, 1 - (2Σga + s) / (Σg² + Σa² + s).

    A 3-D input is treated as a batch: the loss is computed per sample and
    averaged.
    """
    a = as_tensor(a)
    g = np.asarray(g, dtype=np.float64)
    _check_pair(a, g, "dice_loss")
    axes = tuple(range(1, a.ndim)) if a.ndim == 3 else None
    numerator = (a * g).sum(axis=axes) * 2.0 + DICE_SMOOTH
    denominator = (a * a).sum(axis=axes) + np.sum(g * g, axis=axes) + DICE_SMOOTH
    return (1.0 - numerator / denominator).mean()


def bbox_loss(pred_bbox: Grid, gt_bbox: np.ndarray) -> Tensor:
    pred_bbox = as_tensor(pred_bbox)
    gt = np.asarray(gt_bbox, dtype=np.float64).reshape(pred_bbox.shape)
    return F.smooth_l1(pred_bbox, gt)


def total_loss(pred: Prediction, gt_mask: np.ndarray, gt_bbox: np.ndarray, lambda_bbox: float = 0.0) -> LossBreakdown:
    """BCE + Dice, plus a weighted smooth-L1 box term when `lambda_bbox` > 0."""
    if pred.mask_probs.shape != np.shape(gt_mask):
        raise ShapeError(f"mask resolution {pred.mask_probs.shape} != ground truth {np.shape(gt_mask)}")
    bce = bce_loss(pred.mask_probs, gt_mask)
    dice = dice_loss(pred.mask_probs, gt_mask)
    total = bce + dice
    bbox_value = 0.0
    if lambda_bbox > 0.0:
        box = bbox_loss(pred.bbox, gt_bbox)
        bbox_value = box.item()
        total = total + box * lambda_bbox
    return LossBreakdown(bce=bce.item(), dice=dice.item(), bbox=bbox_value, total_value=total.item(), total=total)
