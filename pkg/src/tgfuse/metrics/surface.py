"""
Overlap and surface-distance metrics on 2-D binary masks.

Surface points are (x, y) pixel coordinates with x the column and y the row.
Distances are in pixel units.
"""
import logging
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.ndimage import binary_erosion, distance_transform_edt, generate_binary_structure

from ..exceptions import MetricUndefinedError, ShapeError
from ..models import BinaryMask, HD95Mode, SurfaceSet

logger = logging.getLogger(__name__)

MaskLike = Union[BinaryMask, np.ndarray]
DistanceFn = Callable[[SurfaceSet, SurfaceSet], np.ndarray]

_FOUR_CONNECTED = generate_binary_structure(2, 1)


def as_mask(mask: MaskLike) -> BinaryMask:
    return mask if isinstance(mask, BinaryMask) else BinaryMask(np.asarray(mask))


def _same_dims(gt: BinaryMask, agc: BinaryMask) -> None:
    if gt.bits.shape != agc.bits.shape:
        raise ShapeError(f"mask dims differ: {gt.bits.shape} vs {agc.bits.shape}")


def dsc(gt: MaskLike, agc: MaskLike) -> float:
    """2|GT ∩ AGC| / (|GT| + |AGC|); two empty masks agree perfectly."""
    gt, agc = as_mask(gt), as_mask(agc)
    _same_dims(gt, agc)
    total = int(gt.bits.sum()) + int(agc.bits.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(gt.bits, agc.bits).sum()) / total


def extract_surface(mask: MaskLike) -> SurfaceSet:
    """1-pixels with a 4-neighbour that is 0 or outside the grid."""
    mask = as_mask(mask)
    interior = binary_erosion(mask.bits, structure=_FOUR_CONNECTED, border_value=0)
    rows_cols = np.argwhere(mask.bits & ~interior)
    return SurfaceSet(points=rows_cols[:, ::-1].astype(np.int64), shape=(mask.height, mask.width))


def surface_from_points(points: Sequence[Sequence[int]], shape: Optional[Tuple[int, int]] = None) -> SurfaceSet:
    """Build a SurfaceSet from explicit (x, y) points."""
    pts = np.asarray(points, dtype=np.int64).reshape(-1, 2)
    if shape is None:
        extent = pts.max(axis=0) + 1 if len(pts) else np.array([1, 1])
        shape = (int(extent[1]), int(extent[0]))
    return SurfaceSet(points=pts, shape=shape)


def directed_distances_brute(x: SurfaceSet, y: SurfaceSet) -> np.ndarray:
    """O(|X|·|Y|) nearest-point distances from every point of X to Y."""
    if len(y) == 0:
        raise MetricUndefinedError("directed distance to an empty surface is undefined")
    if len(x) == 0:
        return np.zeros(0, dtype=np.float64)
    diff = x.points[:, None, :] - y.points[None, :, :]
    squared = np.min(np.sum(diff * diff, axis=-1), axis=1)
    return np.sqrt(squared.astype(np.float64))


def directed_distances(x: SurfaceSet, y: SurfaceSet) -> np.ndarray:
    """
    Nearest-point distances from every point of X to Y via an exact Euclidean
    distance transform of Y.

    The transform supplies the nearest Y index per pixel; the squared distance
    is then recomputed in integers, so results match the brute-force path
    exactly.
    """
    if len(y) == 0:
        raise MetricUndefinedError("directed distance to an empty surface is undefined")
    if len(x) == 0:
        return np.zeros(0, dtype=np.float64)
    width = int(max(x.points[:, 0].max(), y.points[:, 0].max())) + 1
    height = int(max(x.points[:, 1].max(), y.points[:, 1].max())) + 1
    background = np.ones((height, width), dtype=bool)
    background[y.points[:, 1], y.points[:, 0]] = False
    _, (near_rows, near_cols) = distance_transform_edt(background, return_indices=True)
    dy = near_rows[x.points[:, 1], x.points[:, 0]].astype(np.int64) - x.points[:, 1]
    dx = near_cols[x.points[:, 1], x.points[:, 0]].astype(np.int64) - x.points[:, 0]
    return np.sqrt((dx * dx + dy * dy).astype(np.float64))


def _both_directions(gt: MaskLike, agc: MaskLike, oracle: bool) -> Tuple[np.ndarray, np.ndarray]:
    gt, agc = as_mask(gt), as_mask(agc)
    _same_dims(gt, agc)
    s_gt, s_agc = extract_surface(gt), extract_surface(agc)
    if len(s_gt) == 0 or len(s_agc) == 0:
        raise MetricUndefinedError(f"surface metric undefined: |S(GT)|={len(s_gt)} |S(AGC)|={len(s_agc)}")
    distance: DistanceFn = directed_distances_brute if oracle else directed_distances
    return distance(s_gt, s_agc), distance(s_agc, s_gt)


def nearest_rank(values: np.ndarray, percent: int) -> float:
    """Nearest-rank percentile: the ceil(percent·m/100)-th smallest value."""
    ordered = np.sort(values)
    rank = max(1, (percent * len(ordered) + 99) // 100)
    return float(ordered[rank - 1])


def hd95(gt: MaskLike, agc: MaskLike, mode: HD95Mode = HD95Mode.POOLED, oracle: bool = False) -> float:
    """
    95th-percentile Hausdorff distance.

    `pooled` takes the percentile of both directed distance multisets
    together; `per_direction` takes the larger of the two directed
    percentiles.

    Raises:
        MetricUndefinedError: if either mask has no surface
    """
    forward, backward = _both_directions(gt, agc, oracle)
    if HD95Mode(mode) is HD95Mode.PER_DIRECTION:
        return max(nearest_rank(forward, 95), nearest_rank(backward, 95))
    return nearest_rank(np.concatenate([forward, backward]), 95)


def hausdorff(gt: MaskLike, agc: MaskLike, oracle: bool = False) -> float:
    forward, backward = _both_directions(gt, agc, oracle)
    return float(max(forward.max(), backward.max()))


def asd(gt: MaskLike, agc: MaskLike, oracle: bool = False) -> float:
    """Sum of both directed surface distances over N_GT + N_AGC."""
    forward, backward = _both_directions(gt, agc, oracle)
    return float((forward.sum() + backward.sum()) / (len(forward) + len(backward)))
