import logging
import math
from typing import List, Tuple

import numpy as np

from ..config import DataConfig
from ..exceptions import ConfigurationError, GenerationError
from ..models import Quadrant, SceneSpec, Shape, ShapeKind

logger = logging.getLogger(__name__)

MIN_CANVAS = 32
PLACEMENT_GAP = 2.0
RESTART_AFTER = 50

_CIRCUMRADIUS = {
    ShapeKind.DISK: 1.0,
    ShapeKind.SQUARE: math.sqrt(2.0),
    ShapeKind.TRIANGLE: math.sqrt(2.0),
}


def circumradius(shape: Shape) -> float:
    return _CIRCUMRADIUS[shape.kind] * shape.size


def quadrant_of(shape: Shape, canvas: int) -> Quadrant:
    x, y = shape.center
    upper = 2 * y < canvas
    left = 2 * x < canvas
    if upper:
        return Quadrant.UPPER_LEFT if left else Quadrant.UPPER_RIGHT
    return Quadrant.LOWER_LEFT if left else Quadrant.LOWER_RIGHT


def shapes_apart(a: Shape, b: Shape) -> bool:
    """True when the circumscribed circles are separated by at least the placement gap."""
    distance = math.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1])
    return distance >= circumradius(a) + circumradius(b) + PLACEMENT_GAP


def _check_config(config: DataConfig) -> None:
    if config.canvas < MIN_CANVAS:
        raise ConfigurationError(f"data.canvas must be >= {MIN_CANVAS}, got {config.canvas}")
    if not 2 <= config.min_shapes <= config.max_shapes <= 4:
        raise ConfigurationError("data shape count must satisfy 2 <= min_shapes <= max_shapes <= 4")
    if 2 * config.max_size + 1 > config.canvas // 2:
        raise ConfigurationError(f"data.max_size {config.max_size} is too large for canvas {config.canvas}")


def _shape_kinds(rng: np.random.Generator, count: int, ambiguous: bool) -> List[ShapeKind]:
    kinds = list(ShapeKind)
    target = kinds[int(rng.integers(len(kinds)))]
    chosen = [target]
    if ambiguous:
        chosen.append(target)
        others = [k for k in kinds if k is not target]
        if count >= 3:
            chosen.append(others[int(rng.integers(len(others)))])
    while len(chosen) < count:
        chosen.append(kinds[int(rng.integers(len(kinds)))])
    return chosen


def _intensity(rng: np.random.Generator, config: DataConfig) -> float:
    low = math.ceil(config.min_intensity * 255)
    high = math.floor(config.max_intensity * 255)
    return int(rng.integers(low, high + 1)) / 255.0


def generate_scene(seed: int, config: DataConfig) -> SceneSpec:
    """
    Place 2-4 non-overlapping shapes on the canvas.

    Shape 0 of the draw is the target. No other shape of the target's kind may
    share its quadrant, so quadrant plus kind always singles it out. In
    ambiguous mode at least one same-kind distractor is present.

    Raises:
        GenerationError: if placement fails within `config.max_attempts` draws
    """
    _check_config(config)
    rng = np.random.default_rng(seed)
    count = int(rng.integers(config.min_shapes, config.max_shapes + 1))
    if config.ambiguous:
        count = max(count, min(3, config.max_shapes))
    kinds = _shape_kinds(rng, count, config.ambiguous)

    placed: List[Shape] = []
    attempts = failures = 0
    while len(placed) < count:
        if attempts >= config.max_attempts:
            raise GenerationError(f"could not place {count} shapes in {config.max_attempts} attempts", seed)
        attempts += 1
        kind = kinds[len(placed)]
        size = int(rng.integers(config.min_size, config.max_size + 1))
        cx, cy = (int(v) for v in rng.integers(size, config.canvas - size, size=2))
        candidate = Shape(kind=kind, center=(cx, cy), size=size, intensity=_intensity(rng, config))
        fits = all(shapes_apart(candidate, other) for other in placed)
        if fits and placed and kind is placed[0].kind:
            fits = quadrant_of(candidate, config.canvas) is not quadrant_of(placed[0], config.canvas)
        if fits:
            placed.append(candidate)
            failures = 0
            continue
        failures += 1
        if failures >= RESTART_AFTER:
            # crowded layout: start the scene over
            placed, failures = [], 0

    order = [int(i) for i in rng.permutation(len(placed))]
    shapes = tuple(placed[i] for i in order)
    spec = SceneSpec(canvas=config.canvas, shapes=shapes, target_index=order.index(0),
                     ambiguous=config.ambiguous, seed=seed)
    logger.debug("scene seed=%d shapes=%d attempts=%d", seed, len(shapes), attempts)
    return spec


def rasterize(shape: Shape, canvas: int) -> np.ndarray:
    """Hard-edged boolean footprint of one shape."""
    ys, xs = np.mgrid[0:canvas, 0:canvas]
    cx, cy = shape.center
    s = shape.size
    dx, dy = xs - cx, ys - cy
    if shape.kind is ShapeKind.DISK:
        return dx * dx + dy * dy <= s * s
    if shape.kind is ShapeKind.SQUARE:
        return (np.abs(dx) <= s) & (np.abs(dy) <= s)
    # apex at the top, base on the bottom edge of the bounding square
    return (np.abs(dy) <= s) & (2 * np.abs(dx) <= dy + s)


def tight_bbox(mask: np.ndarray) -> Tuple[float, float, float, float]:
    """Normalized (x1, y1, x2, y2) over pixel edges of the non-zero region."""
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        return 0.0, 0.0, 0.0, 0.0
    h, w = mask.shape
    return cols[0] / w, rows[0] / h, (cols[-1] + 1) / w, (rows[-1] + 1) / h


def render(spec: SceneSpec) -> Tuple[np.ndarray, np.ndarray, Tuple[float, float, float, float]]:
    """Return (image, target mask, target bbox); background is 0."""
    image = np.zeros((spec.canvas, spec.canvas), dtype=np.float64)
    mask = np.zeros((spec.canvas, spec.canvas), dtype=np.uint8)
    for index, shape in enumerate(spec.shapes):
        footprint = rasterize(shape, spec.canvas)
        image[footprint] = shape.intensity
        if index == spec.target_index:
            mask[footprint] = 1
    return image, mask, tight_bbox(mask)
