from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Dict, List, Optional, Tuple

import numpy as np

if TYPE_CHECKING:
    from .autodiff.tensor import Tensor


class ErrorCategory(str, Enum):
    CONFIGURATION_ERROR = "configuration_error"
    INPUT_ERROR = "input_error"
    SHAPE_ERROR = "shape_error"
    NUMERIC_ERROR = "numeric_error"
    IO_ERROR = "io_error"
    METRIC_ERROR = "metric_error"


class ErrorType(Enum):
    """Enum for error types."""
    CONFIG_INVALID = ("config_invalid", ErrorCategory.CONFIGURATION_ERROR)
    CONFIG_UNKNOWN_KEY = ("config_unknown_key", ErrorCategory.CONFIGURATION_ERROR)
    CONFIG_MISMATCH = ("config_mismatch", ErrorCategory.CONFIGURATION_ERROR)
    INPUT_INVALID = ("input_invalid", ErrorCategory.INPUT_ERROR)
    TEXT_TRUNCATED = ("text_truncated", ErrorCategory.INPUT_ERROR)
    SHAPE_MISMATCH = ("shape_mismatch", ErrorCategory.SHAPE_ERROR)
    CONTRACT_VIOLATION = ("contract_violation", ErrorCategory.SHAPE_ERROR)
    NON_FINITE = ("non_finite", ErrorCategory.NUMERIC_ERROR)
    NAN_LOSS = ("nan_loss", ErrorCategory.NUMERIC_ERROR)
    GRADCHECK_FAILED = ("gradcheck_failed", ErrorCategory.NUMERIC_ERROR)
    GENERATION_FAILED = ("generation_failed", ErrorCategory.INPUT_ERROR)
    PGM_MALFORMED = ("pgm_malformed", ErrorCategory.IO_ERROR)
    CHECKPOINT_INVALID = ("checkpoint_invalid", ErrorCategory.IO_ERROR)
    PATH_MISSING = ("path_missing", ErrorCategory.IO_ERROR)
    REPORT_MISMATCH = ("report_mismatch", ErrorCategory.IO_ERROR)
    METRIC_UNDEFINED = ("metric_undefined", ErrorCategory.METRIC_ERROR)

    def __init__(self, code: str, category: ErrorCategory):
        self.code = code
        self.category = category


class DescriptionLevel(str, Enum):
    NONE = "none"
    SIMPLE = "simple"
    COMPLEX = "complex"


class ShapeKind(str, Enum):
    DISK = "disk"
    SQUARE = "square"
    TRIANGLE = "triangle"


class Quadrant(Enum):
    UPPER_LEFT = ("upper", "left")
    UPPER_RIGHT = ("upper", "right")
    LOWER_LEFT = ("lower", "left")
    LOWER_RIGHT = ("lower", "right")

    def __init__(self, vertical: str, horizontal: str):
        self.vertical = vertical
        self.horizontal = horizontal

    @property
    def words(self) -> List[str]:
        return [self.vertical, self.horizontal]


class Relation(str, Enum):
    LEFT = "left"
    RIGHT = "right"
    ABOVE = "above"
    BELOW = "below"


class HD95Mode(str, Enum):
    POOLED = "pooled"
    PER_DIRECTION = "per_direction"


class WilcoxonMethod(str, Enum):
    EXACT = "exact"
    NORMAL_APPROX = "normal-approx"
    DEGENERATE = "degenerate"


# Synthetic data
@dataclass(frozen=True)
class Shape:
    kind: ShapeKind
    center: Tuple[int, int]
    size: int
    intensity: float


@dataclass(frozen=True)
class SceneSpec:
    canvas: int
    shapes: Tuple[Shape, ...]
    target_index: int
    ambiguous: bool = False
    seed: Optional[int] = None

    @property
    def target(self) -> Shape:
        return self.shapes[self.target_index]


@dataclass
class Description:
    words: List[str]
    token_ids: List[int]
    ambiguous: bool = False

    @property
    def text(self) -> str:
        return " ".join(self.words)


@dataclass
class Sample:
    sample_id: str
    image: np.ndarray
    token_ids: List[int]
    gt_mask: np.ndarray
    gt_bbox: Tuple[float, float, float, float]
    target_kind: Optional[ShapeKind] = None
    scene: Optional[SceneSpec] = None


# Model flow
@dataclass
class FusedFeatures:
    fused_im: Tensor
    fused_text: Tensor


@dataclass
class Prediction:
    mask_logits: Tensor
    mask_probs: Tensor
    bbox: Tensor


@dataclass
class LossBreakdown:
    bce: float
    dice: float
    bbox: float
    total_value: float
    total: Tensor


# Metrics
@dataclass
class BinaryMask:
    bits: np.ndarray

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits)
        if bits.ndim != 2:
            from .exceptions import ShapeError
            raise ShapeError(f"binary mask must be 2-D, got shape {bits.shape}")
        if bits.dtype != bool:
            values = np.unique(bits)
            if not np.all(np.isin(values, (0, 1))):
                from .exceptions import ValidationError
                raise ValidationError(f"binary mask values must be 0/1, got {values[:5].tolist()}")
        self.bits = bits.astype(bool)

    @property
    def height(self) -> int:
        return int(self.bits.shape[0])

    @property
    def width(self) -> int:
        return int(self.bits.shape[1])

    @property
    def diagonal(self) -> float:
        return float(np.hypot(self.height, self.width))


@dataclass
class SurfaceSet:
    points: np.ndarray
    shape: Tuple[int, int]

    def __len__(self) -> int:
        return int(self.points.shape[0])


@dataclass
class WilcoxonResult:
    w_plus: float
    n_effective: int
    p_value: float
    method: WilcoxonMethod
    zero_method: str = "wilcox"
    degenerate: bool = False


@dataclass
class SampleMetrics:
    sample_id: str
    dsc: float
    hd95: float
    asd: float
    hd95_defined: bool = True
    group: Optional[str] = None


@dataclass
class MetricSummary:
    mean: float
    std: float
    n: int


@dataclass
class MetricsReport:
    rows: List[SampleMetrics]
    summary: Dict[str, MetricSummary]
    undefined_count: int = 0
    groups: Dict[str, Dict[str, MetricSummary]] = field(default_factory=dict)


# Training
@dataclass
class EpochRecord:
    epoch: int
    bce: float
    dice: float
    bbox: float
    total: float
    val_dsc: float
    lr: float
    wall_clock: float


@dataclass
class TrainLog:
    epochs: List[EpochRecord] = field(default_factory=list)
    best_checkpoint: Optional[str] = None
    last_checkpoint: Optional[str] = None
    best_val_dsc: float = -1.0
