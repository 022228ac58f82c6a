from .config import RunConfig, load_config
from .model import TextGuidedSegmenter, Vocabulary
from .models import (
    BinaryMask,
    DescriptionLevel,
    ErrorCategory,
    ErrorType,
    HD95Mode,
    MetricsReport,
    Prediction,
    Sample,
    SceneSpec,
    ShapeKind,
    WilcoxonResult,
)

__all__ = [
    'RunConfig', 'load_config', 'TextGuidedSegmenter', 'Vocabulary', 'BinaryMask', 'DescriptionLevel',
    'ErrorCategory', 'ErrorType', 'HD95Mode', 'MetricsReport', 'Prediction', 'Sample', 'SceneSpec',
    'ShapeKind', 'WilcoxonResult',
]
