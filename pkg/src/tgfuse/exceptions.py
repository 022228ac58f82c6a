from typing import Optional

from tgfuse.models import ErrorType


class TgFuseError(Exception):
    """Base class for every error raised by tgfuse."""
    error_type: ErrorType = ErrorType.INPUT_INVALID

    def __init__(self, message: str, error_type: Optional[ErrorType] = None):
        if error_type is not None:
            self.error_type = error_type
        self.message = message
        super().__init__(message)

    def one_line(self) -> str:
        message = " ".join(self.message.split())
        return f"code={self.error_type.code} category={self.error_type.category.value} message={message}"


class ConfigurationError(TgFuseError):
    """Raised when configuration is invalid."""
    error_type = ErrorType.CONFIG_INVALID


class ValidationError(TgFuseError):
    """Raised when input validation fails."""
    error_type = ErrorType.INPUT_INVALID


class TruncationError(ValidationError):
    """Raised when a token sequence is longer than the encoder accepts."""
    error_type = ErrorType.TEXT_TRUNCATED


class ShapeError(TgFuseError):
    """Raised when tensor dimensions disagree."""
    error_type = ErrorType.SHAPE_MISMATCH


class ContractError(TgFuseError):
    """Raised when an operation is called outside its contract."""
    error_type = ErrorType.CONTRACT_VIOLATION


class NonFiniteError(TgFuseError):
    error_type = ErrorType.NON_FINITE


class GenerationError(TgFuseError):
    """Raised when a scene cannot be placed."""
    error_type = ErrorType.GENERATION_FAILED
    seed: int

    def __init__(self, message: str, seed: int):
        self.seed = seed
        super().__init__(f"{message} (seed={seed})")


class PgmParseError(TgFuseError):
    """Raised when a PGM file is malformed."""
    error_type = ErrorType.PGM_MALFORMED
    offset: int

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} at byte {offset}")


class CheckpointError(TgFuseError):
    error_type = ErrorType.CHECKPOINT_INVALID


class PathError(TgFuseError):
    error_type = ErrorType.PATH_MISSING


class MetricUndefinedError(TgFuseError):
    """Raised when a surface metric is requested on an empty surface."""
    error_type = ErrorType.METRIC_UNDEFINED


class TrainingError(TgFuseError):
    """Raised when training diverges."""
    error_type = ErrorType.NAN_LOSS
    step: int

    def __init__(self, message: str, step: int):
        self.step = step
        super().__init__(f"{message} (step={step})")


class GradcheckError(TgFuseError):
    error_type = ErrorType.GRADCHECK_FAILED


class ReportMismatchError(TgFuseError):
    """Raised when two metric reports do not cover the same samples."""
    error_type = ErrorType.REPORT_MISMATCH
    divergence: str

    def __init__(self, message: str, divergence: str):
        self.divergence = divergence
        super().__init__(f"{message}: {divergence}")
