from pathlib import Path
from typing import Any, Dict, Sequence, Tuple

import numpy as np

from ..exceptions import TruncationError, ValidationError
from ..models import Sample, ShapeKind
from ..model.vocab import Vocabulary


def validate_token_sequence(token_ids: Sequence[int], max_len: int) -> int:
    """
    Validate one encoder input row and return the EOS position.

    Raises:
        TruncationError: if the row is longer than `max_len`
        ValidationError: if SOS/EOS/PAD placement is wrong
    """
    ids = [int(t) for t in token_ids]
    if len(ids) > max_len:
        raise TruncationError(f"token sequence of length {len(ids)} exceeds max length {max_len}")
    if not ids or ids[0] != Vocabulary.SOS:
        raise ValidationError("token sequence must start with SOS")
    eos_positions = [i for i, t in enumerate(ids) if t == Vocabulary.EOS]
    if len(eos_positions) != 1:
        raise ValidationError(f"token sequence must contain exactly one EOS, found {len(eos_positions)}")
    eos = eos_positions[0]
    if any(t != Vocabulary.PAD for t in ids[eos + 1:]):
        raise ValidationError("only PAD may follow EOS")
    if any(t in (Vocabulary.PAD, Vocabulary.SOS) for t in ids[1:eos]):
        raise ValidationError("PAD/SOS may not appear inside the description")
    return eos


def validate_image(image: np.ndarray) -> np.ndarray:
    """Bring an image to H×W×C float64 and check its range."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[..., None]
    if arr.ndim not in (3, 4):
        raise ValidationError(f"image must be H×W×C (optionally batched), got shape {arr.shape}")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValidationError("pixel values must lie in [0, 1]")
    return arr


def parse_bbox(text: str) -> Tuple[float, float, float, float]:
    values = [float(v) for v in text.split()]
    if len(values) != 4:
        raise ValidationError(f"bbox needs 4 values, got {text!r}")
    return values[0], values[1], values[2], values[3]


def format_bbox(bbox: Sequence[float]) -> str:
    return " ".join(repr(float(v)) for v in bbox)


def create_sample(row: Dict[str, Any], base_dir: Path) -> Sample:
    """
    Convert a manifest row into a Sample, reading its image and mask.

    Args:
        row: Dictionary with the manifest columns
        base_dir: Directory the manifest paths are relative to

    Returns:
        Sample: A fully populated Sample object
    """
    from ..data.pgm import read_pgm

    image = read_pgm(base_dir / row["image_path"])
    mask = read_pgm(base_dir / row["mask_path"], as_mask=True)
    kind = row.get("target_kind")
    return Sample(
        sample_id=row["sample_id"],
        image=image[..., None],
        token_ids=[int(t) for t in row["token_ids"].split()],
        gt_mask=mask,
        gt_bbox=parse_bbox(row["bbox"]),
        target_kind=ShapeKind(kind) if kind else None,
    )
