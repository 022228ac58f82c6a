"""Binary PGM (P5, maxval 255) reader and writer."""
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from ..exceptions import PathError, PgmParseError, ValidationError

MAXVAL = 255
_WHITESPACE = b" \t\r\n"


def quantize(grid: np.ndarray, is_mask: bool = False) -> np.ndarray:
    arr = np.asarray(grid)
    if arr.ndim == 3 and arr.shape[-1] == 1:
        arr = arr[..., 0]
    if arr.ndim != 2:
        raise ValidationError(f"PGM needs a 2-D grid, got shape {arr.shape}")
    if is_mask:
        if not np.all((arr == 0) | (arr == 1)):
            raise ValidationError("mask values must be 0/1")
        return (arr.astype(np.uint8) * MAXVAL).astype(np.uint8)
    values = arr.astype(np.float64)
    if values.size and (values.min() < 0.0 or values.max() > 1.0):
        raise ValidationError("image values must lie in [0, 1]")
    return np.rint(values * MAXVAL).astype(np.uint8)


def encode_pgm(grid: np.ndarray, is_mask: bool = False) -> bytes:
    data = quantize(grid, is_mask)
    h, w = data.shape
    return f"P5\n{w} {h}\n{MAXVAL}\n".encode("ascii") + data.tobytes()


def write_pgm(grid: np.ndarray, path: Union[str, Path], is_mask: bool = False) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_bytes(encode_pgm(grid, is_mask))
    return p


def _skip_space(blob: bytes, offset: int) -> int:
    while offset < len(blob):
        if blob[offset] in _WHITESPACE:
            offset += 1
        elif blob[offset:offset + 1] == b"#":
            while offset < len(blob) and blob[offset] not in b"\r\n":
                offset += 1
        else:
            break
    return offset


def _read_int(blob: bytes, offset: int, field: str) -> Tuple[int, int]:
    offset = _skip_space(blob, offset)
    start = offset
    while offset < len(blob) and blob[offset:offset + 1].isdigit():
        offset += 1
    if start == offset:
        raise PgmParseError(f"expected {field}", start)
    return int(blob[start:offset]), offset


def decode_pgm(blob: bytes, as_mask: bool = False) -> np.ndarray:
    """
    Parse a P5 file. Images come back as float64 in [0, 1], masks as uint8 0/1.

    Raises:
        PgmParseError: with the byte offset of the first malformed field
    """
    if blob[:2] != b"P5":
        raise PgmParseError("missing P5 magic", 0)
    width, offset = _read_int(blob, 2, "width")
    height, offset = _read_int(blob, offset, "height")
    maxval, offset = _read_int(blob, offset, "maxval")
    if maxval != MAXVAL:
        raise PgmParseError(f"unsupported maxval {maxval}", offset)
    if width < 1 or height < 1:
        raise PgmParseError(f"invalid dimensions {width}x{height}", offset)
    if offset >= len(blob) or blob[offset] not in _WHITESPACE:
        raise PgmParseError("expected single whitespace after maxval", offset)
    offset += 1
    expected = width * height
    if len(blob) - offset != expected:
        raise PgmParseError(f"expected {expected} data bytes, found {len(blob) - offset}", offset)
    data = np.frombuffer(blob, dtype=np.uint8, count=expected, offset=offset).reshape(height, width)
    if as_mask:
        bad = np.flatnonzero((data != 0) & (data != MAXVAL))
        if bad.size:
            raise PgmParseError("mask byte is neither 0 nor 255", offset + int(bad[0]))
        return (data == MAXVAL).astype(np.uint8)
    return data.astype(np.float64) / MAXVAL


def read_pgm(path: Union[str, Path], as_mask: bool = False) -> np.ndarray:
    p = Path(path)
    if not p.is_file():
        raise PathError(f"PGM file not found: {p}")
    return decode_pgm(p.read_bytes(), as_mask)
