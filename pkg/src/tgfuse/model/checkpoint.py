"""
Binary checkpoint format (little-endian):

    b"TGLM" | version:u32 | records...
    record = name_len:u32 | name:utf-8 | ndim:u32 | dims:u32*ndim | data:f64*prod(dims)

Records run to end of file. A `.cfg` sidecar holds the run configuration.
"""
import logging
import struct
from pathlib import Path
from typing import Dict, Mapping, Optional, Union

import numpy as np

from ..config import RunConfig, format_config, load_config, model_config_diff
from ..exceptions import CheckpointError, ConfigurationError
from ..models import ErrorType
from ..nn.module import Module

logger = logging.getLogger(__name__)

MAGIC = b"TGLM"
VERSION = 1


def encode_checkpoint(state: Mapping[str, np.ndarray]) -> bytes:
    chunks = [MAGIC, struct.pack("<I", VERSION)]
    for name, value in state.items():
        arr = np.ascontiguousarray(value, dtype="<f8")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        chunks.append(arr.tobytes())
    return b"".join(chunks)


def decode_checkpoint(blob: bytes) -> Dict[str, np.ndarray]:
    if blob[:4] != MAGIC:
        raise CheckpointError("not a TGLM checkpoint (bad magic)")
    if len(blob) < 8:
        raise CheckpointError("truncated checkpoint header")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    state: Dict[str, np.ndarray] = {}
    offset = 8
    try:
        while offset < len(blob):
            (name_len,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            name = blob[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            shape = struct.unpack_from(f"<{ndim}I", blob, offset)
            offset += 4 * ndim
            count = int(np.prod(shape)) if ndim else 1
            end = offset + 8 * count
            if end > len(blob):
                raise CheckpointError(f"record {name!r} runs past end of file")
            state[name] = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64)
            offset = end
    except struct.error as exc:
        raise CheckpointError(f"truncated checkpoint at byte {offset}") from exc
    return state


def sidecar_path(path: Union[str, Path]) -> Path:
    return Path(path).with_suffix(".cfg")


def save_checkpoint(module: Module, path: Union[str, Path], config: Optional[RunConfig] = None) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_bytes(encode_checkpoint(module.state_dict()))
    if config is not None:
        sidecar_path(p).write_text(format_config(config), encoding="utf-8")
    logger.info("checkpoint saved path=%s", p)
    return p


def load_checkpoint(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    p = Path(path)
    if not p.is_file():
        raise CheckpointError(f"checkpoint not found: {p}")
    return decode_checkpoint(p.read_bytes())


def load_into(module: Module, path: Union[str, Path], expected: Optional[RunConfig] = None) -> None:
    """
    Load weights into `module`, checking the sidecar model section first.

    Raises:
        ConfigurationError: when the sidecar's model fields differ from `expected`
    """
    sidecar = sidecar_path(path)
    if expected is not None and sidecar.is_file():
        stored = load_config(sidecar)
        differing = model_config_diff(expected.model, stored.model)
        if differing:
            raise ConfigurationError(f"checkpoint model config differs in fields: {', '.join(differing)}",
                                     ErrorType.CONFIG_MISMATCH)
    module.load_state_dict(load_checkpoint(path))
