"""
Policy checkpoints.

Layout (all integers little-endian):

    magic        4 bytes  b"NKGA"
    version      uint16
    meta_length  uint32, then that many bytes of UTF-8 JSON (sorted keys)
    count        uint32
    count times, in sorted parameter-name order:
        name_length uint16, name (UTF-8)
        ndim        uint8, then ndim x uint32 dimensions
        data        prod(dims) x float64
"""

import hashlib
import json
import struct
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np

from ..utils.exceptions import IngestionError
from ..utils.logger import logger

MAGIC = b"NKGA"
VERSION = 1


def encode_checkpoint(parameters: Dict[str, np.ndarray], metadata: Dict[str, Any]) -> bytes:
    meta = json.dumps(metadata, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<HI", VERSION, len(meta)), meta, struct.pack("<I", len(parameters))]
    for name in sorted(parameters):
        array = np.ascontiguousarray(parameters[name], dtype="<f8")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)) + encoded)
        parts.append(struct.pack("<B", array.ndim) + struct.pack(f"<{array.ndim}I", *array.shape))
        parts.append(array.tobytes())
    return b"".join(parts)


def decode_checkpoint(blob: bytes) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """
    Raises:
        IngestionError: bad magic, unsupported version or truncated data
    """
    if blob[:4] != MAGIC:
        raise IngestionError("not a policy checkpoint (bad magic)")
    try:
        version, meta_length = struct.unpack_from("<HI", blob, 4)
        if version != VERSION:
            raise IngestionError(f"unsupported checkpoint version {version}")
        offset = 10
        metadata = json.loads(blob[offset:offset + meta_length].decode("utf-8"))
        offset += meta_length
        (count,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        parameters: Dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_length,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset:offset + name_length].decode("utf-8")
            offset += name_length
            (ndim,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            shape = struct.unpack_from(f"<{ndim}I", blob, offset)
            offset += 4 * ndim
            size = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(blob, dtype="<f8", count=size, offset=offset)
            offset += 8 * size
            parameters[name] = data.reshape(shape).astype(np.float64)
    except (struct.error, ValueError, UnicodeDecodeError) as e:
        raise IngestionError(f"truncated or corrupt checkpoint: {e}")
    if offset != len(blob):
        raise IngestionError(f"checkpoint has {len(blob) - offset} trailing bytes")
    return parameters, metadata


def save_checkpoint(path: Union[str, Path], parameters: Dict[str, np.ndarray], metadata: Dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(parameters, metadata))
    logger.info(f"Saved checkpoint {path.name} ({len(parameters)} tensors)")
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise IngestionError(f"cannot read checkpoint {path}: {e}")
    return decode_checkpoint(blob)


def parameter_hash(parameters: Dict[str, np.ndarray]) -> str:
    """Digest of the parameter payload alone (metadata excluded)."""
    return hashlib.md5(encode_checkpoint(parameters, {})).hexdigest()
