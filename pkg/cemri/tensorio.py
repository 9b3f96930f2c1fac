"""TNSR tensor file codec.

Every volume, ADC map, attention weight and checkpoint tensor written by
cemri uses the same minimal binary layout:

    offset  size        content
    0       4           magic b"TNSR"
    4       4           u32 little-endian version (1)
    8       4           u32 little-endian rank
    12      4 * rank    u32 little-endian dims
    ...     4 * prod    float32 little-endian payload, row-major

Writes go to a temporary sibling first and are moved into place with
``os.replace``, so a reader never observes a half-written file.

Example:
    >>> import numpy as np
    >>> write_tensor("t1.tnsr", np.zeros((64, 64), dtype=np.float32))
    >>> read_tensor("t1.tnsr").shape
    (64, 64)
"""
import os
import struct
from pathlib import Path

import numpy as np

try:
    from . import debug
    from .errors import TensorFormatError

except ImportError:
    import debug
    from errors import TensorFormatError


MAGIC = b"TNSR"
VERSION = 1
_U32 = struct.Struct("<I")
_PAYLOAD_DTYPE = np.dtype("<f4")


def tensor_nbytes(shape: tuple[int, ...]) -> int:
    """Return the payload size in bytes of a float32 tensor of ``shape``."""
    return int(np.prod(shape, dtype=np.int64)) * _PAYLOAD_DTYPE.itemsize


def encode_tensor(array) -> bytes:
    """Encode an array-like as a complete TNSR byte string."""
    data = np.ascontiguousarray(np.asarray(array), dtype=_PAYLOAD_DTYPE)

    header = [MAGIC, _U32.pack(VERSION), _U32.pack(data.ndim)]
    header.extend(_U32.pack(dim) for dim in data.shape)

    return b"".join(header) + data.tobytes(order="C")


def decode_tensor(raw: bytes, source: str = "<bytes>") -> np.ndarray:
    """Decode a TNSR byte string.

    Args:
        raw: The complete file content.
        source: Name used in error messages (usually the file path).

    Returns:
        A float32 array in native byte order.

    Raises:
        TensorFormatError: On bad magic, unsupported version, truncated
            header or payload, or trailing bytes.
    """
    if len(raw) < 12:
        raise TensorFormatError(
            f"{source}: truncated header ({len(raw)} bytes, need at least 12)"
        )

    if raw[0:4] != MAGIC:
        raise TensorFormatError(
            f"{source}: bad magic {raw[0:4]!r}, expected {MAGIC!r}"
        )

    version = _U32.unpack_from(raw, 4)[0]

    if version != VERSION:
        raise TensorFormatError(
            f"{source}: unsupported TNSR version {version}"
        )

    rank = _U32.unpack_from(raw, 8)[0]
    header_size = 12 + 4 * rank

    if len(raw) < header_size:
        raise TensorFormatError(
            f"{source}: truncated header for rank {rank} "
            f"({len(raw)} bytes, need {header_size})"
        )

    shape = tuple(_U32.unpack_from(raw, 12 + 4 * i)[0] for i in range(rank))
    expected = tensor_nbytes(shape)
    found = len(raw) - header_size

    if found < expected:
        raise TensorFormatError(
            f"{source}: truncated payload for shape {shape}: "
            f"expected {expected} bytes, found {found}"
        )

    if found > expected:
        raise TensorFormatError(
            f"{source}: {found - expected} trailing bytes after payload "
            f"of shape {shape} (expected {expected} bytes)"
        )

    data = np.frombuffer(raw, dtype=_PAYLOAD_DTYPE, offset=header_size)

    return data.reshape(shape).astype(np.float32)


def write_tensor(path: str | os.PathLike, array) -> Path:
    """Write ``array`` to ``path`` atomically in TNSR format.

    Args:
        path: Destination file.
        array: Any array-like; a torch tensor must be detached and on CPU.

    Returns:
        The destination path.
    """
    path = Path(path)
    temp_path = path.with_name(path.name + ".tmp")

    with open(temp_path, "wb") as f:
        f.write(encode_tensor(array))

    os.replace(temp_path, path)

    debug.internaldebug_log("TNSR", f"wrote {path} shape={np.shape(array)}")

    return path


def read_tensor(path: str | os.PathLike) -> np.ndarray:
    """Read a TNSR file.

    Raises:
        TensorFormatError: If the file is malformed (message names it).
        FileNotFoundError: If the file does not exist.
    """
    path = Path(path)

    with open(path, "rb") as f:
        raw = f.read()

    return decode_tensor(raw, source=str(path))


__all__ = [
    'MAGIC',
    'VERSION',
    'tensor_nbytes',
    'encode_tensor',
    'decode_tensor',
    'write_tensor',
    'read_tensor',
]
