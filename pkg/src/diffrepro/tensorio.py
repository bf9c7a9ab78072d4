"""Binary tensor container with a fixed, endian-stable layout.

Layout (all little-endian):

    bytes 0..3    magic  b"DRTF"
    bytes 4..7    format version, uint32 (currently 1)
    bytes 8..11   ndim, uint32
    then          ndim x uint64 dimension sizes
    then          row-major float32 payload, exactly prod(dims) values

The format is deliberately minimal so golden files stay bit-exact across
platforms and library versions.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"DRTF"
VERSION = 1

_HEADER = struct.Struct("<4sII")


class TensorFormatError(ValueError):
    """Raised when a tensor file violates the container format."""


def write_tensor(path: str | Path, tensor: np.ndarray) -> None:
    """Write ``tensor`` to ``path``, casting the payload to float32.

    The array is serialized in C (row-major) order.
    """
    arr = np.ascontiguousarray(tensor, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(arr.tobytes(order="C"))


def read_tensor(path: str | Path) -> np.ndarray:
    """Read a tensor file written by :func:`write_tensor`.

    Returns a float32 array. Raises :class:`TensorFormatError` on a bad
    magic, unsupported version, truncated payload, or trailing bytes.
    """
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise TensorFormatError(f"{path}: file too short for header ({len(blob)} bytes)")
    magic, version, ndim = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise TensorFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise TensorFormatError(f"{path}: unsupported format version {version}, expected {VERSION}")
    dims_off = _HEADER.size
    dims_len = 8 * ndim
    if len(blob) < dims_off + dims_len:
        raise TensorFormatError(f"{path}: truncated dimension block")
    dims = struct.unpack_from(f"<{ndim}Q", blob, dims_off)
    count = 1
    for d in dims:
        count *= d
    payload = blob[dims_off + dims_len:]
    expected = count * 4
    if len(payload) < expected:
        raise TensorFormatError(
            f"{path}: truncated payload, expected {expected} bytes for dims {dims}, got {len(payload)}"
        )
    if len(payload) > expected:
        raise TensorFormatError(
            f"{path}: {len(payload) - expected} trailing bytes after payload for dims {dims}"
        )
    arr = np.frombuffer(payload, dtype="<f4").reshape(dims)
    return arr.copy()
