"""SETN tensor file format.

Layout: bytes 0-3 magic ``SETN``, byte 4 version (1), byte 5 dtype code
(0 = float32 little-endian), bytes 6-7 reserved (0), then u32 LE ndim,
ndim x u32 LE dims, then the row-major payload.
"""

import struct

import numpy as np

from .errors import FormatError

MAGIC = b"SETN"
VERSION = 1
DTYPE_F32 = 0

_HEADER = struct.Struct("<4sBBHI")


def write_setn(path, arr):
    """Write ``arr`` (any float array) to ``path`` as a float32 SETN tensor."""
    arr = np.ascontiguousarray(arr, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, DTYPE_F32, 0, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def read_setn(path):
    """Read a SETN tensor; returns a float32 ndarray."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise FormatError(f"{path}: truncated SETN header")
        magic, version, dtype, _, ndim = _HEADER.unpack(head)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise FormatError(f"{path}: unsupported SETN version {version}")
        if dtype != DTYPE_F32:
            raise FormatError(f"{path}: unsupported dtype code {dtype}")
        raw = fh.read(4 * ndim)
        if len(raw) < 4 * ndim:
            raise FormatError(f"{path}: truncated dims")
        dims = struct.unpack(f"<{ndim}I", raw)
        count = int(np.prod(dims)) if ndim else 1
        payload = fh.read(4 * count)
        if len(payload) < 4 * count:
            raise FormatError(f"{path}: truncated payload "
                              f"({len(payload)} of {4 * count} bytes)")
        return np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
