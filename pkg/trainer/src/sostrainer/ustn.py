"""Reader/writer for the USTN tensor files the simulation toolkit emits.

Implemented against the published layout: magic ``USTN``, u8 version (1),
u8 dtype code (1 = float32, 2 = complex64 interleaved), u8 ndim, ndim
little-endian u64 dims, then the row-major payload.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

MAGIC = b"USTN"
VERSION = 1
DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<c8")}
CODES = {np.dtype("<f4"): 1, np.dtype("<c8"): 2}


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise ValueError(f"{path}: not a USTN file")
    version, code, ndim = struct.unpack_from("<BBB", blob, 4)
    if version != VERSION or code not in DTYPES:
        raise ValueError(f"{path}: unsupported version/dtype {version}/{code}")
    dims = struct.unpack_from(f"<{ndim}Q", blob, 7)
    dtype = DTYPES[code]
    offset = 7 + 8 * ndim
    n = int(np.prod(dims, dtype=np.int64))
    if len(blob) - offset != n * dtype.itemsize:
        raise ValueError(f"{path}: payload length mismatch")
    return np.frombuffer(blob, dtype=dtype, count=n, offset=offset).reshape(dims).copy()


def write_tensor(path, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr)
    code = CODES.get(arr.dtype.newbyteorder("<"))
    if code is None:
        raise TypeError(f"dtype {arr.dtype} not representable; use float32/complex64")
    header = MAGIC + struct.pack("<BBB", VERSION, code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", prefix=".ustn-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(header)
            f.write(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
