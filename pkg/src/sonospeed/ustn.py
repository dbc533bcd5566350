"""USTN: the toolkit's minimal binary tensor format.

Layout (all little-endian):

    offset 0   magic       4 bytes  b"USTN"
    offset 4   version     u8       currently 1
    offset 5   dtype code  u8       1 = float32, 2 = complex64 (interleaved re/im)
    offset 6   ndim        u8       1..8
    offset 7   dims        ndim * u64
    then       payload     row-major, prod(dims) * itemsize bytes

Files are written atomically (temp name + rename).  Readers validate the
magic, version, dtype code, dimension count, and exact payload length, and
raise UstnFormatError with byte offsets and expected/actual counts.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

MAGIC = b"USTN"
VERSION = 1
MAX_NDIM = 8

DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("<c8")}
CODE_FOR_DTYPE = {np.dtype("<f4"): 1, np.dtype("<c8"): 2}


class UstnFormatError(ValueError):
    pass


def header_size(ndim: int) -> int:
    return 7 + 8 * ndim


def file_size(shape: tuple[int, ...], dtype) -> int:
    """Expected on-disk size for an array of this shape and dtype."""
    dtype = np.dtype(dtype)
    n = 1
    for d in shape:
        n *= d
    return header_size(len(shape)) + n * dtype.itemsize


def write_tensor(path, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr)
    code = CODE_FOR_DTYPE.get(arr.dtype.newbyteorder("<"))
    if code is None:
        raise TypeError(
            f"dtype {arr.dtype} not storable; cast to float32 or complex64 first")
    if not 1 <= arr.ndim <= MAX_NDIM:
        raise ValueError(f"ndim {arr.ndim} outside [1, {MAX_NDIM}]")
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


def read_tensor(path) -> np.ndarray:
    path = os.fspath(path)
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 7:
        raise UstnFormatError(f"{path}: file truncated inside the 7-byte fixed header")
    if blob[:4] != MAGIC:
        raise UstnFormatError(f"{path}: bad magic {blob[:4]!r} at offset 0, expected {MAGIC!r}")
    version, code, ndim = struct.unpack_from("<BBB", blob, 4)
    if version != VERSION:
        raise UstnFormatError(f"{path}: unsupported version {version} at offset 4")
    if code not in DTYPE_CODES:
        raise UstnFormatError(f"{path}: unknown dtype code {code} at offset 5")
    if not 1 <= ndim <= MAX_NDIM:
        raise UstnFormatError(f"{path}: ndim {ndim} at offset 6 outside [1, {MAX_NDIM}]")
    hsize = header_size(ndim)
    if len(blob) < hsize:
        raise UstnFormatError(
            f"{path}: file truncated inside the dims block; have {len(blob)} bytes, "
            f"header needs {hsize}")
    dims = struct.unpack_from(f"<{ndim}Q", blob, 7)
    dtype = DTYPE_CODES[code]
    n_elem = 1
    for d in dims:
        if d > 2 ** 48:
            raise UstnFormatError(f"{path}: dimension {d} overflows the sanity bound 2^48")
        n_elem *= d
        if n_elem * dtype.itemsize > 2 ** 48:
            raise UstnFormatError(f"{path}: payload size overflows the sanity bound 2^48")
    expected = n_elem * dtype.itemsize
    actual = len(blob) - hsize
    if actual != expected:
        raise UstnFormatError(
            f"{path}: payload at offset {hsize} has {actual} bytes, expected {expected} "
            f"for dims {tuple(dims)}")
    arr = np.frombuffer(blob, dtype=dtype, count=n_elem, offset=hsize)
    return arr.reshape(dims).copy()
