"""Deterministic binary checkpoints.

Named float64/int64 arrays plus string metadata, written in a fixed layout
with no timestamps, so identical training runs produce byte-identical
files.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import FormatError, VersionError

_MAGIC = b"OCCQCKPT"
_VERSION = 1
_DTYPES = {0: np.float64, 1: np.int64}
_DTYPE_CODES = {np.dtype(np.float64): 0, np.dtype(np.int64): 1}


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict[str, str]):
    """Write arrays and metadata; keys are sorted for a canonical layout."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<I", len(meta)))
        for key in sorted(meta):
            _write_str(fh, key)
            _write_str(fh, meta[key])
        fh.write(struct.pack("<I", len(arrays)))
        for name in sorted(arrays):
            arr = np.asarray(arrays[name])
            if arr.dtype not in _DTYPE_CODES:
                arr = arr.astype(np.float64)
            if not arr.flags.c_contiguous:
                # keep 0-d arrays 0-d: ascontiguousarray would promote them
                arr = np.ascontiguousarray(arr)
            _write_str(fh, name)
            fh.write(struct.pack("<B", _DTYPE_CODES[arr.dtype]))
            fh.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<Q", dim))
            fh.write(arr.tobytes(order="C"))


def load_checkpoint(path):
    """Read back (arrays, meta)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    view = memoryview(blob)
    if blob[:8] != _MAGIC:
        raise FormatError("not a checkpoint file")
    (version,) = struct.unpack_from("<I", view, 8)
    if version != _VERSION:
        raise VersionError(f"unsupported checkpoint version {version}")
    pos = 12
    try:
        (n_meta,) = struct.unpack_from("<I", view, pos)
        pos += 4
        meta = {}
        for _ in range(n_meta):
            key, pos = _read_str(view, pos)
            val, pos = _read_str(view, pos)
            meta[key] = val
        (n_arrays,) = struct.unpack_from("<I", view, pos)
        pos += 4
        arrays = {}
        for _ in range(n_arrays):
            name, pos = _read_str(view, pos)
            (code, ndim) = struct.unpack_from("<BB", view, pos)
            pos += 2
            if code not in _DTYPES:
                raise FormatError(f"unknown dtype code {code}")
            shape = struct.unpack_from(f"<{ndim}Q", view, pos)
            pos += 8 * ndim
            count = int(np.prod(shape)) if ndim else 1
            nbytes = count * 8
            if pos + nbytes > len(blob):
                raise FormatError("truncated checkpoint")
            arr = np.frombuffer(blob, dtype=_DTYPES[code], count=count, offset=pos).reshape(shape)
            arrays[name] = arr.copy()
            pos += nbytes
    except struct.error:
        raise FormatError("truncated checkpoint") from None
    return arrays, meta


def _write_str(fh, s: str):
    data = s.encode("utf-8")
    fh.write(struct.pack("<I", len(data)))
    fh.write(data)


def _read_str(view, pos):
    if pos + 4 > len(view):
        raise FormatError("truncated checkpoint")
    (n,) = struct.unpack_from("<I", view, pos)
    pos += 4
    if pos + n > len(view):
        raise FormatError("truncated checkpoint")
    return bytes(view[pos : pos + n]).decode("utf-8"), pos + n
