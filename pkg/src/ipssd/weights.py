"""RDW1 weight container.

Layout (all integers little-endian ``uint32``)::

    b"RDW1"
    repeated until EOF:
        name_len, name (UTF-8, name_len bytes),
        d0, d1, d2, d3,
        d0*d1*d2*d3 little-endian float32 values

Every parameter is stored with exactly four dims; vectors are written as
``(n, 1, 1, 1)`` and matrices as ``(rows, cols, 1, 1)``.
"""
import struct
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"RDW1"


def _as4d(arr):
    arr = np.asarray(arr, dtype="<f4")
    if arr.ndim > 4:
        raise DataError(f"cannot store a {arr.ndim}-D array in RDW1")
    return arr.reshape(arr.shape + (1,) * (4 - arr.ndim))


def dumps(params):
    """Serialize a ``{name: array}`` mapping, keeping insertion order."""
    out = [MAGIC]
    for name, arr in params.items():
        raw = name.encode("utf-8")
        a = _as4d(arr)
        out.append(struct.pack("<I", len(raw)))
        out.append(raw)
        out.append(struct.pack("<4I", *a.shape))
        out.append(np.ascontiguousarray(a).tobytes())
    return b"".join(out)


def loads(blob):
    """Parse RDW1 bytes into ``{name: float32 array of 4 dims}``."""
    if blob[:4] != MAGIC:
        raise DataError("not an RDW1 weight file (bad magic)")
    params = {}
    pos = 4
    n = len(blob)
    while pos < n:
        if pos + 4 > n:
            raise DataError(f"truncated record header at byte {pos}")
        (name_len,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        if pos + name_len + 16 > n:
            raise DataError(f"truncated record at byte {pos}")
        try:
            name = blob[pos:pos + name_len].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DataError(f"parameter name at byte {pos} is not UTF-8") from exc
        pos += name_len
        dims = struct.unpack_from("<4I", blob, pos)
        pos += 16
        count = int(np.prod(dims))
        end = pos + 4 * count
        if end > n:
            raise DataError(f"payload of {name!r} runs past end of file")
        if name in params:
            raise DataError(f"duplicate parameter {name!r}")
        params[name] = np.frombuffer(blob, dtype="<f4", count=count, offset=pos).reshape(dims).astype(np.float32)
        pos = end
    return params


def save(path, params):
    Path(path).write_bytes(dumps(params))


def load(path):
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read weight file {path}: {exc}") from exc
    return loads(blob)
