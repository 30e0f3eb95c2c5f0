"""Binary checkpoint container for named float32 arrays.

Layout, all little-endian:

    magic   4 bytes  b"PFG1"
    version u16      currently 1
    then per parameter, in order:
        name_len u16, name bytes (UTF-8),
        rank     u8,  dims rank x u32,
        values   prod(dims) x f32

Parameters are stored in insertion order and read back in the same order.
Values round-trip through float32, so loading returns float64 arrays whose
values are exactly float32-representable.
"""

from __future__ import annotations

import io
import struct

import numpy as np

from .errors import DataError

MAGIC = b"PFG1"
VERSION = 1


def write_checkpoint(entries, dest) -> None:
    """Write (name, array) pairs. entries may be a ParamStore or iterable."""
    if hasattr(entries, "items"):
        entries = [(name, t.data) for name, t in entries.items()]
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<H", VERSION))
    for name, arr in entries:
        arr = np.asarray(arr)
        name_b = name.encode("utf-8")
        if len(name_b) > 0xFFFF:
            raise ValueError(f"parameter name too long: {name[:32]!r}...")
        buf.write(struct.pack("<H", len(name_b)))
        buf.write(name_b)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    payload = buf.getvalue()
    if hasattr(dest, "write"):
        dest.write(payload)
    else:
        with open(dest, "wb") as fh:
            fh.write(payload)


def read_checkpoint(src) -> list[tuple[str, np.ndarray]]:
    """Read back (name, float64 array) pairs in stored order."""
    if hasattr(src, "read"):
        raw = src.read()
    elif isinstance(src, (bytes, bytearray)):
        raw = bytes(src)
    else:
        with open(src, "rb") as fh:
            raw = fh.read()
    if len(raw) < 6:
        raise DataError(f"checkpoint truncated: {len(raw)} bytes")
    if raw[:4] != MAGIC:
        raise DataError(f"bad checkpoint magic {raw[:4]!r}")
    (version,) = struct.unpack_from("<H", raw, 4)
    if version != VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    pos = 6
    out = []
    total = len(raw)
    while pos < total:
        if pos + 2 > total:
            raise DataError(f"checkpoint truncated in name length at byte {pos}")
        (nlen,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        if pos + nlen + 1 > total:
            raise DataError(f"checkpoint truncated in name at byte {pos}")
        name = raw[pos:pos + nlen].decode("utf-8")
        pos += nlen
        rank = raw[pos]
        pos += 1
        if pos + 4 * rank > total:
            raise DataError(f"checkpoint truncated in dims at byte {pos}")
        dims = struct.unpack_from(f"<{rank}I", raw, pos)
        pos += 4 * rank
        count = int(np.prod(dims, dtype=np.int64)) if rank else 1
        nbytes = 4 * count
        if pos + nbytes > total:
            raise DataError(f"checkpoint truncated in values of {name!r} at byte {pos}")
        values = np.frombuffer(raw, dtype="<f4", count=count, offset=pos)
        pos += nbytes
        out.append((name, values.astype(np.float64).reshape(dims)))
    return out
