"""Binary tensor container.

Layout, all little-endian::

    b"SBTN" | version: u32 | ndim: u32 | dims: ndim x u64 | payload: prod(dims) x f32

Several containers may be concatenated in one file; :func:`read_tensors`
returns them in order.
"""

from __future__ import annotations

import struct

import numpy as np

from sbam.errors import FormatError

MAGIC = b"SBTN"
VERSION = 1


def encode_tensor(a) -> bytes:
    arr = np.asarray(a, dtype="<f4")
    head = MAGIC + struct.pack("<II", VERSION, arr.ndim)
    head += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return head + arr.tobytes()


def decode_tensor(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Decode one container at ``offset``; return it and the next offset."""
    if buf[offset : offset + 4] != MAGIC:
        raise FormatError(f"bad tensor magic {buf[offset:offset + 4]!r} at byte {offset}")
    if len(buf) < offset + 12:
        raise FormatError("truncated tensor header")
    version, ndim = struct.unpack_from("<II", buf, offset + 4)
    if version != VERSION:
        raise FormatError(f"unsupported tensor container version {version}")
    pos = offset + 12
    if len(buf) < pos + 8 * ndim:
        raise FormatError("truncated tensor dims")
    dims = struct.unpack_from(f"<{ndim}Q", buf, pos)
    pos += 8 * ndim
    count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
    end = pos + 4 * count
    if len(buf) < end:
        raise FormatError(f"truncated tensor payload: need {4 * count} bytes")
    arr = np.frombuffer(buf, dtype="<f4", count=count, offset=pos).reshape(dims)
    return arr.astype(np.float32), end


def write_tensors(path, arrays) -> None:
    with open(path, "wb") as fh:
        for a in arrays:
            fh.write(encode_tensor(a))


def read_tensors(path) -> list[np.ndarray]:
    with open(path, "rb") as fh:
        buf = fh.read()
    out, pos = [], 0
    while pos < len(buf):
        arr, pos = decode_tensor(buf, pos)
        out.append(arr)
    return out
