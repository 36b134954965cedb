"""Binary PGM (P5) and PPM (P6) reading and writing, 8-bit only."""

from __future__ import annotations

import os

import numpy as np

from sbam.errors import FormatError
from sbam.tokenize import Image

_MAGIC = {b"P5": 1, b"P6": 3}


def _header_fields(data: bytes, path) -> tuple[list[bytes], int]:
    """Return (magic, width, height, maxval) tokens and the payload offset."""
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise FormatError(f"{path}: truncated header")
        if data[pos : pos + 1] == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        fields.append(data[start:pos])
    # exactly one whitespace byte separates maxval from the raster
    return fields, pos + 1


def decode_pnm(data: bytes, path="<bytes>") -> Image:
    if data[:2] not in _MAGIC:
        raise FormatError(f"{path}: bad magic {data[:2]!r}, expected P5 or P6")
    fields, offset = _header_fields(data, path)
    channels = _MAGIC[fields[0]]
    try:
        width, height, maxval = (int(f) for f in fields[1:])
    except ValueError:
        raise FormatError(f"{path}: malformed header {fields!r}") from None
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 is supported, got {maxval}")
    if width <= 0 or height <= 0:
        raise FormatError(f"{path}: bad dimensions {width}x{height}")
    count = width * height * channels
    raster = data[offset : offset + count]
    if len(raster) != count:
        raise FormatError(f"{path}: expected {count} raster bytes, found {len(raster)}")
    px = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, channels)
    return Image(px.astype(np.float32) / 255.0)


def read_pnm(path: str | os.PathLike) -> Image:
    with open(path, "rb") as fh:
        return decode_pnm(fh.read(), path)


def to_bytes(pixels) -> np.ndarray:
    px = np.asarray(pixels, dtype=np.float64)
    return np.clip(np.rint(px * 255.0), 0, 255).astype(np.uint8)


def encode_pnm(image: Image) -> bytes:
    magic = b"P5" if image.channels == 1 else b"P6"
    header = b"%s\n%d %d\n255\n" % (magic, image.width, image.height)
    return header + to_bytes(image.pixels).tobytes()


def write_pnm(path: str | os.PathLike, image: Image) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pnm(image))
