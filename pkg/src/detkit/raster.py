"""8-bit rasters and binary PPM (P6) / PGM (P5) I/O."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class RasterFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Raster:
    """Row-major ``(height, width, channels)`` uint8 samples, 1 or 3 channels."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3) or px.shape[0] < 1 or px.shape[1] < 1:
            raise RasterFormatError(f"raster must be (H, W, 1|3), got {px.shape}")
        if px.dtype != np.uint8:
            raise RasterFormatError(f"raster samples must be uint8, got {px.dtype}")
        object.__setattr__(self, "pixels", np.ascontiguousarray(px))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def __eq__(self, other):
        if not isinstance(other, Raster):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))

    @classmethod
    def blank(cls, width: int, height: int, channels: int = 3, value: int = 0) -> Raster:
        return cls(np.full((height, width, channels), value, dtype=np.uint8))


def _tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated header tokens, skipping ``#`` comments."""
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise RasterFormatError("truncated header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the samples
    if pos >= n or not data[pos:pos + 1].isspace():
        raise RasterFormatError("missing whitespace after header")
    return tokens, pos + 1


def decode_pnm(data: bytes) -> Raster:
    tokens, offset = _tokens(data, 4)
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise RasterFormatError(f"unsupported magic {magic!r}; only P5 and P6 are read")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise RasterFormatError(f"bad header numbers {tokens[1:]}") from exc
    if maxval != 255:
        raise RasterFormatError(f"only maxval 255 is supported, got {maxval}")
    channels = 3 if magic == b"P6" else 1
    need = width * height * channels
    body = data[offset:offset + need]
    if len(body) != need:
        raise RasterFormatError(f"expected {need} samples, found {len(body)}")
    px = np.frombuffer(body, dtype=np.uint8).reshape(height, width, channels)
    return Raster(px.copy())


def encode_pnm(img: Raster) -> bytes:
    magic = b"P6" if img.channels == 3 else b"P5"
    header = b"%s\n%d %d\n255\n" % (magic, img.width, img.height)
    return header + img.pixels.tobytes(order="C")


def read_raster(path) -> Raster:
    return decode_pnm(Path(path).read_bytes())


def write_raster(img: Raster, path) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_bytes(encode_pnm(img))
    os.replace(tmp, path)


def pnm_size(path) -> tuple[int, int]:
    """``(width, height)`` from a PPM/PGM header without decoding samples."""
    with open(path, "rb") as fh:
        head = fh.read(4096)
    tokens, _ = _tokens(head, 3)
    if tokens[0] not in (b"P5", b"P6"):
        raise RasterFormatError(f"unsupported magic {tokens[0]!r}")
    return int(tokens[1]), int(tokens[2])
