"""Axis-aligned box geometry.

Boxes live in continuous pixel coordinates (x right, y down). Area is the
plain product of side lengths; there is no ``+1`` pixel correction, so a box
``(0, 0, 10, 10)`` covers exactly the 100 unit cells ``[0,10) x [0,10)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class InvalidBoxError(ValueError):
    pass


@dataclass(frozen=True)
class BBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(c) for c in coords):
            raise InvalidBoxError(f"non-finite box coordinates {coords}")
        if self.x2 <= self.x1:
            raise InvalidBoxError(f"x2 <= x1 in box {coords}")
        if self.y2 <= self.y1:
            raise InvalidBoxError(f"y2 <= y1 in box {coords}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    @property
    def center(self) -> tuple[float, float]:
        return (self.x1 + self.x2) / 2, (self.y1 + self.y2) / 2

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    def translate(self, dx: float, dy: float) -> BBox:
        return BBox(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)

    def scale(self, sx: float, sy: float | None = None) -> BBox:
        if sy is None:
            sy = sx
        return BBox(self.x1 * sx, self.y1 * sy, self.x2 * sx, self.y2 * sy)

    @classmethod
    def from_seq(cls, seq) -> BBox:
        if len(seq) != 4:
            raise InvalidBoxError(f"a box needs 4 coordinates, got {len(seq)}")
        return cls(*(float(v) for v in seq))


@dataclass(frozen=True)
class ImageSize:
    width: int
    height: int

    def __post_init__(self):
        if int(self.width) != self.width or int(self.height) != self.height:
            raise ValueError(f"image size must be integral, got {self.width}x{self.height}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image size must be positive, got {self.width}x{self.height}")

    @classmethod
    def parse(cls, text: str) -> ImageSize:
        """Parse ``"1200x1100"``."""
        try:
            w, h = text.lower().split("x")
            return cls(int(w), int(h))
        except ValueError as exc:
            raise ValueError(f"bad image size {text!r}, expected WIDTHxHEIGHT") from exc


def intersection_area(a: BBox, b: BBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def iou(a: BBox, b: BBox) -> float:
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    return inter / (a.area + b.area - inter)


def clip(b: BBox, size: ImageSize) -> BBox | None:
    """Intersect ``b`` with the image rectangle; ``None`` when nothing is left."""
    x1 = min(max(b.x1, 0.0), size.width)
    y1 = min(max(b.y1, 0.0), size.height)
    x2 = min(max(b.x2, 0.0), size.width)
    y2 = min(max(b.y2, 0.0), size.height)
    if x2 <= x1 or y2 <= y1:
        return None
    if (x1, y1, x2, y2) == b.as_tuple():
        return b
    return BBox(x1, y1, x2, y2)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between ``(N, 4)`` and ``(M, 4)`` box arrays."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=inter > 0)
    return out


def boxes_to_array(boxes) -> np.ndarray:
    if not boxes:
        return np.zeros((0, 4))
    return np.array([b.as_tuple() for b in boxes], dtype=np.float64)
