"""Quantised RoI max pooling onto a fixed grid."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import BBox, ImageSize, clip
from .rpn import FeatureMap


class EmptyRoiError(ValueError):
    pass


@dataclass(frozen=True)
class RoiPoolConfig:
    width: int = 7
    height: int = 7

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"pool grid must be at least 1x1, got {self.width}x{self.height}")


def cell_ranges(start: float, length: float, bins: int, limit: int) -> list[tuple[int, int]]:
    """Half-open index ranges ``[floor(a), ceil(b))`` for each of ``bins`` cells.

    ``a = start + g * length / bins`` and ``b = start + (g + 1) * length / bins``;
    adjacent ranges may overlap. Each range is clamped to ``[0, limit)`` and
    forced to hold at least one index.
    """
    out = []
    for g in range(bins):
        lo = math.floor((start * bins + g * length) / bins)
        hi = math.ceil((start * bins + (g + 1) * length) / bins)
        lo = min(max(lo, 0), limit - 1)
        hi = min(max(hi, lo + 1), limit)
        out.append((lo, hi))
    return out


def roi_pool(features: FeatureMap, roi: BBox, cfg: RoiPoolConfig = RoiPoolConfig()) -> np.ndarray:
    """Max-pool ``roi`` (feature-map coordinates) into a ``W * H * C`` vector.

    The vector is channel-major: ``out[c * H * W + gy * W + gx]``.
    """
    clipped = clip(roi, ImageSize(features.width, features.height))
    if clipped is None:
        raise EmptyRoiError(f"RoI {roi.as_tuple()} does not overlap the {features.width}x{features.height} map")
    cols = cell_ranges(clipped.x1, clipped.width, cfg.width, features.width)
    rows = cell_ranges(clipped.y1, clipped.height, cfg.height, features.height)
    data = features.data
    out = np.empty((features.channels, cfg.height, cfg.width))
    for gy, (r0, r1) in enumerate(rows):
        band = data[:, r0:r1, :]
        for gx, (c0, c1) in enumerate(cols):
            out[:, gy, gx] = band[:, :, c0:c1].max(axis=(1, 2))
    return out.reshape(-1)


def image_to_feature_roi(box: BBox, stride: float) -> BBox:
    """Map an image-space box onto the feature grid, rounding outward."""
    return BBox(
        math.floor(box.x1 / stride),
        math.floor(box.y1 / stride),
        math.ceil(box.x2 / stride),
        math.ceil(box.y2 / stride),
    )
