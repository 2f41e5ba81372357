"""Reference anchors and their tiling over a feature-map grid."""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field

import numpy as np

from .geometry import BBox


@dataclass(frozen=True)
class AnchorConfig:
    base_size: float = 16.0
    scales: tuple[float, ...] = (8.0, 16.0, 32.0)
    ratios: tuple[float, ...] = (0.5, 1.0, 2.0)
    stride: float = 16.0

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))
        object.__setattr__(self, "ratios", tuple(float(r) for r in self.ratios))
        if not self.scales or not self.ratios:
            raise ValueError("need at least one scale and one ratio")
        for name, values in (("scale", self.scales), ("ratio", self.ratios)):
            bad = [v for v in values if not (v > 0 and math.isfinite(v))]
            if bad:
                raise ValueError(f"{name} values must be positive, got {bad}")
        if not self.base_size > 0:
            raise ValueError(f"base_size must be positive, got {self.base_size}")
        if not self.stride > 0:
            raise ValueError(f"stride must be positive, got {self.stride}")

    @property
    def k(self) -> int:
        return len(self.scales) * len(self.ratios)


def base_anchors_array(cfg: AnchorConfig) -> np.ndarray:
    """``(k, 4)`` array of base anchors, ordered ratio-major then scale."""
    c = cfg.stride / 2.0
    rows = []
    for ratio in cfg.ratios:
        root = math.sqrt(ratio)
        for scale in cfg.scales:
            side = cfg.base_size * scale
            w = side / root
            h = side * root
            rows.append((c - w / 2, c - h / 2, c + w / 2, c + h / 2))
    return np.array(rows, dtype=np.float64)


def base_anchors(cfg: AnchorConfig) -> list[BBox]:
    return [BBox(*row) for row in base_anchors_array(cfg)]


@dataclass(frozen=True)
class AnchorSet:
    """Anchors for an ``Hf x Wf`` grid.

    Index layout is position-major, anchor-minor: anchor ``a`` at grid cell
    ``(i, j)`` sits at row ``(i * Wf + j) * k + a`` of :attr:`boxes`.
    """

    height: int
    width: int
    k: int
    stride: float
    boxes: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.boxes.setflags(write=False)

    def __len__(self):
        return self.boxes.shape[0]

    def index(self, i: int, j: int, a: int) -> int:
        return (i * self.width + j) * self.k + a

    def at(self, i: int, j: int) -> np.ndarray:
        start = self.index(i, j, 0)
        return self.boxes[start:start + self.k]

    def bbox(self, n: int) -> BBox:
        return BBox(*self.boxes[n])


def tile(cfg: AnchorConfig, height: int, width: int) -> AnchorSet:
    if int(height) != height or int(width) != width or height < 1 or width < 1:
        raise ValueError(f"feature grid must be positive integers, got {height}x{width}")
    height, width = int(height), int(width)
    k = cfg.k
    count = k * height * width
    if count > sys.maxsize or count * 4 > np.iinfo(np.intp).max:
        raise OverflowError(f"{k}*{height}*{width} anchors exceeds the index range")
    base = base_anchors_array(cfg)
    ys = np.arange(height, dtype=np.float64) * cfg.stride
    xs = np.arange(width, dtype=np.float64) * cfg.stride
    shift_y, shift_x = np.meshgrid(ys, xs, indexing="ij")
    shifts = np.stack([shift_x, shift_y, shift_x, shift_y], axis=-1).reshape(-1, 1, 4)
    boxes = (shifts + base[None, :, :]).reshape(-1, 4)
    return AnchorSet(height=height, width=width, k=k, stride=float(cfg.stride), boxes=boxes)
