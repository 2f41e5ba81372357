"""Geometric augmentation applied jointly to a raster and its boxes.

Supported operations: crop, 90-degree rotation, zoom, anisotropic stretch and
elastic deformation, plus the bounded downscale used before training. Boxes
are carried through every operation, clipped to the new image, and dropped
when nothing (or, for crops, too little) of them is left.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.ndimage import gaussian_filter

from .evaluation import GroundTruthObject
from .geometry import BBox, ImageSize, clip
from .raster import Raster

DEFAULT_MIN_VISIBILITY = 0.25
ELASTIC_POINTS_PER_EDGE = 8


class AugmentError(ValueError):
    pass


@dataclass(frozen=True)
class Crop:
    x1: int
    y1: int
    x2: int
    y2: int

    def __post_init__(self):
        if self.x2 <= self.x1 or self.y2 <= self.y1:
            raise AugmentError(f"empty crop region {(self.x1, self.y1, self.x2, self.y2)}")


@dataclass(frozen=True)
class Rotate90:
    direction: str = "right"

    def __post_init__(self):
        if self.direction not in ("left", "right"):
            raise AugmentError(f"rotation direction must be 'left' or 'right', got {self.direction!r}")


@dataclass(frozen=True)
class Zoom:
    factor: float

    def __post_init__(self):
        if not (self.factor > 0 and math.isfinite(self.factor)):
            raise AugmentError(f"zoom factor must be positive, got {self.factor}")


@dataclass(frozen=True)
class Stretch:
    sx: float
    sy: float

    def __post_init__(self):
        if not (self.sx > 0 and self.sy > 0 and math.isfinite(self.sx) and math.isfinite(self.sy)):
            raise AugmentError(f"stretch factors must be positive, got {(self.sx, self.sy)}")


@dataclass(frozen=True)
class Elastic:
    alpha: float
    sigma: float
    seed: int | None = None

    def __post_init__(self):
        if not self.alpha >= 0:
            raise AugmentError(f"elastic alpha must be >= 0, got {self.alpha}")
        if not self.sigma > 0:
            raise AugmentError(f"elastic sigma must be > 0, got {self.sigma}")

    def resolve(self, rng: np.random.Generator, width: int, height: int) -> Elastic:
        if self.seed is not None:
            return self
        return Elastic(self.alpha, self.sigma, int(rng.integers(0, 2**31 - 1)))


@dataclass(frozen=True)
class RandomCrop:
    """Crop keeping ``fraction`` of each side at a position drawn from the pipeline RNG."""

    fraction: float

    def __post_init__(self):
        if not 0 < self.fraction <= 1:
            raise AugmentError(f"crop fraction must lie in (0, 1], got {self.fraction}")

    def resolve(self, rng: np.random.Generator, width: int, height: int) -> Crop:
        cw = max(1, int(round(width * self.fraction)))
        ch = max(1, int(round(height * self.fraction)))
        x1 = int(rng.integers(0, width - cw + 1))
        y1 = int(rng.integers(0, height - ch + 1))
        return Crop(x1, y1, x1 + cw, y1 + ch)


AugmentOp = Union[Crop, Rotate90, Zoom, Stretch, Elastic, RandomCrop]


def _box_of(obj):
    return obj if isinstance(obj, BBox) else obj.box


def _with_box(obj, box: BBox):
    return box if isinstance(obj, BBox) else GroundTruthObject(box, obj.label)


def _map_boxes(objects, fn):
    out = []
    for obj in objects:
        box = fn(_box_of(obj))
        if box is not None:
            out.append(_with_box(obj, box))
    return out


def bilinear_sample(pixels: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample ``(H, W, C)`` samples at fractional index coordinates, edges clamped."""
    h, w = pixels.shape[:2]
    src = pixels.astype(np.float64)
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xs - x0)[..., None]
    fy = (ys - y0)[..., None]
    top = src[y0, x0] * (1 - fx) + src[y0, x1] * fx
    bottom = src[y1, x0] * (1 - fx) + src[y1, x1] * fx
    return top * (1 - fy) + bottom * fy


def _to_uint8(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(values), 0, 255).astype(np.uint8)


def _scale_raster(img: Raster, sx: float, sy: float, out_w: int, out_h: int) -> Raster:
    if (out_w, out_h) == (img.width, img.height) and sx == 1 and sy == 1:
        return img
    us = (np.arange(out_w) + 0.5) / sx - 0.5
    vs = (np.arange(out_h) + 0.5) / sy - 0.5
    grid_x, grid_y = np.meshgrid(us, vs)
    return Raster(_to_uint8(bilinear_sample(img.pixels, grid_x, grid_y)))


def _scaled(img: Raster, objects, sx: float, sy: float, out_w: int | None = None,
            out_h: int | None = None):
    out_w = out_w or max(1, int(round(img.width * sx)))
    out_h = out_h or max(1, int(round(img.height * sy)))
    size = ImageSize(out_w, out_h)
    raster = _scale_raster(img, sx, sy, out_w, out_h)

    def move(b):
        return clip(BBox(b.x1 * sx, b.y1 * sy, b.x2 * sx, b.y2 * sy), size)

    return raster, _map_boxes(objects, move)


def _rotate(img: Raster, objects, direction: str):
    w, h = img.width, img.height
    if direction == "right":
        # pixel (x, y) -> (h - 1 - y, x)
        px = np.rot90(img.pixels, k=-1)

        def move(b):
            return BBox(h - b.y2, b.x1, h - b.y1, b.x2)
    else:
        # pixel (x, y) -> (y, w - 1 - x)
        px = np.rot90(img.pixels, k=1)

        def move(b):
            return BBox(b.y1, w - b.x2, b.y2, w - b.x1)

    size = ImageSize(h, w)
    return Raster(px), _map_boxes(objects, lambda b: clip(move(b), size))


def _crop(img: Raster, objects, op: Crop, min_visibility: float):
    if op.x1 < 0 or op.y1 < 0 or op.x2 > img.width or op.y2 > img.height:
        raise AugmentError(
            f"crop region {(op.x1, op.y1, op.x2, op.y2)} exceeds the {img.width}x{img.height} image"
        )
    raster = Raster(img.pixels[op.y1:op.y2, op.x1:op.x2])
    size = ImageSize(op.x2 - op.x1, op.y2 - op.y1)

    def move(b):
        kept = clip(b.translate(-op.x1, -op.y1), size)
        if kept is None or kept.area < min_visibility * b.area:
            return None
        return kept

    return raster, _map_boxes(objects, move)


def displacement_field(width: int, height: int, alpha: float, sigma: float,
                       seed: int | None) -> tuple[np.ndarray, np.ndarray]:
    """Smoothed uniform noise scaled by ``alpha``; ``(dx, dy)`` each ``(H, W)``."""
    rng = np.random.default_rng(seed)
    dx = gaussian_filter(rng.uniform(-1, 1, (height, width)), sigma, mode="constant") * alpha
    dy = gaussian_filter(rng.uniform(-1, 1, (height, width)), sigma, mode="constant") * alpha
    return dx, dy


def _elastic(img: Raster, objects, op: Elastic):
    w, h = img.width, img.height
    dx, dy = displacement_field(w, h, op.alpha, op.sigma, op.seed)
    grid_y, grid_x = np.mgrid[0:h, 0:w].astype(np.float64)
    raster = Raster(_to_uint8(bilinear_sample(img.pixels, grid_x + dx, grid_y + dy)))
    field = np.stack([dx, dy], axis=-1)
    size = ImageSize(w, h)
    n = ELASTIC_POINTS_PER_EDGE

    def move(b):
        # linspace hits both endpoints exactly, so alpha == 0 is an exact identity
        along_x = np.linspace(b.x1, b.x2, n)
        along_y = np.linspace(b.y1, b.y2, n)
        xs = np.concatenate([along_x, along_x, np.full(n, b.x1), np.full(n, b.x2)])
        ys = np.concatenate([np.full(n, b.y1), np.full(n, b.y2), along_y, along_y])
        # continuous point p sits at index coordinate p - 0.5
        d = bilinear_sample(field, xs - 0.5, ys - 0.5)
        # the raster is pulled from p + d, so content at p lands near p - d
        fx = xs - d[:, 0]
        fy = ys - d[:, 1]
        if fx.max() <= fx.min() or fy.max() <= fy.min():
            return None
        return clip(BBox(fx.min(), fy.min(), fx.max(), fy.max()), size)

    return raster, _map_boxes(objects, move)


def apply(img: Raster, objects: Sequence, op: AugmentOp,
          min_visibility: float = DEFAULT_MIN_VISIBILITY):
    """Apply one concrete operation; returns ``(raster, surviving objects)``.

    ``objects`` may hold :class:`GroundTruthObject` or bare :class:`BBox` items.
    """
    if isinstance(op, Rotate90):
        return _rotate(img, objects, op.direction)
    if isinstance(op, Zoom):
        return _scaled(img, objects, op.factor, op.factor)
    if isinstance(op, Stretch):
        return _scaled(img, objects, op.sx, op.sy)
    if isinstance(op, Crop):
        return _crop(img, objects, op, min_visibility)
    if isinstance(op, Elastic):
        if op.seed is None:
            raise AugmentError("elastic op needs a seed outside a pipeline")
        return _elastic(img, objects, op)
    if isinstance(op, RandomCrop):
        raise AugmentError("random crop must be resolved by a pipeline")
    raise AugmentError(f"unknown augmentation {op!r}")


def pipeline(img: Raster, objects: Sequence, ops: Sequence[AugmentOp], seed=0,
             min_visibility: float = DEFAULT_MIN_VISIBILITY):
    """Fold ``ops`` left to right; random parameters come from ``seed``."""
    rng = np.random.default_rng(seed)
    objects = list(objects)
    for op in ops:
        if hasattr(op, "resolve"):
            op = op.resolve(rng, img.width, img.height)
        img, objects = apply(img, objects, op, min_visibility)
    return img, objects


def resize_to_limit(img: Raster, objects: Sequence, max_w: int = 1200, max_h: int = 1100,
                    exact: bool = False):
    """Downscale uniformly so the image fits inside ``max_w x max_h``.

    Images already inside the limit are returned untouched. ``exact=True``
    instead resizes to exactly ``max_w x max_h``, distorting the aspect ratio.
    """
    if exact:
        if (img.width, img.height) == (max_w, max_h):
            return img, list(objects)
        return _scaled(img, objects, max_w / img.width, max_h / img.height, max_w, max_h)
    if img.width <= max_w and img.height <= max_h:
        return img, list(objects)
    s = min(max_w / img.width, max_h / img.height)
    out_w = min(max_w, max(1, int(round(img.width * s))))
    out_h = min(max_h, max(1, int(round(img.height * s))))
    return _scaled(img, objects, s, s, out_w, out_h)


def parse_ops(text: str) -> list[AugmentOp]:
    """Parse a comma list such as ``"rot90r,crop:0.8,zoom:1.2,elastic:34:4"``.

    Tokens: ``rot90r``, ``rot90l``, ``crop:F`` (random position),
    ``crop:X1:Y1:X2:Y2``, ``zoom:F``, ``stretch:SX:SY``,
    ``elastic:ALPHA:SIGMA[:SEED]``. ``none`` or an empty string means no ops.
    """
    ops = []
    for token in (t.strip() for t in text.split(",")):
        if not token or token == "none":
            continue
        name, *args = token.split(":")
        try:
            nums = [float(a) for a in args]
        except ValueError:
            raise AugmentError(f"bad number in augmentation token {token!r}") from None
        if name == "rot90r" and not nums:
            ops.append(Rotate90("right"))
        elif name == "rot90l" and not nums:
            ops.append(Rotate90("left"))
        elif name == "crop" and len(nums) == 1:
            ops.append(RandomCrop(nums[0]))
        elif name == "crop" and len(nums) == 4:
            ops.append(Crop(*(int(v) for v in nums)))
        elif name == "zoom" and len(nums) == 1:
            ops.append(Zoom(nums[0]))
        elif name == "stretch" and len(nums) == 2:
            ops.append(Stretch(*nums))
        elif name == "elastic" and len(nums) in (2, 3):
            seed = int(nums[2]) if len(nums) == 3 else None
            ops.append(Elastic(nums[0], nums[1], seed))
        else:
            raise AugmentError(f"unknown augmentation token {token!r}")
    return ops
