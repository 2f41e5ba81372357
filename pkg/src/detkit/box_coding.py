"""Center/log-size regression offsets between a box and its anchor."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .geometry import BBox

# exp() of anything beyond this would turn a random reg head into absurd boxes
MAX_LOG_SCALE = math.log(1000.0)


class BoxDelta(NamedTuple):
    tx: float
    ty: float
    tw: float
    th: float


def encode(target: BBox, anchor: BBox) -> BoxDelta:
    wa, ha = anchor.width, anchor.height
    cxa, cya = anchor.center
    cxt, cyt = target.center
    return BoxDelta(
        (cxt - cxa) / wa,
        (cyt - cya) / ha,
        math.log(target.width / wa),
        math.log(target.height / ha),
    )


def decode(delta: BoxDelta, anchor: BBox) -> BBox:
    tx, ty, tw, th = delta
    if not all(math.isfinite(v) for v in (tx, ty, tw, th)):
        raise ValueError(f"non-finite box delta {tuple(delta)}")
    tw = min(max(tw, -MAX_LOG_SCALE), MAX_LOG_SCALE)
    th = min(max(th, -MAX_LOG_SCALE), MAX_LOG_SCALE)
    wa, ha = anchor.width, anchor.height
    cxa, cya = anchor.center
    cx = cxa + tx * wa
    cy = cya + ty * ha
    w = wa * math.exp(tw)
    h = ha * math.exp(th)
    x1, x2 = cx - w / 2, cx + w / 2
    y1, y2 = cy - h / 2, cy + h / 2
    # far from the origin a tiny side can vanish in rounding
    if x2 <= x1:
        x2 = math.nextafter(x1, math.inf)
    if y2 <= y1:
        y2 = math.nextafter(y1, math.inf)
    return BBox(x1, y1, x2, y2)


def decode_array(deltas: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """Vectorised :func:`decode` over ``(N, 4)`` deltas and anchors."""
    deltas = np.asarray(deltas, dtype=np.float64)
    anchors = np.asarray(anchors, dtype=np.float64)
    if not np.all(np.isfinite(deltas)):
        raise ValueError("non-finite box deltas")
    wa = anchors[:, 2] - anchors[:, 0]
    ha = anchors[:, 3] - anchors[:, 1]
    cxa = (anchors[:, 0] + anchors[:, 2]) / 2
    cya = (anchors[:, 1] + anchors[:, 3]) / 2
    tw = np.clip(deltas[:, 2], -MAX_LOG_SCALE, MAX_LOG_SCALE)
    th = np.clip(deltas[:, 3], -MAX_LOG_SCALE, MAX_LOG_SCALE)
    cx = cxa + deltas[:, 0] * wa
    cy = cya + deltas[:, 1] * ha
    w = wa * np.exp(tw)
    h = ha * np.exp(th)
    return np.stack([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2], axis=1)
