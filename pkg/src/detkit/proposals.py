"""Greedy NMS and RPN proposal generation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .anchors import AnchorSet
from .box_coding import decode_array
from .geometry import BBox, ImageSize, iou_matrix
from .rpn import RpnOutput, ShapeError


@dataclass(frozen=True)
class ScoredBox:
    box: BBox
    score: float
    label: str | None = None

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")


@dataclass(frozen=True)
class ProposalParams:
    pre_nms_top_n: int = 6000
    post_nms_top_n: int = 300
    nms_iou_threshold: float = 0.7
    min_box_size: float = 2.0

    def __post_init__(self):
        if self.pre_nms_top_n < 1 or self.post_nms_top_n < 1:
            raise ValueError("proposal counts must be positive")
        if self.post_nms_top_n > self.pre_nms_top_n:
            raise ValueError(
                f"post_nms_top_n ({self.post_nms_top_n}) exceeds pre_nms_top_n ({self.pre_nms_top_n})"
            )
        if not 0.0 < self.nms_iou_threshold < 1.0:
            raise ValueError(f"NMS threshold must lie in (0, 1), got {self.nms_iou_threshold}")
        if self.min_box_size < 0:
            raise ValueError(f"min_box_size must be >= 0, got {self.min_box_size}")


def stable_descending(scores: np.ndarray) -> np.ndarray:
    """Indices ordering ``scores`` high to low, ties kept in input order."""
    return np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")


def nms_indices(boxes: np.ndarray, scores: np.ndarray, iou_threshold: float) -> list[int]:
    """Indices kept by greedy NMS, in score-descending (stable) order.

    A box is suppressed when its IoU with an already kept box is strictly
    greater than ``iou_threshold``.
    """
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    order = stable_descending(scores)
    if order.size == 0:
        return []
    ious = iou_matrix(boxes[order], boxes[order])
    alive = np.ones(order.size, dtype=bool)
    keep = []
    for pos in range(order.size):
        if not alive[pos]:
            continue
        keep.append(int(order[pos]))
        alive[pos + 1:] &= ious[pos, pos + 1:] <= iou_threshold
    return keep


def nms(boxes: list[ScoredBox], iou_threshold: float) -> list[ScoredBox]:
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError(f"NMS threshold must lie in (0, 1), got {iou_threshold}")
    if not boxes:
        return []
    arr = np.array([b.box.as_tuple() for b in boxes])
    scores = np.array([b.score for b in boxes])
    return [boxes[i] for i in nms_indices(arr, scores, iou_threshold)]


def generate_proposals(rpn: RpnOutput, anchors: AnchorSet, image: ImageSize,
                       params: ProposalParams = ProposalParams(),
                       label: str | None = None) -> list[ScoredBox]:
    """Decode, clip, size-filter, rank, NMS and truncate the RPN outputs.

    Every anchor contributes one candidate scored by its softmax object
    probability. Ties in score keep anchor order.
    """
    if (rpn.height, rpn.width, rpn.k) != (anchors.height, anchors.width, anchors.k):
        raise ShapeError(
            f"RPN output is {rpn.height}x{rpn.width} with k={rpn.k}, "
            f"anchors are {anchors.height}x{anchors.width} with k={anchors.k}"
        )
    scores = rpn.objectness()
    boxes = decode_array(rpn.deltas(), anchors.boxes)
    boxes[:, 0::2] = np.clip(boxes[:, 0::2], 0.0, image.width)
    boxes[:, 1::2] = np.clip(boxes[:, 1::2], 0.0, image.height)
    w = boxes[:, 2] - boxes[:, 0]
    h = boxes[:, 3] - boxes[:, 1]
    valid = (w > 0) & (h > 0) & (w >= params.min_box_size) & (h >= params.min_box_size)
    idx = np.flatnonzero(valid)
    idx = idx[stable_descending(scores[idx])][:params.pre_nms_top_n]
    keep = nms_indices(boxes[idx], scores[idx], params.nms_iou_threshold)
    keep = keep[:params.post_nms_top_n]
    return [
        ScoredBox(BBox(*boxes[idx[i]]), float(min(max(scores[idx[i]], 0.0), 1.0)), label)
        for i in keep
    ]
