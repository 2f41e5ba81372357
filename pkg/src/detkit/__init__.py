"""Numerics for region-based object detection: anchors, RPN and head forward
passes, RoI pooling, NMS, box-aware augmentation and AP/mAP evaluation."""

__version__ = "0.1.0"

from .anchors import AnchorConfig, AnchorSet, base_anchors, tile
from .box_coding import BoxDelta, decode, encode
from .evaluation import EvalReport, GroundTruthObject, PRCurve, evaluate, match_detections, pr_curve
from .geometry import BBox, ImageSize, clip, iou
from .proposals import ProposalParams, ScoredBox, generate_proposals, nms
from .roi_pool import RoiPoolConfig, roi_pool

__all__ = [
    "AnchorConfig", "AnchorSet", "base_anchors", "tile",
    "BoxDelta", "decode", "encode",
    "EvalReport", "GroundTruthObject", "PRCurve", "evaluate", "match_detections", "pr_curve",
    "BBox", "ImageSize", "clip", "iou",
    "ProposalParams", "ScoredBox", "generate_proposals", "nms",
    "RoiPoolConfig", "roi_pool",
]
