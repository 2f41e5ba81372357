"""Detection matching, precision/recall curves, AP and mAP.

A detection is a true positive when its IoU with a same-image, same-class
ground-truth box is strictly greater than the threshold (0.5 by default)
and that ground truth has not already been claimed by a higher-scoring
detection.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .geometry import BBox, iou_matrix
from .proposals import ScoredBox

AP_RULES = ("envelope", "11point")


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class GroundTruthObject:
    box: BBox
    label: str


@dataclass(frozen=True)
class PRCurve:
    label: str | None
    recall: tuple[float, ...]
    precision: tuple[float, ...]
    ap: float
    warnings: tuple[str, ...] = ()

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.recall, self.precision))

    def to_csv(self) -> str:
        lines = ["recall,precision"]
        lines += [f"{r:.6f},{p:.6f}" for r, p in zip(self.recall, self.precision)]
        return "\n".join(lines) + "\n"


@dataclass
class ClassResult:
    label: str
    ap: float
    num_gt: int
    num_det: int
    tp: int
    fp: int
    curve: PRCurve
    warnings: list[str] = field(default_factory=list)


@dataclass
class EvalReport:
    classes: dict[str, ClassResult]
    mean_ap: float
    iou_threshold: float
    ap_rule: str
    excluded: list[str] = field(default_factory=list)

    @property
    def ap(self) -> dict[str, float]:
        return {label: res.ap for label, res in self.classes.items()}

    def to_dict(self) -> dict:
        return {
            "mAP": self.mean_ap,
            "iou_threshold": self.iou_threshold,
            "iou_rule": "strictly greater than threshold",
            "ap_rule": self.ap_rule,
            "averaged_over": [c for c in self.classes if c not in self.excluded],
            "excluded_classes": list(self.excluded),
            "classes": {
                label: {
                    "ap": res.ap,
                    "num_gt": res.num_gt,
                    "num_det": res.num_det,
                    "tp": res.tp,
                    "fp": res.fp,
                    "warnings": list(res.warnings),
                }
                for label, res in self.classes.items()
            },
        }


def match_detections(gts: Mapping[str, Sequence[GroundTruthObject]],
                     dets: Mapping[str, Sequence[ScoredBox]],
                     label: str, iou_threshold: float = 0.5) -> list[bool]:
    """TP/FP flags for one class, ordered by descending detection score.

    Detections are ranked globally (ties keep image order, then list order).
    Each one is compared with the still-unclaimed ground truth of its image
    and class; the highest-IoU candidate is claimed when the IoU exceeds the
    threshold.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise EvaluationError(f"IoU threshold must lie in (0, 1), got {iou_threshold}")
    unknown = sorted(set(dets) - set(gts))
    if unknown:
        raise EvaluationError(f"detections reference unknown images: {', '.join(unknown)}")

    gt_boxes = {}
    claimed = {}
    for image, objs in gts.items():
        boxes = [o.box.as_tuple() for o in objs if o.label == label]
        gt_boxes[image] = np.array(boxes, dtype=np.float64).reshape(-1, 4)
        claimed[image] = np.zeros(len(boxes), dtype=bool)

    ranked = []
    for image, boxes in dets.items():
        for d in boxes:
            if d.label == label:
                ranked.append((d.score, image, d.box))
    # stable sort on score only
    ranked.sort(key=lambda item: -item[0])

    flags = []
    for _, image, box in ranked:
        cand = gt_boxes[image]
        free = ~claimed[image]
        if not free.any():
            flags.append(False)
            continue
        ious = iou_matrix(np.array([box.as_tuple()]), cand)[0]
        ious[~free] = -1.0
        best = int(np.argmax(ious))
        if ious[best] > iou_threshold:
            claimed[image][best] = True
            flags.append(True)
        else:
            flags.append(False)
    return flags


def envelope_ap(recall: np.ndarray, precision: np.ndarray) -> float:
    """Area under the monotone (right-to-left max) precision envelope."""
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def eleven_point_ap(recall: np.ndarray, precision: np.ndarray) -> float:
    total = 0.0
    for t in np.linspace(0.0, 1.0, 11):
        mask = recall >= t
        total += float(precision[mask].max()) if mask.any() else 0.0
    return total / 11.0


def pr_curve(flags: Sequence[bool], total_gt: int, label: str | None = None,
             ap_rule: str = "envelope") -> PRCurve:
    if total_gt < 0:
        raise ValueError(f"total_gt must be >= 0, got {total_gt}")
    if ap_rule not in AP_RULES:
        raise ValueError(f"unknown AP rule {ap_rule!r}, expected one of {AP_RULES}")
    flags = np.asarray(flags, dtype=bool)
    tp = np.cumsum(flags)
    fp = np.cumsum(~flags)
    precision = tp / np.maximum(tp + fp, 1)
    if total_gt == 0:
        recall = np.zeros(flags.size)
        warn = "no ground truth objects; AP defined as 0"
        return PRCurve(label, tuple(recall.tolist()), tuple(precision.tolist()), 0.0, (warn,))
    recall = tp / total_gt
    if flags.size == 0:
        ap = 0.0
    elif ap_rule == "envelope":
        ap = envelope_ap(recall, precision)
    else:
        ap = eleven_point_ap(recall, precision)
    ap = min(max(ap, 0.0), 1.0)
    return PRCurve(label, tuple(recall.tolist()), tuple(precision.tolist()), ap)


def evaluate(gts: Mapping[str, Sequence[GroundTruthObject]],
             dets: Mapping[str, Sequence[ScoredBox]],
             classes: Sequence[str], iou_threshold: float = 0.5,
             ap_rule: str = "envelope") -> EvalReport:
    """Per-class AP and their unweighted mean.

    Classes with no ground truth objects are reported but left out of the
    mean (listed in ``EvalReport.excluded``).
    """
    classes = list(classes)
    if not classes:
        raise EvaluationError("class list is empty")
    known = set(classes)
    for image, boxes in dets.items():
        for d in boxes:
            if d.label not in known:
                raise EvaluationError(f"detection in image {image!r} has unknown label {d.label!r}")
    for image, objs in gts.items():
        for o in objs:
            if o.label not in known:
                raise EvaluationError(f"ground truth in image {image!r} has unknown label {o.label!r}")

    results = {}
    excluded = []
    for label in classes:
        flags = match_detections(gts, dets, label, iou_threshold)
        n_gt = sum(1 for objs in gts.values() for o in objs if o.label == label)
        curve = pr_curve(flags, n_gt, label, ap_rule)
        res = ClassResult(
            label=label, ap=curve.ap, num_gt=n_gt, num_det=len(flags),
            tp=int(sum(flags)), fp=len(flags) - int(sum(flags)), curve=curve,
            warnings=list(curve.warnings),
        )
        if n_gt == 0:
            excluded.append(label)
            res.warnings.append("excluded from mAP")
        results[label] = res

    counted = [results[c].ap for c in classes if c not in excluded]
    mean_ap = float(np.mean(counted)) if counted else 0.0
    return EvalReport(results, mean_ap, iou_threshold, ap_rule, excluded)
