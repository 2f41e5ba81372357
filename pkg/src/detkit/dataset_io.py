"""JSON-lines annotation and detection files, plus the ``classes.json`` manifest.

Annotation line::

    {"image": "img_001.ppm", "width": 1200, "height": 1100,
     "objects": [{"label": "corn_leaf", "box": [x1, y1, x2, y2]}]}

Detection line::

    {"image": "img_001.ppm",
     "detections": [{"label": "weed", "score": 0.93, "box": [x1, y1, x2, y2]}]}

Files are UTF-8 with LF line endings; blank lines are ignored. Numbers are
written rounded to 6 decimal places, integral values without a fraction.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .evaluation import GroundTruthObject
from .geometry import BBox, ImageSize
from .proposals import ScoredBox


class DatasetFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None, path=None):
        self.line = line
        self.path = path
        where = []
        if line is not None:
            where.append(f"at line {line}")
        if path is not None:
            where.append(f"in {path}")
        super().__init__(" ".join([message] + where))


@dataclass
class AnnotatedImage:
    image: str
    size: ImageSize
    objects: list[GroundTruthObject] = field(default_factory=list)


@dataclass
class DetectionRecord:
    image: str
    detections: list[ScoredBox] = field(default_factory=list)


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_keys(obj, required: set, what: str):
    if not isinstance(obj, dict):
        raise ValueError(f"{what} must be a JSON object, got {type(obj).__name__}")
    missing = required - obj.keys()
    if missing:
        raise ValueError(f"{what} is missing field(s) {', '.join(sorted(missing))}")
    extra = obj.keys() - required
    if extra:
        raise ValueError(f"{what} has unknown field(s) {', '.join(sorted(extra))}")


def _parse_box(raw, size: ImageSize | None = None) -> BBox:
    if not isinstance(raw, list) or len(raw) != 4 or not all(_is_number(v) for v in raw):
        raise ValueError(f"box must be a list of 4 numbers, got {raw!r}")
    x1, y1, x2, y2 = (float(v) for v in raw)
    if not all(math.isfinite(v) for v in (x1, y1, x2, y2)):
        raise ValueError(f"box has non-finite coordinates {raw!r}")
    if x2 <= x1:
        raise ValueError(f"x2 <= x1 in box {raw!r}")
    if y2 <= y1:
        raise ValueError(f"y2 <= y1 in box {raw!r}")
    if size is not None and (x1 < 0 or y1 < 0 or x2 > size.width or y2 > size.height):
        raise ValueError(f"box {raw!r} lies outside the {size.width}x{size.height} image")
    return BBox(x1, y1, x2, y2)


def _parse_label(raw, classes) -> str:
    if not isinstance(raw, str) or not raw:
        raise ValueError(f"label must be a non-empty string, got {raw!r}")
    if classes is not None and raw not in classes:
        raise ValueError(f"label {raw!r} is not a declared class")
    return raw


def _lines(path) -> Iterable[tuple[int, dict]]:
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        try:
            yield lineno, json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(f"malformed JSON ({exc.msg})", lineno, path) from None


def read_annotations(path, classes: Sequence[str] | None = None) -> list[AnnotatedImage]:
    out = []
    seen = set()
    for lineno, rec in _lines(path):
        try:
            _check_keys(rec, {"image", "width", "height", "objects"}, "annotation record")
            image = rec["image"]
            if not isinstance(image, str) or not image:
                raise ValueError(f"image must be a non-empty string, got {image!r}")
            if image in seen:
                raise ValueError(f"duplicate image {image!r}")
            w, h = rec["width"], rec["height"]
            if not (isinstance(w, int) and isinstance(h, int)) or isinstance(w, bool) or isinstance(h, bool):
                raise ValueError(f"width/height must be integers, got {w!r}/{h!r}")
            size = ImageSize(w, h)
            if not isinstance(rec["objects"], list):
                raise ValueError("objects must be a list")
            objects = []
            for raw in rec["objects"]:
                _check_keys(raw, {"label", "box"}, "object")
                label = _parse_label(raw["label"], classes)
                objects.append(GroundTruthObject(_parse_box(raw["box"], size), label))
        except ValueError as exc:
            raise DatasetFormatError(str(exc), lineno, path) from None
        seen.add(image)
        out.append(AnnotatedImage(image, size, objects))
    return out


def read_detections(path, classes: Sequence[str] | None = None) -> list[DetectionRecord]:
    out = []
    for lineno, rec in _lines(path):
        try:
            _check_keys(rec, {"image", "detections"}, "detection record")
            image = rec["image"]
            if not isinstance(image, str) or not image:
                raise ValueError(f"image must be a non-empty string, got {image!r}")
            if not isinstance(rec["detections"], list):
                raise ValueError("detections must be a list")
            dets = []
            for raw in rec["detections"]:
                _check_keys(raw, {"label", "score", "box"}, "detection")
                label = _parse_label(raw["label"], classes)
                score = raw["score"]
                if not _is_number(score) or not 0.0 <= score <= 1.0:
                    raise ValueError(f"score must be a number in [0, 1], got {score!r}")
                dets.append(ScoredBox(_parse_box(raw["box"]), float(score), label))
        except ValueError as exc:
            raise DatasetFormatError(str(exc), lineno, path) from None
        out.append(DetectionRecord(image, dets))
    return out


def format_number(x: float):
    r = round(float(x), 6)
    if r == 0:
        return 0
    return int(r) if r.is_integer() else r


def _box_json(b: BBox) -> list:
    return [format_number(v) for v in b.as_tuple()]


def annotation_line(rec: AnnotatedImage) -> str:
    return json.dumps({
        "image": rec.image,
        "width": rec.size.width,
        "height": rec.size.height,
        "objects": [{"label": o.label, "box": _box_json(o.box)} for o in rec.objects],
    }, ensure_ascii=False)


def detection_line(rec: DetectionRecord) -> str:
    return json.dumps({
        "image": rec.image,
        "detections": [
            {"label": d.label, "score": format_number(d.score), "box": _box_json(d.box)}
            for d in rec.detections
        ],
    }, ensure_ascii=False)


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_annotations(records: Sequence[AnnotatedImage], path) -> None:
    atomic_write_text(path, "".join(annotation_line(r) + "\n" for r in records))


def write_detections(records: Sequence[DetectionRecord], path) -> None:
    atomic_write_text(path, "".join(detection_line(r) + "\n" for r in records))


def read_classes(path) -> list[str]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"malformed class manifest ({exc.msg})", exc.lineno, path) from None
    if not isinstance(data, list) or not data or not all(isinstance(c, str) and c for c in data):
        raise DatasetFormatError("class manifest must be a non-empty JSON list of strings", path=path)
    if len(set(data)) != len(data):
        raise DatasetFormatError("class manifest lists a class twice", path=path)
    return data


def write_classes(classes: Sequence[str], path) -> None:
    atomic_write_text(path, json.dumps(list(classes), ensure_ascii=False) + "\n")


def ground_truth_by_image(records: Iterable[AnnotatedImage]) -> dict[str, list[GroundTruthObject]]:
    return {r.image: list(r.objects) for r in records}


def detections_by_image(records: Iterable[DetectionRecord]) -> dict[str, list[ScoredBox]]:
    """Group detections per image; repeated image lines are concatenated."""
    out: dict[str, list[ScoredBox]] = {}
    for r in records:
        out.setdefault(r.image, []).extend(r.detections)
    return out
