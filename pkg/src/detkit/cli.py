"""Command-line entry point: ``detkit {eval,augment,anchors,propose,render,validate}``.

Exit codes: 0 success, 1 validation failure (bad flags, bad data, shape
mismatch), 2 I/O failure. ``DETKIT_THREADS`` sets the default worker count
for commands that process many images.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .anchors import AnchorConfig, tile
from .augment import parse_ops, pipeline, resize_to_limit
from .dataset_io import (
    AnnotatedImage,
    DetectionRecord,
    atomic_write_text,
    detection_line,
    detections_by_image,
    ground_truth_by_image,
    read_annotations,
    read_classes,
    read_detections,
    write_annotations,
    write_detections,
)
from .evaluation import evaluate
from .geometry import ImageSize
from .overlay import render_svg
from .proposals import ProposalParams, generate_proposals
from .raster import RasterFormatError, pnm_size, read_raster, write_raster
from .rpn import FeatureMap, RpnWeights, init_rpn, rpn_forward
from .tensor_io import load_tensors

EXIT_OK, EXIT_VALIDATION, EXIT_IO = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _size(text: str) -> ImageSize:
    try:
        return ImageSize.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get("DETKIT_THREADS", "1")))
    except ValueError:
        return 1


def _add_anchor_flags(p):
    p.add_argument("--base-size", type=float, default=16.0)
    p.add_argument("--scales", type=_floats, default=(8.0, 16.0, 32.0), help="comma list")
    p.add_argument("--ratios", type=_floats, default=(0.5, 1.0, 2.0), help="comma list of h/w")
    p.add_argument("--stride", type=float, default=16.0)


def _anchor_config(args) -> AnchorConfig:
    return AnchorConfig(args.base_size, args.scales, args.ratios, args.stride)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="detkit", description="Region-based detection numerics toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("eval", help="compute per-class AP and mAP")
    p.add_argument("--gt", required=True, help="ground-truth annotations (JSON-lines)")
    p.add_argument("--det", required=True, help="detections (JSON-lines)")
    p.add_argument("--classes", help="classes.json; defaults to the sorted ground-truth labels")
    p.add_argument("--iou", type=float, default=0.5, help="IoU must exceed this to match")
    p.add_argument("--ap-rule", choices=("envelope", "11point"), default="envelope")
    p.add_argument("--report", help="write the report as JSON here")
    p.add_argument("--pr-dir", help="write <class>.csv PR curves (and figures) here")
    p.add_argument("--no-plots", action="store_true", help="skip PR figures in --pr-dir")

    p = sub.add_parser("augment", help="augment images and their boxes")
    p.add_argument("--in", dest="ann", required=True, help="annotations (JSON-lines)")
    p.add_argument("--img-dir", required=True, help="directory holding the PPM/PGM images")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--ops", default="", help="e.g. rot90r,crop:0.8,zoom:1.2,elastic:34:4")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resize-limit", type=_size, default=ImageSize(1200, 1100))
    p.add_argument("--exact-resize", action="store_true", help="resize to the limit exactly")
    p.add_argument("--min-visibility", type=float, default=0.25)
    p.add_argument("--classes", help="classes.json used to validate labels")
    p.add_argument("--threads", type=int, default=_default_threads())

    p = sub.add_parser("anchors", help="dump the tiled anchor set as JSON-lines")
    p.add_argument("--grid", type=_size, default=ImageSize(1, 1), help="feature grid WIDTHxHEIGHT")
    _add_anchor_flags(p)
    p.add_argument("--out", help="output file (default stdout)")

    p = sub.add_parser("propose", help="run the RPN over a feature map and emit proposals")
    p.add_argument("--features", required=True, help="tensor manifest holding a 'features' (C,H,W) tensor")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--weights", help="tensor manifest with rpn_conv/rpn_cls/rpn_reg tensors")
    src.add_argument("--seed", type=int, help="use seeded random weights")
    p.add_argument("--mid-channels", type=int, help="shared conv width for --seed (default: input channels)")
    p.add_argument("--image-size", type=_size, help="image WIDTHxHEIGHT (default: grid * stride)")
    _add_anchor_flags(p)
    p.add_argument("--pre-nms", type=int, default=6000)
    p.add_argument("--post-nms", type=int, default=300)
    p.add_argument("--nms-iou", type=float, default=0.7)
    p.add_argument("--min-size", type=float, default=2.0)
    p.add_argument("--image-id", default="image")
    p.add_argument("--label", default="object")
    p.add_argument("--out", help="output file (default stdout)")

    p = sub.add_parser("render", help="write an SVG overlay of boxes on an image")
    p.add_argument("--image", required=True, help="image path referenced by the overlay")
    p.add_argument("--boxes", help="annotation or detection JSON-lines")
    p.add_argument("--image-id", help="record to draw (default: the image file name)")
    p.add_argument("--size", type=_size, help="image WIDTHxHEIGHT when the image is not PPM/PGM")
    p.add_argument("--min-score", type=float, default=0.0)
    p.add_argument("--classes", help="classes.json fixing the colour order")
    p.add_argument("--out", required=True)

    p = sub.add_parser("validate", help="check an annotation file (and optionally its images)")
    p.add_argument("--ann", required=True)
    p.add_argument("--classes")
    p.add_argument("--img-dir", help="also check that image headers match the declared sizes")
    return parser


def _emit(text: str, out):
    if out:
        atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


def cmd_eval(args) -> int:
    classes = read_classes(args.classes) if args.classes else None
    ann = read_annotations(args.gt, classes)
    dets = read_detections(args.det, classes)
    if classes is None:
        classes = sorted({o.label for r in ann for o in r.objects})
        if not classes:
            raise ValueError("no classes: pass --classes or provide labelled ground truth")
    report = evaluate(ground_truth_by_image(ann), detections_by_image(dets), classes,
                      args.iou, args.ap_rule)
    if args.report:
        atomic_write_text(args.report, json.dumps(report.to_dict(), indent=2) + "\n")
    if args.pr_dir:
        pr_dir = Path(args.pr_dir)
        pr_dir.mkdir(parents=True, exist_ok=True)
        for label, res in report.classes.items():
            atomic_write_text(pr_dir / f"{label}.csv", res.curve.to_csv())
        if not args.no_plots:
            from .plotting import plot_ap_summary, plot_pr_curve

            for label, res in report.classes.items():
                plot_pr_curve(res.curve, pr_dir / f"{label}.png")
            plot_ap_summary(report.ap, report.mean_ap, pr_dir / "ap_summary.png")
    for label, res in report.classes.items():
        note = " (no ground truth, excluded)" if label in report.excluded else ""
        print(f"AP {label}: {res.ap:.4f}{note}")
    print(f"mAP: {report.mean_ap:.4f}")
    return EXIT_OK


def _augment_one(index, rec: AnnotatedImage, args, ops):
    img = read_raster(Path(args.img_dir) / rec.image)
    if (img.width, img.height) != (rec.size.width, rec.size.height):
        raise ValueError(
            f"{rec.image}: annotation says {rec.size.width}x{rec.size.height}, "
            f"image is {img.width}x{img.height}"
        )
    limit = args.resize_limit
    img, objects = resize_to_limit(img, rec.objects, limit.width, limit.height, args.exact_resize)
    # per-image stream: serial and threaded runs draw identical parameters
    img, objects = pipeline(img, objects, ops, seed=[args.seed, index],
                            min_visibility=args.min_visibility)
    out_path = Path(args.out_dir) / rec.image
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_raster(img, out_path)
    return AnnotatedImage(rec.image, ImageSize(img.width, img.height), objects)


def cmd_augment(args) -> int:
    ops = parse_ops(args.ops)
    classes = read_classes(args.classes) if args.classes else None
    records = read_annotations(args.ann, classes)
    Path(args.out_dir).mkdir(parents=True, exist_ok=True)
    jobs = list(enumerate(records))
    if args.threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(args.threads) as pool:
            out = list(pool.map(lambda j: _augment_one(j[0], j[1], args, ops), jobs))
    else:
        out = [_augment_one(i, rec, args, ops) for i, rec in jobs]
    write_annotations(out, Path(args.out_dir) / "annotations.jsonl")
    print(f"augmented {len(out)} image(s) into {args.out_dir}")
    return EXIT_OK


def cmd_anchors(args) -> int:
    cfg = _anchor_config(args)
    anchors = tile(cfg, args.grid.height, args.grid.width)
    lines = []
    for n, row in enumerate(anchors.boxes):
        pos, a = divmod(n, anchors.k)
        i, j = divmod(pos, anchors.width)
        lines.append(json.dumps({"index": n, "row": i, "col": j, "anchor": a,
                                 "box": [float(v) for v in row]}))
    _emit("".join(line + "\n" for line in lines), args.out)
    return EXIT_OK


def cmd_propose(args) -> int:
    tensors = load_tensors(args.features)
    if "features" not in tensors:
        raise ValueError(f"{args.features} has no 'features' tensor")
    feats = FeatureMap(tensors["features"])
    cfg = _anchor_config(args)
    if args.weights:
        weights = RpnWeights.from_tensors(load_tensors(args.weights))
    else:
        weights = init_rpn(feats.channels, cfg.k, args.mid_channels, seed=args.seed)
    if weights.shared.in_channels != feats.channels:
        raise ValueError(
            f"weights expect {weights.shared.in_channels} feature channels, "
            f"feature map has {feats.channels}"
        )
    out = rpn_forward(feats, weights, k=cfg.k)
    anchors = tile(cfg, feats.height, feats.width)
    size = args.image_size or ImageSize(int(round(feats.width * cfg.stride)),
                                        int(round(feats.height * cfg.stride)))
    params = ProposalParams(args.pre_nms, args.post_nms, args.nms_iou, args.min_size)
    props = generate_proposals(out, anchors, size, params, label=args.label)
    rec = DetectionRecord(args.image_id, props)
    if args.out:
        write_detections([rec], args.out)
    else:
        print(detection_line(rec))
    return EXIT_OK


def _load_boxes(path, image_id):
    """Items for one image from either an annotation or a detection file."""
    first = None
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                first = json.loads(line)
                break
    if first is None:
        return []
    if isinstance(first, dict) and "detections" in first:
        recs = detections_by_image(read_detections(path))
        return [(d.box, d.label, d.score) for d in recs.get(image_id, [])]
    recs = ground_truth_by_image(read_annotations(path))
    return [(o.box, o.label, None) for o in recs.get(image_id, [])]


def cmd_render(args) -> int:
    if args.size:
        width, height = args.size.width, args.size.height
    else:
        try:
            width, height = pnm_size(args.image)
        except RasterFormatError as exc:
            raise ValueError(f"{args.image}: {exc}; pass --size for non-PPM/PGM images") from None
    image_id = args.image_id or Path(args.image).name
    items = _load_boxes(args.boxes, image_id) if args.boxes else []
    items = [it for it in items if it[2] is None or it[2] >= args.min_score]
    classes = read_classes(args.classes) if args.classes else None
    href = os.path.relpath(Path(args.image).resolve(), Path(args.out).resolve().parent)
    atomic_write_text(args.out, render_svg(href, width, height, items, classes))
    print(f"wrote {args.out} with {len(items)} box(es)")
    return EXIT_OK


def cmd_validate(args) -> int:
    classes = read_classes(args.classes) if args.classes else None
    records = read_annotations(args.ann, classes)
    problems = []
    if args.img_dir:
        for rec in records:
            w, h = pnm_size(Path(args.img_dir) / rec.image)
            if (w, h) != (rec.size.width, rec.size.height):
                problems.append(f"{rec.image}: declared {rec.size.width}x{rec.size.height}, file is {w}x{h}")
    for msg in problems:
        print(msg, file=sys.stderr)
    counts = {}
    for rec in records:
        for o in rec.objects:
            counts[o.label] = counts.get(o.label, 0) + 1
    print(f"{len(records)} image(s), {sum(counts.values())} object(s)")
    for label in sorted(counts):
        print(f"  {label}: {counts[label]}")
    return EXIT_VALIDATION if problems else EXIT_OK


COMMANDS = {
    "eval": cmd_eval,
    "augment": cmd_augment,
    "anchors": cmd_anchors,
    "propose": cmd_propose,
    "render": cmd_render,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the exit-time flush
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK
    except OSError as exc:
        print(f"detkit {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, OverflowError, json.JSONDecodeError) as exc:
        print(f"detkit {args.command}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
