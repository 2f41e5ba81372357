"""SVG overlays of boxes on top of an image reference."""

from __future__ import annotations

from typing import Sequence
from xml.sax.saxutils import escape, quoteattr

PALETTE = ("#e41a1c", "#377eb8", "#4daf4a", "#984ea3", "#ff7f00", "#a65628")


def render_svg(image_href: str, width: int, height: int, items: Sequence[tuple],
               classes: Sequence[str] | None = None) -> str:
    """Build an SVG document.

    ``items`` holds ``(box, label, score)`` triples; ``score`` may be ``None``
    for ground truth. Colours follow ``classes`` order when given.
    """
    order = list(classes or [])
    for _, label, _ in items:
        if label not in order:
            order.append(label)
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" xmlns:xlink="http://www.w3.org/1999/xlink" '
        f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'  <image x="0" y="0" width="{width}" height="{height}" '
        f'href={quoteattr(image_href)} xlink:href={quoteattr(image_href)}/>',
    ]
    for box, label, score in items:
        color = PALETTE[order.index(label) % len(PALETTE)] if label is not None else PALETTE[0]
        text = "" if label is None else str(label)
        if score is not None:
            text = f"{text} {score:.2f}".strip()
        lines.append(
            f'  <rect x="{box.x1:g}" y="{box.y1:g}" width="{box.width:g}" height="{box.height:g}" '
            f'fill="none" stroke="{color}" stroke-width="2"/>'
        )
        if text:
            lines.append(
                f'  <text x="{box.x1:g}" y="{max(box.y1 - 3, 10):g}" fill="{color}" '
                f'font-family="sans-serif" font-size="12">{escape(text)}</text>'
            )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
