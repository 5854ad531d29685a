"""Static color-coded renderings of scenes, part sets and assembled instances.

A rendering is a list of filled mask layers plus optional line segments,
drawn either into a PNG (Pillow) or an SVG document.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .mask import BinaryMask, boundary_pixels

BACKGROUND = (255, 255, 255)
GRAY = (150, 150, 150)


def palette(k: int) -> tuple:
    """Distinct, deterministic color number ``k`` (golden-angle hues)."""
    h = (0.08 + 0.618033988749895 * k) % 1.0
    r, g, b = colorsys.hsv_to_rgb(h, 0.55 + 0.3 * (k % 2), 0.92 - 0.2 * ((k // 2) % 2))
    return (int(r * 255), int(g * 255), int(b * 255))


def _darker(c, f=0.55):
    return tuple(int(x * f) for x in c)


@dataclass
class Layer:
    mask: BinaryMask
    color: tuple
    hatch: bool = False
    outline: bool = True


@dataclass
class Drawing:
    width: int
    height: int
    layers: list = field(default_factory=list)
    lines: list = field(default_factory=list)  # ((x0, y0), (x1, y1), color)


def scene_drawing(scene) -> Drawing:
    """Visible part masks, colored per instance and outlined per part."""
    d = Drawing(scene.width, scene.height)
    for k, inst in enumerate(scene.instances):
        color = palette(k)
        for part in inst.parts:
            if not part.occluded:
                d.layers.append(Layer(part.visible_mask, color))
    return d


def parts_drawing(parts, cuts=()) -> Drawing:
    """Full part masks in distinct colors, with the cut chords drawn on top."""
    plist = list(parts)
    m = plist[0].full_mask
    d = Drawing(m.width, m.height)
    for j, p in enumerate(plist):
        d.layers.append(Layer(p.full_mask, palette(j)))
    for a, b in cuts:
        d.lines.append(((float(a[0]), float(a[1])), (float(b[0]), float(b[1])), (0, 0, 0)))
    return d


def instances_drawing(instances, preds=None, discarded=(), width=None, height=None) -> Drawing:
    """Assembled instances in distinct colors; discarded parts hatched gray.

    With ``preds`` each member part is outlined separately; otherwise the
    merged mask is drawn as one region.
    """
    if width is None:
        ref = instances[0].merged_mask if instances else preds[discarded[0]].mask
        width, height = ref.width, ref.height
    d = Drawing(width, height)
    for k, inst in enumerate(instances):
        if preds is None:
            d.layers.append(Layer(inst.merged_mask, palette(k)))
        else:
            for j in inst.part_indices:
                d.layers.append(Layer(preds[j].mask, palette(k)))
    for j in discarded:
        if preds is not None:
            d.layers.append(Layer(preds[j].mask, GRAY, hatch=True))
    return d


def to_image(d: Drawing) -> Image.Image:
    rgb = np.empty((d.height, d.width, 3), dtype=np.uint8)
    rgb[:] = BACKGROUND
    for layer in d.layers:
        m = layer.mask
        if m.is_empty:
            continue
        xs, ys = m.coords()
        color = np.array(layer.color, dtype=np.uint8)
        if layer.hatch:
            stripe = ((xs + ys) % 6) < 3
            rgb[ys, xs] = np.where(stripe[:, None], color, np.array(BACKGROUND, dtype=np.uint8))
        else:
            rgb[ys, xs] = color
        if layer.outline:
            edge = boundary_pixels(m).astype(np.int64)
            rgb[edge[:, 1], edge[:, 0]] = _darker(layer.color)
    img = Image.fromarray(rgb, "RGB")
    if d.lines:
        draw = ImageDraw.Draw(img)
        for a, b, color in d.lines:
            draw.line([a, b], fill=color, width=1)
    return img


def _runs_path(m: BinaryMask) -> str:
    """SVG path covering the mask with one rectangle per horizontal run."""
    parts = []
    for r, row in enumerate(m.local):
        padded = np.concatenate([[False], row, [False]])
        edges = np.flatnonzero(padded[1:] != padded[:-1])
        for s, e in zip(edges[::2], edges[1::2]):
            parts.append(f"M{m.x0 + s} {m.y0 + r}h{e - s}v1h{s - e}z")
    return "".join(parts)


def _hex(c) -> str:
    return "#%02x%02x%02x" % tuple(c)


def to_svg(d: Drawing) -> str:
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{d.width}" '
           f'height="{d.height}" viewBox="0 0 {d.width} {d.height}" '
           'shape-rendering="crispEdges">',
           '<defs><pattern id="hatch" width="6" height="6" patternUnits="userSpaceOnUse" '
           'patternTransform="rotate(45)"><rect width="3" height="6" fill="%s"/></pattern></defs>'
           % _hex(GRAY),
           f'<rect width="{d.width}" height="{d.height}" fill="{_hex(BACKGROUND)}"/>']
    for layer in d.layers:
        if layer.mask.is_empty:
            continue
        fill = "url(#hatch)" if layer.hatch else _hex(layer.color)
        out.append(f'<path d="{_runs_path(layer.mask)}" fill="{fill}"/>')
        if layer.outline:
            edge = boundary_pixels(layer.mask).astype(np.int64)
            path = "".join(f"M{x} {y}h1v1h-1z" for x, y in edge.tolist())
            out.append(f'<path d="{path}" fill="{_hex(_darker(layer.color))}"/>')
    for (x0, y0), (x1, y1), color in d.lines:
        # pixel centers sit at half-integer SVG coordinates
        out.append(f'<line x1="{x0 + 0.5}" y1="{y0 + 0.5}" x2="{x1 + 0.5}" y2="{y1 + 0.5}" '
                   f'stroke="{_hex(color)}" stroke-width="1"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def save(d: Drawing, path):
    """Write PNG or SVG, chosen by the file suffix."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".svg":
        path.write_text(to_svg(d))
    elif suffix == ".png":
        to_image(d).save(path, format="PNG", optimize=False)
    else:
        raise ValueError(f"unsupported image format {suffix!r}; use .png or .svg")
