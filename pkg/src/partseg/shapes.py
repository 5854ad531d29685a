"""Procedural low- and high-solidity shapes for fixtures and demos.

Polyomino-style shapes are unions of ``unit``-pixel blocks; arms are two
blocks thick. ``margin`` pads the canvas so contours never touch its border.
Proportions keep every arm short enough that its pieces are more solid than
the whole shape under the rotation-minimized solidity measure.
"""

from __future__ import annotations

import numpy as np

from .mask import BinaryMask

# (x, y, w, h) rectangles in block units
_BLOCKS = {
    "L": [(0, 0, 2, 6), (2, 4, 6, 2)],
    "T": [(0, 0, 6, 2), (2, 2, 2, 6)],
    "U": [(0, 0, 2, 4), (6, 0, 2, 4), (0, 4, 8, 2)],
    "plus": [(2, 0, 2, 6), (0, 2, 2, 2), (4, 2, 2, 2)],
    "S": [(0, 0, 6, 2), (0, 2, 2, 3), (0, 5, 6, 2), (4, 7, 2, 3), (0, 10, 6, 2)],
    "rect": [(0, 0, 6, 2)],
    "square": [(0, 0, 2, 2)],
}

LOW_SOLIDITY = ("L", "T", "U", "plus", "S", "wrench")


def block_shape(name: str, unit: int, margin: int = 2) -> BinaryMask:
    blocks = _BLOCKS[name]
    w = max(x + bw for x, _, bw, _ in blocks) * unit
    h = max(y + bh for _, y, _, bh in blocks) * unit
    grid = np.zeros((h + 2 * margin, w + 2 * margin), dtype=bool)
    for x, y, bw, bh in blocks:
        grid[margin + y * unit:margin + (y + bh) * unit,
             margin + x * unit:margin + (x + bw) * unit] = True
    return BinaryMask(grid)


def wrench(unit: int, margin: int = 2) -> BinaryMask:
    """Open-end wrench: a straight handle with a slotted round head at each end."""
    r = 3.0 * unit
    length = 10 * unit
    w = int(round(length + 2 * r)) + 2 * margin
    h = int(round(2 * r)) + 2 * margin
    ys, xs = np.mgrid[0:h, 0:w].astype(float)
    cy = (h - 1) / 2.0
    c_left, c_right = margin + r, w - 1 - margin - r
    grid = np.zeros((h, w), dtype=bool)
    grid |= (np.abs(ys - cy) <= 1.8 * unit) & (xs >= c_left) & (xs <= c_right)
    for cx, outward in ((c_left, -1), (c_right, 1)):
        head = (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r
        slot = (np.abs(ys - cy) <= unit) & (outward * (xs - cx) >= -0.4 * unit)
        grid |= head & ~slot
    return BinaryMask(grid)


def make_shape(name: str, unit: int, margin: int = 2) -> BinaryMask:
    if name == "wrench":
        return wrench(unit, margin)
    if name == "disk":
        d = 4 * unit + 2 * margin
        ys, xs = np.mgrid[0:d, 0:d]
        c = (d - 1) / 2.0
        return BinaryMask((xs - c) ** 2 + (ys - c) ** 2 <= (2 * unit) ** 2)
    return block_shape(name, unit, margin)


def shape_names() -> list[str]:
    return sorted(_BLOCKS) + ["disk", "wrench"]
