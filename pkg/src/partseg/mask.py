"""Binary raster masks on a fixed canvas.

A :class:`BinaryMask` knows its canvas size but stores only the tight
bounding-box crop of its foreground, so per-part work in cluttered scenes
scales with the part, not with the canvas.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch, EmptyMask, LengthMismatch
from .geom import EIGHT, Point2, RotatedBox, convex_hull, min_area_rotated_box


class BinaryMask:
    """Foreground set of a ``width`` x ``height`` canvas.

    ``local`` holds the crop ``[y0:y0+h, x0:x0+w]`` of the full grid and is
    always tight around the foreground (empty masks have a 0x0 crop at the
    origin). Instances are immutable.
    """

    __slots__ = ("width", "height", "x0", "y0", "local", "_count")

    def __init__(self, bits):
        bits = np.asarray(bits, dtype=bool)
        if bits.ndim != 2 or bits.shape[0] < 1 or bits.shape[1] < 1:
            raise ValueError("mask bits must be a non-empty 2D grid")
        self._set(bits.shape[1], bits.shape[0], 0, 0, bits)

    @classmethod
    def from_local(cls, width: int, height: int, x0: int, y0: int, local) -> "BinaryMask":
        """Build from a crop placed at ``(x0, y0)``; parts off-canvas are clipped."""
        obj = cls.__new__(cls)
        local = np.asarray(local, dtype=bool)
        h, w = local.shape
        cx0, cy0 = max(x0, 0), max(y0, 0)
        cx1, cy1 = min(x0 + w, width), min(y0 + h, height)
        if cx1 <= cx0 or cy1 <= cy0:
            local = np.zeros((0, 0), dtype=bool)
            cx0 = cy0 = 0
        else:
            local = local[cy0 - y0:cy1 - y0, cx0 - x0:cx1 - x0]
        obj._set(int(width), int(height), cx0, cy0, local)
        return obj

    @classmethod
    def empty(cls, width: int, height: int) -> "BinaryMask":
        return cls.from_local(width, height, 0, 0, np.zeros((0, 0), dtype=bool))

    @classmethod
    def from_coords(cls, width: int, height: int, xs, ys) -> "BinaryMask":
        xs = np.asarray(xs, dtype=np.int64)
        ys = np.asarray(ys, dtype=np.int64)
        keep = (xs >= 0) & (xs < width) & (ys >= 0) & (ys < height)
        xs, ys = xs[keep], ys[keep]
        if len(xs) == 0:
            return cls.empty(width, height)
        x0, y0 = int(xs.min()), int(ys.min())
        local = np.zeros((int(ys.max()) - y0 + 1, int(xs.max()) - x0 + 1), dtype=bool)
        local[ys - y0, xs - x0] = True
        return cls.from_local(width, height, x0, y0, local)

    def _set(self, width, height, x0, y0, local):
        if width < 1 or height < 1:
            raise ValueError("canvas dimensions must be positive")
        rows = np.flatnonzero(local.any(axis=1)) if local.size else np.empty(0, int)
        if len(rows) == 0:
            local = np.zeros((0, 0), dtype=bool)
            x0 = y0 = 0
        else:
            cols = np.flatnonzero(local.any(axis=0))
            local = local[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1].copy()
            x0 += int(cols[0])
            y0 += int(rows[0])
        local.flags.writeable = False
        self.width, self.height = int(width), int(height)
        self.x0, self.y0 = int(x0), int(y0)
        self.local = local
        self._count = int(local.sum())

    # -- basic accessors -------------------------------------------------
    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def count(self) -> int:
        return self._count

    def __len__(self) -> int:
        return self._count

    @property
    def is_empty(self) -> bool:
        return self._count == 0

    @property
    def bbox(self) -> tuple[int, int, int, int]:
        """``(x0, y0, x1, y1)`` with exclusive upper bounds."""
        h, w = self.local.shape
        return (self.x0, self.y0, self.x0 + w, self.y0 + h)

    @property
    def bits(self) -> np.ndarray:
        full = np.zeros((self.height, self.width), dtype=bool)
        h, w = self.local.shape
        full[self.y0:self.y0 + h, self.x0:self.x0 + w] = self.local
        return full

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        ys, xs = np.nonzero(self.local)
        return xs + self.x0, ys + self.y0

    def window(self, x0: int, y0: int, x1: int, y1: int) -> np.ndarray:
        """Copy of the full grid restricted to ``[y0:y1, x0:x1]`` (may exceed canvas)."""
        out = np.zeros((y1 - y0, x1 - x0), dtype=bool)
        if self._count:
            bx0, by0, bx1, by1 = self.bbox
            ix0, iy0 = max(x0, bx0), max(y0, by0)
            ix1, iy1 = min(x1, bx1), min(y1, by1)
            if ix1 > ix0 and iy1 > iy0:
                out[iy0 - y0:iy1 - y0, ix0 - x0:ix1 - x0] = \
                    self.local[iy0 - by0:iy1 - by0, ix0 - bx0:ix1 - bx0]
        return out

    def values_at(self, xs, ys) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.int64) - self.x0
        ys = np.asarray(ys, dtype=np.int64) - self.y0
        h, w = self.local.shape
        inside = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
        out = np.zeros(xs.shape, dtype=bool)
        out[inside] = self.local[ys[inside], xs[inside]]
        return out

    def translate(self, dx: int, dy: int) -> "BinaryMask":
        return BinaryMask.from_local(self.width, self.height, self.x0 + int(dx),
                                     self.y0 + int(dy), self.local)

    def with_local(self, x0: int, y0: int, local) -> "BinaryMask":
        return BinaryMask.from_local(self.width, self.height, x0, y0, local)

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return (self.shape == other.shape and self.bbox == other.bbox
                and np.array_equal(self.local, other.local))

    __hash__ = None

    def __repr__(self):
        return (f"BinaryMask({self.width}x{self.height}, count={self._count}, "
                f"bbox={self.bbox})")


def _check_same(a: BinaryMask, b: BinaryMask):
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")


def _union_box(a: BinaryMask, b: BinaryMask):
    boxes = [m.bbox for m in (a, b) if m.count]
    if not boxes:
        return None
    return (min(t[0] for t in boxes), min(t[1] for t in boxes),
            max(t[2] for t in boxes), max(t[3] for t in boxes))


def _binary_op(a: BinaryMask, b: BinaryMask, op) -> BinaryMask:
    _check_same(a, b)
    box = _union_box(a, b)
    if box is None:
        return BinaryMask.empty(a.width, a.height)
    x0, y0, x1, y1 = box
    return a.with_local(x0, y0, op(a.window(x0, y0, x1, y1), b.window(x0, y0, x1, y1)))


def intersect(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    _check_same(a, b)
    ax0, ay0, ax1, ay1 = a.bbox
    bx0, by0, bx1, by1 = b.bbox
    x0, y0, x1, y1 = max(ax0, bx0), max(ay0, by0), min(ax1, bx1), min(ay1, by1)
    if a.is_empty or b.is_empty or x1 <= x0 or y1 <= y0:
        return BinaryMask.empty(a.width, a.height)
    return a.with_local(x0, y0, a.window(x0, y0, x1, y1) & b.window(x0, y0, x1, y1))


def union(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    return _binary_op(a, b, np.logical_or)


def subtract(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    _check_same(a, b)
    if a.is_empty:
        return a
    x0, y0, x1, y1 = a.bbox
    return a.with_local(x0, y0, a.local & ~b.window(x0, y0, x1, y1))


def union_all(masks: Iterable[BinaryMask], width: int | None = None,
              height: int | None = None) -> BinaryMask:
    masks = list(masks)
    if not masks:
        if width is None or height is None:
            raise ValueError("canvas size needed for an empty union")
        return BinaryMask.empty(width, height)
    w, h = masks[0].width, masks[0].height
    for m in masks:
        _check_same(masks[0], m)
    nonempty = [m for m in masks if m.count]
    if not nonempty:
        return BinaryMask.empty(w, h)
    x0 = min(m.bbox[0] for m in nonempty)
    y0 = min(m.bbox[1] for m in nonempty)
    x1 = max(m.bbox[2] for m in nonempty)
    y1 = max(m.bbox[3] for m in nonempty)
    acc = np.zeros((y1 - y0, x1 - x0), dtype=bool)
    for m in nonempty:
        mx0, my0, mx1, my1 = m.bbox
        acc[my0 - y0:my1 - y0, mx0 - x0:mx1 - x0] |= m.local
    return BinaryMask.from_local(w, h, x0, y0, acc)


def intersection_count(a: BinaryMask, b: BinaryMask) -> int:
    _check_same(a, b)
    ax0, ay0, ax1, ay1 = a.bbox
    bx0, by0, bx1, by1 = b.bbox
    x0, y0, x1, y1 = max(ax0, bx0), max(ay0, by0), min(ax1, bx1), min(ay1, by1)
    if a.is_empty or b.is_empty or x1 <= x0 or y1 <= y0:
        return 0
    return int(np.count_nonzero(a.window(x0, y0, x1, y1) & b.window(x0, y0, x1, y1)))


def iou(a: BinaryMask, b: BinaryMask) -> float:
    inter = intersection_count(a, b)
    uni = a.count + b.count - inter
    return inter / uni if uni else 0.0


# -- run-length codec ------------------------------------------------------

def rle_encode(mask: BinaryMask) -> list[int]:
    """Row-major run lengths, starting with the (possibly zero) background run."""
    flat = mask.bits.ravel()
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return [int(r) for r in runs]


def rle_decode(width: int, height: int, counts: Sequence[int]) -> BinaryMask:
    counts = np.asarray(counts, dtype=np.int64)
    if np.any(counts < 0):
        raise LengthMismatch("negative run length")
    if int(counts.sum()) != width * height:
        raise LengthMismatch(f"runs sum to {int(counts.sum())}, expected {width * height}")
    values = np.arange(len(counts)) % 2 == 1
    flat = np.repeat(values, counts)
    return BinaryMask(flat.reshape(height, width))


# -- components and morphology ----------------------------------------------

def connected_components(mask: BinaryMask) -> list[BinaryMask]:
    """8-connected components, ordered by their first pixel in raster order."""
    if mask.is_empty:
        return []
    labels, n = ndimage.label(mask.local, structure=EIGHT)
    if n == 1:
        return [mask]
    # ndimage numbers labels in raster order of first appearance
    return [mask.with_local(mask.x0, mask.y0, labels == k) for k in range(1, n + 1)]


def largest_component(mask: BinaryMask) -> BinaryMask:
    comps = connected_components(mask)
    if not comps:
        return mask
    return max(comps, key=lambda m: m.count)


def dilate(mask: BinaryMask, radius: int) -> BinaryMask:
    """Dilation by a (2r+1) square; growth beyond the canvas is clipped."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    if mask.is_empty:
        return mask
    r = int(radius)
    padded = np.pad(mask.local, r)
    grown = ndimage.maximum_filter(padded, size=2 * r + 1, mode="constant", cval=0)
    return mask.with_local(mask.x0 - r, mask.y0 - r, grown)


def erode(mask: BinaryMask, radius: int) -> BinaryMask:
    """Erosion by a (2r+1) square; off-canvas pixels count as foreground.

    That border rule makes ``erode`` the exact adjoint of the clipped
    :func:`dilate`, so their composition is a true closing on the canvas.
    """
    if radius < 1:
        raise ValueError("radius must be >= 1")
    if mask.is_empty:
        return mask
    r = int(radius)
    x0, y0, x1, y1 = mask.bbox
    wx0, wy0, wx1, wy1 = x0 - r, y0 - r, x1 + r, y1 + r
    win = mask.window(wx0, wy0, wx1, wy1)
    ys = np.arange(wy0, wy1)[:, None]
    xs = np.arange(wx0, wx1)[None, :]
    outside = (ys < 0) | (ys >= mask.height) | (xs < 0) | (xs >= mask.width)
    win |= outside
    shrunk = ndimage.minimum_filter(win, size=2 * r + 1, mode="constant", cval=1)
    shrunk &= ~outside
    return mask.with_local(wx0, wy0, shrunk)


def closing(mask: BinaryMask, radius: int) -> BinaryMask:
    if radius == 0:
        return mask
    return erode(dilate(mask, radius), radius)


# -- shape statistics -------------------------------------------------------

def centroid(mask: BinaryMask) -> Point2:
    """Mean pixel-center coordinate."""
    if mask.is_empty:
        raise EmptyMask("centroid of an empty mask")
    ys, xs = np.nonzero(mask.local)
    n = len(xs)
    return Point2(int(xs.sum()) / n + mask.x0, int(ys.sum()) / n + mask.y0)


def boundary_pixels(mask: BinaryMask) -> np.ndarray:
    """Foreground pixels with a background 4-neighbor, as (n, 2) ``(x, y)``."""
    p = np.pad(mask.local, 1)
    inner = p[1:-1, 1:-1] & p[:-2, 1:-1] & p[2:, 1:-1] & p[1:-1, :-2] & p[1:-1, 2:]
    edge = mask.local & ~inner
    ys, xs = np.nonzero(edge)
    return np.stack([xs + mask.x0, ys + mask.y0], axis=1).astype(float)


def pixel_hull(mask: BinaryMask) -> np.ndarray:
    """Convex hull of the mask's pixel centers."""
    if mask.is_empty:
        raise EmptyMask("hull of an empty mask")
    return convex_hull(boundary_pixels(mask))


def mask_box(mask: BinaryMask) -> RotatedBox:
    """Minimum-area rotated box of the mask, in pixel units.

    Extents are measured between pixel centers plus one pixel, so a solid
    ``w`` x ``h`` block gets ``w`` x ``h`` and a single pixel gets 1 x 1.
    """
    box = min_area_rotated_box(pixel_hull(mask))
    return RotatedBox(box.x, box.y, box.h + 1.0, box.w + 1.0, box.a)


def solidity(mask: BinaryMask, angle_step: float = 1.0) -> float:
    """Minimum, over in-plane rotations, of area / axis-aligned bbox area.

    The boundary point set is rotated (not the raster), so the pixel count is
    exact at every angle; bbox sides are center extents plus one pixel, as in
    :func:`mask_box`. The sweep covers ``[0, 90)`` degrees.
    """
    if mask.is_empty:
        raise EmptyMask("solidity of an empty mask")
    if not (0 < angle_step <= 90):
        raise ValueError("angle_step must be in (0, 90]")
    hull = pixel_hull(mask)
    thetas = np.radians(np.arange(0.0, 90.0, angle_step))
    c, s = np.cos(thetas), np.sin(thetas)
    rx = np.outer(c, hull[:, 0]) - np.outer(s, hull[:, 1])
    ry = np.outer(s, hull[:, 0]) + np.outer(c, hull[:, 1])
    boxes = (np.ptp(rx, axis=1) + 1.0) * (np.ptp(ry, axis=1) + 1.0)
    return float(min(1.0, (mask.count / boxes).min()))


def disk(width: int, height: int, cx: float, cy: float, radius: float) -> BinaryMask:
    ys, xs = np.mgrid[0:height, 0:width]
    return BinaryMask((xs - cx) ** 2 + (ys - cy) ** 2 <= radius ** 2)


def rasterize_box(box: RotatedBox, width: int, height: int) -> BinaryMask:
    """Pixels whose centers lie inside the rotated box (edges inclusive)."""
    corners = box.corners()
    x0 = max(int(np.floor(corners[:, 0].min())), 0)
    y0 = max(int(np.floor(corners[:, 1].min())), 0)
    x1 = min(int(np.ceil(corners[:, 0].max())) + 1, width)
    y1 = min(int(np.ceil(corners[:, 1].max())) + 1, height)
    if x1 <= x0 or y1 <= y0:
        return BinaryMask.empty(width, height)
    ys, xs = np.mgrid[y0:y1, x0:x1].astype(float)
    c, s = np.cos(box.a), np.sin(box.a)
    dx, dy = xs - box.x, ys - box.y
    along = np.abs(c * dx + s * dy)
    across = np.abs(-s * dx + c * dy)
    eps = 1e-9
    inside = (along <= box.w / 2.0 + eps) & (across <= box.h / 2.0 + eps)
    return BinaryMask.from_local(width, height, x0, y0, inside)
