"""Planar geometry on pixel lattices: contours, hulls, rotated boxes, chords.

Coordinates follow the raster convention used throughout the package:
``x`` is the column index, ``y`` the row index, and a pixel's center sits on
the integer lattice point ``(x, y)``. "Counterclockwise" means positive
signed (shoelace) area in these coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, NamedTuple, Sequence

import numpy as np
from scipy import ndimage

from .errors import (
    DegenerateSegment,
    EmptyInput,
    EmptyMask,
    MultiComponent,
    OutOfBounds,
)

if TYPE_CHECKING:
    from .mask import BinaryMask

EIGHT = np.ones((3, 3), dtype=bool)


class Point2(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class RotatedBox:
    """Oriented rectangle ``(x, y, h, w, a)``.

    ``w`` is the extent along the major axis, whose direction is the angle
    ``a`` in ``[0, pi)``; ``h`` is the extent across it.
    """

    x: float
    y: float
    h: float
    w: float
    a: float

    @property
    def d_short(self) -> float:
        return min(self.h, self.w)

    @property
    def area(self) -> float:
        return self.h * self.w

    def corners(self) -> np.ndarray:
        u = np.array([math.cos(self.a), math.sin(self.a)])
        n = np.array([-u[1], u[0]])
        c = np.array([self.x, self.y])
        hw, hh = self.w / 2.0, self.h / 2.0
        return np.array([c - hw * u - hh * n, c + hw * u - hh * n,
                         c + hw * u + hh * n, c - hw * u + hh * n])


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise EmptyInput("no points given")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    return pts


def signed_area(poly) -> float:
    p = np.asarray(poly, dtype=float).reshape(-1, 2)
    if len(p) < 3:
        return 0.0
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


# Moore neighborhood, ordered so that a scan walks around the pixel with
# positive orientation in (x=col, y=row) coordinates.
_NBRS = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)]
_NBR_INDEX = {d: i for i, d in enumerate(_NBRS)}


def trace_contour(mask: "BinaryMask") -> np.ndarray:
    """Outer boundary pixels of a single-component mask, counterclockwise.

    Moore-neighbor tracing started at the first foreground pixel in raster
    order, made 4-connected so reflex corner pixels are kept. Holes are
    ignored. A lone pixel yields the four corners of its unit
    square. Pixels on one-pixel-wide necks are visited once per side.
    """
    if mask.count == 0:
        raise EmptyMask("cannot trace an empty mask")
    local = mask.local
    _, n = ndimage.label(local, structure=EIGHT)
    if n > 1:
        raise MultiComponent(f"mask has {n} components")
    x0, y0 = mask.x0, mask.y0
    if mask.count == 1:
        return np.array([[x0 - 0.5, y0 - 0.5], [x0 + 0.5, y0 - 0.5],
                         [x0 + 0.5, y0 + 0.5], [x0 - 0.5, y0 + 0.5]])

    grid = np.pad(local, 1)
    rows, cols = np.nonzero(grid)
    start = (int(cols[0]), int(rows[0]))
    # The west neighbor of the first raster pixel is background.
    back = (start[0] - 1, start[1])
    path = [start]
    cur = start
    first_move = None
    while True:
        d = (back[0] - cur[0], back[1] - cur[1])
        k0 = _NBR_INDEX[d]
        nxt = None
        for step in range(1, 9):
            k = (k0 + step) % 8
            cand = (cur[0] + _NBRS[k][0], cur[1] + _NBRS[k][1])
            if grid[cand[1], cand[0]]:
                nxt = cand
                kp = (k0 + step - 1) % 8
                back = (cur[0] + _NBRS[kp][0], cur[1] + _NBRS[kp][1])
                break
        if first_move is None:
            first_move = nxt
        elif cur == start and nxt == first_move:
            break
        cur = nxt
        path.append(cur)
    path.pop()  # start is appended again when the loop closes
    # Moore steps cut reflex corners diagonally; re-insert the foreground
    # pixel at each diagonal step so the ring is 4-connected.
    ring = []
    for i, (cx, cy) in enumerate(path):
        ring.append((cx, cy))
        nx, ny = path[(i + 1) % len(path)]
        if cx != nx and cy != ny:
            if grid[cy, nx]:
                ring.append((nx, cy))
            elif grid[ny, cx]:
                ring.append((cx, ny))
    pts = np.array(ring, dtype=float) + [x0 - 1, y0 - 1]
    if signed_area(pts) < 0:
        pts = np.concatenate([pts[:1], pts[:0:-1]])
    return pts


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points: Sequence) -> np.ndarray:
    """Monotone-chain hull, counterclockwise, collinear vertices dropped."""
    pts = _as_points(points)
    uniq = sorted(set(map(tuple, pts.tolist())))
    if len(uniq) <= 2:
        return np.array(uniq, dtype=float)
    lower: list = []
    for p in uniq:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(uniq):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1], dtype=float)


def _fold_angle(a: float) -> float:
    a = math.fmod(a, math.pi)
    if a < 0:
        a += math.pi
    if math.pi - a < 1e-12:
        a = 0.0
    return a


def min_area_rotated_box(points: Sequence) -> RotatedBox:
    """Minimum-area enclosing rectangle by rotating calipers over hull edges.

    Ties in area are broken by the smallest major-axis angle.
    """
    hull = convex_hull(points)
    if len(hull) == 1:
        return RotatedBox(float(hull[0, 0]), float(hull[0, 1]), 0.0, 0.0, 0.0)
    if len(hull) == 2:
        (ax, ay), (bx, by) = hull
        return RotatedBox((ax + bx) / 2.0, (ay + by) / 2.0, 0.0,
                          math.hypot(bx - ax, by - ay),
                          _fold_angle(math.atan2(by - ay, bx - ax)))

    edges = np.roll(hull, -1, axis=0) - hull
    lens = np.hypot(edges[:, 0], edges[:, 1])
    u = edges / lens[:, None]
    nrm = np.stack([-u[:, 1], u[:, 0]], axis=1)
    pu = u @ hull.T
    pn = nrm @ hull.T
    ext_u = pu.max(axis=1) - pu.min(axis=1)
    ext_n = pn.max(axis=1) - pn.min(axis=1)
    areas = ext_u * ext_n

    best = None
    tol = 1e-9 * max(1.0, float(areas.min()))
    for k in np.flatnonzero(areas <= areas.min() + tol):
        au = _fold_angle(math.atan2(u[k, 1], u[k, 0]))
        an = _fold_angle(au + math.pi / 2.0)
        eq_tol = 1e-9 * max(1.0, ext_u[k], ext_n[k])
        if ext_u[k] > ext_n[k] + eq_tol:
            w, h, a = ext_u[k], ext_n[k], au
        elif ext_n[k] > ext_u[k] + eq_tol:
            w, h, a = ext_n[k], ext_u[k], an
        else:
            w, h, a = ext_u[k], ext_n[k], min(au, an)
        cu = (pu[k].max() + pu[k].min()) / 2.0
        cn = (pn[k].max() + pn[k].min()) / 2.0
        center = cu * u[k] + cn * nrm[k]
        cand = RotatedBox(float(center[0]), float(center[1]), float(h), float(w), a)
        if best is None or a < best.a:
            best = cand
    return best


def point_segment_distance(p, a, b) -> float:
    """Distance from ``p`` to the infinite line through ``a`` and ``b``."""
    ax, ay = float(a[0]), float(a[1])
    dx, dy = float(b[0]) - ax, float(b[1]) - ay
    norm = math.hypot(dx, dy)
    if norm == 0.0:
        raise DegenerateSegment("line endpoints coincide")
    return abs(dx * (float(p[1]) - ay) - dy * (float(p[0]) - ax)) / norm


def bresenham(p, q) -> np.ndarray:
    """8-connected raster line from ``p`` to ``q`` (inclusive), as (n, 2) ints."""
    x0, y0 = int(round(p[0])), int(round(p[1]))
    x1, y1 = int(round(q[0])), int(round(q[1]))
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    out = []
    while True:
        out.append((x0, y0))
        if x0 == x1 and y0 == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy
    return np.array(out, dtype=np.int64)


def line_4connected(p, q) -> np.ndarray:
    """4-connected raster line: consecutive pixels share an edge.

    Used for cut seams, since removing an 8-connected line does not separate
    8-connected regions.
    """
    x0, y0 = int(round(p[0])), int(round(p[1]))
    x1, y1 = int(round(q[0])), int(round(q[1]))
    dx, dy = abs(x1 - x0), abs(y1 - y0)
    sx = 1 if x1 >= x0 else -1
    sy = 1 if y1 >= y0 else -1
    out = [(x0, y0)]
    ix = iy = 0
    x, y = x0, y0
    while ix < dx or iy < dy:
        # step along x when the x-crossing of the ideal line comes first
        if iy >= dy or (ix < dx and (1 + 2 * ix) * dy <= (1 + 2 * iy) * dx):
            x += sx
            ix += 1
        else:
            y += sy
            iy += 1
        out.append((x, y))
    return np.array(out, dtype=np.int64)


def segment_inside_mask(p, q, mask: "BinaryMask") -> bool:
    """True iff every Bresenham pixel of segment ``pq`` is foreground."""
    for pt in (p, q):
        x, y = int(round(pt[0])), int(round(pt[1]))
        if not (0 <= x < mask.width and 0 <= y < mask.height):
            raise OutOfBounds(f"point {tuple(pt)} outside {mask.width}x{mask.height}")
    line = bresenham(p, q)
    return bool(np.all(mask.values_at(line[:, 0], line[:, 1])))
