import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from partseg.errors import DegenerateSegment, EmptyInput, EmptyMask, MultiComponent, OutOfBounds
from partseg.geom import (
    bresenham,
    convex_hull,
    line_4connected,
    min_area_rotated_box,
    point_segment_distance,
    segment_inside_mask,
    signed_area,
    trace_contour,
)
from partseg.mask import BinaryMask

from conftest import l_polyomino, rect_mask

coord = st.integers(-50, 50)
points = st.lists(st.tuples(coord, coord), min_size=1, max_size=30)


# -- trace_contour --------------------------------------------------------------

def test_single_pixel_contour_is_unit_square():
    m = rect_mask(1, 1, 5, 5, 10, 10)
    c = trace_contour(m)
    assert c.tolist() == [[4.5, 4.5], [5.5, 4.5], [5.5, 5.5], [4.5, 5.5]]
    assert signed_area(c) == pytest.approx(1.0)


def test_block_contour_ring():
    m = rect_mask(3, 3, 0, 0, 5, 5)
    c = trace_contour(m)
    assert len(c) == 8
    assert {tuple(p) for p in c.tolist()} == {(x, y) for x in range(3) for y in range(3)} - {(1, 1)}
    assert signed_area(c) > 0


def test_l_contour_contains_reflex_corner():
    c = trace_contour(l_polyomino())
    assert (10.0, 10.0) in {tuple(p) for p in c.tolist()}


def test_l_contour_matches_boundary_enumeration():
    m = l_polyomino()
    c = trace_contour(m)
    ring = {tuple(p) for p in c.tolist()}
    g = np.pad(m.bits, 1)
    expect = set()
    for y, x in zip(*np.nonzero(g)):
        if not g[y - 1:y + 2, x - 1:x + 2].all():
            expect.add((float(x - 1), float(y - 1)))
    assert ring == expect
    steps = np.abs(np.diff(np.vstack([c, c[:1]]), axis=0)).sum(axis=1)
    assert np.all(steps == 1)  # 4-connected ring


def test_trace_errors():
    with pytest.raises(EmptyMask):
        trace_contour(BinaryMask.empty(4, 4))
    g = np.zeros((5, 5), bool)
    g[0, 0] = g[4, 4] = True
    with pytest.raises(MultiComponent):
        trace_contour(BinaryMask(g))


def test_hole_is_ignored():
    m = rect_mask(7, 7, 1, 1, 9, 9)
    g = m.bits
    g[4, 4] = False
    c = trace_contour(BinaryMask(g))
    assert len(c) == 24


# -- convex_hull ---------------------------------------------------------------

def test_hull_examples():
    sq = [(0, 0), (1, 0), (1, 1), (0, 1)]
    assert {tuple(p) for p in convex_hull(sq).tolist()} == set(map(tuple, np.array(sq, float).tolist()))
    assert len(convex_hull(sq + [(0.5, 0.5)])) == 4
    lverts = [(0, 0), (30, 0), (30, 10), (10, 10), (10, 30), (0, 30)]
    hull = convex_hull(lverts)
    assert hull.tolist() == [[0, 0], [30, 0], [30, 10], [10, 30], [0, 30]]
    assert signed_area(hull) > 0


def test_hull_drops_collinear_and_errors():
    h = convex_hull([(0, 0), (1, 0), (2, 0), (2, 2), (0, 2)])
    assert len(h) == 4
    with pytest.raises(EmptyInput):
        convex_hull([])


@given(points)
def test_hull_idempotent(pts):
    h = convex_hull(pts)
    assert np.array_equal(convex_hull(h), h)


# -- min_area_rotated_box ------------------------------------------------------

def test_box_of_rectangle():
    b = min_area_rotated_box([(0, 0), (4, 0), (4, 2), (0, 2)])
    assert (b.x, b.y, b.h, b.w, b.a) == pytest.approx((2, 1, 2, 4, 0))
    assert b.area == pytest.approx(8)
    assert b.d_short == pytest.approx(2)


def test_box_of_rotated_square():
    s = 3.0
    r = s / math.sqrt(2)
    b = min_area_rotated_box([(r, 0), (0, r), (-r, 0), (0, -r)])
    assert b.area == pytest.approx(s * s)
    assert b.a == pytest.approx(math.pi / 4)


def test_box_degenerate():
    b = min_area_rotated_box([(3, 4)])
    assert (b.x, b.y, b.h, b.w, b.a) == (3, 4, 0, 0, 0)
    b = min_area_rotated_box([(0, 0), (2, 2), (1, 1)])
    assert b.h == 0 and b.w == pytest.approx(2 * math.sqrt(2))
    with pytest.raises(EmptyInput):
        min_area_rotated_box([])


def _brute_min_area(pts):
    pts = np.asarray(pts, float)
    best = math.inf
    for a in np.radians(np.arange(0, 180, 0.05)):
        u = np.array([math.cos(a), math.sin(a)])
        n = np.array([-u[1], u[0]])
        best = min(best, np.ptp(pts @ u) * np.ptp(pts @ n))
    return best


@given(points)
def test_box_contains_points_and_bounds_area(pts):
    b = min_area_rotated_box(pts)
    p = np.asarray(pts, float)
    u = np.array([math.cos(b.a), math.sin(b.a)])
    n = np.array([-u[1], u[0]])
    rel = p - [b.x, b.y]
    assert np.all(np.abs(rel @ u) <= b.w / 2 + 1e-6)
    assert np.all(np.abs(rel @ n) <= b.h / 2 + 1e-6)
    assert b.area <= np.ptp(p[:, 0]) * np.ptp(p[:, 1]) + 1e-6
    assert 0 <= b.a < math.pi
    assert b.w >= b.h


@given(st.lists(st.tuples(coord, coord), min_size=3, max_size=12))
def test_box_area_matches_angle_sweep(pts):
    b = min_area_rotated_box(pts)
    assert b.area <= _brute_min_area(pts) + 1e-6


# -- point_segment_distance -----------------------------------------------------

def test_distance_examples():
    assert point_segment_distance((0, 1), (0, 0), (1, 0)) == 1.0
    assert point_segment_distance((5, 0), (0, 0), (1, 0)) == 0.0
    assert point_segment_distance((10, 10), (30, 10), (10, 30)) == pytest.approx(20 / math.sqrt(2))
    with pytest.raises(DegenerateSegment):
        point_segment_distance((0, 0), (1, 1), (1, 1))


@given(st.tuples(coord, coord), st.tuples(coord, coord), st.tuples(coord, coord),
       st.floats(0, 2 * math.pi), st.tuples(coord, coord))
def test_distance_rigid_invariance(p, a, b, theta, t):
    if a == b:
        return
    c, s = math.cos(theta), math.sin(theta)

    def tf(q):
        return (c * q[0] - s * q[1] + t[0], s * q[0] + c * q[1] + t[1])

    d0 = point_segment_distance(p, a, b)
    d1 = point_segment_distance(tf(p), tf(a), tf(b))
    assert d1 == pytest.approx(d0, abs=1e-9 * max(1.0, d0) * 100)


# -- rasterized segments ------------------------------------------------------

@given(st.tuples(coord, coord), st.tuples(coord, coord))
def test_lines_connectivity(p, q):
    b = bresenham(p, q)
    assert tuple(b[0]) == p and tuple(b[-1]) == q
    assert np.all(np.abs(np.diff(b, axis=0)).max(axis=1) == 1) if len(b) > 1 else True
    f = line_4connected(p, q)
    assert tuple(f[0]) == p and tuple(f[-1]) == q
    if len(f) > 1:
        assert np.all(np.abs(np.diff(f, axis=0)).sum(axis=1) == 1)


def test_segment_inside_mask():
    m = rect_mask(10, 5, 2, 2, 20, 20)
    assert segment_inside_mask((2, 2), (11, 6), m)
    g = np.zeros((10, 20), bool)
    g[2:8, 1:5] = True
    g[2:8, 12:16] = True
    assert not segment_inside_mask((3, 4), (13, 4), BinaryMask(g))
    with pytest.raises(OutOfBounds):
        segment_inside_mask((0, 0), (25, 0), m)


def test_chord_across_u_notch_is_outside():
    g = np.zeros((30, 30), bool)
    g[2:28, 2:8] = True
    g[2:28, 20:26] = True
    g[22:28, 2:26] = True
    m = BinaryMask(g)
    assert not segment_inside_mask((7, 5), (20, 5), m)
    assert segment_inside_mask((7, 24), (20, 24), m)
