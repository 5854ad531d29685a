import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from partseg.decouple import (
    DecoupleConfig,
    choose_cut,
    concavity_profile,
    decouple,
    decouple_flagged,
    decouple_trace,
    make_part_labels,
    mask_concavity,
    passes_tau,
    split_once,
)
from partseg.errors import (
    DepthExceeded,
    EmptyMask,
    MultiComponent,
    NoValidCutWarning,
    SplitFailed,
    VisibilityViolation,
)
from partseg.geom import segment_inside_mask, trace_contour
from partseg.mask import BinaryMask, disk, intersect, largest_component, subtract, union_all
from partseg.shapes import make_shape

from conftest import l_polyomino, rect_mask

L_CONCAVITY = 20 / math.sqrt(2)  # reflex corner (10,10) to hull edge (30,10)-(10,30)


def u_shape():
    g = np.zeros((30, 30), bool)
    g[2:28, 2:8] = True
    g[2:28, 20:26] = True
    g[22:28, 2:26] = True
    return BinaryMask(g)


@st.composite
def blobs(draw):
    """Largest component of a union of 1-4 random rectangles."""
    g = np.zeros((40, 40), bool)
    for _ in range(draw(st.integers(1, 4))):
        x, y = draw(st.integers(0, 34)), draw(st.integers(0, 34))
        w, h = draw(st.integers(3, 30)), draw(st.integers(3, 30))
        g[y:y + h, x:x + w] = True
    return largest_component(BinaryMask(g))


def assert_partition(parts, mask):
    assert sum(p.count for p in parts) == mask.count
    assert union_all(parts) == mask


# -- concavity -----------------------------------------------------------------

def test_convex_profile_is_zero():
    p = concavity_profile(trace_contour(rect_mask(8, 5, 1, 1, 12, 8)))
    assert p.max == 0.0


@pytest.mark.parametrize("r", [5, 15, 50, 80])
def test_disk_concavity_is_rasterization_only(r):
    # staircase corners on long hull edges reach about one pixel
    d = disk(2 * r + 6, 2 * r + 6, r + 2.5, r + 2.5, r)
    c = mask_concavity(d)
    assert c <= 1.5
    assert c < DecoupleConfig().tau_ratio * (2 * r + 1)


def test_l_concavity_oracle(lshape):
    p = concavity_profile(trace_contour(lshape))
    assert p.max == pytest.approx(L_CONCAVITY, abs=1e-12)
    k = int(np.argmax(p.concavity))
    assert tuple(p.contour[k]) == (10.0, 10.0)
    assert mask_concavity(lshape) == pytest.approx(L_CONCAVITY, abs=1e-12)


@given(blobs())
def test_profile_invariants(m):
    p = concavity_profile(trace_contour(m))
    assert np.all(p.concavity >= 0)
    hull = {tuple(q) for q in p.hull.tolist()}
    for pt, c, b in zip(p.contour.tolist(), p.concavity, p.bridge):
        if tuple(pt) in hull:
            assert c == 0 and b is None
        else:
            assert b is not None


def test_mask_concavity_errors():
    with pytest.raises(EmptyMask):
        mask_concavity(BinaryMask.empty(4, 4))
    g = np.zeros((6, 6), bool)
    g[0, 0] = g[5, 5] = True
    with pytest.raises(MultiComponent):
        mask_concavity(BinaryMask(g))


# -- cuts ---------------------------------------------------------------------

def test_l_cut_starts_at_reflex_corner(lshape):
    p = concavity_profile(trace_contour(lshape))
    ps, pe = choose_cut(lshape, p, DecoupleConfig())
    assert tuple(ps) == (10.0, 10.0)
    assert tuple(pe) == (10.0, 0.0)  # frozen: shortest chord across the arm
    assert segment_inside_mask(ps, pe, lshape)


def test_u_cut_from_pocket_bottom_to_opposite_rim():
    m = u_shape()
    p = concavity_profile(trace_contour(m))
    ps, pe = choose_cut(m, p, DecoupleConfig())
    assert tuple(ps) == (7.0, 22.0)  # reflex corner at the pocket bottom
    assert tuple(pe) == (7.0, 27.0)  # outer rim below it
    assert segment_inside_mask(ps, pe, m)


def test_split_rectangle_mid_chord():
    m = rect_mask(10, 6, 0, 0, 12, 8)
    left, right = split_once(m, ((5, 0), (5, 5)))
    assert intersect(left, right).is_empty
    assert_partition([left, right], m)
    # positive cross product side of a downward chord is x < 5; it takes the seam
    assert left.values_at([0, 5], [2, 2]).all()
    assert (left.count, right.count) == (36, 24)


def test_split_failure():
    m = rect_mask(10, 6, 0, 0, 12, 8)
    with pytest.raises(SplitFailed):
        split_once(m, ((0, 0), (3, 0)))


def test_l_split_reduces_concavity(lshape):
    p = concavity_profile(trace_contour(lshape))
    a, b = split_once(lshape, choose_cut(lshape, p, DecoupleConfig()))
    assert intersect(a, b).is_empty
    assert_partition([a, b], lshape)
    assert mask_concavity(a) < p.max and mask_concavity(b) < p.max


# -- decouple -------------------------------------------------------------------

def test_convex_is_identity():
    m = rect_mask(12, 5, 2, 2, 20, 10)
    assert decouple(m) == [m]


def test_l_gives_two_parts(lshape):
    parts = decouple(lshape)
    assert len(parts) == 2
    assert_partition(parts, lshape)
    assert all(passes_tau(p, DecoupleConfig()) for p in parts)


@pytest.mark.parametrize("name", ["plus", "S", "wrench", "T", "U"])
def test_shapes_pass_tau(name):
    m = make_shape(name, 6)
    parts, flags = decouple_flagged(m)
    assert not any(flags)
    assert_partition(parts, m)
    cfg = DecoupleConfig()
    assert all(passes_tau(p, cfg) for p in parts)


def test_parts_ordered_by_first_pixel():
    parts = decouple(make_shape("S", 6))
    firsts = [(p.y0, p.x0 + int(np.argmax(p.local[0]))) for p in parts]
    assert firsts == sorted(firsts)


def test_trace_records_cuts(lshape):
    parts, flags, cuts = decouple_trace(lshape)
    assert len(cuts) == len(parts) - 1


def test_depth_cap(lshape):
    with pytest.raises(DepthExceeded):
        decouple(lshape, DecoupleConfig(max_depth=0))


def test_no_valid_cut_is_flagged_with_warning():
    m = l_polyomino()
    cfg = DecoupleConfig(min_part_pixels=400)
    with pytest.warns(NoValidCutWarning):
        parts = decouple(m, cfg)
    assert parts == [m]
    assert decouple_flagged(m, cfg)[1] == [True]


def test_config_validation():
    with pytest.raises(ValueError):
        DecoupleConfig(tau_ratio=0)
    with pytest.raises(ValueError):
        DecoupleConfig(lambda_cut=-1)
    with pytest.raises(EmptyMask):
        decouple(BinaryMask.empty(5, 5))


@settings(max_examples=40)
@given(blobs())
def test_decouple_partition_and_tau(m):
    cfg = DecoupleConfig()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NoValidCutWarning)
        parts, flags = decouple_flagged(m, cfg)
    assert_partition(parts, m)
    for i, a in enumerate(parts):
        for b in parts[i + 1:]:
            assert intersect(a, b).is_empty
    for p, f in zip(parts, flags):
        assert f or passes_tau(p, cfg)


# -- part labels ----------------------------------------------------------------

def three_squares():
    w = 30
    return [rect_mask(10, 10, 0, 0, w, w), rect_mask(10, 10, 10, 0, w, w),
            rect_mask(10, 10, 0, 10, w, w)]


def test_unoccluded_u_is_zero(lshape):
    ps = make_part_labels(lshape, lshape)
    assert all(p.u == (0.0, 0.0) for p in ps)
    assert all(len(p.v) == ps.n_parts - 1 for p in ps)


def test_offsets_for_three_parts():
    parts = three_squares()
    full = union_all(parts)
    ps = make_part_labels(full, full, parts=parts)
    assert ps[0].center_full == (4.5, 4.5)
    assert ps[0].v == [(10.0, 0.0), (0.0, 10.0)]


def test_occluded_half_points_toward_full_center():
    parts = three_squares()
    full = union_all(parts)
    visible = subtract(full, rect_mask(5, 10, 5, 0, 30, 30))
    ps = make_part_labels(full, visible, parts=parts)
    assert ps[0].center_visible == (2.0, 4.5)
    assert ps[0].u == (2.5, 0.0)
    assert ps[0].u[0] > 0


def test_fully_occluded_part_is_kept():
    parts = three_squares()
    full = union_all(parts)
    visible = subtract(full, parts[2])
    ps = make_part_labels(full, visible, parts=parts)
    assert ps[2].occluded and ps[2].u is None and ps[2].center_visible is None
    assert ps[2].full_mask == parts[2]


def test_visibility_violation():
    m = rect_mask(5, 5, 0, 0, 10, 10)
    with pytest.raises(VisibilityViolation):
        make_part_labels(m, rect_mask(6, 5, 0, 0, 10, 10))


@st.composite
def occluded_instances(draw):
    m = draw(blobs())
    g = m.bits
    x, y = draw(st.integers(0, 39)), draw(st.integers(0, 39))
    w, h = draw(st.integers(0, 25)), draw(st.integers(0, 25))
    vis = g.copy()
    vis[y:y + h, x:x + w] = False
    return m, BinaryMask(vis)


@settings(max_examples=40)
@given(occluded_instances())
def test_label_identities(inst):
    full, vis = inst
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NoValidCutWarning)
        ps = make_part_labels(full, vis)
    for i, p in enumerate(ps):
        assert subtract(p.visible_mask, p.full_mask).is_empty
        if not p.occluded:
            assert (p.center_visible.x + p.u[0], p.center_visible.y + p.u[1]) == p.center_full
        for j in range(len(ps)):
            if j == i:
                continue
            # v lists siblings in index order with the part itself left out
            vij = p.v[j if j < i else j - 1]
            vji = ps[j].v[i if i < j else i - 1]
            assert vij == (-vji[0], -vji[1])


@settings(max_examples=20)
@given(st.integers(-3, 3), st.integers(-3, 3))
def test_translation_equivariance(dx, dy):
    base = make_shape("T", 4, margin=4)
    big = BinaryMask.from_local(base.width + 8, base.height + 8, 4, 4, base.local)
    vis = subtract(big, rect_mask(6, 40, 10, 0, big.width, big.height))
    a = make_part_labels(big, vis)
    b = make_part_labels(big.translate(dx, dy), vis.translate(dx, dy))
    assert a.n_parts == b.n_parts
    for p, q in zip(a, b):
        assert q.full_mask == p.full_mask.translate(dx, dy)
        assert q.center_full == pytest.approx((p.center_full.x + dx, p.center_full.y + dy), abs=1e-9)
        if not p.occluded:
            assert q.u == pytest.approx(p.u, abs=1e-9)
        assert np.allclose(q.v, p.v, atol=1e-9)
