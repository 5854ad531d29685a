"""Concavity-driven decomposition of instance masks into near-convex parts.

A mask is split recursively along a chord until every piece has a global
concavity below ``tau_ratio * d_short`` of its own rotated box. Each piece
then gets part-level labels: full and visible masks, their centroids, the
occlusion-correction offset and the offsets to all sibling parts.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import (
    DepthExceeded,
    EmptyMask,
    NoValidCut,
    NoValidCutWarning,
    SplitFailed,
    VisibilityViolation,
)
from .geom import (
    EIGHT,
    Point2,
    convex_hull,
    line_4connected,
    segment_inside_mask,
    trace_contour,
)
from .mask import BinaryMask, centroid, intersect, mask_box, subtract, union_all


@dataclass(frozen=True)
class DecoupleConfig:
    tau_ratio: float = 0.2
    lambda_cut: float = 1.0
    min_part_pixels: int = 16
    max_depth: int = 16

    def __post_init__(self):
        if not self.tau_ratio > 0:
            raise ValueError("tau_ratio must be positive")
        if self.lambda_cut < 0:
            raise ValueError("lambda_cut must be non-negative")
        if self.min_part_pixels < 1:
            raise ValueError("min_part_pixels must be positive")


@dataclass(frozen=True)
class ConcavityProfile:
    """Per-point concavity of a contour.

    ``bridge[i]`` is the index of the hull edge (hull vertex ``k`` to ``k+1``)
    that closes the pocket containing point ``i``; ``None`` on hull vertices.
    """

    contour: np.ndarray
    concavity: np.ndarray
    bridge: list
    hull: np.ndarray

    @property
    def max(self) -> float:
        return float(self.concavity.max()) if len(self.concavity) else 0.0


def concavity_profile(contour) -> ConcavityProfile:
    pts = np.asarray(contour, dtype=float).reshape(-1, 2)
    hull = convex_hull(pts)
    hull_index = {tuple(p): k for k, p in enumerate(hull.tolist())}
    marks = [i for i, p in enumerate(pts.tolist()) if tuple(p) in hull_index]
    n = len(pts)
    conc = np.zeros(n)
    bridge: list = [None] * n
    for a, b in zip(marks, marks[1:] + [marks[0] + n]):
        if b - a < 2:
            continue
        idx = np.arange(a + 1, b) % n
        pa, pb = pts[a], pts[b % n]
        d = pb - pa
        norm = float(np.hypot(*d))
        rel = pts[idx] - pa
        if norm == 0.0:
            # pocket closed by a revisited hull pixel
            conc[idx] = np.hypot(rel[:, 0], rel[:, 1])
        else:
            conc[idx] = np.abs(d[0] * rel[:, 1] - d[1] * rel[:, 0]) / norm
        k = hull_index[tuple(pa.tolist())]
        for i in idx:
            bridge[int(i)] = k
    return ConcavityProfile(pts, conc, bridge, hull)


def mask_concavity(mask: BinaryMask) -> float:
    """Global concavity: the largest point concavity on the outer contour."""
    return concavity_profile(trace_contour(mask)).max


def tau_for(mask: BinaryMask, cfg: DecoupleConfig) -> float:
    return cfg.tau_ratio * mask_box(mask).d_short


def passes_tau(mask: BinaryMask, cfg: DecoupleConfig) -> bool:
    return mask_concavity(mask) < tau_for(mask, cfg)


def split_once(mask: BinaryMask, cut, min_part_pixels: int = 1):
    """Split ``mask`` along the chord ``cut = (ps, pe)``.

    Seam pixels (the 4-connected raster of the chord) are removed and the rest
    is labelled with 4-connectivity. Exactly two pieces of at least
    ``min_part_pixels`` must remain. The seam goes to the piece on the left of
    ps->pe (positive cross product); stray crumbs join the piece they touch.
    Returns ``(left, right)``.
    """
    ps, pe = cut
    line = line_4connected(ps, pe)
    on = mask.values_at(line[:, 0], line[:, 1])
    seam = line[on]
    x0, y0 = mask.x0, mask.y0
    local = mask.local.copy()
    local[seam[:, 1] - y0, seam[:, 0] - x0] = False

    labels, n = ndimage.label(local)
    sizes = np.bincount(labels.ravel(), minlength=n + 1)
    main = [k for k in range(1, n + 1) if sizes[k] >= min_part_pixels]
    if len(main) != 2:
        raise SplitFailed(f"cut leaves {len(main)} sizeable pieces")

    # side vote of the pieces' pixels bordering the seam
    lab = np.pad(labels, 1)
    dx, dy = float(pe[0] - ps[0]), float(pe[1] - ps[1])
    votes = {k: 0 for k in main}
    for ox, oy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        nx, ny = seam[:, 0] + ox, seam[:, 1] + oy
        ks = lab[ny - y0 + 1, nx - x0 + 1]
        side = np.sign(dx * (ny - ps[1]) - dy * (nx - ps[0]))
        for k, sd in zip(ks.tolist(), side.tolist()):
            if k in votes:
                votes[k] += sd
    left_k = max(main, key=lambda k: (votes[k], -k))
    right_k = main[0] if main[1] == left_k else main[1]

    left = labels == left_k
    left[seam[:, 1] - y0, seam[:, 0] - x0] = True
    right = labels == right_k
    for k in range(1, n + 1):
        if k in main:
            continue
        crumb = labels == k
        grown = ndimage.binary_dilation(crumb, structure=EIGHT)
        if (grown & left).any():
            left |= crumb
        elif (grown & right).any():
            right |= crumb
        else:
            raise SplitFailed("detached crumb")
    for piece in (left, right):
        if ndimage.label(piece, structure=EIGHT)[1] != 1:
            raise SplitFailed("piece is not a single component")
    return mask.with_local(x0, y0, left), mask.with_local(x0, y0, right)


def _core_pixels(mask: BinaryMask) -> int:
    """Pixels whose whole 3x3 neighborhood lies in the mask."""
    return int(ndimage.binary_erosion(mask.local, structure=EIGHT).sum())


def _concavity_near(mask: BinaryMask, p) -> float:
    """Largest contour concavity within one pixel (chessboard) of ``p``."""
    prof = concavity_profile(trace_contour(mask))
    near = np.max(np.abs(prof.contour - np.asarray(p, dtype=float)), axis=1) <= 1.0
    return float(prof.concavity[near].max()) if near.any() else 0.0


def _find_cut(mask: BinaryMask, profile: ConcavityProfile, cfg: DecoupleConfig):
    pts = profile.contour
    conc = profile.concavity
    n = len(pts)
    s = int(np.argmax(conc))
    ps = pts[s]
    idx = np.arange(n)
    gap = np.abs(idx - s)
    gap = np.minimum(gap, n - gap)
    dist = np.hypot(pts[:, 0] - ps[0], pts[:, 1] - ps[1])
    score = conc - cfg.lambda_cut * dist
    ok = (gap > 2) & (dist > 0)
    cand = idx[ok]
    order = cand[np.lexsort((cand, -score[cand]))]
    for j in order:
        pe = pts[j]
        if not segment_inside_mask(ps, pe, mask):
            continue
        try:
            a, b = split_once(mask, (ps, pe), cfg.min_part_pixels)
        except SplitFailed:
            continue
        # chords that shave a sliver or tip off next to ps leave the notch at
        # ps as deep as before; a cut must resolve its own notch
        if min(_core_pixels(a), _core_pixels(b)) < cfg.min_part_pixels:
            continue
        if max(_concavity_near(a, ps), _concavity_near(b, ps)) > 0.5 * profile.max:
            continue
        return Point2(*ps), Point2(*pe), a, b
    raise NoValidCut("no admissible cut endpoint")


def choose_cut(mask: BinaryMask, profile: ConcavityProfile, cfg: DecoupleConfig):
    """Cut chord ``(ps, pe)``.

    ``ps`` is the most concave contour point (lowest index on ties). ``pe``
    maximizes ``concavity(pe) - lambda_cut * |ps - pe|`` among contour points
    more than two steps from ``ps`` whose chord stays inside the mask,
    splits it into two pieces that each keep at least ``min_part_pixels``
    pixels after a one-pixel erosion, and resolves the notch: near ``ps``
    neither piece keeps more than half of the mask's concavity.
    """
    ps, pe, _, _ = _find_cut(mask, profile, cfg)
    return ps, pe


def _first_pixel(m: BinaryMask):
    first_col = int(np.argmax(m.local[0]))
    return (m.y0, m.x0 + first_col)


def _decouple(mask: BinaryMask, cfg: DecoupleConfig, depth: int, cuts: list):
    profile = concavity_profile(trace_contour(mask))
    if profile.max < tau_for(mask, cfg):
        return [(mask, False)]
    if depth >= cfg.max_depth:
        raise DepthExceeded(f"still concave after {depth} splits")
    try:
        ps, pe, a, b = _find_cut(mask, profile, cfg)
    except NoValidCut:
        return [(mask, True)]
    cuts.append((ps, pe))
    return _decouple(a, cfg, depth + 1, cuts) + _decouple(b, cfg, depth + 1, cuts)


def decouple_trace(mask: BinaryMask, cfg: DecoupleConfig | None = None):
    """``(parts, unsplit_flags, cuts)``; cuts are ``(ps, pe)`` in split order."""
    cfg = cfg or DecoupleConfig()
    if mask.is_empty:
        raise EmptyMask("nothing to decouple")
    cuts: list = []
    out = sorted(_decouple(mask, cfg, 0, cuts), key=lambda t: _first_pixel(t[0]))
    return [m for m, _ in out], [f for _, f in out], cuts


def decouple_flagged(mask: BinaryMask, cfg: DecoupleConfig | None = None):
    """Like :func:`decouple` but also returns per-part "left unsplit" flags."""
    parts, flags, _ = decouple_trace(mask, cfg)
    return parts, flags


def decouple(mask: BinaryMask, cfg: DecoupleConfig | None = None) -> list[BinaryMask]:
    parts, flags = decouple_flagged(mask, cfg)
    if any(flags):
        warnings.warn(f"{sum(flags)} part(s) left unsplit: no valid cut",
                      NoValidCutWarning, stacklevel=2)
    return parts


@dataclass
class PartLabel:
    """Ground truth for one part.

    ``center_full`` is stored as ``center_visible + u`` whenever the part is
    visible, which keeps that identity exact in floating point; it then
    differs from the raw full-mask centroid by at most one ulp.
    """

    visible_mask: BinaryMask
    full_mask: BinaryMask
    center_full: Point2
    center_visible: Optional[Point2]
    u: Optional[tuple]
    v: list = field(default_factory=list)
    unsplit: bool = False

    @property
    def occluded(self) -> bool:
        """True when no pixel of the part is visible."""
        return self.center_visible is None

    @property
    def visible_fraction(self) -> float:
        return self.visible_mask.count / self.full_mask.count


@dataclass
class PartSet:
    parts: list

    @property
    def n_parts(self) -> int:
        return len(self.parts)

    def __len__(self):
        return len(self.parts)

    def __iter__(self):
        return iter(self.parts)

    def __getitem__(self, i):
        return self.parts[i]


def make_part_labels(full_instance: BinaryMask, visible_instance: BinaryMask,
                     cfg: DecoupleConfig | None = None,
                     parts: Sequence[BinaryMask] | None = None,
                     unsplit: Sequence[bool] | None = None) -> PartSet:
    """Decouple the unoccluded mask and derive per-part labels.

    ``parts`` may carry a precomputed decomposition of ``full_instance`` (as
    done for template-based scenes); otherwise :func:`decouple` runs on it.
    """
    if not subtract(visible_instance, full_instance).is_empty:
        raise VisibilityViolation("visible mask is not inside the full mask")
    if parts is None:
        parts, unsplit = decouple_flagged(full_instance, cfg)
    else:
        parts = list(parts)
        if sum(p.count for p in parts) != full_instance.count or \
                union_all(parts) != full_instance:
            raise ValueError("parts do not partition the full mask")
    unsplit = list(unsplit) if unsplit is not None else [False] * len(parts)

    labels = []
    for part, flag in zip(parts, unsplit):
        vis = intersect(part, visible_instance)
        phi = centroid(part)
        if vis.is_empty:
            labels.append(PartLabel(vis, part, phi, None, None, unsplit=flag))
            continue
        phi_hat = centroid(vis)
        u = (phi.x - phi_hat.x, phi.y - phi_hat.y)
        center = Point2(phi_hat.x + u[0], phi_hat.y + u[1])
        labels.append(PartLabel(vis, part, center, phi_hat, u, unsplit=flag))
    for i, lab in enumerate(labels):
        ci = lab.center_full
        lab.v = [(o.center_full.x - ci.x, o.center_full.y - ci.y)
                 for j, o in enumerate(labels) if j != i]
    return PartSet(labels)
