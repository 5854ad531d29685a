"""Copy-paste scene synthesis with occlusion-aware part ground truth.

Instances of one template are pasted back to front at random poses; later
instances occlude earlier ones. A simulated predictor turns the ground truth
into part predictions, and :func:`perturb` degrades them with a seeded noise
model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .decouple import DecoupleConfig, PartSet, decouple_flagged, make_part_labels
from .errors import PlacementFailure
from .geom import EIGHT
from .mask import BinaryMask, dilate, erode, solidity

MAX_ATTEMPTS = 1000


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, key...)``; stable under skipped keys."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(key)))


def derive_seed(seed: int, *key: int) -> int:
    """A 63-bit child seed of ``seed`` for ``key`` (e.g. a scene number)."""
    state = np.random.SeedSequence(int(seed), spawn_key=tuple(key)).generate_state(2, np.uint32)
    return (int(state[0]) << 31) ^ int(state[1])


@dataclass
class Template:
    """An object in canonical pose with its part decomposition."""

    name: str
    full_mask: BinaryMask
    parts: PartSet
    solidity: float

    @classmethod
    def from_mask(cls, name: str, mask: BinaryMask,
                  cfg: DecoupleConfig | None = None) -> "Template":
        masks, flags = decouple_flagged(mask, cfg)
        parts = make_part_labels(mask, mask, cfg, parts=masks, unsplit=flags)
        return cls(name, mask, parts, solidity(mask))

    @property
    def n_parts(self) -> int:
        return self.parts.n_parts

    def label_crop(self) -> np.ndarray:
        """Tight crop of the template with pixel value ``j + 1`` on part ``j``."""
        x0, y0, x1, y1 = self.full_mask.bbox
        lab = np.zeros((y1 - y0, x1 - x0), dtype=np.int32)
        for j, p in enumerate(self.parts):
            lab[p.full_mask.window(x0, y0, x1, y1)] = j + 1
        return lab


def rotate_labels(labels: np.ndarray, theta: float):
    """Rotate a label crop by ``theta`` about its central pixel, nearest neighbor.

    The pivot is pixel ``((w - 1) // 2, (h - 1) // 2)``, so quarter turns
    permute pixels exactly. Returns ``(raster, ox, oy)``: pixel ``(i, j)`` of
    ``raster`` lands at offset ``(ox + j, oy + i)`` from the pivot. Only the
    largest 8-connected piece of the rotated object is kept.
    """
    h, w = labels.shape
    cx, cy = (w - 1) // 2, (h - 1) // 2
    r = int(math.ceil(math.hypot(w, h) / 2.0)) + 1
    q = np.arange(-r, r + 1, dtype=float)
    qy, qx = np.meshgrid(q, q, indexing="ij")
    c, s = math.cos(theta), math.sin(theta)
    # inverse map: canvas offset -> template pixel
    sx = np.rint(cx + c * qx + s * qy).astype(np.int64)
    sy = np.rint(cy - s * qx + c * qy).astype(np.int64)
    inside = (sx >= 0) & (sx < w) & (sy >= 0) & (sy < h)
    out = np.zeros(qx.shape, dtype=np.int32)
    out[inside] = labels[sy[inside], sx[inside]]
    comp, n = ndimage.label(out > 0, structure=EIGHT)
    if n > 1:
        sizes = np.bincount(comp.ravel())
        sizes[0] = 0
        out[comp != int(np.argmax(sizes))] = 0
    rows = np.flatnonzero(out.any(axis=1))
    cols = np.flatnonzero(out.any(axis=0))
    out = out[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]
    return out, int(cols[0]) - r, int(rows[0]) - r


@dataclass
class Instance:
    """One pasted copy. ``pose = (tx, ty, theta)``: pivot pixel and rotation."""

    pose: tuple
    full_mask: BinaryMask
    visible_mask: BinaryMask
    parts: PartSet


@dataclass
class Scene:
    width: int
    height: int
    instances: list
    z_order: list
    skipped: list = field(default_factory=list)
    template: str = ""
    n_parts: int = 1


class _Canvas:
    """Back-to-front compositor tracking which part owns each visible pixel."""

    def __init__(self, width: int, height: int):
        self.width, self.height = width, height
        self.top = np.full((height, width), -1, dtype=np.int64)
        self.full_counts: list = []
        self.visible_counts: list = []

    def fits(self, raster, x0, y0) -> bool:
        h, w = raster.shape
        return x0 >= 0 and y0 >= 0 and x0 + w <= self.width and y0 + h <= self.height

    def worst_fraction_after(self, raster, x0, y0) -> float:
        """Lowest visible fraction among existing parts if ``raster`` is pasted."""
        if not self.full_counts:
            return 1.0
        h, w = raster.shape
        covered = self.top[y0:y0 + h, x0:x0 + w][raster > 0]
        covered = covered[covered >= 0]
        if len(covered) == 0:
            return 1.0
        ids, lost = np.unique(covered, return_counts=True)
        vis = np.asarray(self.visible_counts)[ids] - lost
        return float((vis / np.asarray(self.full_counts)[ids]).min())

    def paste(self, raster, x0, y0, n) -> list:
        """Paste on top; returns the global part ids assigned to labels 1..n."""
        h, w = raster.shape
        base = len(self.full_counts)
        win = self.top[y0:y0 + h, x0:x0 + w]
        fg = raster > 0
        covered = win[fg]
        covered = covered[covered >= 0]
        if len(covered):
            ids, lost = np.unique(covered, return_counts=True)
            for i, k in zip(ids.tolist(), lost.tolist()):
                self.visible_counts[i] -= k
        win[fg] = raster[fg] + base - 1
        counts = np.bincount(raster.ravel(), minlength=n + 1)[1:]
        self.full_counts.extend(int(c) for c in counts)
        self.visible_counts.extend(int(c) for c in counts)
        return list(range(base, base + n))


def _all_parts_present(raster, n) -> bool:
    return bool(np.all(np.bincount(raster.ravel(), minlength=n + 1)[1:] > 0))


def _build_instances(canvas: _Canvas, placed, width, height) -> list:
    instances = []
    for pose, raster, x0, y0, ids in placed:
        h, w = raster.shape
        win = canvas.top[y0:y0 + h, x0:x0 + w]
        fulls = [BinaryMask.from_local(width, height, x0, y0, raster == j + 1)
                 for j in range(len(ids))]
        full = BinaryMask.from_local(width, height, x0, y0, raster > 0)
        vis_local = np.isin(win, ids) & (raster > 0)
        visible = BinaryMask.from_local(width, height, x0, y0, vis_local)
        parts = make_part_labels(full, visible, parts=fulls)
        instances.append(Instance(pose, full, visible, parts))
    return instances


def place_instances(template: Template, poses: Sequence, canvas: tuple) -> Scene:
    """Paste ``template`` at explicit ``(tx, ty, theta)`` poses, back to front.

    Raises :class:`PlacementFailure` when a pose does not fit on the canvas.
    """
    width, height = canvas
    labels = template.label_crop()
    n = template.n_parts
    cv = _Canvas(width, height)
    placed = []
    for k, (tx, ty, theta) in enumerate(poses):
        raster, ox, oy = rotate_labels(labels, float(theta))
        x0, y0 = int(tx) + ox, int(ty) + oy
        if not cv.fits(raster, x0, y0):
            raise PlacementFailure(f"pose {k} leaves the canvas")
        if not _all_parts_present(raster, n):
            raise PlacementFailure(f"pose {k} loses a part in rasterization")
        ids = cv.paste(raster, x0, y0, n)
        placed.append(((int(tx), int(ty), float(theta)), raster, x0, y0, ids))
    instances = _build_instances(cv, placed, width, height)
    return Scene(width, height, instances, list(range(len(instances)))[::-1],
                 template=template.name, n_parts=template.n_parts)


def compose_scene(template: Template, count_range: Sequence[int], canvas: tuple,
                  seed: int, min_part_visibility: float = 0.0) -> Scene:
    """Paste a random number of template copies at random poses.

    The count is drawn from ``Uniform[lo, hi]``. Every copy gets a uniform
    rotation and a uniform position keeping it fully on the canvas. When
    ``min_part_visibility > 0`` a pose is redrawn while it would push any
    already placed part below that visible fraction. Copies that find no
    pose in ``MAX_ATTEMPTS`` draws are skipped and listed in ``skipped``.
    Each copy draws from its own substream, so skips do not shift later ones.
    """
    lo, hi = int(count_range[0]), int(count_range[1])
    if lo < 1 or hi < lo:
        raise ValueError("count_range must satisfy 1 <= lo <= hi")
    width, height = canvas
    x0, y0, x1, y1 = template.full_mask.bbox
    cw, ch = x1 - x0, y1 - y0
    if not ((cw <= width and ch <= height) or (ch <= width and cw <= height)):
        raise ValueError("template cannot fit on the canvas")
    labels = template.label_crop()
    n = template.n_parts
    k = int(substream(seed).integers(lo, hi + 1))
    cv = _Canvas(width, height)
    placed, skipped = [], []
    for i in range(k):
        rng = substream(seed, i)
        for _ in range(MAX_ATTEMPTS):
            theta = float(rng.uniform(0.0, 2.0 * math.pi))
            raster, ox, oy = rotate_labels(labels, theta)
            h, w = raster.shape
            if w > width or h > height or not _all_parts_present(raster, n):
                continue
            tx = int(rng.integers(-ox, width - w - ox + 1))
            ty = int(rng.integers(-oy, height - h - oy + 1))
            px, py = tx + ox, ty + oy
            if min_part_visibility > 0 and \
                    cv.worst_fraction_after(raster, px, py) < min_part_visibility:
                continue
            ids = cv.paste(raster, px, py, n)
            placed.append(((tx, ty, theta), raster, px, py, ids))
            break
        else:
            skipped.append(i)
    instances = _build_instances(cv, placed, width, height)
    return Scene(width, height, instances, list(range(len(instances)))[::-1],
                 skipped=skipped, template=template.name, n_parts=template.n_parts)


def check_placement(scene: Scene):
    """Raise :class:`PlacementFailure` if any instance was skipped."""
    if scene.skipped:
        raise PlacementFailure(f"skipped placements: {scene.skipped}")


# -- simulated predictions ---------------------------------------------------

@dataclass(frozen=True)
class PerturbationConfig:
    sigma_center: float = 0.0
    sigma_offset: float = 0.0
    p_drop: float = 0.0
    p_spurious: float = 0.0
    mask_jitter: int = 0
    min_visible_frac: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.sigma_center < 0 or self.sigma_offset < 0:
            raise ValueError("sigmas must be non-negative")
        for name in ("p_drop", "p_spurious", "min_visible_frac"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.mask_jitter < 0:
            raise ValueError("mask_jitter must be non-negative")


@dataclass
class PartPrediction:
    """A detected part: visible mask, confidence, and the two offset heads.

    ``source`` optionally records the ``(instance, part)`` it was drawn from;
    it is bookkeeping only and never read by aggregation.
    """

    mask: BinaryMask
    score: float
    u: tuple
    v: list
    source: Optional[tuple] = None


def ground_truth_predictions(scene: Scene, min_visible_frac: float = 0.1) -> list:
    """Ideal predictor: one prediction per part visible enough to be detected."""
    preds = []
    for k, inst in enumerate(scene.instances):
        for j, part in enumerate(inst.parts):
            if part.occluded:
                continue
            frac = part.visible_fraction
            if frac < min_visible_frac:
                continue
            preds.append(PartPrediction(part.visible_mask, frac, tuple(part.u),
                                        [tuple(o) for o in part.v], source=(k, j)))
    return preds


def _jitter(mask: BinaryMask, amount: int) -> BinaryMask:
    if amount > 0:
        return dilate(mask, amount)
    if amount < 0:
        return erode(mask, -amount)
    return mask


def perturb(preds: Sequence[PartPrediction], cfg: PerturbationConfig,
            n_instances: int | None = None) -> list:
    """Simulate network noise on ``preds``; deterministic given ``cfg.seed``.

    Each prediction independently may be dropped, has its mask translated by
    a rounded Gaussian shift and dilated or eroded by a uniform integer
    radius, and gets Gaussian noise on every offset component. Predictions
    whose mask vanishes are dropped. Then, for each of ``n_instances`` scene
    instances (estimated from the part count when omitted), a spurious copy
    of a random prediction is added with probability ``p_spurious`` at a
    uniform position with uniformly drawn offsets.
    """
    out = []
    for i, p in enumerate(preds):
        rng = substream(cfg.seed, 0, i)
        if cfg.p_drop > 0 and rng.random() < cfg.p_drop:
            continue
        mask = p.mask
        if cfg.sigma_center > 0:
            dx, dy = np.rint(rng.normal(0.0, cfg.sigma_center, 2)).astype(int)
            mask = mask.translate(int(dx), int(dy))
        if cfg.mask_jitter > 0:
            mask = _jitter(mask, int(rng.integers(-cfg.mask_jitter, cfg.mask_jitter + 1)))
        u, v = tuple(p.u), [tuple(o) for o in p.v]
        if cfg.sigma_offset > 0:
            nu = rng.normal(0.0, cfg.sigma_offset, 2)
            u = (u[0] + float(nu[0]), u[1] + float(nu[1]))
            nv = rng.normal(0.0, cfg.sigma_offset, (len(v), 2))
            v = [(a + float(n[0]), b + float(n[1])) for (a, b), n in zip(v, nv)]
        if mask.is_empty:
            continue
        out.append(replace(p, mask=mask, u=u, v=v))

    if cfg.p_spurious > 0 and preds:
        if n_instances is None:
            n_instances = max(1, round(len(preds) / (len(preds[0].v) + 1)))
        for k in range(n_instances):
            rng = substream(cfg.seed, 1, k)
            if rng.random() >= cfg.p_spurious:
                continue
            src = preds[int(rng.integers(len(preds)))]
            m = src.mask
            x0, y0, x1, y1 = m.bbox
            nx = int(rng.integers(0, max(1, m.width - (x1 - x0) + 1)))
            ny = int(rng.integers(0, max(1, m.height - (y1 - y0) + 1)))
            reach = max([abs(c) for o in src.v for c in o] + [1.0])
            v = [tuple(float(c) for c in rng.uniform(-reach, reach, 2)) for _ in src.v]
            out.append(PartPrediction(m.translate(nx - x0, ny - y0),
                                      float(rng.uniform(0.0, 1.0)), (0.0, 0.0), v))
    return out
