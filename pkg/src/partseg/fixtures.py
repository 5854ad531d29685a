"""Constructed scenes used by tests, benchmarks and the command line."""

from __future__ import annotations

import math

import numpy as np

from .aggregate import AggregateConfig, corrected_center, part_epsilon
from .scenegen import Scene, Template, place_instances, substream
from .shapes import make_shape


def shape_template(name: str, unit: int) -> Template:
    return Template.from_mask(name, make_shape(name, unit))


def parallel_pair(unit: int = 6, margin: int = 4) -> Scene:
    """Two parallel L instances interleaved diagonally.

    The second copy sits three blocks right and three blocks up, so each
    part's nearest foreign part (4.24 blocks) is closer than its own sibling
    (4.47 blocks) while no pixels overlap.
    """
    t = shape_template("L", unit)
    x0, y0, x1, y1 = t.full_mask.bbox
    w, h = x1 - x0, y1 - y0
    width = w + 3 * unit + 2 * margin
    height = h + 3 * unit + 2 * margin
    ax = margin + w // 2
    ay = margin + 3 * unit + h // 2
    poses = [(ax, ay, 0.0), (ax + 3 * unit, ay - 3 * unit, 0.0)]
    return place_instances(t, poses, (width, height))


def lattice_scene(template: Template, n_instances: int, seed: int = 0,
                  spacing: float = 1.2) -> Scene:
    """Non-overlapping randomly rotated copies on a square lattice.

    Cell size is ``spacing`` times the template diagonal, so density stays
    constant as ``n_instances`` grows.
    """
    x0, y0, x1, y1 = template.full_mask.bbox
    cell = int(math.ceil(spacing * math.hypot(x1 - x0, y1 - y0))) + 2
    cols = int(math.ceil(math.sqrt(n_instances)))
    rows = int(math.ceil(n_instances / cols))
    rng = substream(seed, 7)
    poses = []
    for k in range(n_instances):
        r, c = divmod(k, cols)
        poses.append((c * cell + cell // 2, r * cell + cell // 2,
                      float(rng.uniform(0.0, 2.0 * math.pi))))
    return place_instances(template, poses, (cols * cell, rows * cell))


def cross_instance_margin(scene: Scene, preds, cfg: AggregateConfig | None = None) -> float:
    """Smallest ratio ``residual / eps`` over all cross-instance (part, offset) pairs.

    ``preds`` must carry ``source = (instance, part)``. A value above 1 means
    no foreign part ever satisfies the forward test.
    """
    cfg = cfg or AggregateConfig()
    centers = np.array([corrected_center(p) for p in preds], dtype=float)
    owner = np.array([p.source[0] for p in preds])
    worst = math.inf
    for i, p in enumerate(preds):
        eps = part_epsilon(p, cfg)
        foreign = owner != owner[i]
        if not foreign.any():
            continue
        for v in p.v:
            target = centers[i] + np.asarray(v)
            d = np.hypot(*(centers[foreign] - target).T)
            worst = min(worst, float(d.min()) / eps)
    return worst
