"""Assemble part predictions into object instances.

Each part carries a corrected center ``psi = centroid + u`` and offsets
``v`` pointing at its siblings. A seed part looks for a sibling near
``psi + v`` (forward test, radius ``eps``); among the candidates it keeps the
one whose own offsets point back at the seed best (reverse test). Candidate
lookup goes through a uniform grid, so a sweep over ``n`` parts costs O(n).

The Hungarian baseline pairs parts by a global minimum-cost assignment on
centroid distance and rotated-box overlap instead.
"""

from __future__ import annotations

import math
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import OddPartCount
from .geom import Point2
from .mask import BinaryMask, centroid, closing, iou, mask_box, rasterize_box, union_all


@dataclass(frozen=True)
class AggregateConfig:
    """``eps = epsilon_ratio * d_short`` of the seed part's rotated box.

    ``reverse_check`` additionally requires the chosen sibling's best
    reverse residual to be within the seed's ``eps``.
    """

    epsilon_ratio: float = 0.5
    refine_radius: int = 2
    reverse_check: bool = False

    def __post_init__(self):
        if not self.epsilon_ratio > 0:
            raise ValueError("epsilon_ratio must be positive")
        if self.refine_radius < 0:
            raise ValueError("refine_radius must be non-negative")


@dataclass
class AssembledInstance:
    part_indices: list
    merged_mask: BinaryMask
    complete: bool
    score: float = 1.0


@dataclass
class CorrelationGraph:
    """Vertices are parts at their corrected centers; edges are accepted
    ``(seed, sibling, forward residual)`` matches."""

    centers: np.ndarray
    edges: list = field(default_factory=list)


def corrected_center(pred) -> Point2:
    c = centroid(pred.mask)
    return Point2(c.x + pred.u[0], c.y + pred.u[1])


def part_epsilon(pred, cfg: AggregateConfig) -> float:
    return cfg.epsilon_ratio * mask_box(pred.mask).d_short


class CenterGrid:
    """Uniform bucket grid over 2D points for radius queries."""

    def __init__(self, centers: np.ndarray, cell: float):
        if not cell > 0:
            raise ValueError("cell size must be positive")
        self.centers = np.asarray(centers, dtype=float).reshape(-1, 2)
        self.cell = float(cell)
        self.buckets = defaultdict(list)
        keys = np.floor(self.centers / self.cell).astype(np.int64)
        for i, (kx, ky) in enumerate(keys.tolist()):
            self.buckets[(kx, ky)].append(i)

    def query(self, target, radius: float) -> list:
        """Indices within ``radius`` of ``target``, ascending."""
        tx, ty = float(target[0]), float(target[1])
        kx0 = math.floor((tx - radius) / self.cell)
        kx1 = math.floor((tx + radius) / self.cell)
        ky0 = math.floor((ty - radius) / self.cell)
        ky1 = math.floor((ty + radius) / self.cell)
        found = []
        for kx in range(kx0, kx1 + 1):
            for ky in range(ky0, ky1 + 1):
                found.extend(self.buckets.get((kx, ky), ()))
        if not found:
            return []
        found = np.array(sorted(found))
        d = np.hypot(self.centers[found, 0] - tx, self.centers[found, 1] - ty)
        return found[d <= radius].tolist()


def candidate_pool(i: int, v, centers, eps: float, grid: CenterGrid | None = None) -> list:
    """Parts ``j != i`` with ``|(psi_j - psi_i) - v| <= eps``, ascending."""
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    target = (centers[i, 0] + v[0], centers[i, 1] + v[1])
    if grid is None:
        d = np.hypot(centers[:, 0] - target[0], centers[:, 1] - target[1])
        hits = np.flatnonzero(d <= eps).tolist()
    else:
        hits = grid.query(target, eps)
    return [j for j in hits if j != i]


def reverse_residual(i: int, j: int, centers, offsets) -> float:
    """``min over v' in v_j of |(psi_i - psi_j) - v'|``; inf if ``v_j`` is empty."""
    if not len(offsets[j]):
        return math.inf
    vj = np.asarray(offsets[j], dtype=float).reshape(-1, 2)
    dx = centers[i][0] - centers[j][0]
    dy = centers[i][1] - centers[j][1]
    return float(np.hypot(dx - vj[:, 0], dy - vj[:, 1]).min())


def match_sibling(i: int, v, pool: Sequence[int], centers, offsets,
                  scores: Sequence[float]) -> Optional[int]:
    """Candidate whose reverse offsets best explain ``psi_i``.

    Ties go to the higher score, then the lower index. ``v`` is unused by
    the selection itself; it is kept for symmetry with the forward query.
    """
    best, best_key = None, None
    for j in pool:
        r = reverse_residual(i, j, centers, offsets)
        if math.isinf(r):
            continue
        key = (r, -scores[j], j)
        if best_key is None or key < best_key:
            best, best_key = j, key
    return best


def aggregate(preds: Sequence, cfg: AggregateConfig | None = None,
              return_graph: bool = False):
    """Bidirectional aggregation; returns ``(instances, discarded)``.

    Seeds are visited in descending score order (ties: lower index). Each
    unvisited seed resolves every one of its offsets against the still
    unvisited parts; matched parts are marked visited at once. A seed that
    matches nothing stays available to later seeds, unless it has no offsets
    at all (single-part objects), in which case it forms an instance alone.
    Parts left unvisited at the end are discarded.
    """
    cfg = cfg or AggregateConfig()
    n = len(preds)
    if n == 0:
        out = ([], [])
        return out + (CorrelationGraph(np.zeros((0, 2))),) if return_graph else out
    centers = np.array([corrected_center(p) for p in preds], dtype=float)
    eps = np.array([part_epsilon(p, cfg) for p in preds])
    offsets = [np.asarray(p.v, dtype=float).reshape(-1, 2) for p in preds]
    scores = [float(p.score) for p in preds]
    grid = CenterGrid(centers, max(float(eps.max()), 1e-6))
    graph = CorrelationGraph(centers)

    visited = np.zeros(n, dtype=bool)
    instances = []
    for s in sorted(range(n), key=lambda k: (-scores[k], k)):
        if visited[s]:
            continue
        members, edges = [s], []
        visited[s] = True
        for v in offsets[s]:
            pool = [j for j in candidate_pool(s, v, centers, eps[s], grid) if not visited[j]]
            j = match_sibling(s, v, pool, centers, offsets, scores)
            if j is None:
                continue
            if cfg.reverse_check and reverse_residual(s, j, centers, offsets) > eps[s]:
                continue
            visited[j] = True
            members.append(j)
            fwd = float(np.hypot(*(centers[j] - centers[s] - v)))
            edges.append((s, j, fwd))
        if len(members) == 1 and len(offsets[s]):
            visited[s] = False
            continue
        graph.edges.extend(edges)
        merged = union_all([preds[k].mask for k in members])
        instances.append(AssembledInstance(
            members, merged, len(members) == len(offsets[s]) + 1,
            float(np.mean([scores[k] for k in members]))))
    discarded = np.flatnonzero(~visited).tolist()
    if return_graph:
        return instances, discarded, graph
    return instances, discarded


def refine_mask(instance: AssembledInstance, radius: int) -> BinaryMask:
    """Close the seams between sibling parts."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    return closing(instance.merged_mask, radius)


# -- Hungarian baseline -------------------------------------------------------

def solve_assignment(cost) -> np.ndarray:
    """Minimum-cost perfect assignment of a square matrix; ``col[row]``.

    Shortest augmenting paths with row/column potentials (Kuhn-Munkres),
    O(n^3) in the worst case. Entries must be finite.
    """
    c = np.asarray(cost, dtype=float)
    n = c.shape[0]
    if c.ndim != 2 or c.shape[1] != n:
        raise ValueError("cost matrix must be square")
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix must be finite")
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    row_of = np.zeros(n + 1, dtype=np.int64)  # column j -> row (1-based, 0 = free)
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        row_of[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = row_of[j0]
            free = ~used[1:]
            cur = c[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[row_of[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if row_of[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            row_of[j0] = row_of[j1]
            j0 = j1
    col = np.zeros(n, dtype=np.int64)
    for j in range(1, n + 1):
        col[row_of[j] - 1] = j - 1
    return col


def baseline_costs(preds: Sequence, lam: float = 1.0, literal: bool = False) -> np.ndarray:
    """Pairwise ``dist(centroids) - lam * IoU(rotated boxes)``.

    With ``literal`` the weight ``dist + lam * IoU`` is negated so that the
    minimization maximizes it. The matrix is symmetric.
    """
    n = len(preds)
    cents = np.array([centroid(p.mask) for p in preds], dtype=float).reshape(-1, 2)
    dist = np.hypot(cents[:, None, 0] - cents[None, :, 0],
                    cents[:, None, 1] - cents[None, :, 1])
    overlap = np.zeros((n, n))
    if n:
        w, h = preds[0].mask.width, preds[0].mask.height
        boxes = [rasterize_box(mask_box(p.mask), w, h) for p in preds]
        bb = np.array([b.bbox for b in boxes], dtype=np.int64)
        # only pairs with overlapping extents can have nonzero IoU
        hit = ((bb[:, None, 0] < bb[None, :, 2]) & (bb[None, :, 0] < bb[:, None, 2])
               & (bb[:, None, 1] < bb[None, :, 3]) & (bb[None, :, 1] < bb[:, None, 3]))
        ii, jj = np.nonzero(np.triu(hit, 1))
        for i, j in zip(ii.tolist(), jj.tolist()):
            overlap[i, j] = overlap[j, i] = iou(boxes[i], boxes[j])
    if literal:
        return -(dist + lam * overlap)
    return dist - lam * overlap


def _pairs_from_assignment(col: np.ndarray, cost: np.ndarray, allowed: np.ndarray) -> list:
    """Disjoint pairs: mutual assignments first, then the rest by ascending cost."""
    n = len(col)
    taken = np.zeros(n, dtype=bool)
    pairs = []
    for i in range(n):
        j = int(col[i])
        if i < j and col[j] == i and allowed[i, j]:
            pairs.append((i, j))
            taken[i] = taken[j] = True
    rest = [(float(cost[i, int(col[i])]), i, int(col[i])) for i in range(n)
            if not taken[i] and allowed[i, int(col[i])]]
    for _, i, j in sorted(rest):
        if not taken[i] and not taken[j]:
            pairs.append((min(i, j), max(i, j)))
            taken[i] = taken[j] = True
    return pairs


def hungarian_baseline(preds: Sequence, lam: float = 1.0, n_parts: int = 2,
                       literal: bool = False) -> list:
    """Distance/overlap Hungarian pairing of parts into instances.

    Parts carry no role labels, so the assignment runs on the full ``n x n``
    cost matrix with self-pairs forbidden; mutually assigned rows form pairs
    first and the remaining rows pair greedily by cost. For ``n_parts > 2``
    groups are merged round by round, with group costs taken between merged
    masks, until they reach ``n_parts`` or stop changing. An odd part count
    with ``n_parts == 2`` warns :class:`OddPartCount`; leftovers become
    incomplete instances.
    """
    if n_parts < 1:
        raise ValueError("n_parts must be positive")
    n = len(preds)
    if n == 0:
        return []
    if n_parts == 2 and n % 2:
        warnings.warn(f"{n} parts cannot be paired exactly", OddPartCount, stacklevel=2)
    groups = [[i] for i in range(n)]
    while n_parts > 1:
        open_ = [g for g in groups if len(g) < n_parts]
        if len(open_) < 2:
            break
        if all(len(g) == 1 for g in open_):
            cost = baseline_costs([preds[g[0]] for g in open_], lam, literal)
        else:
            proxies = [_GroupProxy(union_all([preds[k].mask for k in g])) for g in open_]
            cost = baseline_costs(proxies, lam, literal)
        sizes = np.array([len(g) for g in open_])
        allowed = (sizes[:, None] + sizes[None, :]) <= n_parts
        np.fill_diagonal(allowed, False)
        if not allowed.any():
            break
        big = float(np.abs(cost).max()) * (len(open_) + 1) + 1.0
        col = solve_assignment(np.where(allowed, cost, big))
        pairs = _pairs_from_assignment(col, cost, allowed)
        if not pairs:
            break
        merged = set()
        for a, b in pairs:
            merged.update((a, b))
        done = [g for g in groups if len(g) >= n_parts]
        groups = done + [sorted(open_[a] + open_[b]) for a, b in pairs] + \
            [g for k, g in enumerate(open_) if k not in merged]
    groups.sort(key=lambda g: g[0])
    return [AssembledInstance(g, union_all([preds[k].mask for k in g]),
                              len(g) == n_parts,
                              float(np.mean([preds[k].score for k in g])))
            for g in groups]


@dataclass
class _GroupProxy:
    mask: BinaryMask
