"""Instance segmentation metrics and the smooth-L1 offset loss.

AP uses greedy score-ordered matching per scene and 101-point interpolated
precision over the dataset; mIoU averages the IoU of true positives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, NoGroundTruth
from .mask import BinaryMask, iou

RECALL_POINTS = np.linspace(0.0, 1.0, 101)


@dataclass
class MatchResult:
    """Outcome of matching one scene's predictions to its ground truth.

    ``scores[k]`` is the score of prediction ``k``; ``n_gt`` the number of
    ground-truth masks.
    """

    tp: list = field(default_factory=list)
    fp: list = field(default_factory=list)
    fn: list = field(default_factory=list)
    scores: list = field(default_factory=list)
    n_gt: int = 0


def _boxes_overlap(a: BinaryMask, b: BinaryMask) -> bool:
    ax0, ay0, ax1, ay1 = a.bbox
    bx0, by0, bx1, by1 = b.bbox
    return ax0 < bx1 and bx0 < ax1 and ay0 < by1 and by0 < ay1


def match_instances(preds: Sequence, gts: Sequence[BinaryMask],
                    iou_thresh: float = 0.5) -> MatchResult:
    """Greedy matching; ``preds`` is a sequence of ``(mask, score)``.

    Predictions are taken in descending score (ties: lower index); each
    claims the unclaimed ground truth of highest IoU (ties: lower index) if
    that IoU exceeds ``iou_thresh``.
    """
    if not 0.0 < iou_thresh < 1.0:
        raise ValueError("iou_thresh must lie in (0, 1)")
    shapes = {m.shape for m, _ in preds} | {g.shape for g in gts}
    if len(shapes) > 1:
        raise DimensionMismatch(f"masks on different canvases: {sorted(shapes)}")
    scores = [float(s) for _, s in preds]
    claimed = np.zeros(len(gts), dtype=bool)
    res = MatchResult(scores=scores, n_gt=len(gts))
    for k in sorted(range(len(preds)), key=lambda i: (-scores[i], i)):
        mask = preds[k][0]
        best, best_iou = -1, iou_thresh
        for g, gt in enumerate(gts):
            if claimed[g] or not _boxes_overlap(mask, gt):
                continue
            val = iou(mask, gt)
            if val > best_iou:
                best, best_iou = g, val
        if best < 0:
            res.fp.append(k)
        else:
            claimed[best] = True
            res.tp.append((k, best, best_iou))
    res.fn = np.flatnonzero(~claimed).tolist()
    assert len({g for _, g, _ in res.tp}) == len(res.tp), "ground truth matched twice"
    return res


def precision_recall(results: Sequence[MatchResult]):
    """Cumulative precision and recall over the merged, score-sorted predictions.

    Predictions from all scenes are ordered by ``(-score, scene, index)``.
    """
    if isinstance(results, MatchResult):
        results = [results]
    n_gt = sum(r.n_gt for r in results)
    if n_gt == 0:
        raise NoGroundTruth("no ground-truth instances")
    rows = []
    for s, r in enumerate(results):
        hits = {k for k, _, _ in r.tp}
        for k, score in enumerate(r.scores):
            rows.append((-score, s, k, k in hits))
    rows.sort()
    is_tp = np.array([t for *_, t in rows], dtype=float)
    tp = np.cumsum(is_tp)
    fp = np.cumsum(1.0 - is_tp)
    precision = tp / np.maximum(tp + fp, 1.0)
    recall = tp / n_gt
    return precision, recall


def average_precision(results: Sequence[MatchResult]) -> float:
    """Area under the PR curve, 101-point interpolated.

    At each recall level ``r`` in ``0, 0.01, ..., 1`` the precision is the
    best precision reached at any recall ``>= r`` (0 when unreached).
    """
    precision, recall = precision_recall(results)
    if len(precision) == 0:
        return 0.0
    # running max from the right makes precision monotone in recall
    env = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_POINTS - 1e-12, side="left")
    sampled = np.where(idx < len(env), env[np.minimum(idx, len(env) - 1)], 0.0)
    return float(sampled.sum() / len(RECALL_POINTS))


def mean_iou(results) -> float:
    """Mean IoU of true positives; 0 when there are none."""
    if isinstance(results, MatchResult):
        results = [results]
    vals = [v for r in results for _, _, v in r.tp]
    return float(np.mean(vals)) if vals else 0.0


def smooth_l1(o, o_hat) -> float:
    """Sum over components of ``0.5 d^2`` if ``|d| < 1`` else ``|d| - 0.5``."""
    a = np.asarray(o, dtype=float)
    b = np.asarray(o_hat, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"offset shapes differ: {a.shape} vs {b.shape}")
    d = np.abs(a - b)
    return float(np.where(d < 1.0, 0.5 * d * d, d - 0.5).sum())


def evaluate(scenes_preds: Sequence, scenes_gts: Sequence) -> dict:
    """Dataset metrics: ``{ap50, ap75, miou, n_tp, n_fp, n_fn}``.

    ``scenes_preds[s]`` lists ``(mask, score)`` for scene ``s`` and
    ``scenes_gts[s]`` its ground-truth masks. Counts and mIoU are taken at
    IoU 0.5.
    """
    if len(scenes_preds) != len(scenes_gts):
        raise ValueError("prediction and ground-truth scene counts differ")
    r50 = [match_instances(p, g, 0.5) for p, g in zip(scenes_preds, scenes_gts)]
    r75 = [match_instances(p, g, 0.75) for p, g in zip(scenes_preds, scenes_gts)]
    return {
        "ap50": average_precision(r50),
        "ap75": average_precision(r75),
        "miou": mean_iou(r50),
        "n_tp": sum(len(r.tp) for r in r50),
        "n_fp": sum(len(r.fp) for r in r50),
        "n_fn": sum(len(r.fn) for r in r50),
    }
