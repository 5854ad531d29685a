"""Runtime scaling of bidirectional aggregation against the Hungarian baseline."""

from __future__ import annotations

import csv
import time
from typing import Sequence

import numpy as np

from .aggregate import AggregateConfig, aggregate, hungarian_baseline
from .fixtures import lattice_scene, shape_template
from .scenegen import ground_truth_predictions

DEFAULT_COUNTS = (100, 400, 1600, 6400)
ALGOS = ("bidir", "hungarian")


def synthetic_parts(n_parts: int, seed: int = 0, unit: int = 3) -> list:
    """Oracle predictions of ``n_parts // 2`` two-part L instances on a lattice."""
    t = shape_template("L", unit)
    scene = lattice_scene(t, max(1, n_parts // t.n_parts), seed=seed)
    return ground_truth_predictions(scene, 0.0)


def time_algo(algo: str, preds, repeats: int = 1) -> float:
    """Best wall time of ``repeats`` runs, in seconds."""
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        if algo == "bidir":
            aggregate(preds, AggregateConfig())
        elif algo == "hungarian":
            hungarian_baseline(preds, 1.0, 2)
        else:
            raise ValueError(f"unknown algorithm {algo!r}")
        best = min(best, time.perf_counter() - t0)
    return float(best)


def run_bench(counts: Sequence[int] = DEFAULT_COUNTS, algos: Sequence[str] = ALGOS,
              seed: int = 0, repeats: int = 1) -> list:
    """Rows ``(n, algo, seconds)``, one per count and algorithm."""
    rows = []
    for n in counts:
        preds = synthetic_parts(int(n), seed)
        for algo in algos:
            rows.append((len(preds), algo, time_algo(algo, preds, repeats)))
    return rows


def loglog_slope(ns, times) -> float:
    """Least-squares slope of ``log(time)`` against ``log(n)``."""
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(times, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def slopes(rows) -> dict:
    out = {}
    for algo in sorted({a for _, a, _ in rows}):
        pts = [(n, t) for n, a, t in rows if a == algo]
        if len(pts) >= 2:
            out[algo] = loglog_slope([n for n, _ in pts], [t for _, t in pts])
    return out


def write_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "algo", "seconds"])
        for n, algo, t in rows:
            w.writerow([n, algo, f"{t:.6f}"])
