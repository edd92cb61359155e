"""Pareto front quality indicators and Friedman mean-rank tabulation.

Hypervolume is the exact 2-D staircase sweep against a reference point that
every front point must strictly dominate. IGD and Spread work in objective
space normalized to [0, 1] per objective over the union of the inputs; Spread
uses the own-extremes convention (first/last gap terms set to zero), so an
evenly spaced front scores 0. Friedman ranks are per-case with average ranks
on ties, oriented so that better performance gets the higher rank.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata


def _as_points(front: Iterable) -> list[tuple[float, float]]:
    pts = [(float(p[0]), float(p[1])) for p in front]
    for p in pts:
        if not (math.isfinite(p[0]) and math.isfinite(p[1])):
            raise ValueError(f"non-finite objective point {p}")
    return pts


def nondominated(points: Iterable) -> list[tuple[float, float]]:
    """Deduplicated minimization-nondominated subset, sorted by first objective."""
    pts = sorted(set(_as_points(points)))
    return [
        p for p in pts
        if not any(q != p and q[0] <= p[0] and q[1] <= p[1] for q in pts)
    ]


def hypervolume(front: Iterable, reference: Sequence[float]) -> float:
    """Exact dominated area between the front staircase and the reference."""
    pts = _as_points(front)
    if not pts:
        return 0.0
    rx, ry = float(reference[0]), float(reference[1])
    for x, y in pts:
        if not (x < rx and y < ry):
            raise ValueError(f"front point ({x}, {y}) does not dominate the reference ({rx}, {ry})")
    pts = nondominated(pts)
    area = 0.0
    prev_y = ry
    for x, y in pts:  # sorted by x ascending, y strictly descending
        area += (rx - x) * (prev_y - y)
        prev_y = y
    return area


def _normalizer(points: list[tuple[float, float]]):
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    dx = (x1 - x0) or 1.0
    dy = (y1 - y0) or 1.0
    return lambda p: ((p[0] - x0) / dx, (p[1] - y0) / dy)


def igd(front: Iterable, reference_front: Iterable) -> float:
    """Mean distance from each reference point to its nearest front point."""
    f = _as_points(front)
    r = _as_points(reference_front)
    if not f or not r:
        raise ValueError("igd requires non-empty fronts")
    norm = _normalizer(f + r)
    fn = [norm(p) for p in f]
    rn = [norm(p) for p in r]
    total = 0.0
    for q in rn:
        total += min(math.dist(q, p) for p in fn)
    return total / len(rn)


def spread(front: Iterable) -> float:
    """Gap-uniformity of the front; 0 for evenly spaced points."""
    pts = nondominated(front)
    if len(pts) < 2:
        raise ValueError("spread undefined for fronts with fewer than two distinct points")
    norm = _normalizer(pts)
    pn = sorted(norm(p) for p in pts)
    gaps = [math.dist(pn[i], pn[i + 1]) for i in range(len(pn) - 1)]
    mean_gap = sum(gaps) / len(gaps)
    if mean_gap == 0.0:
        return 0.0
    dev = sum(abs(g - mean_gap) for g in gaps)
    return dev / (len(gaps) * mean_gap)


def friedman_mean_ranks(
    scores: Sequence[Sequence[float]], higher_is_better: bool
) -> tuple[list[float], float]:
    """Per-algorithm mean ranks over cases plus the Friedman chi-square.

    ``scores[a][c]`` is algorithm ``a``'s score on case ``c``. Ranks are
    assigned per case with average ranks on ties; the better the performance,
    the higher the rank (rank k = best of k algorithms).
    """
    k = len(scores)
    if k < 2:
        raise ValueError("need at least two algorithms")
    n = len(scores[0])
    if n < 2:
        raise ValueError("need at least two cases")
    if any(len(row) != n for row in scores):
        raise ValueError("score matrix is ragged")

    mat = np.asarray(scores, dtype=float)
    if not higher_is_better:
        mat = -mat
    ranks = np.vstack([rankdata(mat[:, c]) for c in range(n)]).T  # (k, n)
    mean_ranks = ranks.mean(axis=1)
    chi2 = 12.0 * n / (k * (k + 1)) * float(np.sum((mean_ranks - (k + 1) / 2.0) ** 2))
    return [float(r) for r in mean_ranks], chi2


def hv_reference(fronts: Iterable[Iterable], factor: float = 1.1) -> tuple[float, float]:
    """Reference point: factor x componentwise nadir of the union of fronts."""
    pts: list[tuple[float, float]] = []
    for f in fronts:
        pts.extend(_as_points(f))
    if not pts:
        raise ValueError("no points to build a reference from")
    return (factor * max(p[0] for p in pts), factor * max(p[1] for p in pts))


def merged_reference_front(fronts: Iterable[Iterable]) -> list[tuple[float, float]]:
    """Nondominated union of the given fronts (the IGD reference)."""
    pts: list[tuple[float, float]] = []
    for f in fronts:
        pts.extend(_as_points(f))
    if not pts:
        raise ValueError("no points to merge")
    return nondominated(pts)
