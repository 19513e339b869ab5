"""Brute-force oracles and construction shorthand shared across test modules.

Everything here is deliberately naive: O(n^3) scans, BFS, direct definition
transcriptions.  The package code under test must agree with these on every
instance; speed is irrelevant.
"""
from __future__ import annotations

import numpy as np

from ppstat import Metric, Window, distance
from ppstat.core import PointPattern


def pattern_of(points, window=None, metric=None, label=None) -> PointPattern:
    """Build a pattern from raw coordinates with a covering box window."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    d = pts.shape[1]
    if window is None:
        lo = np.floor(pts.min(axis=0)) - 1.0 if len(pts) else np.zeros(d)
        hi = np.ceil(pts.max(axis=0)) + 1.0 if len(pts) else np.ones(d)
        window = Window.box([(float(a), float(b)) for a, b in zip(lo, hi)])
    if metric is None:
        metric = Metric.euclidean()
    return PointPattern(d, window, metric, pts, label)


def oracle_match(red: PointPattern, blue: PointPattern | None = None) -> set:
    """Iterated globally-closest-pair matching, O(n^3).

    The globally closest available pair is automatically mutually nearest,
    so repeatedly matching and removing it realizes the iterated
    mutually-nearest construction.
    """
    one = blue is None
    a = red.points
    b = red.points if one else blue.points
    met = red.metric
    na, nb = len(a), len(b)
    D = np.array([[distance(met, a[i], b[j]) for j in range(nb)]
                  for i in range(na)]).reshape(na, nb)
    alive_a = np.ones(na, bool)
    alive_b = np.ones(nb, bool)
    pairs = set()
    while True:
        best = None
        for i in range(na):
            if not alive_a[i]:
                continue
            for j in range(nb):
                if not alive_b[j] or (one and i == j):
                    continue
                if best is None or D[i, j] < best[0]:
                    best = (D[i, j], i, j)
        if best is None:
            break
        _, i, j = best
        pairs.add((min(i, j), max(i, j)) if one else (i, j))
        alive_a[i] = alive_b[j] = False
        if one:
            alive_a[j] = alive_b[i] = False
    return pairs


def oracle_clusters(pattern: PointPattern, radius: float) -> list[frozenset]:
    """BFS connected components of the ball-overlap graph (distance < 2R)."""
    pts = pattern.points
    n = len(pts)
    D = pattern.metric.pairwise(pts, pts)
    adj = D < 2.0 * radius
    seen = np.zeros(n, bool)
    comps = []
    for s in range(n):
        if seen[s]:
            continue
        comp = []
        queue = [s]
        seen[s] = True
        while queue:
            i = queue.pop()
            comp.append(i)
            for j in np.flatnonzero(adj[i]):
                if not seen[j]:
                    seen[j] = True
                    queue.append(int(j))
        comps.append(frozenset(comp))
    return comps


def oracle_spanning(pattern: PointPattern, radius: float, mode: str,
                    axis: int | None = None) -> int:
    """Spanning-cluster count from the BFS partition and direct face tests."""
    pts = pattern.points
    d = pattern.dimension
    bounds = pattern.window.bounds
    count = 0
    for comp in oracle_clusters(pattern, radius):
        idx = np.fromiter(comp, int)
        lo_touch = [bool(np.any(pts[idx, i] - bounds[i][0] < radius))
                    for i in range(d)]
        hi_touch = [bool(np.any(bounds[i][1] - pts[idx, i] < radius))
                    for i in range(d)]
        if mode == "touch-all-faces":
            ok = all(lo_touch) and all(hi_touch)
        else:
            axes = range(d) if axis is None else [axis]
            ok = any(lo_touch[i] and hi_touch[i] for i in axes)
        count += ok
    return count


def oracle_prefer_set(pattern: PointPattern, matching, y) -> set:
    """Indices strictly preferring location y over their current partner."""
    y = np.asarray(y, float)
    md = matching.match_distances()
    out = set()
    for i, x in enumerate(pattern.points):
        if np.array_equal(x, y):
            continue
        if distance(pattern.metric, x, y) < md[i]:
            out.add(i)
    return out
