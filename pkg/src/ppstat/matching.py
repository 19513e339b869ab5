"""Stable matching of point patterns by iterated mutually-nearest pairs.

The matching repeatedly pairs and removes the closest mutually-nearest
pair; under non-equidistance the result is the unique stable matching,
independent of processing order.  One-colour mode matches a pattern
against itself, two-colour mode matches red points to blue points.

Distance ties that would let the outcome depend on processing order are
rejected with TieError.  Parallel ties between vertex-disjoint pairs
(the shifted-lattice pairing is the canonical case) are harmless and
accepted: every processing order yields the same matching.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .core import Metric, PointPattern, PPStatError

_TIE_REL_TOL = 1e-9


class TieError(PPStatError):
    """Raised when an equidistant tie makes the stable matching ambiguous."""


def _is_tie(d1: float, d2: float) -> bool:
    big = max(d1, d2)
    return big > 0 and abs(d1 - d2) <= _TIE_REL_TOL * big


# ---------------------------------------------------------------------------
# nearest-neighbour index with an aliveness mask


class _NNIndex:
    """Nearest alive point queries over a fixed set.

    Euclidean and toroidal metrics use a k-d tree (periodic boxes for the
    torus); the hyperbolic disc falls back to direct distance rows.
    """

    def __init__(self, points: np.ndarray, metric: Metric):
        self.points = points
        self.metric = metric
        self.n = len(points)
        self.tree = None
        self.periods = None
        if self.n and metric.kind == "euclidean":
            self.tree = cKDTree(points)
        elif self.n and metric.kind == "toroidal":
            self.periods = np.array(metric.periods)
            wrapped = np.mod(points, self.periods)
            # guard against coordinates landing exactly on the period
            wrapped[wrapped >= self.periods] = 0.0
            self.tree = cKDTree(wrapped, boxsize=self.periods)

    def _wrap(self, x: np.ndarray) -> np.ndarray:
        if self.periods is None:
            return x
        w = np.mod(x, self.periods)
        w[w >= self.periods] = 0.0
        return w

    def batch_nearest(self, queries: np.ndarray, exclude_self: bool) -> tuple[np.ndarray, np.ndarray]:
        """Initial nearest neighbours when every point is alive."""
        if self.tree is not None:
            k = 2 if exclude_self else 1
            if self.n < k:
                return (np.full(len(queries), np.inf),
                        np.full(len(queries), -1, dtype=int))
            dd, jj = self.tree.query(self._wrap(np.array(queries)), k=k)
            if k == 2:
                return dd[:, 1], jj[:, 1]
            return dd.ravel(), jj.ravel()
        dist = self.metric.pairwise(queries, self.points)
        if exclude_self:
            np.fill_diagonal(dist, np.inf)
        if self.n == 0 or dist.shape[1] == 0:
            return (np.full(len(queries), np.inf),
                    np.full(len(queries), -1, dtype=int))
        jj = np.argmin(dist, axis=1)
        return dist[np.arange(len(queries)), jj], jj

    def nearest_alive(self, x: np.ndarray, alive: np.ndarray,
                      exclude: int = -1) -> tuple[int, float] | None:
        if self.n == 0:
            return None
        if self.tree is None:
            d = self.metric.pairwise(x[None, :], self.points)[0].copy()
            if exclude >= 0:
                d[exclude] = np.inf
            d[~alive] = np.inf
            j = int(np.argmin(d))
            return None if math.isinf(d[j]) else (j, float(d[j]))
        q = self._wrap(x.copy())
        k = 4
        while True:
            k_eff = min(k, self.n)
            dd, jj = self.tree.query(q, k=k_eff)
            dd = np.atleast_1d(dd)
            jj = np.atleast_1d(jj)
            for d_i, j_i in zip(dd, jj):
                if j_i >= self.n:
                    return None
                if j_i == exclude or not alive[j_i]:
                    continue
                return int(j_i), float(d_i)
            if k_eff == self.n:
                return None
            k *= 4


# ---------------------------------------------------------------------------
# matching result


@dataclass(frozen=True)
class Matching:
    """Result of a stable matching run.

    pairs holds index pairs; one-colour pairs index a single pattern with
    i < j, two-colour pairs are (red index, blue index).  distances align
    with pairs.  Unmatched indices are listed per side; one-colour
    matchings leave at most one point unmatched on valid input.
    """

    mode: str
    pairs: tuple[tuple[int, int], ...]
    distances: tuple[float, ...]
    unmatched_red: tuple[int, ...]
    unmatched_blue: tuple[int, ...]
    n_red: int
    n_blue: int
    metric: Metric

    def match_distances(self, side: str = "red") -> np.ndarray:
        """Per-point match distance, inf where unmatched."""
        n = self.n_red if side == "red" else self.n_blue
        md = np.full(n, np.inf)
        for (i, j), d in zip(self.pairs, self.distances):
            if self.mode == "one-colour":
                md[i] = md[j] = d
            elif side == "red":
                md[i] = d
            else:
                md[j] = d
        return md

    def partner_of(self, side: str = "red") -> np.ndarray:
        n = self.n_red if side == "red" else self.n_blue
        partner = np.full(n, -1, dtype=int)
        for i, j in self.pairs:
            if self.mode == "one-colour":
                partner[i], partner[j] = j, i
            elif side == "red":
                partner[i] = j
            else:
                partner[j] = i
        return partner

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "metric": self.metric.kind,
            "pairs": [list(p) for p in self.pairs],
            "unmatched": {"red": list(self.unmatched_red),
                          "blue": list(self.unmatched_blue)},
        }


# ---------------------------------------------------------------------------
# the matching algorithm


def stable_match(red: PointPattern, blue: PointPattern | None = None,
                 metric: Metric | None = None) -> Matching:
    """Match mutually-nearest pairs until none remain.

    The heap holds one live candidacy per point, targeting its nearest
    available partner.  Because removals never shrink anyone's nearest
    distance, the popped pair with both endpoints available is the global
    closest pair, hence mutually nearest; candidacies whose target has
    been consumed are refreshed and re-queued.  Popping a candidacy whose
    distance equals the distance its consumed target was matched at
    exposes an order-dependent tie and raises TieError.
    """
    mode = "one-colour" if blue is None else "two-colour"
    metric = metric if metric is not None else red.metric
    if blue is not None:
        if blue.dimension != red.dimension:
            raise ValueError("red and blue dimensions differ")
        if blue.metric != red.metric:
            raise ValueError("red and blue metrics differ")
    points = [red.points, blue.points if blue is not None else red.points]
    n = [len(points[0]), len(points[1])]
    # index[s] answers queries from side s, i.e. over the opposite side's points
    if mode == "one-colour":
        index = [_NNIndex(points[0], metric)] * 2
    else:
        index = [_NNIndex(points[1], metric), _NNIndex(points[0], metric)]
    alive = [np.ones(n[0], dtype=bool), np.ones(n[1], dtype=bool)]
    if mode == "one-colour":
        alive[1] = alive[0]
    partner = [np.full(n[0], -1, dtype=int), np.full(n[1], -1, dtype=int)]
    matched_at = [np.full(n[0], np.nan), np.full(n[1], np.nan)]
    if mode == "one-colour":
        partner[1] = partner[0]
        matched_at[1] = matched_at[0]

    heap: list[tuple[float, int, int, int]] = []
    sides = (0,) if mode == "one-colour" else (0, 1)
    for s in sides:
        if n[s] == 0 or index[s].n == 0:
            continue
        dd, jj = index[s].batch_nearest(points[s], exclude_self=(mode == "one-colour"))
        for i in range(n[s]):
            if jj[i] >= 0 and math.isfinite(dd[i]):
                heap.append((float(dd[i]), s, i, int(jj[i])))
    heapq.heapify(heap)

    pairs: list[tuple[int, int]] = []
    dists: list[float] = []
    while heap:
        d, s, i, j = heapq.heappop(heap)
        t = s if mode == "one-colour" else 1 - s
        if not alive[s][i]:
            if partner[s][i] == j:
                continue  # second half of a mutual pair, already matched
            if _is_tie(d, matched_at[s][i]):
                raise TieError(f"equidistant tie at distance {d!r}")
            continue
        if alive[t][j]:
            alive[s][i] = alive[t][j] = False
            partner[s][i], partner[t][j] = j, i
            matched_at[s][i] = matched_at[t][j] = d
            if mode == "one-colour" or s == 0:
                pairs.append((i, j))
            else:
                pairs.append((j, i))
            dists.append(d)
            continue
        if _is_tie(d, matched_at[t][j]):
            raise TieError(f"equidistant tie at distance {d!r}")
        refresh = index[s].nearest_alive(points[s][i], alive[t],
                                         exclude=i if mode == "one-colour" else -1)
        if refresh is not None:
            jj2, d2 = refresh[0], refresh[1]
            heapq.heappush(heap, (d2, s, i, jj2))

    if mode == "one-colour":
        pairs = [(min(i, j), max(i, j)) for i, j in pairs]
        unmatched_red = tuple(int(k) for k in np.flatnonzero(alive[0]))
        unmatched_blue = ()
        n_blue = n[0]
    else:
        unmatched_red = tuple(int(k) for k in np.flatnonzero(alive[0]))
        unmatched_blue = tuple(int(k) for k in np.flatnonzero(alive[1]))
        n_blue = n[1]
    order = np.argsort([p[0] for p in pairs], kind="stable") if pairs else []
    pairs = [pairs[k] for k in order]
    dists = [dists[k] for k in order]
    return Matching(mode=mode, pairs=tuple(pairs), distances=tuple(dists),
                    unmatched_red=unmatched_red, unmatched_blue=unmatched_blue,
                    n_red=n[0], n_blue=n_blue, metric=metric)


# ---------------------------------------------------------------------------
# verification and structure checks


def verify_stability(matching: Matching, red: PointPattern,
                     blue: PointPattern | None = None,
                     chunk: int = 512) -> tuple[bool, tuple | None]:
    """Scan all cross pairs for a stability violation.

    A violation is a non-matched pair strictly closer than both points'
    own match distances (unmatched counts as infinitely far).  Returns
    (True, None) or (False, (i, j, d, bound)) for the first offence.
    """
    A = red.points
    B = blue.points if blue is not None else A
    md_a = matching.match_distances("red")
    md_b = matching.match_distances("blue" if matching.mode == "two-colour" else "red")
    pa = matching.partner_of("red")
    metric = matching.metric
    one = matching.mode == "one-colour"
    for start in range(0, len(A), chunk):
        stop = min(start + chunk, len(A))
        D = metric.pairwise(A[start:stop], B)
        bound = np.minimum(md_a[start:stop, None], md_b[None, :])
        bad = D < bound
        rows = np.arange(start, stop)
        if one:
            bad[rows - start, rows] = False
        sel = pa[start:stop] >= 0
        bad[np.flatnonzero(sel), pa[start:stop][sel]] = False
        hit = np.argwhere(bad)
        if len(hit):
            i, j = int(hit[0, 0]) + start, int(hit[0, 1])
            return False, (i, j, float(D[i - start, j]), float(bound[i - start, j]))
    return True, None


def check_non_equidistant(pattern: PointPattern,
                          rel_tol: float = _TIE_REL_TOL) -> tuple[bool, tuple | None]:
    """Check all pairwise distances differ by a relative margin above rel_tol.

    Returns (True, None) when non-equidistant, else (False, witness) with
    the two offending distances.
    """
    n = len(pattern)
    if n < 2:
        return True, None
    D = pattern.metric.pairwise(pattern.points, pattern.points)
    iu = np.triu_indices(n, k=1)
    flat = np.sort(D[iu])
    gaps = np.diff(flat)
    rel = gaps / np.maximum(flat[1:], np.finfo(float).tiny)
    bad = np.flatnonzero(rel <= rel_tol)
    if len(bad):
        k = int(bad[0])
        return False, (float(flat[k]), float(flat[k + 1]))
    return True, None


def check_descending_chain(pattern: PointPattern, max_length: int = 32) -> int:
    """Longest strictly-descending chain found, capped at max_length.

    A chain visits distinct points along edges of strictly decreasing
    length.  The search walks each point's nearest neighbours (4 of
    them) under a step budget, which finds the chains that matter in
    practice but makes the result a lower bound: absence of long chains
    here is evidence, not proof.  The neighbour cutoff matters: with
    wide steps allowed, long descending chains exist in any large
    sample for trivial counting reasons.
    """
    if not 1 <= max_length <= 64:
        raise ValueError("max_length must lie in [1, 64]")
    n = len(pattern)
    if n < 2:
        return min(n, max_length)
    k = min(n - 1, 4)
    D = pattern.metric.pairwise(pattern.points, pattern.points)
    np.fill_diagonal(D, np.inf)
    order = np.argsort(D, axis=1, kind="stable")[:, :k]
    nbrs = [[(float(D[i, j]), int(j)) for j in order[i]] for i in range(n)]
    best = 1
    budget = 500_000

    def walk(at: int, step: float, visited: set[int], depth: int) -> None:
        nonlocal best, budget
        best = max(best, depth)
        if depth >= max_length or budget <= 0:
            return
        for d_next, nxt in nbrs[at]:
            if d_next >= step:
                break
            if nxt in visited:
                continue
            budget -= 1
            visited.add(nxt)
            walk(nxt, d_next, visited, depth + 1)
            visited.remove(nxt)

    for i in range(n):
        for d0, j in nbrs[i]:
            if best >= max_length or budget <= 0:
                return min(best, max_length)
            walk(j, d0, {i, j}, 2)
    return min(best, max_length)


def compute_H(pattern: PointPattern, matching: Matching, epsilon: float,
              center: Sequence[float]) -> np.ndarray:
    """Indices whose match distance exceeds their distance to `center` less epsilon.

    Unmatched points always qualify.  For two-colour matchings the
    pattern is the red side.
    """
    md = matching.match_distances("red")
    if len(md) != len(pattern):
        raise ValueError("matching size does not fit the pattern")
    c = np.asarray(center, dtype=float)
    dc = matching.metric.pairwise(pattern.points, c[None, :])[:, 0]
    return np.flatnonzero(md > dc - epsilon)


def compute_N(pattern: PointPattern, matching: Matching,
              y: Sequence[float]) -> np.ndarray:
    """Indices that would rather sit at location y than keep their partner.

    These are the points, other than one exactly at y, whose match
    distance exceeds their distance to y; unmatched points qualify.
    """
    md = matching.match_distances("red")
    if len(md) != len(pattern):
        raise ValueError("matching size does not fit the pattern")
    loc = np.asarray(y, dtype=float)
    d = matching.metric.pairwise(pattern.points, loc[None, :])[:, 0]
    at_y = np.all(pattern.points == loc, axis=1)
    return np.flatnonzero((md > d) & ~at_y)


# ---------------------------------------------------------------------------
# empirical typical-point statistics


@dataclass(frozen=True, eq=False)
class PalmMatchStats:
    """Empirical law of the typical matched point's partner distance.

    Distances are collected per matched point (both endpoints in
    one-colour mode, red endpoints in two-colour mode), optionally
    discarding points within `margin` of a non-periodic boundary.
    """

    distances: np.ndarray          # sorted
    dimension: int
    n_observations: int
    n_excluded: int
    n_unmatched: int
    mean: float
    mean_se: float
    moment_dim: float              # E X^d for the pattern dimension d
    moment_dim_se: float
    tail_grid: np.ndarray
    tail_probs: np.ndarray

    def cdf(self, r: float) -> float:
        if self.n_observations == 0:
            return float("nan")
        return float(np.searchsorted(self.distances, r, side="right")) / self.n_observations

    def tail(self, r: float) -> float:
        return 1.0 - self.cdf(r)

    def moment(self, k: float) -> float:
        return float(np.mean(self.distances**k)) if self.n_observations else float("nan")

    def summary(self) -> dict:
        return {
            "n_observations": self.n_observations,
            "n_excluded": self.n_excluded,
            "n_unmatched": self.n_unmatched,
            "mean": self.mean,
            "mean_se": self.mean_se,
            "moment_dim": self.moment_dim,
            "moment_dim_se": self.moment_dim_se,
            "tail": [[float(r), float(p)]
                     for r, p in zip(self.tail_grid, self.tail_probs)],
        }

    def cdf_rows(self) -> list[tuple[float, float, int]]:
        """(r, F(r), cumulative count) rows at each observed distance."""
        rows = []
        for k, r in enumerate(self.distances, start=1):
            rows.append((float(r), k / self.n_observations, k))
        return rows


def _boundary_distance(points: np.ndarray, pattern: PointPattern) -> np.ndarray:
    w = pattern.window
    if w.kind == "box":
        lo = np.array([a for a, _ in w.bounds])
        hi = np.array([b for _, b in w.bounds])
        return np.minimum((points - lo).min(axis=1), (hi - points).min(axis=1))
    c = np.array(w.center)
    return w.radius - np.linalg.norm(points - c, axis=1)


def match_stats(matching: Matching, red: PointPattern,
                blue: PointPattern | None = None,
                boundary_margin: float = 0.0,
                tail_grid: Sequence[float] | None = None) -> PalmMatchStats:
    """Summarise match distances of the typical point.

    Periodic metrics have no boundary, so the margin only applies to
    euclidean windows.  The tail table reports P(X > r) on the given
    grid (default: 32 evenly spaced radii up to the largest distance).
    """
    md = matching.match_distances("red")
    n_unmatched = len(matching.unmatched_red) + len(matching.unmatched_blue)
    pts = red.points
    dist = md
    matched = np.isfinite(dist)
    pts, dist = pts[matched], dist[matched]
    excluded = 0
    if boundary_margin > 0 and matching.metric.kind != "toroidal":
        keep = _boundary_distance(pts, red) >= boundary_margin
        excluded = int(np.sum(~keep))
        if excluded and not np.any(keep):
            raise ValueError("boundary margin excluded every matched point")
        pts, dist = pts[keep], dist[keep]
    dist = np.sort(dist)
    n = len(dist)
    if tail_grid is None:
        top = float(dist[-1]) if n else 1.0
        tail_grid = np.linspace(0.0, top, 33)[1:]
    tail_grid = np.asarray(tail_grid, dtype=float)
    if n:
        tail_probs = 1.0 - np.searchsorted(dist, tail_grid, side="right") / n
        mean = float(np.mean(dist))
        mean_se = float(np.std(dist, ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
        powd = dist**red.dimension
        mdim = float(np.mean(powd))
        mdim_se = float(np.std(powd, ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    else:
        tail_probs = np.full(len(tail_grid), np.nan)
        mean = mean_se = mdim = mdim_se = float("nan")
    return PalmMatchStats(distances=dist, dimension=red.dimension,
                          n_observations=n, n_excluded=excluded,
                          n_unmatched=n_unmatched, mean=mean, mean_se=mean_se,
                          moment_dim=mdim, moment_dim_se=mdim_se,
                          tail_grid=tail_grid, tail_probs=tail_probs)
