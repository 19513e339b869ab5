"""Core geometry and pattern types shared by every other module.

A point pattern is a finite simple point set in a box or disc window,
together with the metric its analysis should use.  Patterns are immutable
and canonically ordered so that equality, hashing of serialized content,
and downstream algorithms are all reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class PPStatError(Exception):
    """Base class for computation errors raised by this package."""


# ---------------------------------------------------------------------------
# random number addressing


@dataclass(frozen=True)
class RngSpec:
    """Addressable randomness: a 64-bit seed plus a 64-bit stream id.

    The same (seed, stream) pair always yields the same draws.  Distinct
    streams behave as independent sequences, so replicate loops and
    multi-purpose samplers can derive as many generators as they need
    without coordination.
    """

    seed: int
    stream: int = 0

    def __post_init__(self) -> None:
        for name in ("seed", "stream"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or not 0 <= int(v) < 2**64:
                raise ValueError(f"{name} must be an integer in [0, 2^64)")

    def sequence(self, *tags: int) -> np.random.SeedSequence:
        """SeedSequence keyed by (seed, stream) plus optional purpose tags."""
        entropy = (int(self.seed), int(self.stream)) + tuple(int(t) for t in tags)
        return np.random.SeedSequence(entropy)

    def generator(self, *tags: int) -> np.random.Generator:
        """Fresh PCG64 generator for the given purpose tags."""
        return np.random.default_rng(self.sequence(*tags))

    def fork(self, *tags: int) -> RngSpec:
        """Derive an independent RngSpec, e.g. one per replicate."""
        words = self.sequence(*tags).generate_state(4, np.uint64)
        return RngSpec(int(words[0]), int(words[1]))

    def with_stream(self, stream: int) -> RngSpec:
        return RngSpec(self.seed, stream)


# ---------------------------------------------------------------------------
# windows


@dataclass(frozen=True)
class Window:
    """Observation window: an axis-aligned box or a centred disc.

    Box containment is half-open, [a_i, b_i) on each axis, so that unit
    lattice cells tile an integer-sided window without double counting.
    Disc windows are two-dimensional and use open containment.
    """

    kind: str
    bounds: tuple[tuple[float, float], ...] = ()
    center: tuple[float, ...] = ()
    radius: float = 0.0

    @staticmethod
    def box(bounds: Sequence[Sequence[float]]) -> Window:
        b = tuple((float(a), float(c)) for a, c in bounds)
        return Window(kind="box", bounds=b)

    @staticmethod
    def disc(center: Sequence[float], radius: float) -> Window:
        return Window(kind="disc", center=tuple(float(c) for c in center),
                      radius=float(radius))

    def __post_init__(self) -> None:
        if self.kind == "box":
            if not self.bounds:
                raise ValueError("box window needs at least one axis")
            for a, b in self.bounds:
                if not (math.isfinite(a) and math.isfinite(b) and b > a):
                    raise ValueError(f"box axis must satisfy b > a, got [{a}, {b}]")
        elif self.kind == "disc":
            if len(self.center) != 2:
                raise ValueError("disc windows are two-dimensional")
            if not (math.isfinite(self.radius) and self.radius > 0):
                raise ValueError("disc radius must be positive and finite")
        else:
            raise ValueError(f"unknown window kind {self.kind!r}")

    @property
    def dimension(self) -> int:
        return len(self.bounds) if self.kind == "box" else 2

    def volume(self) -> float:
        if self.kind == "box":
            return float(np.prod([b - a for a, b in self.bounds]))
        return math.pi * self.radius**2

    def side_lengths(self) -> tuple[float, ...]:
        if self.kind != "box":
            raise ValueError("side_lengths applies to box windows")
        return tuple(b - a for a, b in self.bounds)

    def centroid(self) -> np.ndarray:
        if self.kind == "box":
            return np.array([(a + b) / 2.0 for a, b in self.bounds])
        return np.array(self.center, dtype=float)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of rows of `points` lying in the window."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dimension:
            raise ValueError("point dimension does not match window")
        if self.kind == "box":
            lo = np.array([a for a, _ in self.bounds])
            hi = np.array([b for _, b in self.bounds])
            return np.all((pts >= lo) & (pts < hi), axis=1)
        delta = pts - np.array(self.center)
        return np.einsum("ij,ij->i", delta, delta) < self.radius**2


# ---------------------------------------------------------------------------
# metrics


_METRIC_KINDS = ("euclidean", "toroidal", "hyperbolic-disc")


@dataclass(frozen=True)
class Metric:
    """Distance on the window: euclidean, toroidal, or hyperbolic disc.

    The toroidal metric wraps each axis at its period, taking the
    shorter way around.  The hyperbolic metric lives on the open unit
    disc of the plane and measures arctanh of the Moebius pseudo-distance.
    """

    kind: str
    periods: tuple[float, ...] = ()

    @staticmethod
    def euclidean() -> Metric:
        return Metric(kind="euclidean")

    @staticmethod
    def toroidal(periods: Sequence[float]) -> Metric:
        return Metric(kind="toroidal", periods=tuple(float(p) for p in periods))

    @staticmethod
    def hyperbolic_disc() -> Metric:
        return Metric(kind="hyperbolic-disc")

    def __post_init__(self) -> None:
        if self.kind not in _METRIC_KINDS:
            raise ValueError(f"unknown metric kind {self.kind!r}")
        if self.kind == "toroidal":
            if not self.periods or any(p <= 0 for p in self.periods):
                raise ValueError("toroidal metric needs positive periods")
        elif self.periods:
            raise ValueError("periods only apply to the toroidal metric")

    def distance(self, a: Sequence[float], b: Sequence[float]) -> float:
        return float(self.pairwise(np.asarray(a, float)[None, :],
                                   np.asarray(b, float)[None, :])[0, 0])

    def pairwise(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Distance matrix between rows of `a` and rows of `b`."""
        a = np.atleast_2d(np.asarray(a, dtype=float))
        b = np.atleast_2d(np.asarray(b, dtype=float))
        if a.shape[1] != b.shape[1]:
            raise ValueError("dimension mismatch between point arrays")
        if self.kind == "euclidean":
            diff = a[:, None, :] - b[None, :, :]
            return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        if self.kind == "toroidal":
            if a.shape[1] != len(self.periods):
                raise ValueError("point dimension does not match periods")
            per = np.array(self.periods)
            diff = np.abs(a[:, None, :] - b[None, :, :])
            diff = np.minimum(diff, per - diff)
            return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        # hyperbolic unit disc, points as (x, y) with |z| < 1
        if a.shape[1] != 2:
            raise ValueError("hyperbolic-disc metric is two-dimensional")
        za = a[:, 0] + 1j * a[:, 1]
        zb = b[:, 0] + 1j * b[:, 1]
        if np.any(np.abs(za) >= 1.0) or np.any(np.abs(zb) >= 1.0):
            raise ValueError("hyperbolic-disc points must satisfy |z| < 1")
        num = np.abs(za[:, None] - zb[None, :])
        den = np.abs(1.0 - np.conj(zb)[None, :] * za[:, None])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(den > 0, num / den, np.inf)
        ratio = np.clip(ratio, 0.0, np.nextafter(1.0, 0.0))
        return np.arctanh(ratio)

    def displacement(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Vector from b to a, wrapped to the nearest image on a torus."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        d = a - b
        if self.kind == "toroidal":
            per = np.array(self.periods)
            d = (d + per / 2.0) % per - per / 2.0
        return d


def distance(metric: Metric, a: Sequence[float], b: Sequence[float]) -> float:
    """Distance between two points under the given metric."""
    return metric.distance(a, b)


# ---------------------------------------------------------------------------
# point patterns


def _canonical_order(points: np.ndarray) -> np.ndarray:
    if len(points) == 0:
        return points
    keys = tuple(points[:, i] for i in reversed(range(points.shape[1])))
    return points[np.lexsort(keys)]


@dataclass(frozen=True)
class PointPattern:
    """Finite simple point set in a window, canonically ordered.

    Points are stored lexicographically sorted in a read-only float64
    array, so two patterns with the same support compare equal no matter
    how their points were produced.  Construction validates simplicity
    (no exact duplicates) and window membership.

    Parameters
    ----------
    dimension : int
        Ambient dimension, 1 to 3 in practice.
    window : Window
        Observation window containing every point.
    metric : Metric
        Metric downstream analysis should use.
    points : array-like, shape (n, dimension)
        Point locations; order is irrelevant.
    label : str or None
        Optional colour tag, "red" or "blue", for two-colour work.
    """

    dimension: int
    window: Window
    metric: Metric
    points: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    label: str | None = None

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, self.dimension)
        if pts.ndim != 2 or pts.shape[1] != self.dimension:
            raise ValueError("points must be an (n, dimension) array")
        if self.window.dimension != self.dimension:
            raise ValueError("window dimension does not match pattern")
        if self.metric.kind == "toroidal" and len(self.metric.periods) != self.dimension:
            raise ValueError("toroidal periods do not match pattern dimension")
        if self.metric.kind == "hyperbolic-disc":
            if self.dimension != 2 or self.window.kind != "disc" or self.window.radius >= 1.0:
                raise ValueError("hyperbolic-disc metric requires a disc window of radius < 1")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        if len(pts) and not np.all(self.window.contains(pts)):
            raise ValueError("every point must lie inside the window")
        pts = _canonical_order(pts)
        if len(pts) > 1:
            dup = np.all(pts[1:] == pts[:-1], axis=1)
            if np.any(dup):
                raise ValueError("pattern must be simple: duplicate point found")
        if self.label is not None and self.label not in ("red", "blue"):
            raise ValueError('label must be "red", "blue", or None')
        pts = np.ascontiguousarray(pts)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PointPattern):
            return NotImplemented
        return (self.dimension == other.dimension
                and self.window == other.window
                and self.metric == other.metric
                and self.label == other.label
                and np.array_equal(self.points, other.points))

    def with_points(self, points: np.ndarray) -> PointPattern:
        return PointPattern(self.dimension, self.window, self.metric, points, self.label)

    def translate(self, shift: Sequence[float]) -> PointPattern:
        """Translate pattern and window rigidly by `shift`."""
        s = np.asarray(shift, dtype=float)
        if self.window.kind == "box":
            win = Window.box([(a + s[i], b + s[i])
                              for i, (a, b) in enumerate(self.window.bounds)])
        else:
            win = Window.disc(np.array(self.window.center) + s, self.window.radius)
        return PointPattern(self.dimension, win, self.metric,
                            self.points + s, self.label)


# ---------------------------------------------------------------------------
# operators


def insert_uniform(pattern: PointPattern, region, count: int, rng: RngSpec) -> PointPattern:
    """Insert `count` points drawn uniformly from `region` into the pattern.

    The region must lie inside the window and have positive measure.  A
    draw that collides with an existing point is redrawn, at most 100
    attempts per point, after which an error is raised.
    """
    from . import regions  # local import, regions depends on core

    if count < 0:
        raise ValueError("count must be nonnegative")
    if count == 0:
        return pattern
    if not isinstance(region, regions.Region):
        region = regions.Region.of(region)
    if not region.within(pattern.window):
        raise ValueError("insertion region must lie inside the window")
    value, _ = region.measure()
    if value <= 0:
        raise ValueError("insertion region must have positive measure")
    gen = rng.generator(11)
    existing = pattern.points
    new_pts = []
    for _ in range(count):
        for _attempt in range(100):
            x = region.sample_one(gen)
            clash = (len(existing) and np.any(np.all(existing == x, axis=1))) or \
                    any(np.all(p == x) for p in new_pts)
            if not clash:
                new_pts.append(x)
                break
        else:
            raise PPStatError("could not place point without collision after 100 attempts")
    stacked = np.vstack([existing, np.array(new_pts)]) if len(existing) else np.array(new_pts)
    return pattern.with_points(stacked)


NEAREST_TO_ORIGIN = "nearest-to-origin"
INTERVAL_PAIR = "interval-pair"


def _interval_pair_index(points: np.ndarray) -> int:
    """One-dimensional deletion rule keyed to the first occupied unit interval.

    Scan integer intervals [i, i+1), i = 0, 1, ..., to the right of the
    origin for the first one holding any points.  If it holds exactly two,
    delete the one nearer the origin; otherwise delete the nearest point
    strictly left of the origin.
    """
    x = points[:, 0]
    right = x[x >= 0]
    if len(right):
        first = int(math.floor(right.min()))
        in_cell = np.flatnonzero((x >= first) & (x < first + 1))
        if len(in_cell) == 2:
            return int(in_cell[np.argmin(x[in_cell])])
    left = np.flatnonzero(x < 0)
    if not len(left):
        raise PPStatError("interval-pair selector found no deletable point")
    return int(left[np.argmax(x[left])])


def delete_points(pattern: PointPattern,
                  selector: Sequence[int] | str) -> PointPattern:
    """Delete the selected points and return the thinned pattern.

    `selector` is an explicit index list, "nearest-to-origin", or
    "interval-pair" (one-dimensional patterns only).
    """
    n = len(pattern)
    if isinstance(selector, str):
        if n == 0:
            raise PPStatError(f"selector {selector!r} matches no point: pattern is empty")
        if selector == NEAREST_TO_ORIGIN:
            origin = np.zeros(pattern.dimension)
            d = pattern.metric.pairwise(pattern.points, origin[None, :])[:, 0]
            idx = [int(np.argmin(d))]
        elif selector == INTERVAL_PAIR:
            if pattern.dimension != 1:
                raise ValueError("interval-pair selector applies to one-dimensional patterns")
            idx = [_interval_pair_index(pattern.points)]
        else:
            raise ValueError(f"unknown selector {selector!r}")
    else:
        idx = sorted({int(i) for i in selector})
        if idx and (idx[0] < 0 or idx[-1] >= n):
            raise IndexError("selector index out of range")
    keep = np.ones(n, dtype=bool)
    keep[idx] = False
    return pattern.with_points(pattern.points[keep])


def restrict(pattern: PointPattern, region, complement: bool = False) -> PointPattern:
    """Keep only points inside `region` (or its complement)."""
    from . import regions

    if not isinstance(region, regions.Region):
        region = regions.Region.of(region)
    mask = region.contains(pattern.points) if len(pattern) else np.zeros(0, bool)
    if complement:
        mask = ~mask
    return pattern.with_points(pattern.points[mask])


def superpose(first: PointPattern, second: PointPattern) -> PointPattern:
    """Union of two patterns over the same window and metric.

    Coincident points are an error: superposition of simple patterns
    must stay simple.
    """
    if first.dimension != second.dimension:
        raise ValueError("superpose: dimension mismatch")
    if first.window != second.window or first.metric != second.metric:
        raise ValueError("superpose: window and metric must agree")
    pts = np.vstack([first.points, second.points])
    label = first.label if first.label == second.label else None
    try:
        return PointPattern(first.dimension, first.window, first.metric, pts, label)
    except ValueError as exc:
        raise PPStatError(f"superpose produced a coincident point: {exc}") from exc


# ---------------------------------------------------------------------------
# serialization

_FORMAT_VERSION = 1


def pattern_to_dict(pattern: PointPattern) -> dict:
    win: dict = {"kind": pattern.window.kind}
    if pattern.window.kind == "box":
        win["bounds"] = [[a, b] for a, b in pattern.window.bounds]
    else:
        win["center"] = list(pattern.window.center)
        win["radius"] = pattern.window.radius
    met: dict = {"kind": pattern.metric.kind}
    if pattern.metric.kind == "toroidal":
        met["periods"] = list(pattern.metric.periods)
    return {
        "format_version": _FORMAT_VERSION,
        "dimension": pattern.dimension,
        "window": win,
        "metric": met,
        "label": pattern.label,
        "points": [[float(v) for v in row] for row in pattern.points],
    }


def pattern_from_dict(data: dict) -> PointPattern:
    win = data["window"]
    if win["kind"] == "box":
        window = Window.box(win["bounds"])
    elif win["kind"] == "disc":
        window = Window.disc(win["center"], win["radius"])
    else:
        raise ValueError(f"unknown window kind {win.get('kind')!r}")
    met = data["metric"]
    if met["kind"] == "toroidal":
        metric = Metric.toroidal(met["periods"])
    else:
        metric = Metric(kind=met["kind"])
    return PointPattern(int(data["dimension"]), window, metric,
                        np.array(data["points"], dtype=float).reshape(-1, int(data["dimension"])),
                        data.get("label"))


def write_pattern(pattern: PointPattern, path) -> None:
    """Write a pattern file; floats use shortest round-trip form, so a
    read-back reproduces the coordinates bit for bit."""
    with open(path, "w") as fh:
        json.dump(pattern_to_dict(pattern), fh, indent=1)
        fh.write("\n")


def read_pattern(path) -> PointPattern:
    with open(path) as fh:
        return pattern_from_dict(json.load(fh))
