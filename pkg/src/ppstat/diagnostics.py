"""Fluctuation diagnostics and empirical Palm sampling.

The central objects are linear statistics sum_x h((x - center)/n) of a fixed
tent profile h (plateau radius 1/2, support radius 1, Lipschitz constant 2)
evaluated across replicate patterns and a ladder of scales n.  Processes
whose variance stays bounded, or decays, while unit-ball counts stay rigid
behave like the low-fluctuation class: such processes admit neither
insertions nor deletions without changing the law, and the report verdicts
say so.  The verdicts are heuristic: a finite sweep measures hypotheses, it
cannot prove a distributional property.

A d=1 variant uses the sharp indicator of (-n, n], whose integer-valued
centered count is the natural tightness statistic for unit-intensity
processes on the line.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy import stats as _sps

from .core import Metric, PPStatError, PointPattern, RngSpec, Window
from .generators import GeneratorSpec, PerturbationSpec, sample

_T_REPLICATE = 31  # substream tag: fluctuation replicate patterns
_T_PALM_PATTERN = 32  # substream tag: palm re-rooting attempts
_T_PALM_PICK = 33  # substream tag: palm point choice
_T_PROBE = 34  # substream tag: count-probe replicates

LIPSCHITZ = 2.0  # of the unit tent profile


@dataclass(frozen=True)
class TestFunction:
    """Scaled test profile h_n(x) = h(x / n).

    ``tent`` is the radial map h(x) = clamp(2 - 2|x|, [0, 1]): plateau 1 on
    the ball of radius 1/2, support the ball of radius 1, Lipschitz constant
    2.  ``interval`` is the d=1 indicator of (-1, 1], scaled to (-n, n].
    """

    __test__ = False  # the name looks like a pytest class; it is not one

    profile: str
    scale: float
    dimension: int

    def __post_init__(self) -> None:
        if self.profile not in ("tent", "interval"):
            raise ValueError(f"unknown profile {self.profile!r}")
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ValueError("scale must be positive and finite")
        if self.profile == "interval" and self.dimension != 1:
            raise ValueError("the interval profile is one-dimensional")
        if self.dimension < 1:
            raise ValueError("dimension must be positive")

    @staticmethod
    def tent(scale: float, dimension: int) -> TestFunction:
        return TestFunction("tent", float(scale), int(dimension))

    @staticmethod
    def interval(scale: float) -> TestFunction:
        return TestFunction("interval", float(scale), 1)

    @property
    def lipschitz(self) -> float:
        """Lipschitz constant of the scaled profile."""
        return LIPSCHITZ / self.scale if self.profile == "tent" else math.inf

    def values(self, displacements: np.ndarray) -> np.ndarray:
        """Profile values for displacement vectors relative to the center."""
        disp = np.atleast_2d(np.asarray(displacements, dtype=float))
        if self.profile == "tent":
            r = np.sqrt(np.einsum("ij,ij->i", disp, disp)) / self.scale
            return np.clip(2.0 - 2.0 * r, 0.0, 1.0)
        x = disp[:, 0]
        return ((x > -self.scale) & (x <= self.scale)).astype(float)


def _support_fits(window: Window, metric: Metric, center: np.ndarray,
                  radius: float) -> bool:
    if metric.kind == "toroidal":
        return radius <= 0.5 * min(metric.periods)
    if window.kind == "box":
        lo = np.array([a for a, _ in window.bounds])
        hi = np.array([b for _, b in window.bounds])
        return bool(np.all(center - radius >= lo) and np.all(center + radius <= hi))
    gap = window.radius - float(np.linalg.norm(center - np.asarray(window.center)))
    return radius <= gap


def eval_linear_statistic(pattern: PointPattern, tf: TestFunction,
                          center) -> float:
    """Sum of the scaled profile over the pattern, rooted at ``center``.

    The support ball B(center, scale) must sit inside the window so no mass
    is lost to truncation.
    """
    center = np.asarray(center, dtype=float)
    if center.shape != (pattern.dimension,):
        raise ValueError("center must match the pattern dimension")
    if tf.dimension != pattern.dimension:
        raise ValueError("test function dimension does not match the pattern")
    if pattern.metric.kind == "hyperbolic-disc":
        raise PPStatError("linear statistics need a euclidean or toroidal metric")
    if not _support_fits(pattern.window, pattern.metric, center, tf.scale):
        raise PPStatError(
            f"support ball of radius {tf.scale} around {center.tolist()} "
            "exits the window")
    if len(pattern) == 0:
        return 0.0
    disp = pattern.points - center
    if pattern.metric.kind == "toroidal":
        periods = np.asarray(pattern.metric.periods)
        disp = disp - periods * np.round(disp / periods)
        if tf.profile == "interval":
            # round() maps displacement to [-P/2, P/2]; the indicator needs
            # the half-open convention matched at the seam
            half = 0.5 * periods[0]
            x = disp[:, 0]
            x[x == -half] = half
    return float(tf.values(disp).sum())


def n1_statistic(pattern: PointPattern, n: int) -> int:
    """Centered count N_n = #((-n, n] + centroid) - 2n for d=1 patterns.

    Integer-valued for any pattern; it is the natural tightness statistic
    when the generator has unit intensity.
    """
    if pattern.dimension != 1:
        raise ValueError("the centered interval count is one-dimensional")
    if n <= 0:
        raise ValueError("n must be positive")
    value = eval_linear_statistic(pattern, TestFunction.interval(n),
                                  pattern.window.centroid())
    return int(round(value)) - 2 * n


@dataclass(frozen=True, eq=False)
class ReplicateStats:
    """Per-scale moments of a linear statistic across replicates."""

    scales: tuple[float, ...]
    reps: int
    means: np.ndarray
    variances: np.ndarray
    variance_ses: np.ndarray
    covariance: np.ndarray
    kendall_tau: float
    values: np.ndarray
    n1_distributions: tuple[dict[int, int], ...] | None = None

    def trend(self) -> str:
        """Classification in {growing, decaying, bounded, inconclusive}."""
        trend, _, _ = classify_trend(self.scales, self.variances, self.means)
        return trend

    def summary_rows(self) -> list[tuple[float, int, float, float, float]]:
        """Rows (scale, reps, mean, var, var_se) for tabular output."""
        return [(s, self.reps, float(m), float(v), float(se))
                for s, m, v, se in zip(self.scales, self.means,
                                       self.variances, self.variance_ses)]

    def covariance_rows(self) -> list[tuple[float, float, float]]:
        rows = []
        for i, si in enumerate(self.scales):
            for j, sj in enumerate(self.scales):
                if j >= i:
                    rows.append((si, sj, float(self.covariance[i, j])))
        return rows


def classify_trend(scales, variances, means=None) -> tuple[str, float, float]:
    """(label, kendall tau, max/min ratio) for a variance-vs-scale sweep.

    |tau| >= 0.8 with ratio >= 2 reads as a monotone trend.  Without one,
    the sweep is bounded when the ratio stays under 2 or when the variance
    never reaches a tenth of the mean statistic (volume-order fluctuations
    track the mean, so an order-of-magnitude gap with no trend is the
    bounded signature); anything else is inconclusive.  Variances below
    numerical noise relative to the means are treated as exactly flat.
    """
    v = np.asarray(variances, dtype=float)
    m = (np.asarray(means, dtype=float) if means is not None
         else np.ones_like(v))
    noise = (1e-9 * np.maximum(1.0, np.abs(m))) ** 2
    if np.all(v <= noise):
        return "bounded", 0.0, 1.0
    ratio = float(v.max() / max(v.min(), 1e-300))
    tau = _sps.kendalltau(np.asarray(scales, dtype=float), v).statistic
    tau = 0.0 if tau is None or math.isnan(tau) else float(tau)
    if abs(tau) >= 0.8 and ratio >= 2.0:
        return ("growing" if tau > 0 else "decaying"), tau, ratio
    if ratio < 2.0 or v.max() <= 0.1 * np.abs(m).max():
        return "bounded", tau, ratio
    return "inconclusive", tau, ratio


def _variance_se(sample: np.ndarray) -> float:
    # SE of the unbiased sample variance via the fourth central moment
    n = sample.size
    if n < 2:
        return math.inf
    s2 = float(np.var(sample, ddof=1))
    m4 = float(np.mean((sample - sample.mean()) ** 4))
    var_of_var = (m4 - (n - 3) / (n - 1) * s2 * s2) / n
    return math.sqrt(max(var_of_var, 0.0))


def estimate_fluctuation(gen: GeneratorSpec, scales, reps: int,
                         rng: RngSpec, workers: int = 1) -> ReplicateStats:
    """Tent-statistic moments over independent replicates of a generator.

    Replicates are drawn from forked substreams, so the result is
    reproducible for any worker count.  For d=1 generators the integer
    interval statistic is tabulated alongside the tent values.
    """
    scales = tuple(float(s) for s in scales)
    if len(scales) < 2 or sorted(set(scales)) != sorted(scales):
        raise ValueError("scales must be distinct and at least two")
    if reps < 2:
        raise ValueError("need at least two replicates")
    probe = sample(gen, rng.fork(_T_REPLICATE, 0))
    center = probe.window.centroid()
    for s in scales:
        if not _support_fits(probe.window, probe.metric, center, s):
            raise PPStatError(f"scale {s} does not fit the generator window")

    dim = probe.dimension
    tfs = [TestFunction.tent(s, dim) for s in scales]
    n1_scales = ([int(s) for s in scales]
                 if dim == 1 and all(float(s).is_integer() for s in scales)
                 else None)

    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        args = [(gen, scales, rng, r) for r in range(reps)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_fluctuation_row, args, chunksize=16))
    else:
        rows = [_fluctuation_row(a) for a in ((gen, scales, rng, r)
                                              for r in range(reps))]
    values = np.array([row[0] for row in rows])
    n1_dists = None
    if n1_scales is not None:
        counters = [Counter() for _ in n1_scales]
        for _, pat_counts in rows:
            for c, v in zip(counters, pat_counts):
                c[v] += 1
        n1_dists = tuple(dict(sorted(c.items())) for c in counters)

    means = values.mean(axis=0)
    variances = values.var(axis=0, ddof=1)
    ses = np.array([_variance_se(values[:, j]) for j in range(len(scales))])
    cov = np.cov(values.T, ddof=1) if len(scales) > 1 else np.array([[variances[0]]])
    tau = _sps.kendalltau(np.asarray(scales), variances).statistic
    tau = 0.0 if tau is None or math.isnan(tau) else float(tau)
    return ReplicateStats(scales=scales, reps=reps, means=means,
                          variances=variances, variance_ses=ses,
                          covariance=np.atleast_2d(cov), kendall_tau=tau,
                          values=values, n1_distributions=n1_dists)


def _fluctuation_row(args) -> tuple[list[float], list[int]]:
    gen, scales, rng, r = args
    pat = sample(gen, rng.fork(_T_REPLICATE, r))
    center = pat.window.centroid()
    dim = pat.dimension
    row = [eval_linear_statistic(pat, TestFunction.tent(s, dim), center)
           for s in scales]
    n1 = []
    if dim == 1 and all(float(s).is_integer() for s in scales):
        n1 = [n1_statistic(pat, int(s)) for s in scales]
    return row, n1


def n1_bound(perturbation: PerturbationSpec) -> float:
    """Upper bound 2K+ + 2K- for E|N_n| of a d=1 perturbed lattice.

    K+ sums, over lattice sites at and left of the interval endpoint, the
    probability that the site's displacement carries it across; K- is the
    mirror sum.  Terms are truncated once below 1e-12 of the running sum.
    Infinite-mean displacement laws give an infinite bound.
    """
    total = 0.0
    for k in range(10 ** 6):
        term = 0.5 * perturbation.tail_probability(float(k), dimension=1)
        total += term
        if term <= 1e-12 * total:
            return 4.0 * total  # 2K+ + 2K- with K+ = K- by symmetry
    return math.inf


def palm_sample_empirical(gen: GeneratorSpec, rng: RngSpec,
                          max_attempts: int = 100) -> PointPattern:
    """Pattern re-rooted at a typical point: a uniformly chosen pattern
    point of the central half-volume core is translated to the origin.

    The core keeps the chosen point away from the window boundary, so the
    re-rooted pattern is unbiased in a neighborhood of the origin.  The
    origin is always a point of the output.
    """
    pick = rng.generator(_T_PALM_PICK)
    for attempt in range(max_attempts):
        pat = sample(gen, rng.fork(_T_PALM_PATTERN, attempt))
        core_mask = _core_mask(pat)
        idx = np.flatnonzero(core_mask)
        if idx.size == 0:
            continue
        chosen = idx[int(pick.integers(idx.size))]
        return pat.translate(-pat.points[chosen])
    raise PPStatError(
        f"no pattern point fell in the core window in {max_attempts} attempts")


def _core_mask(pattern: PointPattern) -> np.ndarray:
    # central core of half the window volume: shrink each extent by 2^(-1/d)
    w = pattern.window
    c = w.centroid()
    f = 0.5 ** (1.0 / pattern.dimension)
    if w.kind == "box":
        lo = np.array([a for a, _ in w.bounds])
        hi = np.array([b for _, b in w.bounds])
        half = 0.5 * f * (hi - lo)
        return np.all((pattern.points >= c - half)
                      & (pattern.points < c + half), axis=1)
    delta = pattern.points - c
    return np.einsum("ij,ij->i", delta, delta) < (f * w.radius) ** 2


def tolerance_report(gen: GeneratorSpec, rng: RngSpec, *, reps: int = 200,
                     scales=None, probe_radius: float = 0.5,
                     stats: ReplicateStats | None = None) -> dict:
    """Heuristic insertion/deletion-tolerance screen for a generator.

    Combines the variance-vs-scale trend with a count-rigidity probe:
    decaying or bounded variance together with rigid small-ball counts is
    evidence against tolerance, growth with unbounded counts is consistent
    with it, and anything else is inconclusive.  The verdict is labeled
    heuristic: finite sweeps measure hypotheses, they do not decide laws.

    A precomputed `stats` (from estimate_fluctuation with the same rng)
    skips the internal sweep.
    """
    probe_pat = sample(gen, rng.fork(_T_REPLICATE, 0))
    if scales is None:
        scales = _default_scales(probe_pat)
    if stats is None:
        stats = estimate_fluctuation(gen, scales, reps, rng)
    elif tuple(float(s) for s in scales) != stats.scales:
        raise ValueError("scales disagree with the precomputed stats")
    trend, tau, ratio = classify_trend(stats.scales, stats.variances, stats.means)

    lo = math.inf
    hi = -math.inf
    tfp = TestFunction.tent(2.0 * probe_radius, probe_pat.dimension)
    for r in range(reps):
        pat = sample(gen, rng.fork(_T_PROBE, r))
        disp = pat.points - pat.window.centroid()
        if pat.metric.kind == "toroidal":
            periods = np.asarray(pat.metric.periods)
            disp = disp - periods * np.round(disp / periods)
        if len(pat) == 0:
            count = 0
        else:
            dist2 = np.einsum("ij,ij->i", disp, disp)
            count = int((dist2 < probe_radius ** 2).sum())
        lo = min(lo, count)
        hi = max(hi, count)
    rigid = (hi - lo) <= 2

    if trend in ("decaying", "bounded") and rigid:
        verdict = "evidence-against-tolerance"
    elif trend == "growing" and not rigid:
        verdict = "consistent-with-tolerance"
    else:
        verdict = "inconclusive"
    return {
        "trend": trend,
        "count_probe": {"min": int(lo), "max": int(hi)},
        "verdict": verdict,
        "caveat": "heuristic",
        "kendall_tau": tau,
        "variance_ratio": ratio,
        "scales": [float(s) for s in stats.scales],
        "variances": [float(v) for v in stats.variances],
        "probe_radius": probe_radius,
        "reps": reps,
    }


def _default_scales(pattern: PointPattern) -> tuple[float, ...]:
    """Four even integer scales fitted to the window (falling back to a
    geometric ladder when the window is small).

    Even integers matter for lattice inputs: at even scales the tent sum
    over a shifted unit lattice is exactly constant in the shift, so the
    zero-variance signature is visible.
    """
    w = pattern.window
    c = w.centroid()
    if pattern.metric.kind == "toroidal":
        base = 0.5 * min(pattern.metric.periods)
    elif w.kind == "box":
        lo = np.array([a for a, _ in w.bounds])
        hi = np.array([b for _, b in w.bounds])
        base = float(min((c - lo).min(), (hi - c).min()))
    else:
        base = w.radius
    step = 2 * math.floor(base / 8.0)
    if step >= 2:
        return (float(step), float(2 * step), float(3 * step), float(4 * step))
    return (base / 8.0, base / 4.0, base / 2.0, float(base))
