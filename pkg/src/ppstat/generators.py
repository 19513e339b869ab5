"""Samplers for the processes the workbench studies.

Every sampler takes an RngSpec and is a pure function of it: the same
(seed, stream) reproduces the same pattern.  Purpose-tagged substreams
keep the draws for shifts, site retention, and perturbations independent
of one another, and perturbation draws are consumed in a shell ordering
around the window centre so that enlarging the safety buffer only
appends draws instead of shifting them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .core import Metric, PointPattern, RngSpec, Window

# substream purpose tags
_T_SHIFT = 1
_T_COUNT = 2
_T_LOCATION = 3
_T_KEEP = 4
_T_GAUSS = 5
_T_RADIAL = 6
_T_PLANE = 7

# buffer sites may leak into the window with total probability below this
_BUFFER_LEAK = 1e-6

# in-plane site retention for the three-dimensional stack; comfortably
# above the planar site threshold (~0.593) so slabs percolate
STACK_PLANE_P = 0.7

_PERTURBATION_KINDS = ("zero", "uniform-ball", "gaussian", "heavy-tail")


@dataclass(frozen=True)
class PerturbationSpec:
    """Displacement law for perturbed lattices.

    kind "zero" leaves sites in place; "uniform-ball" draws uniformly
    from a ball of the given radius; "gaussian" draws independent
    per-axis normals with the given sigma; "heavy-tail" draws an
    isotropic displacement whose radial tail is (1 + r)**-alpha.
    """

    kind: str
    radius: float = 0.0
    sigma: float = 0.0
    alpha: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in _PERTURBATION_KINDS:
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if self.kind == "uniform-ball" and self.radius <= 0:
            raise ValueError("uniform-ball perturbation needs radius > 0")
        if self.kind == "gaussian" and self.sigma <= 0:
            raise ValueError("gaussian perturbation needs sigma > 0")
        if self.kind == "heavy-tail" and self.alpha <= 0:
            raise ValueError("heavy-tail perturbation needs alpha > 0")

    def tail_probability(self, r: float, dimension: int = 2) -> float:
        """P(|displacement| > r) for a displacement in the given dimension."""
        if self.kind == "zero":
            return 0.0
        if r <= 0:
            return 1.0
        if self.kind == "uniform-ball":
            return (0.0 if r >= self.radius
                    else 1.0 - (r / self.radius) ** dimension)
        if self.kind == "heavy-tail":
            return (1.0 + r) ** (-self.alpha)
        return float(stats.chi2.sf((r / self.sigma) ** 2, dimension))

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.kind == "uniform-ball":
            d["radius"] = self.radius
        elif self.kind == "gaussian":
            d["sigma"] = self.sigma
        elif self.kind == "heavy-tail":
            d["alpha"] = self.alpha
        return d

    @staticmethod
    def from_dict(d: dict) -> PerturbationSpec:
        return PerturbationSpec(kind=d["kind"], radius=d.get("radius", 0.0),
                                sigma=d.get("sigma", 0.0), alpha=d.get("alpha", 0.0))


# ---------------------------------------------------------------------------
# lattice site enumeration


def _site_ranges(window: Window, shift: np.ndarray, margin: float) -> list[tuple[int, int]]:
    """Integer ranges so that site + shift covers the margin-enlarged window."""
    ranges = []
    for i, (a, b) in enumerate(window.bounds):
        lo = math.ceil(a - margin - shift[i])
        hi = math.ceil(b + margin - shift[i]) - 1
        ranges.append((lo, hi))
    return ranges


def _sites_lex(ranges: Sequence[tuple[int, int]]) -> np.ndarray:
    axes = [np.arange(lo, hi + 1) for lo, hi in ranges]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _sites_shell_ordered(ranges: Sequence[tuple[int, int]], anchor: np.ndarray) -> np.ndarray:
    """Sites sorted by sup-norm shell around a fixed anchor site.

    Growing the ranges symmetrically appends whole shells at the end, so
    draws consumed in this order form a stable prefix.
    """
    sites = _sites_lex(ranges)
    shell = np.max(np.abs(sites - anchor), axis=1)
    keys = tuple(sites[:, i] for i in reversed(range(sites.shape[1]))) + (shell,)
    return sites[np.lexsort(keys)]


def _count_sites(ranges: Sequence[tuple[int, int]]) -> int:
    n = 1
    for lo, hi in ranges:
        n *= max(0, hi - lo + 1)
    return n


def _buffer_margin(perturbation: PerturbationSpec, window: Window,
                   shift: np.ndarray) -> float:
    """Smallest margin m with P(|Y| > m) * (#sites) below the leak budget.

    Site count depends on the margin, so one refinement pass closes the
    fixed point.  Heavy tails can push the margin absurdly wide; beyond
    ten window diameters we refuse.
    """
    d = window.dimension
    if perturbation.kind == "zero":
        return 0.0
    if perturbation.kind == "uniform-ball":
        return perturbation.radius

    def solve(n_sites: int) -> float:
        p_target = _BUFFER_LEAK / max(1, n_sites)
        if perturbation.kind == "gaussian":
            return perturbation.sigma * math.sqrt(stats.chi2.isf(p_target, d))
        try:
            return p_target ** (-1.0 / perturbation.alpha) - 1.0
        except OverflowError:
            return math.inf

    m = solve(_count_sites(_site_ranges(window, shift, 0.0)))
    if math.isfinite(m):
        m = solve(_count_sites(_site_ranges(window, shift, m)))
    diameter = math.sqrt(sum((b - a) ** 2 for a, b in window.bounds))
    if m > 10.0 * diameter:
        raise ValueError(f"buffer margin {m:.3g} exceeds ten window diameters; "
                         "perturbation tail too heavy for this window")
    return m


def _default_metric(window: Window, metric: Metric | None) -> Metric:
    if metric is None:
        return Metric.euclidean()
    if metric.kind == "toroidal" and tuple(metric.periods) != window.side_lengths():
        raise ValueError("toroidal periods must equal the window side lengths")
    return metric


# ---------------------------------------------------------------------------
# samplers


def sample_poisson(intensity: float, window: Window, rng: RngSpec,
                   metric: Metric | None = None) -> PointPattern:
    """Homogeneous Poisson process on a box window.

    The count is Poisson(intensity * volume); locations are independent
    uniforms.  Expected counts above 1e8 are refused.
    """
    if window.kind != "box":
        raise ValueError("sample_poisson needs a box window")
    if not intensity > 0:
        raise ValueError("intensity must be positive")
    mean = intensity * window.volume()
    if mean > 1e8:
        raise ValueError(f"expected count {mean:.3g} exceeds the 1e8 guard")
    n = int(rng.generator(_T_COUNT).poisson(mean))
    lo = np.array([a for a, _ in window.bounds])
    hi = np.array([b for _, b in window.bounds])
    pts = rng.generator(_T_LOCATION).uniform(lo, hi, size=(n, window.dimension))
    return PointPattern(window.dimension, window, _default_metric(window, metric), pts)


def sample_shifted_lattice(window: Window, rng: RngSpec,
                           metric: Metric | None = None) -> PointPattern:
    """Integer lattice shifted by a uniform offset in the unit cell."""
    return sample_site_percolation(1.0, window, rng, metric)


def sample_site_percolation(p: float, window: Window, rng: RngSpec,
                            metric: Metric | None = None) -> PointPattern:
    """Shifted lattice with each site kept independently with probability p.

    At p = 1 this reproduces sample_shifted_lattice draw for draw.
    """
    if window.kind != "box":
        raise ValueError("lattice samplers need a box window")
    if not 0.0 <= p <= 1.0:
        raise ValueError("retention probability must lie in [0, 1]")
    d = window.dimension
    shift = rng.generator(_T_SHIFT).random(d)
    sites = _sites_lex(_site_ranges(window, shift, 0.0))
    keep = rng.generator(_T_KEEP).random(len(sites)) < p
    pts = sites[keep] + shift
    return PointPattern(d, window, _default_metric(window, metric), pts)


def sample_perturbed_lattice(perturbation: PerturbationSpec, window: Window,
                             rng: RngSpec, shift: bool = False,
                             metric: Metric | None = None) -> PointPattern:
    """Lattice sites displaced independently by the perturbation law.

    On a euclidean window, sites are enumerated over the window enlarged
    by a buffer margin sized so the chance of any outside site landing
    in the window is below 1e-6, and displaced sites are then clipped to
    the window; the result is the law of the infinite construction
    restricted to the window.  On a toroidal metric the construction is
    genuinely periodic: exactly the in-window sites, displacements
    wrapped modulo the periods.  With shift=True the lattice is first
    shifted uniformly in its unit cell.
    """
    if window.kind != "box":
        raise ValueError("lattice samplers need a box window")
    met = _default_metric(window, metric)
    d = window.dimension
    u = rng.generator(_T_SHIFT).random(d) if shift else np.zeros(d)
    periodic = met.kind == "toroidal"
    margin = 0.0 if periodic else _buffer_margin(perturbation, window, u)
    ranges = _site_ranges(window, u, margin)
    anchor = np.floor(window.centroid() - u).astype(int)
    sites = _sites_shell_ordered(ranges, anchor)
    disp = _displacements(perturbation, len(sites), d, rng)
    pts = sites + u + disp
    pts = _wrap(pts, window) if periodic else pts[window.contains(pts)]
    return PointPattern(d, window, met, pts)


def _wrap(pts: np.ndarray, window: Window) -> np.ndarray:
    lo = np.array([a for a, _ in window.bounds])
    periods = np.array(window.side_lengths())
    return lo + (pts - lo) % periods


def _displacements(perturbation: PerturbationSpec, n: int, d: int,
                   rng: RngSpec, draws_per_site: int = 1) -> np.ndarray:
    """Displacement block, shape (n, draws_per_site, d) squeezed when 1.

    Gaussian directions and radial uniforms come from separate
    substreams; each is consumed site-major so prefixes are stable.
    """
    shape = (n, draws_per_site, d)
    if perturbation.kind == "zero":
        out = np.zeros(shape)
    elif perturbation.kind == "gaussian":
        out = perturbation.sigma * rng.generator(_T_GAUSS).standard_normal(shape)
    else:
        direction = rng.generator(_T_GAUSS).standard_normal(shape)
        norms = np.linalg.norm(direction, axis=2, keepdims=True)
        norms[norms == 0.0] = 1.0
        direction /= norms
        u = 1.0 - rng.generator(_T_RADIAL).random((n, draws_per_site, 1))
        if perturbation.kind == "uniform-ball":
            radii = perturbation.radius * u ** (1.0 / d)
        else:
            radii = u ** (-1.0 / perturbation.alpha) - 1.0
        out = direction * radii
    return out[:, 0, :] if draws_per_site == 1 else out


def sample_doubled_perturbed_lattice(radius: float, window: Window, rng: RngSpec,
                                     metric: Metric | None = None) -> PointPattern:
    """Two independent uniform-ball displacements of every shifted site.

    Each lattice site contributes a pair of points, both within `radius`
    of the shifted site; radius must lie in (0, 1/4] so the pairs stay
    well separated from neighbouring pairs.  On a toroidal metric the
    construction is periodic (in-window sites, wrapped displacements),
    so no site ever loses a sibling to the boundary.
    """
    if not 0.0 < radius <= 0.25:
        raise ValueError("pair radius must lie in (0, 1/4]")
    if window.kind != "box":
        raise ValueError("lattice samplers need a box window")
    met = _default_metric(window, metric)
    d = window.dimension
    u = rng.generator(_T_SHIFT).random(d)
    periodic = met.kind == "toroidal"
    ranges = _site_ranges(window, u, 0.0 if periodic else radius)
    anchor = np.floor(window.centroid() - u).astype(int)
    sites = _sites_shell_ordered(ranges, anchor)
    disp = _displacements(PerturbationSpec("uniform-ball", radius=radius),
                          len(sites), d, rng, draws_per_site=2)
    pts = (sites + u)[:, None, :] + disp
    pts = pts.reshape(-1, d)
    pts = _wrap(pts, window) if periodic else pts[window.contains(pts)]
    return PointPattern(d, window, met, pts)


def sample_column_deleted_stack(p: float, window: Window, rng: RngSpec,
                                metric: Metric | None = None) -> PointPattern:
    """Lattice lines (d=2) or percolation planes (d=3) kept at random heights.

    In two dimensions the shifted lattice keeps each horizontal line,
    indexed by its second coordinate, independently with probability p.
    In three dimensions independent planar site-percolation patterns
    (retention STACK_PLANE_P) are stacked at integer heights, each height
    kept with probability p.
    """
    if window.kind != "box":
        raise ValueError("lattice samplers need a box window")
    if not 0.0 < p <= 1.0:
        raise ValueError("height retention must lie in (0, 1]")
    d = window.dimension
    if d == 2:
        u = rng.generator(_T_SHIFT).random(2)
        (xlo, xhi), (ylo, yhi) = _site_ranges(window, u, 0.0)
        heights = np.arange(ylo, yhi + 1)
        keep = rng.generator(_T_KEEP).random(len(heights)) < p
        xs = np.arange(xlo, xhi + 1)
        pts = np.array([(x + u[0], h + u[1])
                        for h in heights[keep] for x in xs])
        pts = pts.reshape(-1, 2)
    elif d == 3:
        zlo = math.ceil(window.bounds[2][0])
        zhi = math.ceil(window.bounds[2][1]) - 1
        heights = np.arange(zlo, zhi + 1)
        keep = rng.generator(_T_KEEP).random(len(heights)) < p
        plane_window = Window.box(window.bounds[:2])
        rows = []
        for h in heights[keep]:
            plane = sample_site_percolation(STACK_PLANE_P, plane_window,
                                            rng.fork(_T_PLANE, int(h) + 2**31))
            if len(plane):
                rows.append(np.column_stack([plane.points,
                                             np.full(len(plane), float(h))]))
        pts = np.vstack(rows) if rows else np.empty((0, 3))
    else:
        raise ValueError("stack generator supports dimensions 2 and 3")
    return PointPattern(d, window, _default_metric(window, metric), pts)


# ---------------------------------------------------------------------------
# declarative specs


_GENERATOR_KINDS = ("poisson", "shifted-lattice", "site-percolation",
                    "perturbed-lattice", "doubled-perturbed-lattice",
                    "column-deleted-stack", "gaf-planar", "gaf-hyperbolic")


@dataclass(frozen=True)
class GeneratorSpec:
    """Declarative description of a process, usable from configs.

    The gaf-* kinds delegate to the analytic-function module and return
    its zero set as a pattern; they carry their own window (a disc), so
    `window` may be omitted for them.
    """

    kind: str
    window: Window | None = None
    metric: Metric | None = None
    intensity: float = 0.0
    p: float = 0.0
    perturbation: PerturbationSpec | None = None
    shift: bool = False
    pair_radius: float = 0.0
    rho: float = 0.0
    rmax: float = 0.0
    palm: bool = False

    def __post_init__(self) -> None:
        if self.kind not in _GENERATOR_KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if self.kind == "gaf-planar":
            if not 0.0 < self.rho <= 20.0:
                raise ValueError("gaf-planar needs rho in (0, 20]")
            return
        if self.kind == "gaf-hyperbolic":
            if not 0.0 < self.rmax <= 0.995:
                raise ValueError("gaf-hyperbolic needs rmax in (0, 0.995]")
            return
        if self.window is None:
            raise ValueError(f"generator kind {self.kind!r} needs a window")
        if self.kind == "poisson" and self.intensity <= 0.0:
            raise ValueError("poisson intensity must be positive")
        if self.kind in ("site-percolation", "column-deleted-stack"):
            if not 0.0 <= self.p <= 1.0:
                raise ValueError("retention probability must lie in [0, 1]")
        if self.kind == "perturbed-lattice" and self.perturbation is None:
            raise ValueError("perturbed-lattice needs a perturbation spec")
        if self.kind == "doubled-perturbed-lattice":
            if not 0.0 < self.pair_radius <= 0.25:
                raise ValueError("pair radius must lie in (0, 1/4]")

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.window is not None:
            if self.window.kind == "box":
                d["window"] = {"kind": "box",
                               "bounds": [[a, b] for a, b in self.window.bounds]}
            else:
                d["window"] = {"kind": "disc", "center": list(self.window.center),
                               "radius": self.window.radius}
        if self.metric is not None:
            m: dict = {"kind": self.metric.kind}
            if self.metric.kind == "toroidal":
                m["periods"] = list(self.metric.periods)
            d["metric"] = m
        if self.kind == "poisson":
            d["intensity"] = self.intensity
        if self.kind in ("site-percolation", "column-deleted-stack"):
            d["p"] = self.p
        if self.kind == "perturbed-lattice":
            d["perturbation"] = self.perturbation.to_dict()
            d["shift"] = self.shift
        if self.kind == "doubled-perturbed-lattice":
            d["pair_radius"] = self.pair_radius
        if self.kind == "gaf-planar":
            d["rho"] = self.rho
        if self.kind == "gaf-hyperbolic":
            d["rmax"] = self.rmax
            d["palm"] = self.palm
        return d

    @staticmethod
    def from_dict(d: dict) -> GeneratorSpec:
        window = None
        if "window" in d:
            w = d["window"]
            window = (Window.box(w["bounds"]) if w["kind"] == "box"
                      else Window.disc(w["center"], w["radius"]))
        metric = None
        if "metric" in d:
            m = d["metric"]
            metric = (Metric.toroidal(m["periods"]) if m["kind"] == "toroidal"
                      else Metric(kind=m["kind"]))
        pert = PerturbationSpec.from_dict(d["perturbation"]) if "perturbation" in d else None
        return GeneratorSpec(kind=d["kind"], window=window, metric=metric,
                             intensity=d.get("intensity", 0.0), p=d.get("p", 0.0),
                             perturbation=pert, shift=d.get("shift", False),
                             pair_radius=d.get("pair_radius", 0.0),
                             rho=d.get("rho", 0.0), rmax=d.get("rmax", 0.0),
                             palm=d.get("palm", False))


def sample(spec: GeneratorSpec, rng: RngSpec) -> PointPattern:
    """Draw one pattern from a declarative generator spec."""
    if spec.kind == "poisson":
        return sample_poisson(spec.intensity, spec.window, rng, spec.metric)
    if spec.kind == "shifted-lattice":
        return sample_shifted_lattice(spec.window, rng, spec.metric)
    if spec.kind == "site-percolation":
        return sample_site_percolation(spec.p, spec.window, rng, spec.metric)
    if spec.kind == "perturbed-lattice":
        return sample_perturbed_lattice(spec.perturbation, spec.window, rng,
                                        spec.shift, spec.metric)
    if spec.kind == "doubled-perturbed-lattice":
        return sample_doubled_perturbed_lattice(spec.pair_radius, spec.window,
                                                rng, spec.metric)
    if spec.kind == "column-deleted-stack":
        return sample_column_deleted_stack(spec.p, spec.window, rng, spec.metric)
    from . import gaf  # deferred: gaf depends on core only

    if spec.kind == "gaf-planar":
        return gaf.sample_gaf_planar(spec.rho, rng).pattern
    return gaf.sample_gaf_hyperbolic(spec.rmax, rng, palm=spec.palm).pattern
