"""Zero sets of random analytic functions via truncated-series root finding.

Two Gaussian series are supported: the entire one with coefficients
a_n / sqrt(n!) whose zeros form a translation-invariant planar process of
intensity 1/pi, and the unit-disc one with coefficients a_n whose zeros are
invariant under hyperbolic isometries.  Both are truncated at a degree where
the neglected tail is below 1e-12 of the typical series magnitude on the
domain boundary, and the polynomial roots stand in for the analytic zeros.

Root finding is simultaneous Aberth-Ehrlich iteration started from Newton
polygon radii, followed by Newton polishing.  Every sampled zero set is
certified against an argument-principle contour count before it is returned;
a disagreement raises instead of silently dropping or inventing zeros.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .core import Metric, PPStatError, PointPattern, RngSpec, Window

_T_COEFF = 21  # substream tag: gaussian coefficient draws
_T_PALM = 22  # substream tag: size-biased first-coefficient modulus

_CONTOUR_NODES = 4096
_COUNT_TOL = 0.1
_RESIDUAL_REL = 1e-10
_DISTINCT_TOL = 1e-8
_ABERTH_TOL = 1e-14
_ABERTH_MAXIT = 240
_POLISH_MAXSTEPS = 5

# relative contour jitters tried when a zero sits too close to the contour
_JITTER_STEPS = (0.0, 2e-4, -2e-4, 5e-4, -5e-4, 1e-3)


class RootFindingError(PPStatError):
    """Root finder failed to converge or to certify its zero count."""


def planar_truncation(rho: float) -> int:
    """Degree keeping the neglected planar tail below 1e-12 on |z| = rho."""
    return max(32, math.ceil(rho * rho + 12.0 * rho + 25.0))


def hyperbolic_truncation(rmax: float) -> int:
    """Degree keeping the neglected disc-series tail below 1e-12 on |z| = rmax."""
    n = math.ceil(math.log(1e-12 * (1.0 - rmax)) / math.log(rmax))
    return max(8, n)


@dataclass(frozen=True)
class GafSeries:
    """Truncated random series sum_n c_n z^n in split form.

    Coefficients are held as c_n = gaussians[n] * exp(log_weights[n]) so the
    factorial weights of the entire series stay representable at degrees in
    the hundreds.  ``log_weights`` is identically zero for the disc series.
    """

    kind: str
    gaussians: np.ndarray
    log_weights: np.ndarray
    rng: RngSpec | None = None
    palm: bool = False

    def __post_init__(self) -> None:
        if self.kind not in ("planar", "hyperbolic"):
            raise ValueError(f"unknown series kind {self.kind!r}")
        g = np.ascontiguousarray(np.asarray(self.gaussians, dtype=np.complex128))
        w = np.ascontiguousarray(np.asarray(self.log_weights, dtype=np.float64))
        if g.ndim != 1 or w.shape != g.shape:
            raise ValueError("gaussians and log_weights must be 1-d and congruent")
        if g.size < 2:
            raise ValueError("series needs degree >= 1")
        if not np.all(np.isfinite(w)):
            raise ValueError("log_weights must be finite")
        g.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "gaussians", g)
        object.__setattr__(self, "log_weights", w)

    @property
    def degree(self) -> int:
        return self.gaussians.size - 1

    @property
    def coefficients(self) -> np.ndarray:
        """The raw c_n.  Underflows past degree ~300 of the entire series;
        prefer the split form for numerics."""
        return self.gaussians * np.exp(self.log_weights)

    @staticmethod
    def from_coefficients(kind: str, coefficients, rng: RngSpec | None = None) -> GafSeries:
        """Build a series from explicit c_n (log_weights = 0).  Test hook."""
        c = np.asarray(coefficients, dtype=np.complex128)
        return GafSeries(kind=kind, gaussians=c, log_weights=np.zeros(c.size), rng=rng)

    def evaluate(self, z) -> np.ndarray:
        """Series value at complex points, stable up to |z| ~ 20."""
        z = np.atleast_1d(np.asarray(z, dtype=np.complex128))
        s = max(1.0, float(np.max(np.abs(z))) if z.size else 1.0)
        n = np.arange(self.gaussians.size)
        b = self.gaussians * np.exp(self.log_weights + n * math.log(s))
        return _horner(b, z / s)


def _horner(coeffs: np.ndarray, u: np.ndarray) -> np.ndarray:
    p = np.full(u.shape, coeffs[-1], dtype=np.complex128)
    for c in coeffs[-2::-1]:
        p *= u
        p += c
    return p


def _horner_pair(coeffs: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Value and derivative in one sweep."""
    p = np.full(u.shape, coeffs[-1], dtype=np.complex128)
    dp = np.zeros(u.shape, dtype=np.complex128)
    for c in coeffs[-2::-1]:
        dp *= u
        dp += p
        p *= u
        p += c
    return p, dp


def _scaled_coefficients(gaussians: np.ndarray, log_weights: np.ndarray,
                         scale: float) -> tuple[np.ndarray, float]:
    """Coefficients of q(u) = f(scale * u) normalized to max modulus 1.

    Returns (b, log_norm) with b_n = c_n scale^n / exp(log_norm), so
    |f(scale * u)| = |q(u)| * exp(log_norm).
    """
    n = np.arange(gaussians.size)
    mag = np.abs(gaussians)
    nonzero = mag > 0.0
    logmag = np.full(gaussians.size, -np.inf)
    logmag[nonzero] = np.log(mag[nonzero]) + log_weights[nonzero] + n[nonzero] * math.log(scale)
    log_norm = float(np.max(logmag))
    if not math.isfinite(log_norm):
        raise ValueError("series is identically zero")
    b = np.zeros(gaussians.size, dtype=np.complex128)
    b[nonzero] = (gaussians[nonzero] / mag[nonzero]) * np.exp(logmag[nonzero] - log_norm)
    return b, log_norm


def _newton_ratio(coeffs: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """q(u)/q'(u) for all u, switching to the reversed polynomial when |u| > 1
    so Horner never overflows.  coeffs must have nonzero leading term.

    Also returns a boolean ``settled`` mask: |q(u)| is below the Horner
    rounding floor, so no Newton step can improve the root further.
    """
    m = coeffs.size - 1
    floor = 4.0 * m * np.finfo(float).eps
    ratio = np.empty(u.shape, dtype=np.complex128)
    settled = np.empty(u.shape, dtype=bool)
    inner = np.abs(u) <= 1.0
    if np.any(inner):
        ui = u[inner]
        p, dp = _horner_pair(coeffs, ui)
        ratio[inner] = _safe_div(p, dp)
        settled[inner] = np.abs(p) <= floor * _horner(np.abs(coeffs), np.abs(ui)).real
    if np.any(~inner):
        uo = u[~inner]
        v = 1.0 / uo
        r, dr = _horner_pair(coeffs[::-1], v)
        # q(u) = u^m r(1/u);  q'(u) = u^(m-1) (m r(v) - v r'(v))
        ratio[~inner] = uo * _safe_div(r, m * r - v * dr)
        settled[~inner] = np.abs(r) <= floor * _horner(np.abs(coeffs[::-1]), np.abs(v)).real
    return ratio, settled


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros(num.shape, dtype=np.complex128)
    ok = den != 0.0
    out[ok] = num[ok] / den[ok]
    # zero derivative at a non-root: flag with a large finite step so the
    # caller's nudge logic runs instead of propagating inf
    bad = (~ok) & (num != 0.0)
    out[bad] = 1e6
    return out


def _upper_hull(logmod: np.ndarray) -> list[int]:
    """Indices of the upper convex hull of (n, logmod[n]), finite entries."""
    pts = [(i, v) for i, v in enumerate(logmod) if math.isfinite(v)]
    hull: list[tuple[int, float]] = []
    for x, y in pts:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            # pop while the middle point lies below the chord
            if (y2 - y1) * (x - x1) <= (y - y1) * (x2 - x1):
                hull.pop()
            else:
                break
        hull.append((x, y))
    return [x for x, _ in hull]


def _initial_guesses(coeffs: np.ndarray) -> np.ndarray:
    """Newton polygon starting points: one ring of guesses per hull edge."""
    logmod = np.full(coeffs.size, -np.inf)
    nz = np.abs(coeffs) > 0.0
    logmod[nz] = np.log(np.abs(coeffs[nz]))
    hull = _upper_hull(logmod)
    guesses = []
    for ring, (i, j) in enumerate(zip(hull[:-1], hull[1:])):
        count = j - i
        radius = math.exp((logmod[i] - logmod[j]) / count)
        theta = 2.0 * math.pi * (np.arange(count) + 0.5) / count + 0.539 * ring + 0.376
        guesses.append(radius * np.exp(1j * theta))
    return np.concatenate(guesses)


def _pair_repulsion(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """sum_{j != i} 1/(z_i - z_j) and min_j |z_i - z_j|, blocked so memory
    stays linear-ish in the degree."""
    m = z.size
    out = np.empty(m, dtype=np.complex128)
    minsep = np.empty(m, dtype=np.float64)
    block = 2048
    for start in range(0, m, block):
        rows = np.arange(start, min(start + block, m))
        diff = z[rows, None] - z[None, :]
        local = np.arange(rows.size)
        diff[local, rows] = 1.0
        with np.errstate(divide="ignore"):
            inv = 1.0 / diff
        inv[local, rows] = 0.0
        out[rows] = inv.sum(axis=1)
        amax = np.abs(inv).max(axis=1)
        with np.errstate(divide="ignore"):
            minsep[rows] = np.where(amax > 0.0, 1.0 / amax, np.inf)
    return out, minsep


def _aberth(coeffs: np.ndarray) -> np.ndarray:
    """All roots of sum_n coeffs[n] u^n; coeffs[0] and coeffs[-1] nonzero."""
    m = coeffs.size - 1
    if m == 1:
        return np.array([-coeffs[0] / coeffs[1]])
    z = _initial_guesses(coeffs)
    for _ in range(_ABERTH_MAXIT):
        repulse, minsep = _pair_repulsion(z)
        collide = ~np.isfinite(repulse)
        if np.any(collide):
            # coincident iterates: shear apart asymmetrically and retry
            k = np.flatnonzero(collide)
            z[k] += 1e-6 * (1.0 + np.abs(z[k])) * np.exp(2j * np.pi * k / max(m, 1))
            continue
        ratio, settled = _newton_ratio(coeffs, z)
        denom = 1.0 - ratio * repulse
        step = _safe_div(ratio, denom)
        bad = ~np.isfinite(step)
        if np.any(bad):
            step[bad] = 0.0
            z[bad] = z[bad] * (1.0 + 1e-6) + 1e-6
        z = z - step
        scale = 1.0 + np.abs(z)
        # a root is done when its step is tiny, or when its residual sits on
        # the rounding floor AND no sibling iterate is nearby (an isolated
        # iterate at the floor cannot improve; a close pair must keep
        # repelling so duplicates resolve themselves)
        done = (np.abs(step) <= _ABERTH_TOL * scale) | (settled & (minsep >= 1e-4 * scale))
        if np.all(done):
            return z
    raise RootFindingError(f"Aberth iteration did not converge at degree {m}")


def _polish(coeffs: np.ndarray, roots: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Newton-polish each root; returns (roots, steps used per root)."""
    z = roots.copy()
    steps = np.zeros(z.size, dtype=np.int64)
    active = np.ones(z.size, dtype=bool)
    for _ in range(_POLISH_MAXSTEPS):
        ratio, settled = _newton_ratio(coeffs, z[active])
        ratio[settled] = 0.0
        done = settled | (np.abs(ratio) <= 1e-15 * (1.0 + np.abs(z[active])))
        z[active] -= ratio
        steps[active] += 1
        idx = np.flatnonzero(active)
        active[idx[done]] = False
        if not np.any(active):
            break
    return z, steps


def _polynomial_roots(b: np.ndarray) -> np.ndarray:
    """All roots of sum b_n u^n, handling exact zero leading/trailing terms."""
    mods = np.abs(b)
    nz = np.flatnonzero(mods > 0.0)
    if nz.size == 0:
        raise ValueError("zero polynomial")
    lead, top = nz[0], nz[-1]
    if top == lead:
        return np.zeros(lead, dtype=np.complex128)  # c_k u^k: k-fold origin root
    inner = _aberth(b[lead:top + 1])
    if lead == 0:
        return inner
    return np.concatenate([np.zeros(lead, dtype=np.complex128), inner])


def _contour_count(b: np.ndarray, t: float, nodes: int = _CONTOUR_NODES) -> float:
    """Mean of u q'(u)/q(u) over the circle |u| = t (argument principle)."""
    mods = np.abs(b)
    top = int(np.flatnonzero(mods > 0.0)[-1])
    c = b[:top + 1]
    theta = 2.0 * math.pi * (np.arange(nodes) + 0.5) / nodes
    u = t * np.exp(1j * theta)
    p, dp = _horner_pair(c, u)
    if np.any(p == 0.0):
        return math.nan
    w = u * dp / p
    return float(np.mean(w.real))


def count_zeros_argument_principle(series: GafSeries, radius: float) -> int:
    """Zero count of the truncated series inside |z| < radius.

    Contour integral of f'/f on |z| = radius by midpoint rule (4096 nodes).
    If the estimate is not within 0.1 of an integer, the contour is retried
    at slightly jittered radii; persistent failure means a zero sits on the
    contour and raises.
    """
    if not (math.isfinite(radius) and radius > 0.0):
        raise ValueError("radius must be positive and finite")
    b, _ = _scaled_coefficients(series.gaussians, series.log_weights, radius)
    for rel in _JITTER_STEPS:
        est = _contour_count(b, 1.0 + rel)
        if math.isfinite(est) and abs(est - round(est)) <= _COUNT_TOL:
            return int(round(est))
    raise RootFindingError(
        f"argument-principle count did not stabilize near radius {radius}")


@dataclass(frozen=True)
class ZeroSet:
    """Zeros of one sampled series restricted to its reporting window.

    ``residuals`` are |f| at each zero in units of max_n |c_n| R^n (R the
    domain radius); the absolute value is residuals * exp(log_scale).
    ``cert_radius`` is a contour radius sitting in a zero-free annulus at or
    beyond the domain edge; ``cert_count`` is the number of polynomial roots
    inside it, matched against the argument-principle integral during
    sampling.  When no zero crowds the domain boundary (the typical case)
    cert_count equals len(pattern).
    """

    pattern: PointPattern
    series: GafSeries
    residuals: np.ndarray
    polish_steps: np.ndarray
    domain_radius: float
    cert_radius: float
    cert_count: int
    log_scale: float

    def __post_init__(self) -> None:
        r = np.ascontiguousarray(np.asarray(self.residuals, dtype=np.float64))
        s = np.ascontiguousarray(np.asarray(self.polish_steps, dtype=np.int64))
        if r.shape != (len(self.pattern),) or s.shape != r.shape:
            raise ValueError("residuals and polish_steps must align with the pattern")
        r.flags.writeable = False
        s.flags.writeable = False
        object.__setattr__(self, "residuals", r)
        object.__setattr__(self, "polish_steps", s)

    def __len__(self) -> int:
        return len(self.pattern)


def _draw_series(kind: str, degree: int, rng: RngSpec, palm: bool) -> GafSeries:
    # fixed draw order n = 0..N from one substream keeps palm and plain
    # variants coupled coefficient-for-coefficient
    gen = rng.generator(_T_COEFF)
    xy = gen.standard_normal((degree + 1, 2))
    a = (xy[:, 0] + 1j * xy[:, 1]) / math.sqrt(2.0)
    if palm:
        pgen = rng.generator(_T_PALM)
        modulus = math.sqrt(pgen.gamma(2.0))  # |c1|^2 is size-biased Exp(1)
        mag = abs(a[1])
        phase = a[1] / mag if mag > 0.0 else 1.0 + 0.0j
        a[0] = 0.0
        a[1] = modulus * phase
    if kind == "planar":
        w = -0.5 * gammaln(np.arange(degree + 1) + 1.0)
    else:
        w = np.zeros(degree + 1)
    return GafSeries(kind=kind, gaussians=a, log_weights=w, rng=rng, palm=palm)


def _pick_certification_contour(kept_mods: np.ndarray,
                                other_mods: np.ndarray) -> tuple[float, int, float]:
    """Contour radius (scaled units) in a zero-free modulus gap at or beyond
    the kept zeros, plus a node count adapted to the gap's relative width.

    The preferred gap separates kept from discarded moduli, making the
    certified count equal the reported zero count.  When zeros crowd that
    gap below resolvable width, the contour falls outward gap by gap; the
    certified count then also covers some off-domain zeros.
    """
    lo = float(kept_mods.max()) if kept_mods.size else 0.0
    uppers = np.sort(other_mods[other_mods > lo]) if other_mods.size else np.empty(0)
    annuli: list[tuple[float, float]] = []
    prev = lo
    for u in uppers[:8]:  # a few outward gaps is plenty
        annuli.append((prev, float(u)))
        prev = float(u)
    annuli.append((prev, max(1.02, 1.05 * prev)))
    scored: list[tuple[float, float]] = []  # (t, relative margin)
    for a, b in annuli:
        if b <= a:
            continue
        t = 0.5 * (a + b)
        scored.append((t, (b - a) / (2.0 * t)))
    good = [c for c in scored if c[1] >= 1e-3]
    t, margin = min(good) if good else max(scored, key=lambda c: c[1])
    if margin < 6e-6:
        raise RootFindingError("no resolvable certification contour near the domain")
    nodes = max(_CONTOUR_NODES, min(1 << 19, math.ceil(3.0 / margin)))
    return t, nodes, margin


def _extract_zero_set(series: GafSeries, domain_radius: float,
                      window: Window, metric: Metric) -> ZeroSet:
    b, log_norm = _scaled_coefficients(series.gaussians, series.log_weights,
                                       domain_radius)
    roots = _polynomial_roots(b)
    roots, steps = _polish(b, roots)
    mods = np.abs(roots)

    pts = domain_radius * np.column_stack([roots.real, roots.imag])
    keep = (mods <= 1.0) & window.contains(pts)
    kept, other = roots[keep], roots[~keep]

    resid = np.abs(_horner(b, kept))
    if np.any(resid > _RESIDUAL_REL):
        raise RootFindingError(
            f"polished zero residual {resid.max():.3e} exceeds {_RESIDUAL_REL:.0e}")
    if kept.size > 1:
        sep = np.abs(kept[:, None] - kept[None, :])
        np.fill_diagonal(sep, np.inf)
        if sep.min() * domain_radius <= _DISTINCT_TOL:
            raise RootFindingError("reported zeros are not pairwise distinct")

    t, nodes, margin = _pick_certification_contour(np.abs(kept), np.abs(other))
    counted = None
    for frac in (0.0, 0.2, -0.2, 0.45, -0.45):  # jitters stay inside the gap
        est = _contour_count(b, t * (1.0 + frac * margin), nodes)
        if math.isfinite(est) and abs(est - round(est)) <= _COUNT_TOL:
            counted = int(round(est))
            break
    if counted is None:
        raise RootFindingError("certification contour never cleared the zeros")
    expected = int((mods < t).sum())
    if counted != expected:
        raise RootFindingError(
            f"argument principle counts {counted} zeros inside the certification "
            f"contour, root finder found {expected}")

    kept_pts = pts[keep]
    # sort into the pattern's canonical order so residuals stay aligned
    order = (np.lexsort((kept_pts[:, 1], kept_pts[:, 0]))
             if kept_pts.size else np.arange(0))
    pattern = PointPattern(2, window, metric, kept_pts[order])
    return ZeroSet(pattern=pattern, series=series,
                   residuals=resid[order], polish_steps=steps[keep][order],
                   domain_radius=domain_radius, cert_radius=t * domain_radius,
                   cert_count=counted, log_scale=log_norm)


def sample_gaf_planar(rho: float, rng: RngSpec) -> ZeroSet:
    """Zeros inside |z| < rho of the entire gaussian series.

    Truncation degree grows like rho^2; the certified range is rho <= 20.
    """
    if not (0.0 < rho <= 20.0):
        raise ValueError("rho must lie in (0, 20]")
    series = _draw_series("planar", planar_truncation(rho), rng, palm=False)
    window = Window.disc([0.0, 0.0], rho)
    return _extract_zero_set(series, rho, window, Metric.euclidean())


def sample_gaf_hyperbolic(rmax: float, rng: RngSpec, palm: bool = False) -> ZeroSet:
    """Zeros inside |z| < rmax < 1 of the gaussian disc series.

    With ``palm`` the series is re-rooted at the origin: c_0 = 0 and |c_1|
    is size-biased (density 2 r^3 exp(-r^2)) with the phase of the plain
    draw, so palm and plain samples are coupled through the shared stream.
    """
    if not (0.0 < rmax <= 0.995):
        raise ValueError("rmax must lie in (0, 0.995]")
    series = _draw_series("hyperbolic", hyperbolic_truncation(rmax), rng, palm=palm)
    window = Window.disc([0.0, 0.0], rmax)
    return _extract_zero_set(series, rmax, window, Metric.hyperbolic_disc())


_SIDECAR_VERSION = 1


def write_zero_set(zero_set: ZeroSet, path) -> None:
    """Pattern file at ``path`` plus a ``.sidecar.json`` with residuals,
    polish info, and the coefficient seed needed to redraw the series."""
    from .core import write_pattern

    write_pattern(zero_set.pattern, path)
    s = zero_set.series
    sidecar = {
        "format": _SIDECAR_VERSION,
        "kind": s.kind,
        "degree": s.degree,
        "palm": s.palm,
        "rng": None if s.rng is None else {"seed": s.rng.seed, "stream": s.rng.stream},
        "domain_radius": zero_set.domain_radius,
        "cert_radius": zero_set.cert_radius,
        "cert_count": zero_set.cert_count,
        "log_scale": zero_set.log_scale,
        "residuals": [float(r) for r in zero_set.residuals],
        "polish_steps": [int(k) for k in zero_set.polish_steps],
    }
    with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=1)
        fh.write("\n")


def read_zero_set(path) -> ZeroSet:
    """Inverse of write_zero_set; redraws the series from the stored seed."""
    from .core import read_pattern

    pattern = read_pattern(path)
    with open(_sidecar_path(path), encoding="utf-8") as fh:
        sidecar = json.load(fh)
    if sidecar.get("format") != _SIDECAR_VERSION:
        raise PPStatError(f"unsupported zero-set sidecar {sidecar.get('format')!r}")
    if sidecar["rng"] is None:
        raise PPStatError("sidecar lacks a coefficient seed; series not recoverable")
    rng = RngSpec(sidecar["rng"]["seed"], sidecar["rng"]["stream"])
    series = _draw_series(sidecar["kind"], sidecar["degree"], rng, sidecar["palm"])
    return ZeroSet(pattern=pattern, series=series,
                   residuals=np.array(sidecar["residuals"]),
                   polish_steps=np.array(sidecar["polish_steps"]),
                   domain_radius=sidecar["domain_radius"],
                   cert_radius=sidecar["cert_radius"],
                   cert_count=sidecar["cert_count"],
                   log_scale=sidecar["log_scale"])


def _sidecar_path(path) -> str:
    p = str(path)
    return (p[:-5] if p.endswith(".json") else p) + ".sidecar.json"
