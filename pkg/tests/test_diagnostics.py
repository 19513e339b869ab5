"""Linear statistics, fluctuation sweeps, palm re-rooting, tolerance screen."""
import math

import numpy as np
import pytest
from scipy import stats

from ppstat import (GeneratorSpec, Metric, PPStatError, PerturbationSpec,
                    RngSpec, TestFunction, Window, classify_trend,
                    estimate_fluctuation, eval_linear_statistic, n1_bound,
                    n1_statistic, palm_sample_empirical, sample,
                    sample_poisson, sample_shifted_lattice, tolerance_report)
from ppstat.core import PointPattern

from helpers import pattern_of


def _poisson_gen(side, intensity=1.0):
    return GeneratorSpec(kind="poisson", intensity=intensity,
                         window=Window.box([(0.0, side), (0.0, side)]))


# --- test functions ---------------------------------------------------------

def test_tent_profile_values():
    tf = TestFunction.tent(4.0, 2)
    disp = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 3.0], [4.0, 0.0], [5.0, 0.0]])
    # radii 0, .5, .75, 1, 1.25 of the scaled profile
    assert np.allclose(tf.values(disp), [1.0, 1.0, 0.5, 0.0, 0.0])
    assert tf.lipschitz == pytest.approx(0.5)


def test_interval_profile_values():
    tf = TestFunction.interval(3.0)
    disp = np.array([[-3.0], [-2.999], [0.0], [3.0], [3.001]])
    assert np.allclose(tf.values(disp), [0.0, 1.0, 1.0, 1.0, 0.0])


def test_test_function_validation():
    with pytest.raises(ValueError):
        TestFunction("bump", 1.0, 2)
    with pytest.raises(ValueError):
        TestFunction.tent(0.0, 2)
    with pytest.raises(ValueError):
        TestFunction("interval", 1.0, 2)


# --- linear statistic -------------------------------------------------------

def test_linear_statistic_plateau_counts_points():
    w = Window.box([(0.0, 20.0), (0.0, 20.0)])
    c = (10.0, 10.0)
    g = RngSpec(100, 0).generator(1)
    pts = c + g.uniform(-1.0, 1.0, size=(7, 2))  # inside B(c, 2) = B(c, n/2)
    pat = PointPattern(2, w, Metric.euclidean(), pts)
    assert eval_linear_statistic(pat, TestFunction.tent(4.0, 2), c) == 7.0


def test_linear_statistic_profile_arithmetic():
    w = Window.box([(0.0, 20.0), (0.0, 20.0)])
    pat = pattern_of([[13.0, 10.0]], window=w)  # distance 3 = 0.75 * scale
    assert eval_linear_statistic(pat, TestFunction.tent(4.0, 2),
                                 (10.0, 10.0)) == pytest.approx(0.5)
    outside = pattern_of([[15.0, 10.0]], window=w)  # distance 5 > scale 4
    assert eval_linear_statistic(outside, TestFunction.tent(4.0, 2),
                                 (10.0, 10.0)) == 0.0


def test_linear_statistic_support_must_fit():
    pat = pattern_of([[1.0, 1.0]], window=Window.box([(0.0, 4.0), (0.0, 4.0)]))
    with pytest.raises(PPStatError):
        eval_linear_statistic(pat, TestFunction.tent(3.0, 2), (2.0, 2.0))


def test_linear_statistic_superposition_additive():
    w = Window.box([(0.0, 10.0), (0.0, 10.0)])
    c = np.array([5.0, 5.0])
    tf = TestFunction.tent(4.0, 2)
    for t in range(200):
        g = RngSpec(101000 + t, 0).generator(1)
        pts = g.uniform(0, 10, size=(int(g.integers(2, 40)), 2))
        pat = PointPattern(2, w, Metric.euclidean(), pts)
        mask = g.uniform(size=len(pts)) < 0.5
        whole = eval_linear_statistic(pat, tf, c)
        parts = 0.0
        for m in (mask, ~mask):
            if m.any():
                parts += eval_linear_statistic(
                    PointPattern(2, w, Metric.euclidean(), pts[m]), tf, c)
        assert abs(whole - parts) <= 1e-12


def test_linear_statistic_plateau_monotone_in_scale():
    w = Window.box([(0.0, 20.0), (0.0, 20.0)])
    c = np.array([10.0, 10.0])
    scales = (2.0, 3.0, 4.0, 5.0, 6.0)
    for t in range(100):
        g = RngSpec(102000 + t, 0).generator(1)
        r = 3.0 * np.sqrt(g.uniform(size=12))  # inside B(c, 6/2)
        th = g.uniform(0, 2 * math.pi, size=12)
        pts = c + np.c_[r * np.cos(th), r * np.sin(th)]
        pat = PointPattern(2, w, Metric.euclidean(), pts)
        vals = [eval_linear_statistic(pat, TestFunction.tent(s, 2), c)
                for s in scales]
        assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))
        assert vals[-1] == 12.0


# --- d=1 interval statistic -------------------------------------------------

def test_n1_lattice_is_identically_zero():
    w = Window.box([(0.0, 16.0)])
    for s in range(10):
        lat = sample_shifted_lattice(w, RngSpec(103000 + s, 0))
        for n in range(1, 8):
            assert n1_statistic(lat, n) == 0


def test_n1_poisson_variance_two_n():
    w = Window.box([(0.0, 16.0)])
    n = 3
    vals = np.array([n1_statistic(sample_poisson(1.0, w, RngSpec(104000 + r, 0)), n)
                     for r in range(1500)], dtype=float)
    emp = vals.var(ddof=1)
    m4 = np.mean((vals - vals.mean()) ** 4)
    se = math.sqrt((m4 - (len(vals) - 3) / (len(vals) - 1) * emp * emp) / len(vals))
    assert abs(emp - 2 * n) < 4 * se


def test_n1_validation():
    w = Window.box([(0.0, 8.0)])
    lat = sample_shifted_lattice(w, RngSpec(105, 0))
    with pytest.raises(PPStatError):
        n1_statistic(lat, 5)  # interval exits the window
    with pytest.raises(ValueError):
        n1_statistic(lat, 0)
    square = pattern_of([[1.0, 1.0]],
                        window=Window.box([(0.0, 4.0), (0.0, 4.0)]))
    with pytest.raises(ValueError):
        n1_statistic(square, 1)


def test_n1_bound_frozen_values():
    assert n1_bound(PerturbationSpec(kind="zero")) == 0.0
    assert n1_bound(PerturbationSpec(kind="uniform-ball", radius=0.25)) == 2.0
    gauss = n1_bound(PerturbationSpec(kind="gaussian", sigma=1.0))
    oracle = 4.0 * sum(stats.norm.sf(k) for k in range(60))
    assert gauss == pytest.approx(2.7311489711701533, abs=1e-12)
    assert gauss == pytest.approx(oracle, rel=1e-9)
    heavy = n1_bound(PerturbationSpec(kind="heavy-tail", alpha=2.5))
    # radial tail (1 + r)^-alpha summed over integer r gives 2 zeta(5/2)
    zeta_oracle = 2.0 * sum(k ** -2.5 for k in range(1, 200000))
    assert heavy == pytest.approx(zeta_oracle, rel=1e-6)
    assert n1_bound(PerturbationSpec(kind="heavy-tail", alpha=0.5)) == math.inf


def test_n1_bound_dominates_perturbed_lattice():
    pert = PerturbationSpec(kind="gaussian", sigma=1.0)
    gen = GeneratorSpec(kind="perturbed-lattice",
                        window=Window.box([(0.0, 24.0)]), perturbation=pert)
    vals = [abs(n1_statistic(sample(gen, RngSpec(106000 + r, 0)), 6))
            for r in range(300)]
    assert np.mean(vals) <= n1_bound(pert)


# --- fluctuation sweeps -----------------------------------------------------

def test_fluctuation_poisson_matches_campbell_formula():
    st = estimate_fluctuation(_poisson_gen(24.0), (3.0, 5.0), 300,
                              RngSpec(95, 0))
    for s, v, se in zip(st.scales, st.variances, st.variance_ses):
        target = (11.0 * math.pi / 24.0) * s * s  # intensity times int h^2
        assert abs(v - target) < 4.0 * se
    assert st.values.shape == (300, 2)
    assert np.allclose(st.covariance, st.covariance.T)
    assert st.trend() in ("growing", "bounded", "decaying", "inconclusive")


def test_fluctuation_deterministic_and_worker_invariant():
    gen = _poisson_gen(10.0)
    a = estimate_fluctuation(gen, (2.0, 3.0), 40, RngSpec(107, 0))
    b = estimate_fluctuation(gen, (2.0, 3.0), 40, RngSpec(107, 0))
    c = estimate_fluctuation(gen, (2.0, 3.0), 40, RngSpec(107, 0), workers=2)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.values, c.values)


def test_fluctuation_validation():
    gen = _poisson_gen(10.0)
    with pytest.raises(ValueError):
        estimate_fluctuation(gen, (2.0, 2.0), 50, RngSpec(108, 0))
    with pytest.raises(ValueError):
        estimate_fluctuation(gen, (2.0,), 50, RngSpec(108, 0))
    with pytest.raises(ValueError):
        estimate_fluctuation(gen, (2.0, 3.0), 1, RngSpec(108, 0))
    with pytest.raises(PPStatError):
        estimate_fluctuation(gen, (2.0, 8.0), 50, RngSpec(108, 0))


def test_fluctuation_d1_lattice_interval_distributions():
    gen = GeneratorSpec(kind="shifted-lattice",
                        window=Window.box([(0.0, 12.0)]))
    st = estimate_fluctuation(gen, (2.0, 4.0), 60, RngSpec(109, 0))
    assert st.n1_distributions == ({0: 60}, {0: 60})
    frac = estimate_fluctuation(gen, (2.0, 2.5), 60, RngSpec(109, 0))
    assert frac.n1_distributions is None


def test_variance_se_shrinks_with_replicates():
    gen = GeneratorSpec(kind="poisson", intensity=1.0,
                        window=Window.box([(0.0, 16.0), (0.0, 16.0)]))
    a = estimate_fluctuation(gen, (3.0, 5.0), 400, RngSpec(115, 0))
    b = estimate_fluctuation(gen, (3.0, 5.0), 800, RngSpec(115, 0))
    for j in range(2):
        ratio = (a.variance_ses[j] / b.variance_ses[j]) ** 2
        assert 1.5 <= ratio <= 2.5


def test_classify_trend_branches():
    scales = (1.0, 2.0, 3.0, 4.0)
    assert classify_trend(scales, (8.0, 4.0, 2.0, 1.0))[0] == "decaying"
    assert classify_trend(scales, (1.0, 2.0, 4.0, 8.0))[0] == "growing"
    assert classify_trend(scales, (1.0, 1.1, 1.3, 0.9))[0] == "bounded"
    assert classify_trend(scales, (0.001, 0.003, 0.009, 0.002),
                          (10.0, 10.0, 10.0, 10.0))[0] == "bounded"
    assert classify_trend(scales, (1.0, 9.0, 2.0, 8.0))[0] == "inconclusive"
    assert classify_trend(scales, (0.0, 0.0, 0.0, 0.0),
                          (4.0, 4.0, 4.0, 4.0))[0] == "bounded"


# --- palm sampling ----------------------------------------------------------

def test_palm_origin_is_always_a_point():
    for s in range(25):
        pat = palm_sample_empirical(_poisson_gen(12.0), RngSpec(110000 + s, 0))
        assert np.linalg.norm(pat.points, axis=1).min() == 0.0


def test_palm_lattice_support_is_integer():
    gen = GeneratorSpec(kind="shifted-lattice",
                        window=Window.box([(0.0, 10.0), (0.0, 10.0)]))
    for s in range(10):
        pat = palm_sample_empirical(gen, RngSpec(111000 + s, 0))
        assert np.allclose(pat.points, np.round(pat.points), atol=1e-9)
        assert np.linalg.norm(pat.points, axis=1).min() == 0.0


def test_palm_lattice_rerooting_is_idempotent():
    gen = GeneratorSpec(kind="shifted-lattice",
                        window=Window.box([(0.0, 10.0), (0.0, 10.0)]))
    def normalized(points):
        shifted = np.round(points - points.min(axis=0)).astype(int)
        return {tuple(p) for p in shifted}
    for s in range(10):
        first = palm_sample_empirical(gen, RngSpec(114000 + s, 0))
        pick = RngSpec(115000 + s, 0).generator(1)
        q = first.points[int(pick.integers(len(first.points)))]
        again = first.translate(-q)
        assert normalized(first.points) == normalized(again.points)
        assert normalized(first.points) == {(i, j) for i in range(10)
                                            for j in range(10)}


def test_palm_deterministic():
    a = palm_sample_empirical(_poisson_gen(12.0), RngSpec(112, 0))
    b = palm_sample_empirical(_poisson_gen(12.0), RngSpec(112, 0))
    assert np.array_equal(a.points, b.points)


def test_palm_empty_core_errors():
    gen = GeneratorSpec(kind="poisson", intensity=1e-6,
                        window=Window.box([(0.0, 1.0), (0.0, 1.0)]))
    with pytest.raises(PPStatError):
        palm_sample_empirical(gen, RngSpec(113, 0))


def test_palm_poisson_counts_follow_rooted_law():
    lam = 4.0 * math.pi
    counts = []
    for r in range(1500):
        pat = palm_sample_empirical(_poisson_gen(20.0), RngSpec(96000 + r, 0))
        d = np.linalg.norm(pat.points, axis=1)
        counts.append(int(((d > 0) & (d < 2.0)).sum()))
    counts = np.array(counts)
    kmax = int(stats.poisson.ppf(0.9999, lam)) + 2
    probs = np.append(stats.poisson.pmf(np.arange(kmax), lam),
                      stats.poisson.sf(kmax - 1, lam))
    obs = np.bincount(counts, minlength=kmax + 1)[:kmax + 1].astype(float)
    obs[-1] += len(counts) - obs.sum()
    exp = probs * len(counts)
    while exp[0] < 5:
        exp[1] += exp[0]; obs[1] += obs[0]; exp, obs = exp[1:], obs[1:]
    while exp[-1] < 5:
        exp[-2] += exp[-1]; obs[-2] += obs[-1]; exp, obs = exp[:-1], obs[:-1]
    chi = float(((obs - exp) ** 2 / exp).sum())
    assert stats.chi2.sf(chi, len(obs) - 1) > 0.001


# --- tolerance screen -------------------------------------------------------

def test_tolerance_report_lattice_reads_rigid():
    gen = GeneratorSpec(kind="shifted-lattice",
                        window=Window.box([(0.0, 12.0), (0.0, 12.0)]))
    rep = tolerance_report(gen, RngSpec(90, 0), reps=120)
    assert rep["verdict"] == "evidence-against-tolerance"
    assert rep["caveat"] == "heuristic"
    assert rep["count_probe"]["max"] - rep["count_probe"]["min"] <= 2


def test_tolerance_report_poisson_reads_tolerant():
    rep = tolerance_report(_poisson_gen(12.0), RngSpec(91, 0), reps=120)
    assert rep["verdict"] == "consistent-with-tolerance"
    assert rep["trend"] == "growing"


def test_tolerance_report_gaf_reads_rigid():
    gen = GeneratorSpec(kind="gaf-planar", rho=8.0)
    rep = tolerance_report(gen, RngSpec(92, 0), reps=150,
                           scales=(2.0, 4.0, 8.0))
    assert rep["verdict"] == "evidence-against-tolerance"
    assert rep["trend"] == "decaying"


def test_tolerance_report_accepts_precomputed_stats():
    gen = _poisson_gen(12.0)
    st = estimate_fluctuation(gen, (2.0, 4.0), 120, RngSpec(91, 0))
    rep = tolerance_report(gen, RngSpec(91, 0), reps=120, scales=(2.0, 4.0),
                           stats=st)
    assert rep["variances"] == [float(v) for v in st.variances]
    with pytest.raises(ValueError):
        tolerance_report(gen, RngSpec(91, 0), scales=(2.0, 5.0), stats=st)
