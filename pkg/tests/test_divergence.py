import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dgfair.divergence import (
    DivergenceEstimate,
    EstimationError,
    Estimator,
    emd_1d,
    estimate_js_between,
    estimate_js_divergence_mc,
    estimate_js_gaussian_mixture_repr,
    estimate_tv_mc,
    hellinger_gaussian,
    hellinger_gaussian_iso,
    hellinger_gaussian_iso_exact,
    js_distance,
    js_divergence_discrete,
    kl_gaussian,
    mean_distance,
    tv_gaussian_iso,
)
from dgfair.domains import GaussianCell
from dgfair.gaussian import GaussianMixture

from oracles import emd_scipy, hellinger_quad_1d, js_quadrature_1d, tv_quad_1d


def g1(mu, s=1.0):
    return GaussianMixture([1.0], [[mu]], [[[s * s]]])


def est(v, se=0.0):
    return DivergenceEstimate(v, se, 1000, Estimator.ANALYTIC_MC)


def test_js_identical_is_zero():
    e = estimate_js_between(g1(0.0), g1(0.0), 20_000, seed=1)
    assert e.within(0.0)


def test_js_disjoint_is_one():
    e = estimate_js_between(g1(-50.0), g1(50.0), 5_000, seed=1)
    assert e.within(1.0)


def test_js_matches_quadrature_unit_shift():
    e = estimate_js_between(g1(0.0), g1(1.0), 200_000, seed=0)
    ref = js_quadrature_1d(0.0, 1.0, 1.0, 1.0)
    assert abs(e.value - ref) <= max(5e-3, 3 * e.std_error)


def test_js_frozen_quadrature_value():
    # JS(N(0,1), N(1,1)) in bits, trapezoid rule on [-10, 11] with step 1e-3
    assert js_quadrature_1d(0.0, 1.0, 1.0, 1.0) == pytest.approx(0.1607472198, abs=1e-9)


def test_js_symmetric():
    p, q = g1(0.0, 1.0), g1(0.7, 1.5)
    a = estimate_js_between(p, q, 50_000, seed=2)
    b = estimate_js_between(q, p, 50_000, seed=3)
    assert abs(a.value - b.value) <= 3 * math.hypot(a.std_error, b.std_error)


def test_js_needs_enough_samples():
    with pytest.raises(ValueError):
        estimate_js_between(g1(0.0), g1(1.0), 100)


def test_js_non_finite_density_names_point():
    def bad(x):
        out = np.zeros(len(x))
        out[3] = np.nan
        return out

    sampler = lambda n, rng: rng.normal(size=(n, 1))
    with pytest.raises(EstimationError, match="sample 3"):
        estimate_js_divergence_mc(bad, g1(0).logpdf, sampler, sampler, 1000, 0)


def test_js_triangle_inequality():
    specs = [g1(0.0), g1(0.8, 1.2), g1(1.5, 0.7)]
    d = {}
    for i, j in [(0, 1), (1, 2), (0, 2)]:
        d[(i, j)] = js_distance(estimate_js_between(specs[i], specs[j], 50_000, seed=i * 3 + j))
    se = math.sqrt(sum(v.std_error**2 for v in d.values()))
    assert d[(0, 2)].value <= d[(0, 1)].value + d[(1, 2)].value + 3 * se


def test_js_distance_examples():
    assert js_distance(est(0.0)).value == 0.0
    assert js_distance(est(1.0)).value == 1.0
    assert js_distance(est(0.25)).value == 0.5


def test_js_distance_clamps_and_propagates():
    d = js_distance(est(-0.001, 0.002))
    assert d.value == 0.0 and d.raw_value == -0.001
    assert d.std_error == pytest.approx(math.sqrt(0.002))
    d = js_distance(est(0.09, 0.003))
    assert d.std_error == pytest.approx(0.003 / (2 * 0.3))


def test_discrete_js():
    assert js_divergence_discrete([1, 0], [0, 1]) == pytest.approx(1.0)
    assert js_divergence_discrete([0.3, 0.7], [0.3, 0.7]) == 0.0


def test_kl_gaussian():
    p = GaussianCell([0.0], [[1.0]])
    q = GaussianCell([1.0], [[1.0]])
    assert kl_gaussian(p, p) == 0.0
    assert abs(kl_gaussian(p, q) - 0.5 / math.log(2)) < 1e-12
    assert kl_gaussian(p, q) == pytest.approx(0.7213, abs=1e-4)
    ps, qs = GaussianCell([5.0], [[1.0]]), GaussianCell([6.0], [[1.0]])
    assert kl_gaussian(ps, qs) == pytest.approx(kl_gaussian(p, q), abs=1e-12)
    with pytest.raises(ValueError):
        kl_gaussian(p, GaussianCell([0.0, 0.0], np.eye(2)))


def test_emd_examples():
    assert emd_1d([1.0, 2.0, 3.0], [3.0, 1.0, 2.0]).value == 0.0
    assert emd_1d(np.zeros(5), np.ones(5)).value == 1.0
    assert emd_1d([0.0, 1.0], [0.5, 0.5]).value == pytest.approx(0.5)
    e = emd_1d([0.0, 1.0], [0.5])
    assert e.std_error == 0.0 and e.estimator is Estimator.EMPIRICAL
    with pytest.raises(ValueError):
        emd_1d([], [1.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=12), st.lists(st.floats(-10, 10), min_size=1, max_size=12))
def test_emd_matches_scipy_for_any_sizes(u, v):
    assert emd_1d(u, v).value == pytest.approx(emd_scipy(u, v), abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 10).flatmap(lambda n: st.tuples(*[st.lists(st.floats(-5, 5), min_size=n, max_size=n)] * 3)))
def test_emd_is_a_metric(triple):
    u, v, w = triple
    duv, dvw, duw = emd_1d(u, v).value, emd_1d(v, w).value, emd_1d(u, w).value
    assert duv == pytest.approx(emd_1d(v, u).value)
    assert duw <= duv + dvw + 1e-12
    assert (duv == 0) == (sorted(u) == sorted(v))


def test_mean_distance():
    assert mean_distance([1.0, 2.0], [2.0, 1.0]).value == 0.0
    assert mean_distance(np.full(4, 0.2), np.full(4, 0.7)).value == pytest.approx(0.5)
    rng = np.random.default_rng(0)
    e = mean_distance(rng.normal(size=5000), rng.normal(size=5000))
    assert e.within(0.0)
    with pytest.raises(ValueError):
        mean_distance([1.0], [])


def test_hellinger_iso_examples():
    assert hellinger_gaussian_iso([0, 0], [0, 0], 0.5) == 0.0
    d, sigma = 3, 0.2
    mu = np.zeros(d)
    mu[0] = math.sqrt(8 * d * sigma**2)
    assert abs(hellinger_gaussian_iso(np.zeros(d), mu, sigma) - 0.7950600976) < 1e-9
    assert hellinger_gaussian_iso(np.zeros(d), mu, sigma) == pytest.approx(math.sqrt(1 - math.exp(-1)), abs=1e-15)
    vals = [hellinger_gaussian_iso([0.0], [t], 1.0) for t in np.linspace(0, 30, 40)]
    assert all(b > a for a, b in zip(vals, vals[1:]) if a < 1.0)
    assert vals[-1] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        hellinger_gaussian_iso([0.0], [1.0], 0.0)


def test_hellinger_one_dim_matches_quadrature():
    rng = np.random.default_rng(4)
    for _ in range(5):
        m1, m2, s = rng.normal(), rng.normal(), rng.uniform(0.3, 2.0)
        ref = hellinger_quad_1d(m1, s, m2, s)
        assert abs(hellinger_gaussian_iso([m1], [m2], s) - ref) < 1e-6
        assert abs(hellinger_gaussian([m1], [[s * s]], [m2], [[s * s]]) - ref) < 1e-6


def test_hellinger_exact_iso_agrees_with_general():
    rng = np.random.default_rng(5)
    for d in (1, 2, 8):
        m1, m2 = rng.normal(size=d), rng.normal(size=d)
        cov = 0.09 * np.eye(d)
        assert abs(hellinger_gaussian_iso_exact(m1, m2, 0.3) - hellinger_gaussian(m1, cov, m2, cov)) < 1e-12
        # the per-dimension scaled form is below the exact distance once d > 1
        if d > 1:
            assert hellinger_gaussian_iso(m1, m2, 0.3) < hellinger_gaussian_iso_exact(m1, m2, 0.3)


def test_tv_closed_form_and_mc():
    ref = tv_quad_1d(0.0, 0.5, 0.6, 0.5)
    assert tv_gaussian_iso([0.0], [0.6], 0.5) == pytest.approx(ref, abs=1e-8)
    e = estimate_tv_mc(g1(0.0, 0.5), g1(0.6, 0.5), 50_000, seed=0)
    assert e.within(ref)


def test_tv_dominates_js():
    for mu in (0.2, 1.0, 3.0):
        js = estimate_js_between(g1(0.0), g1(mu), 50_000, seed=7)
        assert tv_quad_1d(0.0, 1.0, mu, 1.0) >= js.value - 3 * js.std_error


def test_mixture_repr_examples():
    rng = np.random.default_rng(0)
    means = rng.normal(size=(20, 2))
    assert estimate_js_gaussian_mixture_repr(means, means, 0.3, 20_000, seed=1).within(0.0)
    assert estimate_js_gaussian_mixture_repr([[0.0, 0.0]], [[100.0, 0.0]], 0.1, 5_000, seed=1).within(1.0)
    e = estimate_js_gaussian_mixture_repr([[0.0]], [[0.5]], 0.4, 100_000, seed=2)
    assert abs(e.value - js_quadrature_1d(0.0, 0.4, 0.5, 0.4)) <= max(5e-3, 3 * e.std_error)


def test_estimate_serializes():
    d = estimate_js_between(g1(0.0), g1(1.0), 2000, seed=0).to_dict()
    assert set(d) >= {"value", "std_error", "n_samples", "estimator"}
    assert d["estimator"] == "analytic_mc"


@settings(max_examples=20, deadline=None)
@given(st.floats(-3, 3), st.floats(0.3, 3), st.floats(-3, 3), st.floats(0.3, 3))
def test_js_bounded(m1, s1, m2, s2):
    e = estimate_js_between(g1(m1, s1), g1(m2, s2), 2000, seed=0)
    assert e.value <= 1 + 3 * e.std_error
    assert 0.0 <= js_distance(e).value <= 1.0


def test_js_error_bar_covers_rounding_for_equal_laws():
    # two parameterizations of the same Gaussian differ only by rounding
    cov = np.array([[0.3, 0.1], [0.1, 0.4]])
    R = np.array([[math.cos(0.3), -math.sin(0.3)], [math.sin(0.3), math.cos(0.3)]])
    p = GaussianMixture([1.0], [[1.0, 2.0]], [cov])
    q = GaussianMixture([1.0], [R.T @ (R @ np.array([1.0, 2.0]))], [R.T @ (R @ cov @ R.T) @ R])
    est = estimate_js_between(p, q, 5000, seed=0)
    assert est.value != 0.0
    assert abs(est.value) <= 3 * est.std_error
    assert est.std_error < 1e-12
