import numpy as np
import pytest
from scipy import stats

from dgfair.gaussian import (
    GaussianMixture,
    IsotropicMixture,
    NumericalError,
    cholesky_spd,
    gaussian_logpdf,
    inv_sqrtm_psd,
    sqrtm_psd,
)


def test_cholesky_rejects_asymmetric_and_indefinite():
    with pytest.raises(NumericalError):
        cholesky_spd(np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(NumericalError):
        cholesky_spd(np.array([[1.0, 0.0], [0.0, -1.0]]))


def test_logpdf_matches_scipy():
    rng = np.random.default_rng(0)
    L = rng.normal(size=(3, 3))
    cov = L @ L.T + np.eye(3)
    mean = rng.normal(size=3)
    x = rng.normal(size=(10, 3))
    want = stats.multivariate_normal(mean, cov).logpdf(x)
    np.testing.assert_allclose(gaussian_logpdf(x, mean, np.linalg.cholesky(cov)), want, rtol=1e-12)


def test_matrix_square_roots():
    m = np.array([[2.0, 0.3], [0.3, 1.0]])
    r = sqrtm_psd(m)
    np.testing.assert_allclose(r @ r, m, atol=1e-12)
    np.testing.assert_allclose(inv_sqrtm_psd(m) @ r, np.eye(2), atol=1e-12)


def test_mixture_moments_match_samples():
    gm = GaussianMixture([0.3, 0.7], [[0, 0], [2, 1]], [np.eye(2), [[1, 0.2], [0.2, 0.5]]])
    mean, cov = gm.moments()
    x = gm.sample(200_000, np.random.default_rng(1))
    np.testing.assert_allclose(x.mean(axis=0), mean, atol=0.02)
    np.testing.assert_allclose(np.cov(x.T), cov, atol=0.03)


def test_zero_weight_components_dropped():
    gm = GaussianMixture([1.0, 0.0], [[0.0], [5.0]], [[[1.0]], [[1.0]]])
    assert gm.n_components == 1


def test_affine_pushforward_density():
    gm = GaussianMixture([1.0], [[1.0, 2.0]], [[[1.0, 0.0], [0.0, 2.0]]])
    A = np.array([[2.0, 1.0]])
    out = gm.affine_pushforward(A, np.array([0.5]), 0.01 * np.eye(1))
    assert out.means[0, 0] == pytest.approx(4.5)
    assert out.covs[0, 0, 0] == pytest.approx(4.0 + 2.0 + 0.01)


def test_isotropic_mixture_matches_full_mixture():
    means = np.random.default_rng(2).normal(size=(7, 3))
    iso = IsotropicMixture(means, 0.4, chunk=3)
    full = GaussianMixture(np.full(7, 1 / 7), means, np.stack([0.16 * np.eye(3)] * 7))
    x = np.random.default_rng(3).normal(size=(11, 3))
    np.testing.assert_allclose(iso.logpdf(x), full.logpdf(x), rtol=1e-10)
