"""Gaussian and Gaussian-mixture densities shared by the domain, divergence and bound code."""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

LOG_2PI = math.log(2.0 * math.pi)


class NumericalError(ArithmeticError):
    """A matrix that must be SPD (or invertible) is not."""


def cholesky_spd(cov: np.ndarray, min_eig: float = 1e-9, what: str = "covariance") -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError(f"{what} must be square, got shape {cov.shape}")
    if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(cov).max())):
        raise NumericalError(f"{what} is not symmetric")
    if np.linalg.eigvalsh(cov).min() <= min_eig:
        raise NumericalError(f"{what} is not positive definite (smallest eigenvalue <= {min_eig})")
    return np.linalg.cholesky(cov)


def gaussian_logpdf(x: np.ndarray, mean: np.ndarray, chol: np.ndarray) -> np.ndarray:
    """Log-density of N(mean, chol chol^T) at the rows of ``x`` (natural log)."""
    x = np.atleast_2d(x)
    diff = x - mean
    sol = solve_triangular(chol, diff.T, lower=True)
    maha = np.einsum("ij,ij->j", sol, sol)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    return -0.5 * (mean.size * LOG_2PI + logdet + maha)


def sqrtm_psd(mat: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    """Symmetric square root via eigendecomposition, eigenvalues floored at ``floor``."""
    w, v = np.linalg.eigh(0.5 * (mat + mat.T))
    w = np.maximum(w, floor)
    return (v * np.sqrt(w)) @ v.T


def inv_sqrtm_psd(mat: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (mat + mat.T))
    w = np.maximum(w, floor)
    return (v / np.sqrt(w)) @ v.T


class GaussianMixture:
    """Finite mixture of full-covariance Gaussians.

    Zero-weight components are dropped on construction; the weights are
    renormalised (to absorb rounding only -- they must already sum to 1).
    """

    def __init__(self, weights, means, covs):
        weights = np.asarray(weights, dtype=float)
        means = np.atleast_2d(np.asarray(means, dtype=float))
        covs = np.asarray(covs, dtype=float)
        if covs.ndim == 2:
            covs = covs[None]
        if not (len(weights) == len(means) == len(covs)):
            raise ValueError("weights, means and covs must have equal length")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError("mixture weights must be a probability vector")
        keep = weights > 0
        self.weights = weights[keep] / weights[keep].sum()
        self.means = means[keep]
        self.covs = covs[keep]
        self.chols = np.stack([cholesky_spd(c) for c in self.covs])
        self.dim = self.means.shape[1]

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def component_logpdfs(self, x: np.ndarray) -> np.ndarray:
        return np.stack([gaussian_logpdf(x, m, c) for m, c in zip(self.means, self.chols)], axis=1)

    def logpdf(self, x: np.ndarray) -> np.ndarray:
        return logsumexp(self.component_logpdfs(x) + np.log(self.weights), axis=1)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        comp = np.searchsorted(np.cumsum(self.weights), rng.random(n), side="right")
        comp = np.minimum(comp, self.n_components - 1)
        eps = rng.standard_normal((n, self.dim))
        out = np.empty((n, self.dim))
        for k in range(self.n_components):
            idx = comp == k
            out[idx] = self.means[k] + eps[idx] @ self.chols[k].T
        return out

    def moments(self) -> tuple[np.ndarray, np.ndarray]:
        """Mean and covariance of the mixture."""
        mean = self.weights @ self.means
        second = np.einsum("k,kij->ij", self.weights, self.covs + np.einsum("ki,kj->kij", self.means, self.means))
        cov = second - np.outer(mean, mean)
        return mean, 0.5 * (cov + cov.T)

    def affine_pushforward(self, A: np.ndarray, b: np.ndarray, noise_cov: np.ndarray | None = None) -> GaussianMixture:
        """Law of ``A x + b + e`` for ``x`` from this mixture and independent ``e ~ N(0, noise_cov)``.

        ``A`` need not be square; without noise it must have full row rank.
        """
        means = self.means @ A.T + b
        covs = np.einsum("ij,kjl,ml->kim", A, self.covs, A)
        if noise_cov is not None:
            covs = covs + noise_cov
        return GaussianMixture(self.weights, means, 0.5 * (covs + np.transpose(covs, (0, 2, 1))))


class IsotropicMixture:
    """Mixture of N(m_k, sigma^2 I) components; equal weights unless given.

    Built for many components (one per encoded sample), so the log-density is
    evaluated in row chunks with a matrix-product distance expansion.
    """

    def __init__(self, means, sigma: float, weights=None, chunk: int = 4096):
        if sigma <= 0:
            raise ValueError("sigma must be > 0")
        self.means = np.atleast_2d(np.asarray(means, dtype=float))
        if len(self.means) == 0:
            raise ValueError("mixture needs at least one component")
        k = len(self.means)
        self.weights = np.full(k, 1.0 / k) if weights is None else np.asarray(weights, dtype=float)
        self.sigma = float(sigma)
        self.dim = self.means.shape[1]
        self.chunk = chunk
        self._sq = np.einsum("ij,ij->i", self.means, self.means)
        self._logw = np.log(self.weights)

    def logpdf(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        s2 = self.sigma**2
        const = -0.5 * self.dim * (LOG_2PI + math.log(s2))
        out = np.empty(len(x))
        for start in range(0, len(x), self.chunk):
            xc = x[start : start + self.chunk]
            d2 = np.einsum("ij,ij->i", xc, xc)[:, None] - 2.0 * xc @ self.means.T + self._sq[None, :]
            np.maximum(d2, 0.0, out=d2)
            out[start : start + len(xc)] = logsumexp(self._logw - 0.5 * d2 / s2, axis=1)
        return out + const

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        comp = np.searchsorted(np.cumsum(self.weights), rng.random(n), side="right")
        comp = np.minimum(comp, len(self.means) - 1)
        return self.means[comp] + self.sigma * rng.standard_normal((n, self.dim))
