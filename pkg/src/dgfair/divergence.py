"""Divergences between distributions: JS (Monte Carlo), KL and Hellinger closed forms, EMD, MD.

KL and JS are reported in bits, so ``0 <= JS <= 1`` holds exactly.  Densities
passed to the estimators return natural-log values; conversion happens here.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Any, Callable

import numpy as np
from scipy.special import erf

from .gaussian import IsotropicMixture
from .rng import make_rng

LN2 = math.log(2.0)

LogDensity = Callable[[Any], np.ndarray]
Sampler = Callable[[int, np.random.Generator], Any]


class EstimationError(ArithmeticError):
    pass


class Estimator(str, Enum):
    ANALYTIC_MC = "analytic_mc"
    HISTOGRAM = "histogram"
    CLOSED_FORM = "closed_form"
    EMPIRICAL = "empirical"


@dataclass(frozen=True)
class DivergenceEstimate:
    value: float
    std_error: float
    n_samples: int
    estimator: Estimator
    raw_value: float | None = None  # pre-clamp value, only set by js_distance

    def to_dict(self) -> dict:
        out = asdict(self)
        out["estimator"] = self.estimator.value
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def within(self, target: float, k: float = 3.0, floor: float = 1e-12) -> bool:
        """``|value - target| <= k * std_error``, with an absolute floor for round-off."""
        return abs(self.value - target) <= max(k * self.std_error, floor)


def fsum_mean(values: np.ndarray) -> float:
    return math.fsum(values) / len(values)


def _mean_and_se(terms: np.ndarray) -> tuple[float, float]:
    m = fsum_mean(terms)
    var = math.fsum((terms - m) ** 2) / max(len(terms) - 1, 1)
    return m, math.sqrt(var / len(terms))


def _take(points, idx: int):
    if isinstance(points, tuple):
        return tuple(_take(p, idx) for p in points)
    try:
        item = points[idx]
    except Exception:  # pragma: no cover - exotic containers
        return f"<index {idx}>"
    return item.tolist() if hasattr(item, "tolist") else item


def _check_finite(lp: np.ndarray, points, which: str) -> None:
    bad = ~np.isfinite(lp)
    if bad.any():
        idx = int(np.argmax(bad))
        raise EstimationError(f"non-finite log-density {lp[idx]} for {which} at sample {idx}: {_take(points, idx)}")


def _rounding_floor(log_self: np.ndarray, log_other: np.ndarray) -> float:
    """Floating-point error scale of the mean JS term; log-densities carry ~eps * |log p| rounding."""
    mag = fsum_mean(np.abs(log_self) + np.abs(log_other)) + 1.0
    return 4.0 * np.finfo(float).eps * mag / LN2


def js_terms(log_self: np.ndarray, log_other: np.ndarray) -> np.ndarray:
    """Per-sample ``log2(2 p / (p + q))`` with ``p`` the sampling density."""
    return (LN2 + log_self - np.logaddexp(log_self, log_other)) / LN2


def estimate_js_divergence_mc(
    log_p: LogDensity,
    log_q: LogDensity,
    sampler_p: Sampler,
    sampler_q: Sampler,
    n: int = 100_000,
    seed: int = 0,
) -> DivergenceEstimate:
    """Monte-Carlo JS divergence (bits) from exact log-densities.

    ``n`` points are drawn from each distribution; the two half-terms are
    averaged with compensated summation and their standard errors combined in
    quadrature.  Each half's error also includes a floating-point floor of a
    few ulps of the log-density magnitude, which dominates only when the two
    densities agree to rounding.
    """
    if n < 1000:
        raise ValueError("n must be >= 1000")
    rng_p = make_rng(seed, "js/p")
    rng_q = make_rng(seed, "js/q")
    xp = sampler_p(n, rng_p)
    xq = sampler_q(n, rng_q)
    lpp, lqp = np.asarray(log_p(xp), float), np.asarray(log_q(xp), float)
    lqq, lpq = np.asarray(log_q(xq), float), np.asarray(log_p(xq), float)
    _check_finite(lpp, xp, "p at a p-sample")
    _check_finite(lqp, xp, "q at a p-sample")
    _check_finite(lqq, xq, "q at a q-sample")
    _check_finite(lpq, xq, "p at a q-sample")
    mp, sp = _mean_and_se(js_terms(lpp, lqp))
    mq, sq = _mean_and_se(js_terms(lqq, lpq))
    # sampling error alone understates the error when p == q to rounding
    sp = math.hypot(sp, _rounding_floor(lpp, lqp))
    sq = math.hypot(sq, _rounding_floor(lqq, lpq))
    return DivergenceEstimate(0.5 * (mp + mq), 0.5 * math.hypot(sp, sq), 2 * n, Estimator.ANALYTIC_MC)


def estimate_js_between(p, q, n: int = 100_000, seed: int = 0) -> DivergenceEstimate:
    """JS divergence between two objects exposing ``logpdf`` and ``sample(n, rng)``."""
    return estimate_js_divergence_mc(p.logpdf, q.logpdf, p.sample, q.sample, n, seed)


def js_distance(div: DivergenceEstimate) -> DivergenceEstimate:
    """Square root of a JS divergence estimate.

    MC noise outside ``[0, 1]`` is clamped first (the raw value is kept).  The
    standard error follows the delta method ``SE / (2 sqrt(v))``; when
    ``v < SE`` that blows up, so ``sqrt(SE)`` is reported instead.
    """
    v = min(max(div.value, 0.0), 1.0)
    se = div.std_error
    if se == 0.0:
        dse = 0.0
    elif v < se:
        dse = math.sqrt(se)
    else:
        dse = se / (2.0 * math.sqrt(v))
    return DivergenceEstimate(math.sqrt(v), dse, div.n_samples, div.estimator, raw_value=div.value)


def js_divergence_discrete(p, q) -> float:
    """Exact JS divergence in bits between two probability vectors."""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    m = 0.5 * (p + q)
    out = 0.0
    for a in (p, q):
        nz = a > 0
        out += 0.5 * float(np.sum(a[nz] * np.log2(a[nz] / m[nz])))
    return max(out, 0.0)


def js_distance_discrete(p, q) -> float:
    return math.sqrt(js_divergence_discrete(p, q))


def kl_gaussian(p, q) -> float:
    """KL(p || q) in bits for two Gaussian cells (anything with ``mean`` and ``cov``)."""
    m1, m2 = np.asarray(p.mean, float), np.asarray(q.mean, float)
    s1, s2 = np.asarray(p.cov, float), np.asarray(q.cov, float)
    if m1.shape != m2.shape or s1.shape != s2.shape:
        raise ValueError("Gaussian dimensions do not match")
    k = m1.size
    l2 = np.linalg.cholesky(s2)
    diff = np.linalg.solve(l2, m2 - m1)
    trace = np.trace(np.linalg.solve(s2, s1))
    logdet = 2.0 * (np.log(np.diag(l2)).sum() - np.log(np.diag(np.linalg.cholesky(s1))).sum())
    nats = 0.5 * (trace + diff @ diff - k + logdet)
    return max(nats, 0.0) / LN2


def _nonempty(samples, name: str) -> np.ndarray:
    arr = np.asarray(samples, dtype=float).reshape(-1)
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    return arr


def emd_1d(samples_p, samples_q) -> DivergenceEstimate:
    """Earth mover's distance between two empirical 1-D distributions.

    Equal sizes: mean absolute difference of the sorted samples.  Otherwise
    the exact quantile integral ``int_0^1 |F_p^-1(t) - F_q^-1(t)| dt`` over
    the merged breakpoints ``{i/n} U {j/m}``.
    """
    u = np.sort(_nonempty(samples_p, "samples_p"))
    v = np.sort(_nonempty(samples_q, "samples_q"))
    if u.size == v.size:
        val = fsum_mean(np.abs(u - v))
    else:
        grid = np.union1d(np.arange(1, u.size + 1) / u.size, np.arange(1, v.size + 1) / v.size)
        grid[-1] = 1.0
        widths = np.diff(np.concatenate([[0.0], grid]))
        mids = grid - 0.5 * widths
        iu = np.minimum((mids * u.size).astype(np.int64), u.size - 1)
        iv = np.minimum((mids * v.size).astype(np.int64), v.size - 1)
        val = math.fsum(widths * np.abs(u[iu] - v[iv]))
    return DivergenceEstimate(float(val), 0.0, int(u.size + v.size), Estimator.EMPIRICAL)


def mean_distance(samples_p, samples_q) -> DivergenceEstimate:
    """``|mean(p) - mean(q)|`` with the two standard errors combined in quadrature."""
    u = _nonempty(samples_p, "samples_p")
    v = _nonempty(samples_q, "samples_q")

    def se(a):
        return float(np.std(a, ddof=1) / math.sqrt(a.size)) if a.size > 1 else 0.0

    gap = abs(fsum_mean(u) - fsum_mean(v))
    return DivergenceEstimate(gap, math.hypot(se(u), se(v)), int(u.size + v.size), Estimator.EMPIRICAL)


def hellinger_gaussian_iso(mu1, mu2, sigma: float) -> float:
    """Hellinger distance between N(mu1, sigma^2 I) and N(mu2, sigma^2 I), per-dimension scaled form.

    Evaluates ``sqrt(1 - exp(-||mu1 - mu2||^2 / (8 d sigma^2)))`` with ``d`` the
    vector length.  It coincides with the exact distance (:func:`hellinger_gaussian`)
    for ``d = 1``; for ``d > 1`` it is smaller than the exact distance.
    """
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    m1 = np.asarray(mu1, float).reshape(-1)
    m2 = np.asarray(mu2, float).reshape(-1)
    if m1.shape != m2.shape:
        raise ValueError("mean vectors must have equal length")
    sq = float(np.dot(m1 - m2, m1 - m2))
    return math.sqrt(-math.expm1(-sq / (8.0 * m1.size * sigma**2)))


def hellinger_gaussian(mu1, cov1, mu2, cov2) -> float:
    """Exact Hellinger distance ``sqrt(1 - BC)`` between two multivariate normals."""
    m1 = np.asarray(mu1, float).reshape(-1)
    m2 = np.asarray(mu2, float).reshape(-1)
    s1 = np.atleast_2d(np.asarray(cov1, float))
    s2 = np.atleast_2d(np.asarray(cov2, float))
    avg = 0.5 * (s1 + s2)
    _, ld1 = np.linalg.slogdet(s1)
    _, ld2 = np.linalg.slogdet(s2)
    _, lda = np.linalg.slogdet(avg)
    diff = m1 - m2
    log_bc = 0.25 * ld1 + 0.25 * ld2 - 0.5 * lda - 0.125 * diff @ np.linalg.solve(avg, diff)
    return math.sqrt(max(-math.expm1(log_bc), 0.0))


def hellinger_gaussian_iso_exact(mu1, mu2, sigma: float) -> float:
    """Exact Hellinger distance for equal isotropic covariances: ``exp(-||dmu||^2 / (8 sigma^2))`` affinity."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    diff = np.asarray(mu1, float).reshape(-1) - np.asarray(mu2, float).reshape(-1)
    return math.sqrt(-math.expm1(-float(diff @ diff) / (8.0 * sigma**2)))


def tv_gaussian_iso(mu1, mu2, sigma: float) -> float:
    """Total variation between N(mu1, sigma^2 I) and N(mu2, sigma^2 I): ``erf(||dmu|| / (2 sqrt(2) sigma))``."""
    diff = np.asarray(mu1, float).reshape(-1) - np.asarray(mu2, float).reshape(-1)
    return float(erf(math.sqrt(float(diff @ diff)) / (2.0 * math.sqrt(2.0) * sigma)))


def estimate_tv_mc(p, q, n: int = 100_000, seed: int = 0) -> DivergenceEstimate:
    """Total variation ``E_p[max(0, 1 - q/p)]``."""
    rng = make_rng(seed, "tv/p")
    xp = p.sample(n, rng)
    terms = np.maximum(0.0, -np.expm1(q.logpdf(xp) - p.logpdf(xp)))
    m, se = _mean_and_se(terms)
    return DivergenceEstimate(m, se, n, Estimator.ANALYTIC_MC)


def estimate_js_gaussian_mixture_repr(means_p, means_q, sigma: float, n: int = 100_000, seed: int = 0) -> DivergenceEstimate:
    """JS divergence between equal-weight isotropic mixtures over two sets of means."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    return estimate_js_between(IsotropicMixture(means_p, sigma), IsotropicMixture(means_q, sigma), n, seed)
