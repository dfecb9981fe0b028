"""Laws of the representation Z = mu(X) + sigma * eps and Monte-Carlo risks of the composed predictor.

For a single-layer (affine) ``mu`` the conditional law of Z given any cell
event is an explicit Gaussian mixture.  For deeper nets it is approximated
by an equal-weight isotropic mixture centred at encoded samples; by joint
convexity of JS this approximation biases JS estimates upward in
expectation.
"""

from __future__ import annotations

import math

import numpy as np

from .divergence import DivergenceEstimate, _mean_and_se, estimate_js_between
from .domains import CELLS, Spec, x_law
from .gaussian import IsotropicMixture
from .models import Classifier, StochasticEncoder, classify_bounded, encode_mean
from .rng import child_seed, make_rng

DEFAULT_MEANS = 512


def repr_law(enc: StochasticEncoder, spec: Spec, y: int | None = None, a: int | None = None, n_means: int = DEFAULT_MEANS, seed: int = 0):
    """Law of Z under ``spec`` conditioned on the given labels (None = marginal)."""
    law = x_law(spec, y, a)
    affine = enc.mu_net.affine_form()
    if affine is not None:
        A, c = affine
        return law.affine_pushforward(A, c, enc.sigma**2 * np.eye(enc.d_z))
    xs = law.sample(n_means, make_rng(seed, f"repr/{y}/{a}"))
    return IsotropicMixture(encode_mean(enc, xs), enc.sigma)


def repr_js(enc: StochasticEncoder, spec_i: Spec, spec_j: Spec, y=None, a=None, n: int = 20_000, seed: int = 0, n_means: int = DEFAULT_MEANS) -> DivergenceEstimate:
    """JS divergence between the representation laws of two domains under one conditioning event."""
    p = repr_law(enc, spec_i, y, a, n_means, child_seed(seed, "means", "i"))
    q = repr_law(enc, spec_j, y, a, n_means, child_seed(seed, "means", "j"))
    return estimate_js_between(p, q, n, seed)


def sample_xya(spec: Spec, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Joint draws of (x, y, a) from a domain or mixture, driven by ``rng``."""
    parts = [
        (float(wc) * comp.cell_probs[c], comp.cells[c], c)
        for wc, comp in zip(spec.weights, spec.components)
        for c in CELLS
        if float(wc) * comp.cell_probs[c] > 0
    ]
    w = np.array([p[0] for p in parts])
    w /= math.fsum(w)
    means = [p[1].mean for p in parts]
    chols = [p[1].chol for p in parts]
    ys = [p[2][0] for p in parts]
    as_ = [p[2][1] for p in parts]
    k = np.minimum(np.searchsorted(np.cumsum(w), rng.random(n), side="right"), len(w) - 1)
    eps = rng.standard_normal((n, spec.feature_dim))
    x = np.empty((n, spec.feature_dim))
    for j in range(len(w)):
        idx = k == j
        x[idx] = means[j] + eps[idx] @ chols[j].T
    return x, np.array(ys)[k], np.array(as_)[k]


def z_predictions(enc: StochasticEncoder, clf: Classifier, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Bounded predictions h(z) for one fresh z per row of ``x``."""
    mu = encode_mean(enc, np.atleast_2d(x))
    return classify_bounded(clf, mu + enc.sigma * rng.standard_normal(mu.shape))


def risk(enc: StochasticEncoder, clf: Classifier, spec: Spec, n: int = 20_000, seed: int = 0, loss: str = "ce") -> tuple[float, float]:
    """MC estimate (mean, std_error) of ``E[L(h(z), y)]`` over x, y ~ spec and z ~ g(x).

    ``loss='ce'`` is the bounded cross-entropy, ``loss='01'`` the randomized
    0-1 loss ``1 - h(z)_y`` (linear in the prediction, so equal to the loss of
    the averaged predictor).
    """
    rng = make_rng(seed, "risk")
    x, y, _ = sample_xya(spec, n, rng)
    pred = z_predictions(enc, clf, x, rng)
    py = pred[np.arange(n), y]
    terms = -np.log(py) if loss == "ce" else 1.0 - py
    return _mean_and_se(terms)


def positive_rate(enc: StochasticEncoder, clf: Classifier, spec: Spec, n: int = 20_000, seed: int = 0) -> tuple[float, float]:
    """MC estimate of P(Yhat = 1) = E[h(z)_1]."""
    rng = make_rng(seed, "rate")
    x, _, _ = sample_xya(spec, n, rng)
    return _mean_and_se(z_predictions(enc, clf, x, rng)[:, 1])


def cell_rates(enc: StochasticEncoder, clf: Classifier, spec: Spec, n: int = 20_000, seed: int = 0) -> dict[tuple[int, int], tuple[float, float]]:
    """R^{y,a} = E[h(z)_1 | y, a] with standard errors, ``n`` draws per cell."""
    out = {}
    for y, a in CELLS:
        rng = make_rng(child_seed(seed, "cell", str(y), str(a)), "rate")
        x = x_law(spec, y, a).sample(n, rng)
        out[(y, a)] = _mean_and_se(z_predictions(enc, clf, x, rng)[:, 1])
    return out


def eo_from_rates(rates: dict[tuple[int, int], tuple[float, float]], labels=(0, 1)) -> tuple[float, float]:
    """Sum over ``labels`` of |R^{y,0} - R^{y,1}|, standard errors combined in quadrature."""
    val = math.fsum(abs(rates[(y, 0)][0] - rates[(y, 1)][0]) for y in labels)
    se = math.sqrt(math.fsum(rates[(y, a)][1] ** 2 for y in labels for a in (0, 1)))
    return val, se
