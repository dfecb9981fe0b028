"""Random instance generators for the bound checks, and the default verification suite."""

from __future__ import annotations

import numpy as np

from . import bounds
from .density_match import fit_analytic_matcher
from .domains import CELLS, DomainSpec, GaussianCell, make_cellprob_family, make_mixture, make_rotation_family
from .models import Classifier, Mlp, StochasticEncoder, constant_encoder, linear_net, make_model
from .rng import child_seed, make_rng


def random_cell(rng: np.random.Generator, dim: int = 2, spread: float = 1.5) -> GaussianCell:
    L = rng.normal(scale=0.5, size=(dim, dim))
    return GaussianCell(rng.normal(scale=spread, size=dim), L @ L.T + 0.2 * np.eye(dim))


def random_probs(rng: np.random.Generator, floor: float = 0.05) -> dict[tuple[int, int], float]:
    p = np.maximum(rng.dirichlet(np.full(4, 2.0)), floor)
    p = p / p.sum()
    probs = {c: float(v) for c, v in zip(CELLS[:3], p[:3])}
    probs[CELLS[3]] = 1.0 - sum(probs.values())
    return probs


def random_base_spec(rng: np.random.Generator, dim: int = 2) -> DomainSpec:
    return DomainSpec({c: random_cell(rng, dim) for c in CELLS}, random_probs(rng), 0)


def random_model(rng: np.random.Generator, input_dim: int = 2, d_z: int = 8, sigma: float = 0.1, bound_C: float = 5.0):
    return make_model(input_dim, rng, d_z, (32, 32), (16,), sigma, bound_C)


def random_linear_encoder(rng: np.random.Generator, input_dim: int = 2, sigma: float = 0.1, scale: float = 1.0) -> StochasticEncoder:
    d_z = int(rng.choice([1, 2, 4, 8]))
    return StochasticEncoder(linear_net(rng.normal(scale=scale, size=(d_z, input_dim)), rng.normal(scale=0.5, size=d_z)), sigma)


def random_classifier(rng: np.random.Generator, d_z: int, bound_C: float = 5.0) -> Classifier:
    return Classifier(Mlp.init([d_z, 16, 2], rng, "relu", "classifier", scale=2.0), bound_C)


def rotation_instance(seed: int, n_sources: int = 3):
    """Random base, random step, ``n_sources`` rotated sources, Dirichlet mixture target, random model."""
    rng = make_rng(seed, "instance/rotation")
    base = random_base_spec(rng)
    step = float(rng.uniform(10.0, 60.0))
    sources = make_rotation_family(n_sources, base, step)
    target = make_mixture(sources, rng.dirichlet(np.ones(n_sources)))
    enc, clf = random_model(rng)
    return sources, target, enc, clf


def label_shift_probs(p_y1: float, p_a1_given_y) -> dict[tuple[int, int], float]:
    """P(y, a) from P(y = 1) and a fixed P(a = 1 | y)."""
    py = (1.0 - p_y1, p_y1)
    return {(y, a): py[y] * (p_a1_given_y[y] if a else 1.0 - p_a1_given_y[y]) for y, a in CELLS}


def label_shift_instance(seed: int, n_sources: int = 3, min_shift: float = 0.15):
    """Pure label shift: shared cells and P(a | y), only P(y) varies; linear encoder, random classifier.

    X given Y is the same channel in every domain, and so is Z given X, so
    d_JS(P^Z) <= d_JS(P^X) <= d_JS(P^Y) between any two domains.
    """
    rng = make_rng(seed, "instance/label_shift")
    base = random_base_spec(rng)
    p_a = rng.uniform(0.2, 0.8, size=2)
    # keep the target's label marginal visibly shifted from every source
    while True:
        p_y1 = rng.uniform(0.1, 0.9, size=n_sources + 1)
        if np.min(np.abs(p_y1[:-1] - p_y1[-1])) >= min_shift:
            break
    doms = make_cellprob_family(n_sources + 1, base, [label_shift_probs(float(q), p_a) for q in p_y1])
    enc = random_linear_encoder(rng)
    clf = random_classifier(rng, enc.d_z)
    return doms[:n_sources], doms[n_sources], enc, clf


def constant_model(rng: np.random.Generator, input_dim: int = 2, d_z: int = 8) -> tuple[StochasticEncoder, Classifier]:
    enc = constant_encoder(input_dim, d_z, rng.normal(size=d_z))
    return enc, random_classifier(rng, d_z)


def run_verification(domains: list[DomainSpec], sources_idx: list[int], target, n: int, seed: int, instances: int, k: float = 3.0, n_means: int = 256) -> dict[str, list]:
    """Every bound check on the configured family plus random instances; reports grouped by theorem id."""
    sources = [domains[i] for i in sources_idx]
    out: dict[str, list] = {name: [] for name in ("acc_upper", "joint_decomp", "acc_lower", "fair_upper", "perfect", "hellinger", "dpi", "randomized_err")}
    for t in range(instances):
        s = child_seed(seed, "verify", str(t))
        enc, clf = random_model(make_rng(s, "model"))
        out["acc_upper"].append(bounds.accuracy_upper_bound(enc, clf, sources, target, n, s, k, n_means))
        out["fair_upper"].append(bounds.fairness_upper_bound(enc, clf, sources, target, n, s, k, n_means))
        out["randomized_err"].append(bounds.randomized_error_check(enc, clf, target, n, s, k))
        out["joint_decomp"].append(bounds.js_joint_decomposition_check(sources[0], sources[-1], n, s, None, k))
        ls_src, ls_tgt, ls_enc, ls_clf = label_shift_instance(s, len(sources))
        out["acc_lower"].append(bounds.accuracy_lower_bound(ls_enc, ls_clf, ls_src, ls_tgt, n, s, k, n_means))
        c_enc, c_clf = constant_model(make_rng(s, "constant"))
        out["perfect"].append(bounds.perfect_transfer_check(c_enc, c_clf, sources, np.full(len(sources), 1.0 / len(sources)), n, s, k))
    rng = make_rng(seed, "verify/dpi")
    encs = [random_linear_encoder(rng) for _ in range(8)]
    out["dpi"].append(bounds.dpi_check(sources[0], sources[-1], encs, n, seed, k, n_means))
    matcher = fit_analytic_matcher(sources, residual_n=2000, seed=seed)
    enc, _ = random_model(make_rng(seed, "verify/hellinger"))
    probes = np.concatenate([d.cells[c].mean[None] for d in sources for c in CELLS])
    out["hellinger"].append(bounds.hellinger_reduction_check(enc, matcher, probes, None, n, seed, k))
    return out
