"""Executable checks of the transfer bounds and their supporting lemmas.

Every check estimates both sides by Monte Carlo from exactly known
densities and reports per-term standard errors.  An inequality "holds" when
its slack is at least ``-k`` times the quadrature-combined standard error of
all estimated terms (``k = 3`` by default).

Theorem ids used in reports:

``acc_upper``      target error <= mean source error + input shift + representation shift
``joint_decomp``   representation-joint JS distance <= label term + conditional term
``acc_lower``      source + target error >= (d_Y - d_Z)^4 / (8 N) summed
``fair_upper``     target EO gap <= mean source EO gap + input shift + representation shift
``perfect``        equal EO / error under invariant representation conditionals
``hellinger``      JS <= TV <= sqrt(2) Hellinger for encoder conditionals
``dpi``            representation JS <= input JS
``randomized_err`` sqrt(error) >= JS(P^Y, P^Yhat) for the randomized 0-1 loss
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .divergence import (
    DivergenceEstimate,
    Estimator,
    estimate_js_between,
    estimate_js_divergence_mc,
    estimate_tv_mc,
    hellinger_gaussian,
    hellinger_gaussian_iso,
    hellinger_gaussian_iso_exact,
    js_distance,
    js_divergence_discrete,
    js_distance_discrete,
    tv_gaussian_iso,
)
from .domains import CELLS, DomainSpec, MixtureSpec, Spec, label_marginal, make_mixture, prob_y, prob_ya, x_law
from .gaussian import GaussianMixture
from .models import Classifier, StochasticEncoder, encode_mean
from .representation import DEFAULT_MEANS, cell_rates, eo_from_rates, positive_rate, repr_js, repr_law, risk
from .rng import child_seed

K_DEFAULT = 3.0


class UnsupportedInputError(TypeError):
    """The check needs analytic domain specs."""


def _require_specs(*specs) -> None:
    for s in specs:
        if not isinstance(s, (DomainSpec, MixtureSpec)):
            raise UnsupportedInputError(f"bound checks need analytic DomainSpec/MixtureSpec input, got {type(s).__name__}")


@dataclass(frozen=True)
class Term:
    name: str
    value: float
    std_error: float = 0.0


@dataclass(frozen=True)
class BoundReport:
    """One inequality ``lhs <= rhs_total`` (``direction='upper'``) or ``lhs >= rhs_total`` (``'lower'``)."""

    theorem: str
    lhs: Term
    rhs_terms: tuple[Term, ...]
    direction: str = "upper"
    k: float = K_DEFAULT
    info: dict = field(default_factory=dict)

    @property
    def rhs_total(self) -> float:
        return math.fsum(t.value for t in self.rhs_terms)

    @property
    def slack(self) -> float:
        d = self.rhs_total - self.lhs.value
        return d if self.direction == "upper" else -d

    @property
    def combined_se(self) -> float:
        return math.sqrt(self.lhs.std_error**2 + math.fsum(t.std_error**2 for t in self.rhs_terms))

    @property
    def holds(self) -> bool:
        return self.slack >= -self.k * self.combined_se

    def term(self, name: str) -> Term:
        for t in self.rhs_terms:
            if t.name == name:
                return t
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "theorem": self.theorem,
            "direction": self.direction,
            "lhs": asdict(self.lhs),
            "rhs_terms": [asdict(t) for t in self.rhs_terms],
            "rhs_total": self.rhs_total,
            "slack": self.slack,
            "combined_se": self.combined_se,
            "k": self.k,
            "tolerance": f"holds iff slack >= -{self.k:g} * combined_se",
            "holds": self.holds,
            "info": self.info,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, default=_json_default)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, DivergenceEstimate):
        return obj.to_dict()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _quad(*ses: float) -> float:
    return math.sqrt(math.fsum(s * s for s in ses))


def _se_mean(ses: Sequence[float]) -> float:
    return _quad(*ses) / len(ses)


def _dist(est: DivergenceEstimate) -> tuple[float, float]:
    d = js_distance(est)
    return d.value, d.std_error


def _pairs(n: int) -> list[tuple[int, int]]:
    return list(combinations(range(n), 2))


# ---------------------------------------------------------------- labelled laws


class _LabelledLaw:
    """Joint law of (v, y) from P(y) and conditional laws of v; points are (v, y) tuples."""

    def __init__(self, py: np.ndarray, conds: dict[int, object]):
        self.py = np.asarray(py, float)
        self.conds = conds

    def logpdf(self, pts) -> np.ndarray:
        v, y = pts
        out = np.full(len(y), -np.inf)
        for lab, law in self.conds.items():
            idx = y == lab
            if idx.any() and self.py[lab] > 0:
                out[idx] = math.log(self.py[lab]) + law.logpdf(v[idx])
        return out

    def sample(self, n: int, rng: np.random.Generator):
        y = (rng.random(n) < self.py[1]).astype(np.int64)
        dim = next(iter(self.conds.values())).dim
        v = np.empty((n, dim))
        for lab, law in self.conds.items():
            idx = y == lab
            if idx.any():
                v[idx] = law.sample(int(idx.sum()), rng)
        return v, y


def _xy_law(spec: Spec) -> _LabelledLaw:
    py = label_marginal(spec)
    return _LabelledLaw(py, {y: x_law(spec, y) for y in (0, 1) if py[y] > 0})


def _zy_law(enc: StochasticEncoder, spec: Spec, n_means: int, seed: int) -> _LabelledLaw:
    py = label_marginal(spec)
    return _LabelledLaw(py, {y: repr_law(enc, spec, y, None, n_means, child_seed(seed, "zy", str(y))) for y in (0, 1) if py[y] > 0})


def joint_xy_js(spec_i: Spec, spec_j: Spec, n: int, seed: int) -> DivergenceEstimate:
    p, q = _xy_law(spec_i), _xy_law(spec_j)
    return estimate_js_divergence_mc(p.logpdf, q.logpdf, p.sample, q.sample, n, seed)


def decomposed_distance(py_i, py_j, cond_js: dict[int, DivergenceEstimate]) -> tuple[float, float, dict]:
    """``d_JS(P^Y_i, P^Y_j) + sqrt(2 E_{y ~ (P_i + P_j)/2} D_JS(cond_y))`` and its standard error."""
    py_i, py_j = np.asarray(py_i, float), np.asarray(py_j, float)
    w = 0.5 * (py_i + py_j)
    d_y = js_distance_discrete(py_i, py_j)
    inner = math.fsum(w[y] * cond_js[y].value for y in cond_js)
    inner_se = _quad(*(w[y] * cond_js[y].std_error for y in cond_js))
    cond = js_distance(DivergenceEstimate(2.0 * inner, 2.0 * inner_se, 0, Estimator.ANALYTIC_MC))
    return d_y + cond.value, cond.std_error, {"d_js_y": d_y, "conditional_term": cond.value}


def _repr_decomposed(enc, spec_i, spec_j, n, seed, n_means):
    conds = {y: repr_js(enc, spec_i, spec_j, y, None, n, child_seed(seed, "y", str(y)), n_means) for y in (0, 1)}
    return decomposed_distance(label_marginal(spec_i), label_marginal(spec_j), conds)


# ---------------------------------------------------------------- accuracy upper bound


def accuracy_upper_bound(
    enc: StochasticEncoder,
    clf: Classifier,
    sources: Sequence[DomainSpec],
    target: Spec,
    n: int = 20_000,
    seed: int = 0,
    k: float = K_DEFAULT,
    n_means: int = DEFAULT_MEANS,
) -> BoundReport:
    """Target risk of the bounded cross-entropy against the three-term bound.

    The representation term uses the joint-to-conditional decomposition, which
    upper-bounds the joint (Z, Y) distance, so the checked inequality is implied
    by (and slightly weaker than) the three-term bound with the joint distance.
    """
    _require_specs(target, *sources)
    C = clf.bound_C
    lhs_v, lhs_se = risk(enc, clf, target, n, child_seed(seed, "risk", "target"))
    src = [risk(enc, clf, s, n, child_seed(seed, "risk", str(i))) for i, s in enumerate(sources)]
    t1 = Term("term_i", math.fsum(v for v, _ in src) / len(src), _se_mean([s for _, s in src]))

    d_xy = [_dist(joint_xy_js(target, s, n, child_seed(seed, "xy", str(i)))) for i, s in enumerate(sources)]
    i_min = int(np.argmin([d for d, _ in d_xy]))
    t2 = Term("term_ii", math.sqrt(2) * C * d_xy[i_min][0], math.sqrt(2) * C * d_xy[i_min][1])

    pair_vals = {}
    for i, j in _pairs(len(sources)):
        v, se, parts = _repr_decomposed(enc, sources[i], sources[j], n, child_seed(seed, "zy", str(i), str(j)), n_means)
        pair_vals[(i, j)] = (v, se, parts)
    if pair_vals:
        (bi, bj), (v3, se3, parts3) = max(pair_vals.items(), key=lambda kv: kv[1][0])
    else:
        bi = bj = 0
        v3, se3, parts3 = 0.0, 0.0, {}
    t3 = Term("term_iii", math.sqrt(2) * C * v3, math.sqrt(2) * C * se3)
    info = {
        "bound_C": C,
        "nearest_source": i_min,
        "source_errors": [v for v, _ in src],
        "farthest_pair": [bi, bj],
        "farthest_pair_parts": parts3,
    }
    return BoundReport("acc_upper", Term("target_error", lhs_v, lhs_se), (t1, t2, t3), "upper", k, info)


def js_joint_decomposition_check(
    spec_i: Spec,
    spec_j: Spec,
    n: int = 20_000,
    seed: int = 0,
    enc: StochasticEncoder | None = None,
    k: float = K_DEFAULT,
    n_means: int = DEFAULT_MEANS,
) -> BoundReport:
    """Joint JS distance against its label + conditional decomposition.

    Without ``enc`` the check runs on (X, Y); with an encoder on (Z, Y).
    """
    _require_specs(spec_i, spec_j)
    if enc is None:
        p, q = _xy_law(spec_i), _xy_law(spec_j)
        conds = {y: estimate_js_between(x_law(spec_i, y), x_law(spec_j, y), n, child_seed(seed, "y", str(y))) for y in (0, 1)}
        val, se, parts = decomposed_distance(label_marginal(spec_i), label_marginal(spec_j), conds)
    else:
        p = _zy_law(enc, spec_i, n_means, child_seed(seed, "i"))
        q = _zy_law(enc, spec_j, n_means, child_seed(seed, "j"))
        conds = {y: estimate_js_between(p.conds[y], q.conds[y], n, child_seed(seed, "y", str(y))) for y in (0, 1)}
        val, se, parts = decomposed_distance(label_marginal(spec_i), label_marginal(spec_j), conds)
    joint = js_distance(estimate_js_divergence_mc(p.logpdf, q.logpdf, p.sample, q.sample, n, seed))
    terms = (Term("label_term", parts["d_js_y"], 0.0), Term("conditional_term", parts["conditional_term"], se))
    info = {"joint_divergence_raw": joint.raw_value}
    return BoundReport("joint_decomp", Term("joint_distance", joint.value, joint.std_error), terms, "upper", k, info)


# ---------------------------------------------------------------- accuracy lower bound


def accuracy_lower_bound(
    enc: StochasticEncoder,
    clf: Classifier,
    sources: Sequence[DomainSpec],
    target: Spec,
    n: int = 20_000,
    seed: int = 0,
    k: float = K_DEFAULT,
    n_means: int = DEFAULT_MEANS,
) -> BoundReport:
    """Source-plus-target randomized 0-1 error against the label-shift lower bound.

    The base loss is 0-1 (``c = 1``) with two labels.  Each source term uses
    ``max(d_Y - d_Z, 0)``.  A source whose label distance to the target is
    below its representation distance by more than ``k`` standard errors
    violates the precondition and is listed in ``info['precondition_failed']``.
    """
    _require_specs(target, *sources)
    c, n_labels, N = 1.0, 2, len(sources)
    errs = [risk(enc, clf, s, n, child_seed(seed, "err", str(i)), loss="01") for i, s in enumerate(sources)]
    e_t, se_t = risk(enc, clf, target, n, child_seed(seed, "err", "target"), loss="01")
    lhs = Term("errors", math.fsum(v for v, _ in errs) / N + e_t, _quad(_se_mean([s for _, s in errs]), se_t))
    py_t = label_marginal(target)
    scale = c / (4.0 * n_labels * N)
    total, var, failed, parts = [], [], [], []
    for i, s in enumerate(sources):
        d_y = js_distance_discrete(label_marginal(s), py_t)
        d_z, se_z = _dist(repr_js(enc, s, target, None, None, n, child_seed(seed, "z", str(i)), n_means))
        gap = d_y - d_z
        parts.append({"d_js_y": d_y, "d_js_z": d_z, "d_js_z_se": se_z})
        if gap < -k * se_z:
            failed.append(i)
        if gap <= 0:
            continue
        total.append(scale * gap**4)
        var.append((scale * 4.0 * gap**3 * se_z) ** 2)
    rhs = Term("label_shift", math.fsum(total), math.sqrt(math.fsum(var)))
    info = {"c": c, "n_labels": n_labels, "per_source": parts, "precondition_failed": failed}
    return BoundReport("acc_lower", lhs, (rhs,), "lower", k, info)


def randomized_error_check(enc: StochasticEncoder, clf: Classifier, spec: Spec, n: int = 20_000, seed: int = 0, k: float = K_DEFAULT) -> BoundReport:
    """``sqrt(err) >= sqrt(2c/|Y|) * d_JS(P^Y, P^Yhat)^2`` for the randomized 0-1 loss (c = 1, |Y| = 2)."""
    _require_specs(spec)
    e, se_e = risk(enc, clf, spec, n, child_seed(seed, "err"), loss="01")
    lhs = js_distance(DivergenceEstimate(e, se_e, n, Estimator.ANALYTIC_MC))
    q1, se_q = positive_rate(enc, clf, spec, n, child_seed(seed, "rate"))
    py = label_marginal(spec)

    def rhs_at(q):
        q = min(max(q, 0.0), 1.0)
        return js_divergence_discrete(py, [1.0 - q, q])

    h = 1e-6
    slope = (rhs_at(q1 + h) - rhs_at(q1 - h)) / (2 * h)
    rhs = Term("label_prediction_js", rhs_at(q1), abs(slope) * se_q)
    info = {"error": e, "positive_rate": q1, "p_y1": float(py[1])}
    return BoundReport("randomized_err", Term("sqrt_error", lhs.value, lhs.std_error), (rhs,), "lower", k, info)



# ---------------------------------------------------------------- fairness upper bound


def _check_cells(spec: Spec) -> None:
    for y, a in CELLS:
        if prob_ya(spec, y, a) <= 0:
            raise ValueError(f"cell y={y}, a={a} has probability 0; the fairness bound needs all four cells")


def fairness_upper_bound(
    enc: StochasticEncoder,
    clf: Classifier,
    sources: Sequence[DomainSpec],
    target: Spec,
    n: int = 20_000,
    seed: int = 0,
    k: float = K_DEFAULT,
    n_means: int = DEFAULT_MEANS,
) -> BoundReport:
    """Mean-distance EO gap at the target against the three-term fairness bound."""
    _require_specs(target, *sources)
    for s in (target, *sources):
        _check_cells(s)
    lhs_v, lhs_se = eo_from_rates(cell_rates(enc, clf, target, n, child_seed(seed, "rates", "target")))
    src = [eo_from_rates(cell_rates(enc, clf, s, n, child_seed(seed, "rates", str(i)))) for i, s in enumerate(sources)]
    t1 = Term("term_i", math.fsum(v for v, _ in src) / len(src), _se_mean([s for _, s in src]))

    def cell_sum(est_fn) -> tuple[float, float]:
        ds = [_dist(est_fn(y, a)) for y, a in CELLS]
        return math.fsum(d for d, _ in ds), _quad(*(s for _, s in ds))

    inp = [
        cell_sum(lambda y, a, s=s, i=i: estimate_js_between(x_law(target, y, a), x_law(s, y, a), n, child_seed(seed, "x", str(i), str(y), str(a))))
        for i, s in enumerate(sources)
    ]
    i_min = int(np.argmin([v for v, _ in inp]))
    t2 = Term("term_ii", math.sqrt(2) * inp[i_min][0], math.sqrt(2) * inp[i_min][1])

    rep = {}
    for i, j in _pairs(len(sources)):
        rep[(i, j)] = cell_sum(
            lambda y, a, i=i, j=j: repr_js(enc, sources[i], sources[j], y, a, n, child_seed(seed, "z", str(i), str(j), str(y), str(a)), n_means)
        )
    if rep:
        (bi, bj), (v3, se3) = max(rep.items(), key=lambda kv: kv[1][0])
    else:
        bi = bj = 0
        v3, se3 = 0.0, 0.0
    t3 = Term("term_iii", math.sqrt(2) * v3, math.sqrt(2) * se3)
    info = {"nearest_source": i_min, "source_eo": [v for v, _ in src], "farthest_pair": [bi, bj]}
    return BoundReport("fair_upper", Term("target_eo", lhs_v, lhs_se), (t1, t2, t3), "upper", k, info)


# ---------------------------------------------------------------- perfect transfer


@dataclass(frozen=True)
class PerfectTransferReport:
    eo: tuple[tuple[float, float], ...]  # per domain (sources..., mixture)
    acc: tuple[tuple[float, float], ...]
    max_eo_diff: float
    max_acc_diff: float
    eo_within: bool
    acc_within: bool
    fairness_hypothesis: bool
    accuracy_hypothesis: bool
    violations: tuple[str, ...]
    k: float = K_DEFAULT

    @property
    def holds(self) -> bool:
        """Equalities asserted only where their hypotheses hold."""
        ok = self.eo_within or not self.fairness_hypothesis
        return ok and (self.acc_within or not self.accuracy_hypothesis)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["theorem"] = "perfect"
        out["holds"] = self.holds
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, default=_json_default)


def transfer_hypotheses(enc: StochasticEncoder, sources: Sequence[DomainSpec]) -> tuple[bool, bool, list[str]]:
    """Whether the representation conditionals are invariant by construction.

    Recognised constructions: a constant encoder, or domains with identical
    cells (any encoder).  Accuracy additionally needs equal P^Y and, for
    non-constant encoders, equal P(a | y).
    """
    violations = []
    constant = enc.mu_net.is_constant()
    same_cells = all(s.cells[c].same_as(sources[0].cells[c]) for s in sources for c in CELLS)
    fair = constant or same_cells
    if not fair:
        violations.append("P(Z | Y, A) is not invariant: encoder is not constant and cell laws differ across sources")
    py = [label_marginal(s) for s in sources]
    same_py = all(np.allclose(p, py[0], rtol=0, atol=1e-12) for p in py)
    if not same_py:
        violations.append("P(Y) differs across sources")
    if constant:
        same_zy = True
    else:
        cond_a = [[prob_ya(s, y, 1) / prob_y(s, y) for y in (0, 1)] for s in sources]
        same_zy = same_cells and all(np.allclose(c, cond_a[0], rtol=0, atol=1e-12) for c in cond_a)
        if not same_zy:
            violations.append("P(Z | Y) is not invariant: P(X | Y) differs across sources")
    return fair, fair and same_py and same_zy, violations


def perfect_transfer_check(
    enc: StochasticEncoder,
    clf: Classifier,
    sources: Sequence[DomainSpec],
    weights,
    n: int = 20_000,
    seed: int = 0,
    k: float = K_DEFAULT,
) -> PerfectTransferReport:
    """EO gaps and risks across all sources and the ``weights`` mixture; pairwise differences vs k * SE."""
    _require_specs(*sources)
    mix = make_mixture(list(sources), weights)
    domains = list(sources) + [mix]
    eo = [eo_from_rates(cell_rates(enc, clf, d, n, child_seed(seed, "rates", str(i)))) for i, d in enumerate(domains)]
    acc = [risk(enc, clf, d, n, child_seed(seed, "risk", str(i))) for i, d in enumerate(domains)]

    def scan(vals):
        worst, ok = 0.0, True
        for i, j in _pairs(len(vals)):
            diff = abs(vals[i][0] - vals[j][0])
            worst = max(worst, diff)
            ok &= diff <= k * _quad(vals[i][1], vals[j][1])
        return worst, ok

    max_eo, eo_ok = scan(eo)
    max_acc, acc_ok = scan(acc)
    fair, accu, viol = transfer_hypotheses(enc, sources)
    return PerfectTransferReport(tuple(eo), tuple(acc), max_eo, max_acc, eo_ok, acc_ok, fair, accu, tuple(viol), k)


# ---------------------------------------------------------------- Hellinger reduction


@dataclass(frozen=True)
class HellingerProbe:
    index: int
    map_key: tuple
    mean_gap: float
    js: DivergenceEstimate
    tv: float
    tv_mc: DivergenceEstimate
    hellinger: float
    hellinger_per_dim: float
    closed_form_error: float
    chain_ok: bool
    per_dim_chain_ok: bool


@dataclass(frozen=True)
class HellingerReport:
    probes: tuple[HellingerProbe, ...]
    monotone: bool
    closed_form_ok: bool
    k: float = K_DEFAULT

    @property
    def chain_ok(self) -> bool:
        return all(p.chain_ok for p in self.probes)

    @property
    def holds(self) -> bool:
        return self.chain_ok and self.monotone and self.closed_form_ok

    def to_dict(self) -> dict:
        return {
            "theorem": "hellinger",
            "holds": self.holds,
            "chain_ok": self.chain_ok,
            "monotone": self.monotone,
            "closed_form_ok": self.closed_form_ok,
            "k": self.k,
            "probes": [
                {
                    "index": p.index, "map": list(p.map_key), "mean_gap": p.mean_gap, "js": p.js.to_dict(),
                    "tv": p.tv, "tv_mc": p.tv_mc.to_dict(), "hellinger": p.hellinger,
                    "hellinger_per_dim": p.hellinger_per_dim, "chain_ok": p.chain_ok,
                    "per_dim_chain_ok": p.per_dim_chain_ok,
                }
                for p in self.probes
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, default=_json_default)


def _matcher_maps(matcher) -> list[tuple[tuple, object]]:
    maps = [(("y",) + key, m) for key, m in sorted(matcher.maps_y.items()) if key[0] != key[1]]
    maps += [(("ya",) + key, m) for key, m in sorted(matcher.maps_ya.items()) if key[0] != key[1]]
    return maps


def hellinger_reduction_check(
    enc: StochasticEncoder,
    matcher,
    probe_xs,
    sigma: float | None = None,
    n: int = 20_000,
    seed: int = 0,
    k: float = K_DEFAULT,
) -> HellingerReport:
    """For probe x and x' = m(x), compare JS, TV and Hellinger of N(mu(x), s^2 I) vs N(mu(x'), s^2 I).

    Probe ``k`` uses the ``k mod M``-th non-identity map.  The chain checked is
    ``JS <= TV + k*SE`` with ``TV <= sqrt(2) H`` and ``JS <= 2 H^2 + k*SE`` for the
    exact Hellinger distance ``H``.  The per-dimension scaled closed form is
    reported alongside together with whether the same chain holds for it.
    """
    if not isinstance(enc, StochasticEncoder):
        raise TypeError("the reduction needs an isotropic Gaussian encoder")
    sigma = enc.sigma if sigma is None else float(sigma)
    if sigma != enc.sigma:
        raise ValueError(f"sigma {sigma} does not match the encoder's isotropic sigma {enc.sigma}")
    maps = _matcher_maps(matcher)
    if not maps:
        maps = [(("identity",), None)]
    xs = np.atleast_2d(np.asarray(probe_xs, float))
    dz = enc.d_z
    cov = sigma**2 * np.eye(dz)
    probes = []
    cf_ok = True
    for idx, x in enumerate(xs):
        key, m = maps[idx % len(maps)]
        xp = x if m is None else m(x)
        mu1, mu2 = encode_mean(enc, x), encode_mean(enc, xp)
        gap = float(np.linalg.norm(mu1 - mu2))
        p = GaussianMixture([1.0], mu1[None], cov[None])
        q = GaussianMixture([1.0], mu2[None], cov[None])
        js = estimate_js_between(p, q, n, child_seed(seed, "probe", str(idx)))
        tv_mc = estimate_tv_mc(p, q, n, child_seed(seed, "tv", str(idx)))
        h = hellinger_gaussian_iso_exact(mu1, mu2, sigma)
        h_gen = hellinger_gaussian(mu1, cov, mu2, cov)
        h_per_dim = hellinger_gaussian_iso(mu1, mu2, sigma)
        err = abs(h - h_gen)
        cf_ok &= err <= 1e-10
        tv = tv_gaussian_iso(mu1, mu2, sigma)
        tol = k * js.std_error
        chain = js.value <= tv + tol and tv <= math.sqrt(2) * h + 1e-12 and js.value <= 2 * h * h + tol
        per_dim_chain = js.value <= tv + tol and tv <= math.sqrt(2) * h_per_dim + 1e-12
        probes.append(HellingerProbe(idx, key, gap, js, tv, tv_mc, h, h_per_dim, err, chain, per_dim_chain))
    order = sorted(probes, key=lambda p: p.mean_gap)
    monotone = True
    for a, b in zip(order, order[1:]):
        if b.mean_gap > a.mean_gap:
            # exp(-t) underflows against 1 for very separated means, so saturation at 1.0 is not a violation
            if not (b.hellinger > a.hellinger or (a.hellinger == 1.0 and b.hellinger == 1.0)):
                monotone = False
        elif b.hellinger != a.hellinger:
            monotone = False
    return HellingerReport(tuple(probes), monotone, cf_ok, k)


# ---------------------------------------------------------------- data processing


@dataclass(frozen=True)
class DpiReport:
    input_js: DivergenceEstimate
    repr_js: tuple[DivergenceEstimate, ...]
    holds_each: tuple[bool, ...]
    k: float = K_DEFAULT

    @property
    def holds(self) -> bool:
        return all(self.holds_each)

    def to_dict(self) -> dict:
        return {
            "theorem": "dpi",
            "holds": self.holds,
            "k": self.k,
            "input_js": self.input_js.to_dict(),
            "repr_js": [r.to_dict() for r in self.repr_js],
            "holds_each": list(self.holds_each),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def dpi_check(
    spec_i: Spec,
    spec_j: Spec,
    encoders: Sequence[StochasticEncoder],
    n: int = 20_000,
    seed: int = 0,
    k: float = K_DEFAULT,
    n_means: int = DEFAULT_MEANS,
) -> DpiReport:
    """Representation-level JS of P^Z against input-level JS of P^X for each encoder."""
    _require_specs(spec_i, spec_j)
    inp = estimate_js_between(x_law(spec_i), x_law(spec_j), n, child_seed(seed, "input"))
    reps, ok = [], []
    for e_idx, enc in enumerate(encoders):
        r = repr_js(enc, spec_i, spec_j, None, None, n, child_seed(seed, "repr", str(e_idx)), n_means)
        reps.append(r)
        ok.append(r.value <= inp.value + k * _quad(r.std_error, inp.std_error))
    return DpiReport(inp, tuple(reps), tuple(ok), k)


def summarize(reports: dict[str, object]) -> list[tuple[str, bool]]:
    return [(name, bool(r.holds)) for name, r in reports.items()]
