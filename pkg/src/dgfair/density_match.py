"""Invertible affine maps transporting class- and class-group-conditional feature laws between domains.

The analytic matcher uses the closed-form optimal transport map between
Gaussians.  Cell conditionals ``P(x | y, a)`` are Gaussian, so those maps are
exact.  ``P(x | y)`` is a two-component mixture unless both ``a`` cells agree;
then the map is fitted between moment-matched Gaussians, flagged
``approximate`` and its residual JS divergence is recorded.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .divergence import DivergenceEstimate, Estimator, estimate_js_between, estimate_js_divergence_mc
from .domains import CELLS, DomainSpec, GaussianCell, sample_cell, x_law
from .gaussian import NumericalError, cholesky_spd, inv_sqrtm_psd, sqrtm_psd

DET_TOL = 1e-12


class MissingMapError(KeyError):
    pass


@dataclass(frozen=True, eq=False)
class AffineMap:
    """x -> A x + b with invertible A."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if A.shape != (b.size, b.size):
            raise ValueError(f"A has shape {A.shape}, b has length {b.size}")
        if abs(np.linalg.det(A)) <= DET_TOL:
            raise NumericalError("affine map is singular (|det A| <= 1e-12)")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @classmethod
    def identity(cls, dim: int) -> "AffineMap":
        return cls(np.eye(dim), np.zeros(dim))

    @property
    def dim(self) -> int:
        return self.b.size

    def __call__(self, x) -> np.ndarray:
        return apply_map(self, x)

    def compose(self, inner: "AffineMap") -> "AffineMap":
        """``self o inner``."""
        return AffineMap(self.A @ inner.A, self.A @ inner.b + self.b)


def apply_map(m: AffineMap, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != m.dim:
        raise ValueError(f"points have dimension {x.shape[-1]}, map expects {m.dim}")
    return x @ m.A.T + m.b


def invert_map(m: AffineMap) -> AffineMap:
    inv = np.linalg.inv(m.A)
    return AffineMap(inv, -inv @ m.b)


def gaussian_ot_map(mean_i, cov_i, mean_j, cov_j, what: str = "cell") -> AffineMap:
    """Optimal transport map pushing N(mean_i, cov_i) onto N(mean_j, cov_j)."""
    cov_i = np.atleast_2d(np.asarray(cov_i, float))
    cov_j = np.atleast_2d(np.asarray(cov_j, float))
    try:
        cholesky_spd(cov_i, what=f"source covariance of {what}")
        cholesky_spd(cov_j, what=f"target covariance of {what}")
    except NumericalError as exc:
        raise NumericalError(str(exc)) from None
    root = sqrtm_psd(cov_i)
    inv_root = inv_sqrtm_psd(cov_i)
    middle = root @ cov_j @ root
    if np.linalg.eigvalsh(0.5 * (middle + middle.T)).min() <= 0:
        raise NumericalError(f"intermediate matrix for {what} is not positive definite")
    A = inv_root @ sqrtm_psd(middle) @ inv_root
    A = 0.5 * (A + A.T)
    return AffineMap(A, np.asarray(mean_j, float) - A @ np.asarray(mean_i, float))


class Matcher(Protocol):
    """What the trainer needs from a density matcher; a learned matcher can implement this."""

    num_domains: int

    def map_y(self, i: int, j: int, y: int) -> AffineMap: ...

    def map_ya(self, i: int, j: int, y: int, a: int) -> AffineMap: ...


@dataclass
class DensityMatcher:
    num_domains: int
    maps_y: dict[tuple[int, int, int], AffineMap]
    maps_ya: dict[tuple[int, int, int, int], AffineMap]
    approximate: dict[tuple[int, int, int], bool] = field(default_factory=dict)
    residual_js: dict[tuple[int, int, int], DivergenceEstimate | None] = field(default_factory=dict)

    def map_y(self, i: int, j: int, y: int) -> AffineMap:
        try:
            return self.maps_y[(i, j, y)]
        except KeyError:
            raise MissingMapError(f"no y-map for domains ({i} -> {j}), y={y}") from None

    def map_ya(self, i: int, j: int, y: int, a: int) -> AffineMap:
        try:
            return self.maps_ya[(i, j, y, a)]
        except KeyError:
            raise MissingMapError(f"no (y,a)-map for domains ({i} -> {j}), y={y}, a={a}") from None

    # -- serialization

    def to_records(self) -> list[dict]:
        out = []
        for (i, j, y), m in sorted(self.maps_y.items()):
            res = self.residual_js.get((i, j, y))
            out.append(
                {
                    "i": i, "j": j, "conditioning": {"y": y},
                    "A": m.A.tolist(), "b": m.b.tolist(),
                    "approximate": bool(self.approximate.get((i, j, y), False)),
                    "residual_js": None if res is None else res.to_dict(),
                }
            )
        for (i, j, y, a), m in sorted(self.maps_ya.items()):
            out.append(
                {
                    "i": i, "j": j, "conditioning": {"y": y, "a": a},
                    "A": m.A.tolist(), "b": m.b.tolist(),
                    "approximate": False, "residual_js": None,
                }
            )
        return out

    def to_json(self) -> str:
        return json.dumps({"num_domains": self.num_domains, "maps": self.to_records()}, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "DensityMatcher":
        obj = json.loads(text)
        m = cls(int(obj["num_domains"]), {}, {})
        for rec in obj["maps"]:
            amap = AffineMap(np.array(rec["A"], float), np.array(rec["b"], float))
            cond = rec["conditioning"]
            i, j = int(rec["i"]), int(rec["j"])
            if "a" in cond:
                m.maps_ya[(i, j, int(cond["y"]), int(cond["a"]))] = amap
            else:
                key = (i, j, int(cond["y"]))
                m.maps_y[key] = amap
                m.approximate[key] = bool(rec["approximate"])
                res = rec["residual_js"]
                if res is not None:
                    res = DivergenceEstimate(res["value"], res["std_error"], res["n_samples"], Estimator(res["estimator"]), res.get("raw_value"))
                m.residual_js[key] = res
        return m


def _cells_equal(spec: DomainSpec, y: int) -> bool:
    return spec.cells[(y, 0)].same_as(spec.cells[(y, 1)])


def fit_analytic_matcher(specs: Sequence[DomainSpec], residual_n: int = 20_000, seed: int = 0) -> DensityMatcher:
    """Closed-form matcher for every ordered domain pair and conditioning cell.

    Maps are indexed by position in ``specs``.  For approximate y-maps the
    residual JS between the pushforward law and the target ``P(x | y)`` is
    estimated with ``residual_n`` samples per side.
    """
    if not specs:
        raise ValueError("need at least one domain")
    dims = {s.feature_dim for s in specs}
    if len(dims) != 1:
        raise ValueError("all domains must share the feature dimension")
    dim = dims.pop()
    n_dom = len(specs)
    maps_y, maps_ya, approx, resid = {}, {}, {}, {}
    laws_y = {(k, y): x_law(s, y=y) for k, s in enumerate(specs) for y in (0, 1)}
    for i in range(n_dom):
        for j in range(n_dom):
            for y, a in CELLS:
                if i == j:
                    maps_ya[(i, j, y, a)] = AffineMap.identity(dim)
                    continue
                ci, cj = specs[i].cells[(y, a)], specs[j].cells[(y, a)]
                maps_ya[(i, j, y, a)] = gaussian_ot_map(ci.mean, ci.cov, cj.mean, cj.cov, f"({i}->{j}, y={y}, a={a})")
            for y in (0, 1):
                key = (i, j, y)
                if i == j:
                    maps_y[key], approx[key], resid[key] = AffineMap.identity(dim), False, None
                    continue
                src, dst = laws_y[(i, y)], laws_y[(j, y)]
                mi, si = src.moments()
                mj, sj = dst.moments()
                m = gaussian_ot_map(mi, si, mj, sj, f"({i}->{j}, y={y})")
                maps_y[key] = m
                exact = _cells_equal(specs[i], y) and _cells_equal(specs[j], y)
                approx[key] = not exact
                if exact:
                    resid[key] = None
                else:
                    pushed = src.affine_pushforward(m.A, m.b)
                    resid[key] = estimate_js_between(pushed, dst, residual_n, seed)
    return DensityMatcher(n_dom, maps_y, maps_ya, approx, resid)


def verify_pushforward(m: AffineMap, source_cell: GaussianCell, target_cell: GaussianCell, n: int = 100_000, seed: int = 0) -> DivergenceEstimate:
    """MC JS divergence between the law of ``m(X)``, ``X ~ source_cell``, and ``target_cell``."""
    mean = m.A @ source_cell.mean + m.b
    cov = m.A @ source_cell.cov @ m.A.T
    pushed = GaussianCell(mean, 0.5 * (cov + cov.T))
    return estimate_js_divergence_mc(
        pushed.logpdf,
        target_cell.logpdf,
        lambda k, rng: apply_map(m, sample_cell(source_cell, k, rng)),
        lambda k, rng: sample_cell(target_cell, k, rng),
        n,
        seed,
    )
