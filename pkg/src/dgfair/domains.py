"""Synthetic multi-domain families with exactly known densities.

A domain is a joint law over features ``x`` (real p-vector), sensitive group
``a`` and label ``y`` (both binary).  Each of the four ``(y, a)`` cells holds a
Gaussian ``P(x | y, a)`` and a probability ``P(y, a)``.  Mixtures of domains
are the targets used for perfect-transfer checks.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence, Union

import numpy as np
from scipy.special import logsumexp

from .gaussian import GaussianMixture, cholesky_spd, gaussian_logpdf
from .rng import make_rng

CELLS: tuple[tuple[int, int], ...] = ((0, 0), (0, 1), (1, 0), (1, 1))
PROB_TOL = 1e-12


class DimensionError(ValueError):
    pass


class SpecError(ValueError):
    """Invalid domain / mixture specification."""


class GaussianCell:
    """Gaussian ``P(x | y, a)``; the covariance is validated through its Cholesky factor."""

    __slots__ = ("mean", "cov", "chol")

    def __init__(self, mean, cov):
        mean = np.array(mean, dtype=float).reshape(-1)
        cov = np.array(cov, dtype=float).reshape(mean.size, mean.size)
        if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(cov)):
            raise SpecError("cell mean/covariance must be finite")
        chol = cholesky_spd(cov, min_eig=1e-9)
        for arr in (mean, cov, chol):
            arr.setflags(write=False)
        self.mean, self.cov, self.chol = mean, cov, chol

    @property
    def dim(self) -> int:
        return self.mean.size

    def logpdf(self, x) -> np.ndarray:
        return gaussian_logpdf(x, self.mean, self.chol)

    def same_as(self, other: "GaussianCell") -> bool:
        return np.array_equal(self.mean, other.mean) and np.array_equal(self.cov, other.cov)

    def __repr__(self) -> str:
        return f"GaussianCell(mean={self.mean.tolist()}, cov={self.cov.tolist()})"


def _check_probs(probs: Mapping[tuple[int, int], float]) -> dict[tuple[int, int], float]:
    if set(probs) != set(CELLS):
        raise SpecError(f"cell_probs must cover exactly the cells {CELLS}")
    out = {c: float(probs[c]) for c in CELLS}
    if any(p < 0 or not math.isfinite(p) for p in out.values()):
        raise SpecError("cell probabilities must be finite and >= 0")
    total = math.fsum(out.values())
    if abs(total - 1.0) > PROB_TOL:
        raise SpecError(f"cell probabilities sum to {total!r}, not 1")
    return out


def probs_from_table(table) -> dict[tuple[int, int], float]:
    """Accept a mapping keyed by (y, a) or a length-4 sequence in ``CELLS`` order."""
    if isinstance(table, Mapping):
        return _check_probs({tuple(int(v) for v in k): p for k, p in table.items()})
    values = list(table)
    if len(values) != 4:
        raise SpecError("a cell probability table needs 4 entries")
    return _check_probs(dict(zip(CELLS, values)))


@dataclass(frozen=True, eq=False)
class DomainSpec:
    cells: Mapping[tuple[int, int], GaussianCell]
    cell_probs: Mapping[tuple[int, int], float]
    domain_id: int = 0

    def __post_init__(self):
        if set(self.cells) != set(CELLS):
            raise SpecError("a domain needs exactly the four (y, a) cells")
        dims = {c.dim for c in self.cells.values()}
        if len(dims) != 1:
            raise DimensionError("all cells of a domain must share the feature dimension")
        object.__setattr__(self, "cells", {c: self.cells[c] for c in CELLS})
        object.__setattr__(self, "cell_probs", _check_probs(self.cell_probs))
        if int(self.domain_id) < 0:
            raise SpecError("domain_id must be >= 0")

    @property
    def feature_dim(self) -> int:
        return self.cells[CELLS[0]].dim

    @property
    def components(self) -> list["DomainSpec"]:
        return [self]

    @property
    def weights(self) -> np.ndarray:
        return np.ones(1)


@dataclass(frozen=True, eq=False)
class MixtureSpec:
    components: Sequence[DomainSpec]
    weights: np.ndarray

    def __post_init__(self):
        comps = list(self.components)
        w = np.array(self.weights, dtype=float).reshape(-1)
        if not comps:
            raise SpecError("a mixture needs at least one component")
        if len(w) != len(comps):
            raise SpecError(f"{len(w)} weights for {len(comps)} components")
        if np.any(w < 0) or not np.all(np.isfinite(w)) or abs(math.fsum(w) - 1.0) > PROB_TOL:
            raise SpecError("mixture weights must be a probability vector")
        if len({c.feature_dim for c in comps}) != 1:
            raise DimensionError("mixture components must share the feature dimension")
        w.setflags(write=False)
        object.__setattr__(self, "components", tuple(comps))
        object.__setattr__(self, "weights", w)

    @property
    def feature_dim(self) -> int:
        return self.components[0].feature_dim


Spec = Union[DomainSpec, MixtureSpec]


@dataclass(frozen=True)
class LabeledSample:
    x: np.ndarray
    a: int
    y: int
    d: int


@dataclass(eq=False)
class Dataset:
    """Columnar sample of ``(x, a, y, d)`` records."""

    x: np.ndarray
    a: np.ndarray
    y: np.ndarray
    d: np.ndarray
    num_domains: int
    feature_dim: int = field(init=False)

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.a = np.asarray(self.a, dtype=np.int64).reshape(-1)
        self.y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        self.d = np.asarray(self.d, dtype=np.int64).reshape(-1)
        n = len(self.x)
        if not (len(self.a) == len(self.y) == len(self.d) == n):
            raise ValueError("dataset columns have unequal lengths")
        if not np.all(np.isfinite(self.x)):
            raise ValueError("dataset features must be finite")
        for name, col in (("a", self.a), ("y", self.y)):
            if np.any((col != 0) & (col != 1)):
                raise ValueError(f"column {name} must be binary")
        if n and (self.d.min() < 0 or self.d.max() >= self.num_domains):
            raise ValueError(f"domain labels must lie in [0, {self.num_domains})")
        self.feature_dim = self.x.shape[1]

    def __len__(self) -> int:
        return len(self.x)

    @property
    def samples(self) -> list[LabeledSample]:
        return list(self)

    def __iter__(self) -> Iterator[LabeledSample]:
        for k in range(len(self)):
            yield LabeledSample(self.x[k], int(self.a[k]), int(self.y[k]), int(self.d[k]))

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.a[idx], self.y[idx], self.d[idx], self.num_domains)

    def cell_mask(self, y: int, a: int) -> np.ndarray:
        return (self.y == y) & (self.a == a)

    @staticmethod
    def concat(parts: Sequence["Dataset"]) -> "Dataset":
        if not parts:
            raise ValueError("nothing to concatenate")
        return Dataset(
            np.concatenate([p.x for p in parts]),
            np.concatenate([p.a for p in parts]),
            np.concatenate([p.y for p in parts]),
            np.concatenate([p.d for p in parts]),
            max(p.num_domains for p in parts),
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{j}" for j in range(self.feature_dim)] + ["a", "y", "d"])
        for k in range(len(self)):
            w.writerow([repr(float(v)) for v in self.x[k]] + [int(self.a[k]), int(self.y[k]), int(self.d[k])])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, num_domains: int | None = None) -> "Dataset":
        lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
        rows = list(csv.reader(lines))
        header, body = rows[0], rows[1:]
        p = len(header) - 3
        if header != [f"x{j}" for j in range(p)] + ["a", "y", "d"]:
            raise ValueError(f"unexpected dataset header {header}")
        arr = np.array(body, dtype=float).reshape(-1, p + 3)
        d = arr[:, p + 2].astype(np.int64)
        n_dom = num_domains if num_domains is not None else (int(d.max()) + 1 if len(d) else 1)
        return cls(arr[:, :p], arr[:, p], arr[:, p + 1], d, n_dom)


# ---------------------------------------------------------------- families


def rotation_matrix(degrees: float) -> np.ndarray:
    t = math.radians(degrees)
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, -s], [s, c]])


def rotate_spec(base: DomainSpec, degrees: float, domain_id: int) -> DomainSpec:
    if base.feature_dim != 2:
        raise DimensionError(f"rotation needs 2-D features, got p={base.feature_dim}")
    R = rotation_matrix(degrees)
    cells = {}
    for key, cell in base.cells.items():
        cov = R @ cell.cov @ R.T
        cells[key] = GaussianCell(R @ cell.mean, 0.5 * (cov + cov.T))
    return DomainSpec(cells, dict(base.cell_probs), domain_id)


def make_rotation_family(num_domains: int, base: DomainSpec, step_degrees: float) -> list[DomainSpec]:
    """Domain ``i`` is ``base`` rotated counter-clockwise by ``i * step_degrees``."""
    if num_domains < 2:
        raise SpecError("a family needs at least 2 domains")
    if base.feature_dim != 2:
        raise DimensionError(f"rotation needs 2-D features, got p={base.feature_dim}")
    return [rotate_spec(base, i * step_degrees, i) for i in range(num_domains)]


def make_cellprob_family(num_domains: int, base: DomainSpec, prob_tables) -> list[DomainSpec]:
    """Domains share ``base``'s Gaussian cells and differ only in ``P(y, a)``."""
    tables = [probs_from_table(t) for t in prob_tables]
    if len(tables) != num_domains:
        raise SpecError(f"{len(tables)} probability tables for {num_domains} domains")
    return [DomainSpec(dict(base.cells), t, i) for i, t in enumerate(tables)]


def make_mixture(specs: Sequence[DomainSpec], weights) -> MixtureSpec:
    return MixtureSpec(list(specs), np.asarray(weights, dtype=float))


# ---------------------------------------------------------------- densities


def _parts(spec: Spec) -> list[tuple[float, DomainSpec]]:
    return [(float(w), c) for w, c in zip(spec.weights, spec.components)]


def prob_ya(spec: Spec, y: int, a: int) -> float:
    return math.fsum(w * c.cell_probs[(y, a)] for w, c in _parts(spec))


def prob_y(spec: Spec, y: int) -> float:
    return prob_ya(spec, y, 0) + prob_ya(spec, y, 1)


def label_marginal(spec: Spec) -> np.ndarray:
    return np.array([prob_y(spec, 0), prob_y(spec, 1)])


def _log(p: float) -> float:
    return math.log(p) if p > 0 else -math.inf


def _cell_terms(spec: Spec, x: np.ndarray, y, a) -> np.ndarray:
    """log(w_i P_i(y,a) N_i(x)) for every component, shape (n, K)."""
    x = np.atleast_2d(x)
    n = len(x)
    y = np.broadcast_to(np.asarray(y), (n,))
    a = np.broadcast_to(np.asarray(a), (n,))
    out = np.full((n, len(spec.components)), -np.inf)
    for k, (w, comp) in enumerate(_parts(spec)):
        for cy, ca in CELLS:
            idx = (y == cy) & (a == ca)
            if not idx.any():
                continue
            lp = _log(w) + _log(comp.cell_probs[(cy, ca)])
            if lp == -math.inf:
                continue
            out[idx, k] = lp + comp.cells[(cy, ca)].logpdf(x[idx])
    return out


def log_density(spec: Spec, x, y, a) -> np.ndarray:
    """Joint log-density of ``(x, y, a)``; ``-inf`` where the cell has probability 0."""
    return logsumexp(_cell_terms(spec, x, y, a), axis=1)


def log_density_xy(spec: Spec, x, y) -> np.ndarray:
    return np.logaddexp(log_density(spec, x, y, 0), log_density(spec, x, y, 1))


def log_density_x(spec: Spec, x) -> np.ndarray:
    n = len(np.atleast_2d(x))
    return logsumexp(np.stack([log_density(spec, x, np.full(n, y), np.full(n, a)) for y, a in CELLS]), axis=0)


def log_density_x_given_y(spec: Spec, x, y: int) -> np.ndarray:
    return log_density_xy(spec, x, y) - _log(prob_y(spec, y))


def log_density_x_given_ya(spec: Spec, x, y: int, a: int) -> np.ndarray:
    return log_density(spec, x, y, a) - _log(prob_ya(spec, y, a))


def x_law(spec: Spec, y: int | None = None, a: int | None = None) -> GaussianMixture:
    """``P(x)``, ``P(x | y)`` or ``P(x | y, a)`` as an explicit Gaussian mixture."""
    weights, means, covs = [], [], []
    for w, comp in _parts(spec):
        for cy, ca in CELLS:
            if (y is not None and cy != y) or (a is not None and ca != a):
                continue
            weights.append(w * comp.cell_probs[(cy, ca)])
            means.append(comp.cells[(cy, ca)].mean)
            covs.append(comp.cells[(cy, ca)].cov)
    total = math.fsum(weights)
    if total <= 0:
        raise SpecError(f"conditioning event y={y}, a={a} has probability 0")
    return GaussianMixture(np.array(weights) / total, np.array(means), np.array(covs))


# ---------------------------------------------------------------- sampling


def _domain_count(spec: Spec) -> int:
    return max(c.domain_id for c in spec.components) + 1


def sample_dataset(spec: Spec, n: int, seed: int) -> Dataset:
    """i.i.d. records: component (mixtures only), then cell, then Gaussian features."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(seed, "sampling")
    parts = _parts(spec)
    comp_u = rng.random(n)
    cell_u = rng.random(n)
    eps = rng.standard_normal((n, spec.feature_dim))
    weights = np.array([w for w, _ in parts])
    comp = np.minimum(np.searchsorted(np.cumsum(weights), comp_u, side="right"), len(parts) - 1)
    x = np.empty((n, spec.feature_dim))
    ys = np.empty(n, dtype=np.int64)
    as_ = np.empty(n, dtype=np.int64)
    ds = np.empty(n, dtype=np.int64)
    for k, (_, dom) in enumerate(parts):
        in_k = comp == k
        cp = np.cumsum([dom.cell_probs[c] for c in CELLS])
        cell = np.minimum(np.searchsorted(cp, cell_u, side="right"), 3)
        for ci, (cy, ca) in enumerate(CELLS):
            idx = in_k & (cell == ci)
            g = dom.cells[(cy, ca)]
            x[idx] = g.mean + eps[idx] @ g.chol.T
            ys[idx], as_[idx] = cy, ca
        ds[in_k] = dom.domain_id
    return Dataset(x, as_, ys, ds, _domain_count(spec))


def sample_cell(cell: GaussianCell, n: int, rng: np.random.Generator) -> np.ndarray:
    return cell.mean + rng.standard_normal((n, cell.dim)) @ cell.chol.T


# ---------------------------------------------------------------- serialization


def _key(c: tuple[int, int]) -> str:
    return f"{c[0]},{c[1]}"


def _unkey(s: str) -> tuple[int, int]:
    y, a = s.split(",")
    return int(y), int(a)


def spec_to_dict(spec: Spec) -> dict:
    if isinstance(spec, MixtureSpec):
        return {"components": [spec_to_dict(c) for c in spec.components], "weights": spec.weights.tolist()}
    return {
        "domain_id": int(spec.domain_id),
        "cells": {_key(c): {"mean": spec.cells[c].mean.tolist(), "cov": spec.cells[c].cov.tolist()} for c in CELLS},
        "cell_probs": {_key(c): spec.cell_probs[c] for c in CELLS},
    }


def spec_from_dict(obj: dict) -> Spec:
    if "components" in obj:
        return MixtureSpec([spec_from_dict(c) for c in obj["components"]], np.asarray(obj["weights"], dtype=float))
    cells = {_unkey(k): GaussianCell(v["mean"], v["cov"]) for k, v in obj["cells"].items()}
    probs = {_unkey(k): float(v) for k, v in obj["cell_probs"].items()}
    return DomainSpec(cells, probs, int(obj.get("domain_id", 0)))


def spec_to_json(spec: Spec) -> str:
    return json.dumps(spec_to_dict(spec), indent=2, sort_keys=True)


def spec_from_json(text: str) -> Spec:
    return spec_from_dict(json.loads(text))
