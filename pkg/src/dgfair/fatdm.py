"""Training with the density-matching invariance loss, and the error / unfairness metrics.

The objective per minibatch is ``L_cls + omega * L_fair + gamma * L_inv``:

* ``L_cls``  bounded cross-entropy of ``h(z)`` with ``z = mu(x) + sigma * eps``;
* ``L_fair`` squared equalized-odds gaps of the positive-class probability;
* ``L_inv``  mean squared distance between ``mu(x)`` and ``mu`` of ``x``
  transported to randomly drawn source domains, once under the y-conditional
  map and once under the (y, a)-conditional map.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .density_match import Matcher
from .divergence import emd_1d
from .domains import CELLS, Dataset
from .models import (
    Classifier,
    MissingCellError,
    StochasticEncoder,
    bounded_ce_loss,
    bounded_ce_t,
    bounded_probs_t,
    encode_mean,
    fairness_surrogate_t,
    make_model,
    mse_rows_t,
    predict_proba,
)
from .optim import Adam, Sgd
from .rng import make_rng

MAX_REDRAWS = 10
POOLED = -1  # MetricsRow.domain for pooled source data


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    omega: float = 0.0
    gamma: float = 0.0
    learning_rate: float = 1e-3
    batch_size: int = 128
    epochs: int = 30
    seed: int = 0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    d_z: int = 8
    hidden: tuple[int, ...] = (32, 32)
    clf_hidden: tuple[int, ...] = (16,)
    activation: str = "relu"
    sigma: float = 0.1
    bound_C: float = 5.0
    z_draws: int = 16

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        object.__setattr__(self, "clf_hidden", tuple(int(h) for h in self.clf_hidden))
        if self.omega < 0 or self.gamma < 0:
            raise ValueError("omega and gamma must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 8:
            raise ValueError("batch_size must be >= 8")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError("optimizer must be 'sgd' or 'adam'")
        if self.z_draws < 1:
            raise ValueError("z_draws must be >= 1")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["hidden"] = list(self.hidden)
        out["clf_hidden"] = list(self.clf_hidden)
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown TrainConfig fields: {sorted(unknown)}")
        return cls(**obj)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def replace(self, **kw) -> "TrainConfig":
        return TrainConfig.from_dict({**self.to_dict(), **kw})

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


@dataclass
class TrainHistory:
    l_cls: list[float] = field(default_factory=list)
    l_fair: list[float] = field(default_factory=list)
    l_inv: list[float] = field(default_factory=list)
    total: list[float] = field(default_factory=list)
    encoder: StochasticEncoder | None = None
    classifier: Classifier | None = None

    def __len__(self) -> int:
        return len(self.total)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "l_cls", "l_fair", "l_inv", "total"])
        for k in range(len(self)):
            w.writerow([k, repr(self.l_cls[k]), repr(self.l_fair[k]), repr(self.l_inv[k]), repr(self.total[k])])
        return buf.getvalue()


# ---------------------------------------------------------------- invariance loss


class _MapTables:
    """Stacked map parameters so a whole batch is transported with one einsum."""

    def __init__(self, matcher: Matcher, dim: int):
        n = matcher.num_domains
        self.n = n
        self.Ay = np.empty((n, n, 2, dim, dim))
        self.by = np.empty((n, n, 2, dim))
        self.Aya = np.empty((n, n, 2, 2, dim, dim))
        self.bya = np.empty((n, n, 2, 2, dim))
        for i in range(n):
            for j in range(n):
                for y in (0, 1):
                    m = matcher.map_y(i, j, y)
                    self.Ay[i, j, y], self.by[i, j, y] = m.A, m.b
                for y, a in CELLS:
                    m = matcher.map_ya(i, j, y, a)
                    self.Aya[i, j, y, a], self.bya[i, j, y, a] = m.A, m.b

    def transport(self, x, d, y, a, d1, d2) -> tuple[np.ndarray, np.ndarray]:
        x1 = np.einsum("npq,nq->np", self.Ay[d, d1, y], x) + self.by[d, d1, y]
        x2 = np.einsum("npq,nq->np", self.Aya[d, d2, y, a], x) + self.bya[d, d2, y, a]
        return x1, x2


def _draw_targets(rng: np.random.Generator, n_sources: int, size: int) -> tuple[np.ndarray, np.ndarray]:
    return rng.integers(0, n_sources, size), rng.integers(0, n_sources, size)


def l_inv_batch(enc: StochasticEncoder, matcher: Matcher, batch: Dataset, seed: int = 0) -> float:
    """Invariance loss over ``batch``; ``batch.d`` indexes the matcher's domains."""
    if len(batch) == 0:
        raise ValueError("batch is empty")
    if batch.d.max() >= matcher.num_domains:
        raise KeyError(f"matcher covers {matcher.num_domains} domains, batch has label {batch.d.max()}")
    tables = _MapTables(matcher, batch.feature_dim)
    d1, d2 = _draw_targets(make_rng(seed, "inv"), matcher.num_domains, len(batch))
    x1, x2 = tables.transport(batch.x, batch.d, batch.y, batch.a, d1, d2)
    mu = encode_mean(enc, batch.x)
    dz = enc.d_z
    terms = np.sum((mu - encode_mean(enc, x1)) ** 2, axis=1) / dz + np.sum((mu - encode_mean(enc, x2)) ** 2, axis=1) / dz
    return math.fsum(terms) / len(terms)


# ---------------------------------------------------------------- training


def _has_all_cells(y: np.ndarray, a: np.ndarray) -> bool:
    present = set(zip(y.tolist(), a.tolist()))
    return all(c in present for c in CELLS)


def _batches(rng: np.random.Generator, y: np.ndarray, a: np.ndarray, batch_size: int, need_cells: bool):
    n = len(y)
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        idx = order[start : start + batch_size]
        if need_cells and not _has_all_cells(y[idx], a[idx]):
            # a short trailing batch is re-drawn at full size
            size = max(len(idx), min(n, batch_size))
            for _ in range(MAX_REDRAWS):
                idx = rng.choice(n, size=size, replace=False)
                if _has_all_cells(y[idx], a[idx]):
                    break
            else:
                raise TrainingError(f"minibatch at offset {start} misses a (y, a) cell after {MAX_REDRAWS} re-draws")
        yield idx


def pool_sources(datasets: Sequence[Dataset]) -> Dataset:
    """Concatenate per-source datasets, relabelling ``d`` with the source position."""
    parts = [Dataset(ds.x, ds.a, ds.y, np.full(len(ds), k), len(datasets)) for k, ds in enumerate(datasets)]
    return Dataset.concat(parts)


def train(config: TrainConfig, datasets: Sequence[Dataset], matcher: Matcher) -> tuple[StochasticEncoder, Classifier, TrainHistory]:
    """Minibatch training on the pooled sources; source ``k`` is matcher domain ``k``."""
    if not datasets:
        raise ValueError("need at least one source dataset")
    if matcher.num_domains != len(datasets):
        raise ValueError(f"matcher has {matcher.num_domains} domains, got {len(datasets)} sources")
    pooled = pool_sources(datasets)
    enc, clf = make_model(
        pooled.feature_dim, make_rng(config.seed, "init"), config.d_z, config.hidden, config.clf_hidden,
        config.sigma, config.bound_C, config.activation,
    )
    params = enc.params + clf.params
    if config.optimizer == "adam":
        opt = Adam(params, config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    else:
        opt = Sgd(params, config.learning_rate)
    tables = _MapTables(matcher, pooled.feature_dim)
    rng_batch = make_rng(config.seed, "batch_order")
    rng_noise = make_rng(config.seed, "noise")
    rng_inv = make_rng(config.seed, "inv")
    hist = TrainHistory()
    omega, gamma = config.omega, config.gamma
    X, Y, A, D = pooled.x, pooled.y, pooled.a, pooled.d
    for _ in range(config.epochs):
        cls_vals, fair_vals, inv_vals = [], [], []
        for idx in _batches(rng_batch, Y, A, config.batch_size, need_cells=omega > 0):
            x, y, a, d = X[idx], Y[idx], A[idx], D[idx]
            mu = enc.mu_net(x)
            eps = rng_noise.standard_normal(mu.shape)
            probs = bounded_probs_t(clf.net(mu + enc.sigma * eps), clf.bound_C)
            loss = bounded_ce_t(probs, y)
            cls_vals.append(loss.item())

            has_cells = _has_all_cells(y, a)
            if has_cells:
                fair = fairness_surrogate_t(probs[:, 1], y, a)
                fair_vals.append(fair.item())
                if omega > 0:
                    loss = loss + omega * fair

            d1, d2 = _draw_targets(rng_inv, matcher.num_domains, len(idx))
            x1, x2 = tables.transport(x, d, y, a, d1, d2)
            if gamma > 0:
                inv = mse_rows_t(mu, enc.mu_net(x1)) + mse_rows_t(mu, enc.mu_net(x2))
                inv_vals.append(inv.item())
                loss = loss + gamma * inv
            else:
                m0 = mu.data
                inv_vals.append(float(np.mean((m0 - enc.mu_net.apply(x1)) ** 2) + np.mean((m0 - enc.mu_net.apply(x2)) ** 2)))

            opt.zero_grad()
            loss.backward()
            opt.step()
        c = math.fsum(cls_vals) / len(cls_vals)
        f = math.fsum(fair_vals) / len(fair_vals) if fair_vals else math.nan
        v = math.fsum(inv_vals) / len(inv_vals)
        hist.l_cls.append(c)
        hist.l_fair.append(f)
        hist.l_inv.append(v)
        hist.total.append(c + (omega * f if omega > 0 else 0.0) + gamma * v)
    hist.encoder, hist.classifier = enc, clf
    return enc, clf, hist


# ---------------------------------------------------------------- evaluation


@dataclass(frozen=True)
class MetricsRow:
    domain: int
    ce: float
    mr: float
    one_minus_auroc: float
    one_minus_aupr: float
    one_minus_f1: float
    eo_md: float
    eo_emd: float
    ep_md: float
    ep_emd: float

    def to_dict(self) -> dict:
        return asdict(self)


METRIC_FIELDS = [f.name for f in fields(MetricsRow)][1:]


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC with midranks for ties."""
    s = np.asarray(scores, float)
    lab = np.asarray(labels).astype(bool)
    n_pos, n_neg = int(lab.sum()), int((~lab).sum())
    if n_pos == 0 or n_neg == 0:
        return math.nan
    ranks = rankdata(s)
    return (math.fsum(ranks[lab]) - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def average_precision(scores, labels) -> float:
    """Area under the precision-recall step curve, thresholds at distinct scores."""
    s = np.asarray(scores, float)
    lab = np.asarray(labels).astype(bool)
    n_pos = int(lab.sum())
    if n_pos == 0:
        return math.nan
    order = np.argsort(-s, kind="mergesort")
    s, lab = s[order], lab[order]
    last = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]
    tp = np.cumsum(lab)[last]
    precision = tp / (last + 1)
    recall = tp / n_pos
    return math.fsum(np.diff(np.r_[0.0, recall]) * precision)


def f1_score(pred, labels) -> float:
    pred = np.asarray(pred).astype(bool)
    lab = np.asarray(labels).astype(bool)
    tp = int(np.sum(pred & lab))
    denom = 2 * tp + int(np.sum(pred & ~lab)) + int(np.sum(~pred & lab))
    return 2 * tp / denom if denom else 1.0


def fairness_gaps(scores, ys, as_) -> dict[str, float]:
    """EO/EP violations of a score vector under the mean-distance and EMD metrics."""
    s = np.asarray(scores, float)
    ys, as_ = np.asarray(ys), np.asarray(as_)
    md, emd = {}, {}
    for y in (0, 1):
        groups = []
        for a in (0, 1):
            sel = s[(ys == y) & (as_ == a)]
            if sel.size == 0:
                raise MissingCellError(f"no samples in cell y={y}, a={a}")
            groups.append(sel)
        md[y] = abs(math.fsum(groups[0]) / groups[0].size - math.fsum(groups[1]) / groups[1].size)
        emd[y] = emd_1d(groups[0], groups[1]).value
    return {"eo_md": md[0] + md[1], "eo_emd": emd[0] + emd[1], "ep_md": md[1], "ep_emd": emd[1]}


def metrics_from_scores(probs: np.ndarray, ys, as_, domain: int) -> MetricsRow:
    """Metrics from averaged predictions ``probs`` of shape (n, 2)."""
    ys = np.asarray(ys)
    if len(ys) == 0:
        raise ValueError("dataset is empty")
    score = probs[:, 1]
    pred = score >= 0.5
    ce = math.fsum(bounded_ce_loss(probs, ys)) / len(ys)
    mr = float(np.mean(pred != ys.astype(bool)))
    gaps = fairness_gaps(score, ys, as_)
    return MetricsRow(
        domain=int(domain),
        ce=ce,
        mr=mr,
        one_minus_auroc=1.0 - auroc(score, ys),
        one_minus_aupr=1.0 - average_precision(score, ys),
        one_minus_f1=1.0 - f1_score(pred, ys),
        **gaps,
    )


def evaluate(enc: StochasticEncoder, clf: Classifier, dataset: Dataset, z_draws: int = 16, seed: int = 0, domain: int | None = None) -> MetricsRow:
    """Score each x by the mean of ``z_draws`` bounded predictions, then compute all metrics."""
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    if dataset.feature_dim != enc.input_dim:
        raise ValueError(f"dataset has {dataset.feature_dim} features, encoder expects {enc.input_dim}")
    probs = predict_proba(enc, clf, dataset.x, z_draws, make_rng(seed, "eval"))
    if domain is None:
        doms = np.unique(dataset.d)
        domain = int(doms[0]) if doms.size == 1 else POOLED
    return metrics_from_scores(probs, dataset.y, dataset.a, domain)


# ---------------------------------------------------------------- sweeps

SWEEP_COLUMNS = ["omega", "gamma", "seed", "split"] + [f.name for f in fields(MetricsRow)]


@dataclass(frozen=True)
class SweepRow:
    omega: float
    gamma: float
    seed: int
    split: str
    metrics: MetricsRow

    def as_list(self) -> list:
        m = self.metrics
        return [repr(float(self.omega)), repr(float(self.gamma)), self.seed, self.split, m.domain] + [repr(float(getattr(m, k))) for k in METRIC_FIELDS]


@dataclass
class SweepResult:
    rows: list[SweepRow]
    errors: list[tuple[float, float, int, str]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in self.rows:
            w.writerow(r.as_list())
        return buf.getvalue()

    def select(self, split: str, omega: float | None = None, gamma: float | None = None) -> list[SweepRow]:
        return [r for r in self.rows if r.split == split and (omega is None or r.omega == omega) and (gamma is None or r.gamma == gamma)]


def _run_cell(args) -> tuple[float, float, int, list[SweepRow] | str]:
    config, datasets, heldout, target, matcher = args
    try:
        enc, clf, _ = train(config, datasets, matcher)
        rows = [
            SweepRow(config.omega, config.gamma, config.seed, "source", evaluate(enc, clf, heldout, config.z_draws, config.seed, POOLED)),
            SweepRow(config.omega, config.gamma, config.seed, "target", evaluate(enc, clf, target, config.z_draws, config.seed)),
        ]
        return config.omega, config.gamma, config.seed, rows
    except (TrainingError, ArithmeticError, ValueError) as exc:
        return config.omega, config.gamma, config.seed, f"{type(exc).__name__}: {exc}"


def sweep(
    base_config: TrainConfig,
    omega_grid: Sequence[float],
    gamma_grid: Sequence[float],
    seeds: Sequence[int],
    sources: Sequence[Dataset],
    heldout: Dataset,
    target: Dataset,
    matcher: Matcher,
    jobs: int = 1,
) -> SweepResult:
    """Train and evaluate every (omega, gamma, seed) cell; failed cells are recorded, not raised."""
    if not len(omega_grid) or not len(gamma_grid):
        raise ValueError("omega and gamma grids must be non-empty")
    if not len(seeds):
        raise ValueError("seed list must be non-empty")
    tasks = [
        (base_config.replace(omega=float(o), gamma=float(g), seed=int(s)), list(sources), heldout, target, matcher)
        for o in omega_grid for g in gamma_grid for s in seeds
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, tasks))
    else:
        results = [_run_cell(t) for t in tasks]
    rows, errors = [], []
    for o, g, s, res in results:
        if isinstance(res, str):
            errors.append((o, g, s, res))
        else:
            rows.extend(res)
    return SweepResult(rows, errors)
