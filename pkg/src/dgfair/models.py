"""Stochastic encoder g = N(mu(x), sigma^2 I), bounded-softmax classifier, and the training losses."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .autograd import Tensor, as_tensor, parameter
from .rng import make_rng

ACTIVATIONS = ("relu", "tanh")
NUM_CLASSES = 2


class MissingCellError(ValueError):
    """A (y, a) cell required by a fairness quantity has no samples."""


def _act_np(name: str, h: np.ndarray) -> np.ndarray:
    return np.maximum(h, 0.0) if name == "relu" else np.tanh(h)


class Mlp:
    """Fully connected net; hidden layers use ``activation``, the last layer is linear.

    Weights are stored as ``(in, out)`` matrices so a batch forward is ``x @ W + b``.
    """

    def __init__(self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray], activation: str = "relu", name: str = "mlp"):
        if activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if len(weights) != len(biases) or not weights:
            raise ValueError("need one bias per weight matrix, at least one layer")
        self.activation = activation
        self.name = name
        self.W = [parameter(w, f"{name}.W{i}") for i, w in enumerate(weights)]
        self.b = [parameter(np.reshape(b, -1), f"{name}.b{i}") for i, b in enumerate(biases)]
        for i, (w, b) in enumerate(zip(self.W, self.b)):
            if w.data.ndim != 2 or b.data.shape != (w.data.shape[1],):
                raise ValueError(f"layer {i}: bad parameter shapes {w.shape}, {b.shape}")
            if i and self.W[i - 1].data.shape[1] != w.data.shape[0]:
                raise ValueError(f"layer {i}: input size {w.shape[0]} does not chain")
            if not (np.all(np.isfinite(w.data)) and np.all(np.isfinite(b.data))):
                raise ValueError(f"layer {i}: non-finite parameters")

    @classmethod
    def init(cls, sizes: Sequence[int], rng: np.random.Generator, activation: str = "relu", name: str = "mlp", scale: float = 1.0) -> "Mlp":
        ws, bs = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            lim = scale * math.sqrt(6.0 / (fan_in + fan_out))
            ws.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
            bs.append(np.zeros(fan_out))
        return cls(ws, bs, activation, name)

    @property
    def sizes(self) -> list[int]:
        return [self.W[0].shape[0]] + [w.shape[1] for w in self.W]

    @property
    def params(self) -> list[Tensor]:
        out = []
        for w, b in zip(self.W, self.b):
            out += [w, b]
        return out

    def __call__(self, x) -> Tensor:
        h = as_tensor(x)
        last = len(self.W) - 1
        for i, (w, b) in enumerate(zip(self.W, self.b)):
            h = h @ w + b
            if i < last:
                h = h.relu() if self.activation == "relu" else h.tanh()
        return h

    def apply(self, x: np.ndarray) -> np.ndarray:
        h = np.atleast_2d(np.asarray(x, dtype=float))
        if h.shape[1] != self.sizes[0]:
            raise ValueError(f"input has {h.shape[1]} features, network expects {self.sizes[0]}")
        last = len(self.W) - 1
        for i, (w, b) in enumerate(zip(self.W, self.b)):
            h = h @ w.data + b.data
            if i < last:
                h = _act_np(self.activation, h)
        return h

    def is_constant(self) -> bool:
        """True when some weight matrix is all zero, so the output ignores the input."""
        return any(not np.any(w.data) for w in self.W)

    def affine_form(self) -> tuple[np.ndarray, np.ndarray] | None:
        """``(A, c)`` with ``net(x) = A x + c`` for single-layer nets, else None."""
        if len(self.W) != 1:
            return None
        return self.W[0].data.T.copy(), self.b[0].data.copy()

    def copy(self) -> "Mlp":
        return Mlp([w.data.copy() for w in self.W], [b.data.copy() for b in self.b], self.activation, self.name)

    def to_dict(self) -> dict:
        return {
            "sizes": self.sizes,
            "activation": self.activation,
            "weights": [w.data.tolist() for w in self.W],
            "biases": [b.data.tolist() for b in self.b],
        }

    @classmethod
    def from_dict(cls, obj: dict, name: str = "mlp") -> "Mlp":
        net = cls([np.array(w, float) for w in obj["weights"]], [np.array(b, float) for b in obj["biases"]], obj["activation"], name)
        if net.sizes != list(obj["sizes"]):
            raise ValueError("checkpoint layer sizes do not match weights")
        return net


def linear_net(A, c=None, name: str = "mlp") -> Mlp:
    """Single-layer net computing ``A x + c``."""
    A = np.atleast_2d(np.asarray(A, float))
    c = np.zeros(A.shape[0]) if c is None else np.asarray(c, float)
    return Mlp([A.T.copy()], [c], "relu", name)


class StochasticEncoder:
    """g(x) = N(mu(x), sigma^2 I_d) with a fixed sigma."""

    def __init__(self, mu_net: Mlp, sigma: float = 0.1):
        if not sigma > 0:
            raise ValueError("sigma must be > 0")
        self.mu_net = mu_net
        self.sigma = float(sigma)

    @property
    def d_z(self) -> int:
        return self.mu_net.sizes[-1]

    @property
    def input_dim(self) -> int:
        return self.mu_net.sizes[0]

    @property
    def params(self) -> list[Tensor]:
        return self.mu_net.params


class Classifier:
    """Raw scores from ``net``; probabilities are softmax outputs floored at exp(-bound_C)."""

    def __init__(self, net: Mlp, bound_C: float = 5.0):
        if not bound_C >= math.log(NUM_CLASSES):
            # below ln|Y| the floor exp(-C) * |Y| exceeds 1 and the bounded outputs leave the simplex
            raise ValueError(f"bound_C must be >= ln {NUM_CLASSES}")
        if net.sizes[-1] != NUM_CLASSES:
            raise ValueError("classifier must output 2 scores")
        self.net = net
        self.bound_C = float(bound_C)

    @property
    def params(self) -> list[Tensor]:
        return self.net.params


def make_model(input_dim: int, rng: np.random.Generator, d_z: int = 8, hidden=(32, 32), clf_hidden=(16,), sigma: float = 0.1, bound_C: float = 5.0, activation: str = "relu"):
    enc = StochasticEncoder(Mlp.init([input_dim, *hidden, d_z], rng, activation, "encoder"), sigma)
    clf = Classifier(Mlp.init([d_z, *clf_hidden, NUM_CLASSES], rng, activation, "classifier"), bound_C)
    return enc, clf


def constant_encoder(input_dim: int, d_z: int, value=None, sigma: float = 0.1) -> StochasticEncoder:
    value = np.zeros(d_z) if value is None else np.asarray(value, float)
    return StochasticEncoder(linear_net(np.zeros((d_z, input_dim)), value, "encoder"), sigma)


def identity_encoder(dim: int, sigma: float = 0.1) -> StochasticEncoder:
    return StochasticEncoder(linear_net(np.eye(dim), None, "encoder"), sigma)


# ---------------------------------------------------------------- forward maps


def encode_mean(enc: StochasticEncoder, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = enc.mu_net.apply(x)
    return out[0] if x.ndim == 1 else out


def encode_sample(enc: StochasticEncoder, x, seed: int | None = None, rng: np.random.Generator | None = None) -> np.ndarray:
    """z = mu(x) + sigma * eps with eps from the seeded ``encode`` stream (or ``rng``)."""
    if rng is None:
        rng = make_rng(0 if seed is None else seed, "encode")
    mu = encode_mean(enc, x)
    return mu + enc.sigma * rng.standard_normal(mu.shape)


def bound_probs(p: np.ndarray, bound_C: float) -> np.ndarray:
    floor = math.exp(-bound_C)
    return p * (1.0 - floor * p.shape[-1]) + floor


def softmax_np(s: np.ndarray) -> np.ndarray:
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def classify_bounded(clf: Classifier, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    out = bound_probs(softmax_np(clf.net.apply(z)), clf.bound_C)
    return out[0] if z.ndim == 1 else out


def predict_proba(enc: StochasticEncoder, clf: Classifier, x, z_draws: int, rng: np.random.Generator) -> np.ndarray:
    """f(x) = E_z h(z), averaged over ``z_draws`` encoder samples per row; shape (n, 2)."""
    x = np.atleast_2d(x)
    mu = encode_mean(enc, x)
    acc = np.zeros((len(x), NUM_CLASSES))
    for _ in range(z_draws):
        acc += classify_bounded(clf, mu + enc.sigma * rng.standard_normal(mu.shape))
    return acc / z_draws


def bounded_ce_loss(pred, y):
    """-ln pred[y]; an array of losses for batched input."""
    pred = np.asarray(pred, dtype=float)
    if pred.ndim == 1:
        return -math.log(pred[int(y)])
    y = np.asarray(y, dtype=np.int64)
    return -np.log(pred[np.arange(len(y)), y])


def _cell_indices(ys: np.ndarray, as_: np.ndarray) -> dict[tuple[int, int], np.ndarray]:
    out = {}
    for yv in (0, 1):
        for av in (0, 1):
            idx = np.flatnonzero((ys == yv) & (as_ == av))
            if idx.size == 0:
                raise MissingCellError(f"no samples in cell y={yv}, a={av}")
            out[(yv, av)] = idx
    return out


def fairness_surrogate(batch_preds, ys, as_) -> float:
    """Sum over y of the squared gap between group means of the positive-class probability."""
    p = np.asarray(batch_preds, float)
    cells = _cell_indices(np.asarray(ys), np.asarray(as_))
    return math.fsum((p[cells[(y, 0)]].mean() - p[cells[(y, 1)]].mean()) ** 2 for y in (0, 1))


# ---------------------------------------------------------------- graph versions


def bounded_probs_t(scores: Tensor, bound_C: float) -> Tensor:
    floor = math.exp(-bound_C)
    return scores.softmax() * (1.0 - floor * NUM_CLASSES) + floor


def bounded_ce_t(probs: Tensor, y: np.ndarray) -> Tensor:
    return -probs[np.arange(len(y)), np.asarray(y)].log().mean()


def fairness_surrogate_t(p1: Tensor, ys: np.ndarray, as_: np.ndarray) -> Tensor:
    cells = _cell_indices(np.asarray(ys), np.asarray(as_))
    total = None
    for y in (0, 1):
        gap = (p1[cells[(y, 0)]].mean() - p1[cells[(y, 1)]].mean()).square()
        total = gap if total is None else total + gap
    return total


def mse_rows_t(u: Tensor, v: Tensor) -> Tensor:
    """Mean over rows of ||u - v||^2 / d."""
    return (u - v).square().mean()


# ---------------------------------------------------------------- gradient check


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    n_checked: int
    worst_param: str = ""


def grad_check(loss_fn: Callable[[], Tensor], params: Sequence[Tensor], probes: int = 200, seed: int = 0, step: float = 1e-5, floor: float = 1e-6) -> GradCheckReport:
    """Compare reverse-mode gradients with central differences at ``probes`` random entries.

    ``loss_fn`` must be deterministic (fixed noise).  Relative error is
    ``|g - g_fd| / max(|g|, |g_fd|, floor)``.
    """
    for p in params:
        p.grad = None
    loss_fn().backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    rng = make_rng(seed, "gradcheck")
    sizes = np.array([p.data.size for p in params])
    picks = rng.choice(sizes.sum(), size=min(probes, int(sizes.sum())), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    worst, worst_name = 0.0, ""
    for flat in picks:
        k = int(np.searchsorted(offsets, flat, side="right") - 1)
        p = params[k]
        idx = np.unravel_index(int(flat - offsets[k]), p.data.shape)
        orig = p.data[idx]
        p.data[idx] = orig + step
        up = loss_fn().item()
        p.data[idx] = orig - step
        down = loss_fn().item()
        p.data[idx] = orig
        fd = (up - down) / (2 * step)
        g = analytic[k][idx]
        rel = abs(g - fd) / max(abs(g), abs(fd), floor)
        if rel > worst:
            worst, worst_name = rel, f"{p.name}{[int(i) for i in idx]}"
    return GradCheckReport(worst, len(picks), worst_name)


# ---------------------------------------------------------------- checkpoints


def model_to_dict(enc: StochasticEncoder, clf: Classifier, config_hash: str = "") -> dict:
    return {
        "encoder": enc.mu_net.to_dict(),
        "classifier": clf.net.to_dict(),
        "sigma": enc.sigma,
        "bound_C": clf.bound_C,
        "feature_dim": enc.input_dim,
        "config_hash": config_hash,
    }


def model_from_dict(obj: dict) -> tuple[StochasticEncoder, Classifier]:
    enc = StochasticEncoder(Mlp.from_dict(obj["encoder"], "encoder"), obj["sigma"])
    clf = Classifier(Mlp.from_dict(obj["classifier"], "classifier"), obj["bound_C"])
    return enc, clf


def save_checkpoint(path, enc: StochasticEncoder, clf: Classifier, config_hash: str = "") -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(model_to_dict(enc, clf, config_hash), fh, indent=1)
        fh.write("\n")


def load_checkpoint(path) -> tuple[StochasticEncoder, Classifier, dict]:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    enc, clf = model_from_dict(obj)
    return enc, clf, obj
