"""Experiment configuration: domain family, leave-one-out split, training and verification settings.

The default base domain and the rotation step are artifact choices (the
shift magnitudes are not given by the method); they are chosen so that a
leave-one-out split shows measurable accuracy and fairness shift.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from typing import Any

from .domains import (
    DomainSpec,
    GaussianCell,
    MixtureSpec,
    make_cellprob_family,
    make_mixture,
    make_rotation_family,
    probs_from_table,
    sample_dataset,
    spec_from_dict,
    spec_to_dict,
)
from .fatdm import TrainConfig
from .rng import child_seed


class ConfigError(ValueError):
    pass


def default_base_spec() -> DomainSpec:
    """Two-feature base domain; the group ``a`` shifts the class clouds differently per label."""
    cells = {
        (0, 0): GaussianCell([-1.0, 0.5], [[0.35, 0.1], [0.1, 0.35]]),
        (0, 1): GaussianCell([-0.2, 1.2], [[0.35, -0.05], [-0.05, 0.3]]),
        (1, 0): GaussianCell([1.0, -0.2], [[0.3, 0.05], [0.05, 0.3]]),
        (1, 1): GaussianCell([0.6, 0.8], [[0.3, 0.0], [0.0, 0.4]]),
    }
    probs = {(0, 0): 0.3, (0, 1): 0.2, (1, 0): 0.2, (1, 1): 0.3}
    return DomainSpec(cells, probs, 0)


@dataclass(frozen=True)
class VerifyConfig:
    n: int = 10_000
    seed: int = 0
    k: float = 3.0
    instances: int = 2
    n_means: int = 256

    def __post_init__(self):
        if self.n < 1000:
            raise ConfigError("verification n must be >= 1000")
        if self.k <= 0:
            raise ConfigError("k must be > 0")
        if self.instances < 1 or self.n_means < 1:
            raise ConfigError("instances and n_means must be >= 1")


@dataclass(frozen=True)
class SweepConfig:
    omega_grid: tuple[float, ...] = (0.0, 1.0, 10.0)
    gamma_grid: tuple[float, ...] = (0.0, 0.1)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)

    def __post_init__(self):
        for name in ("omega_grid", "gamma_grid", "seeds"):
            vals = tuple(getattr(self, name))
            if not vals:
                raise ConfigError(f"{name} must be non-empty")
            object.__setattr__(self, name, vals)


@dataclass(frozen=True)
class ExperimentConfig:
    family: str = "rotation"
    num_domains: int = 4
    step_degrees: float = 30.0
    base: dict = field(default_factory=lambda: spec_to_dict(default_base_spec()))
    prob_tables: tuple | None = None
    target_index: int | None = 3
    mixture_weights: tuple[float, ...] | None = None
    n_train: int = 2000
    n_heldout: int = 1000
    n_target: int = 2000
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def __post_init__(self):
        if self.family not in ("rotation", "cellprob"):
            raise ConfigError(f"unknown family {self.family!r}")
        if self.num_domains < 2:
            raise ConfigError("num_domains must be >= 2")
        if (self.target_index is None) == (self.mixture_weights is None):
            raise ConfigError("give exactly one of target_index or mixture_weights")
        if self.target_index is not None and not 0 <= self.target_index < self.num_domains:
            raise ConfigError(f"target_index {self.target_index} is outside [0, {self.num_domains})")
        if self.mixture_weights is not None:
            object.__setattr__(self, "mixture_weights", tuple(float(w) for w in self.mixture_weights))
            if len(self.mixture_weights) != self.num_domains:
                raise ConfigError("mixture_weights needs one weight per domain")
        if self.family == "cellprob":
            if self.prob_tables is None or len(self.prob_tables) != self.num_domains:
                raise ConfigError("cellprob family needs one probability table per domain")
        for name in ("n_train", "n_heldout", "n_target"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    # -- construction

    def base_spec(self) -> DomainSpec:
        spec = spec_from_dict(self.base)
        if not isinstance(spec, DomainSpec):
            raise ConfigError("base must be a single domain")
        return spec

    def domains(self) -> list[DomainSpec]:
        base = self.base_spec()
        if self.family == "rotation":
            return make_rotation_family(self.num_domains, base, self.step_degrees)
        return make_cellprob_family(self.num_domains, base, [probs_from_table(t) for t in self.prob_tables])

    def source_indices(self) -> list[int]:
        if self.target_index is None:
            return list(range(self.num_domains))
        return [k for k in range(self.num_domains) if k != self.target_index]

    def target_spec(self, domains: list[DomainSpec] | None = None) -> DomainSpec | MixtureSpec:
        domains = self.domains() if domains is None else domains
        if self.target_index is not None:
            return domains[self.target_index]
        return make_mixture(domains, self.mixture_weights)

    def datasets(self):
        """(train per source, held-out per source, target) under seeds derived from the root seed."""
        doms = self.domains()
        src = self.source_indices()
        train = [sample_dataset(doms[k], self.n_train, child_seed(self.seed, "data", str(k), "train")) for k in src]
        held = [sample_dataset(doms[k], self.n_heldout, child_seed(self.seed, "data", str(k), "heldout")) for k in src]
        target = sample_dataset(self.target_spec(doms), self.n_target, child_seed(self.seed, "data", "target"))
        return train, held, target

    # -- serialization

    def to_dict(self) -> dict:
        out: dict[str, Any] = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, TrainConfig):
                v = v.to_dict()
            elif isinstance(v, (VerifyConfig, SweepConfig)):
                v = {k: list(x) if isinstance(x, tuple) else x for k, x in asdict(v).items()}
            elif isinstance(v, tuple):
                v = [list(t) if isinstance(t, (tuple, list)) else t for t in v]
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        kw = dict(obj)
        try:
            if "train" in kw:
                kw["train"] = TrainConfig.from_dict(kw["train"])
            if "verify" in kw:
                kw["verify"] = VerifyConfig(**kw["verify"])
            if "sweep" in kw:
                kw["sweep"] = SweepConfig(**kw["sweep"])
            if kw.get("prob_tables") is not None:
                kw["prob_tables"] = tuple(tuple(t) for t in kw["prob_tables"])
            if kw.get("mixture_weights") is not None:
                kw["mixture_weights"] = tuple(kw["mixture_weights"])
            return cls(**kw)
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid config: {exc}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(obj)

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

