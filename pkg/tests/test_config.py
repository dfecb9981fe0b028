import json

import numpy as np
import pytest

from dgfair.config import ConfigError, ExperimentConfig, SweepConfig, VerifyConfig
from dgfair.domains import MixtureSpec


def test_defaults_describe_leave_one_out():
    cfg = ExperimentConfig()
    assert cfg.source_indices() == [0, 1, 2]
    doms = cfg.domains()
    assert len(doms) == 4 and cfg.target_spec(doms) is doms[3]


def test_json_round_trip_and_hash():
    cfg = ExperimentConfig(seed=7, n_train=123)
    back = ExperimentConfig.from_json(cfg.to_json())
    assert back == cfg and back.config_hash() == cfg.config_hash()
    assert ExperimentConfig(seed=8).config_hash() != ExperimentConfig(seed=7).config_hash()


def test_mixture_target():
    cfg = ExperimentConfig(target_index=None, mixture_weights=(0.1, 0.2, 0.3, 0.4))
    assert cfg.source_indices() == [0, 1, 2, 3]
    assert isinstance(cfg.target_spec(), MixtureSpec)
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg


def test_cellprob_family():
    tables = [[0.25, 0.25, 0.25, 0.25], [0.4, 0.1, 0.1, 0.4]]
    cfg = ExperimentConfig(family="cellprob", num_domains=2, prob_tables=tables, target_index=1)
    doms = cfg.domains()
    assert doms[1].cell_probs[(0, 0)] == pytest.approx(0.4)
    np.testing.assert_array_equal(doms[0].cells[(1, 1)].mean, doms[1].cells[(1, 1)].mean)


@pytest.mark.parametrize(
    "kw",
    [
        {"family": "spiral"},
        {"num_domains": 1},
        {"target_index": 4},
        {"target_index": None},
        {"mixture_weights": (0.5, 0.5, 0.0, 0.0)},
        {"target_index": None, "mixture_weights": (1.0,)},
        {"family": "cellprob"},
        {"n_train": 0},
        {"seed": -1},
    ],
)
def test_invalid_configs(kw):
    with pytest.raises(ConfigError):
        ExperimentConfig(**kw)


def test_from_dict_errors():
    with pytest.raises(ConfigError, match="unknown"):
        ExperimentConfig.from_dict({"nope": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json("{not json")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"verify": {"n": 10}})
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"train": {"omega": -1.0}})


def test_sub_configs():
    with pytest.raises(ConfigError):
        VerifyConfig(k=0)
    with pytest.raises(ConfigError):
        SweepConfig(seeds=())
    assert SweepConfig(omega_grid=[0.0, 1.0]).omega_grid == (0.0, 1.0)


def test_datasets_are_reproducible_and_sized():
    cfg = ExperimentConfig(n_train=50, n_heldout=20, n_target=30)
    a, b = cfg.datasets(), cfg.datasets()
    assert [len(d.y) for d in a[0]] == [50] * 3 and [len(d.y) for d in a[1]] == [20] * 3 and len(a[2].y) == 30
    for d1, d2 in zip(a[0] + a[1] + [a[2]], b[0] + b[1] + [b[2]]):
        np.testing.assert_array_equal(d1.x, d2.x)
    assert not np.array_equal(a[0][0].x, a[0][1].x[:50])
    assert json.loads(cfg.to_json())["n_train"] == 50
