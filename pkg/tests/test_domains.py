import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dgfair.config import default_base_spec
from dgfair.domains import (
    CELLS,
    Dataset,
    DimensionError,
    DomainSpec,
    GaussianCell,
    SpecError,
    label_marginal,
    log_density,
    log_density_x,
    log_density_x_given_y,
    log_density_x_given_ya,
    make_cellprob_family,
    make_mixture,
    make_rotation_family,
    prob_y,
    prob_ya,
    sample_dataset,
    spec_from_json,
    spec_to_json,
    x_law,
)
from dgfair.gaussian import NumericalError

from oracles import gaussian_logpdf_direct, rotate_cov, rotate_point

UNIFORM = {c: 0.25 for c in CELLS}


def _spec(mean=(0.0, 0.0), cov=((1.0, 0.0), (0.0, 1.0)), probs=UNIFORM, dim_id=0):
    return DomainSpec({c: GaussianCell(mean, cov) for c in CELLS}, probs, dim_id)


def test_cell_rejects_non_spd():
    with pytest.raises((NumericalError, SpecError)):
        GaussianCell([0, 0], [[1, 2], [2, 1]])
    with pytest.raises((NumericalError, SpecError)):
        GaussianCell([0, 0], [[1e-12, 0], [0, 1]])


def test_cell_probs_must_sum_to_one():
    with pytest.raises(SpecError):
        _spec(probs={c: 0.3 for c in CELLS})
    with pytest.raises(SpecError):
        _spec(probs={(0, 0): 0.5, (0, 1): 0.5, (1, 0): 0.0})


def test_rotation_zero_step_is_identity(base_spec):
    for d in make_rotation_family(3, base_spec, 0.0):
        for c in CELLS:
            np.testing.assert_allclose(d.cells[c].mean, base_spec.cells[c].mean, atol=0)
            np.testing.assert_allclose(d.cells[c].cov, base_spec.cells[c].cov, atol=1e-15)


def test_rotation_quarter_turn():
    doms = make_rotation_family(2, _spec(mean=(1.0, 0.0)), 90.0)
    np.testing.assert_allclose(doms[1].cells[(0, 0)].mean, [0.0, 1.0], atol=1e-12)


def test_rotation_matches_trig_oracle(base_spec):
    doms = make_rotation_family(4, base_spec, 15.0)
    for i, d in enumerate(doms):
        for c in CELLS:
            np.testing.assert_allclose(d.cells[c].mean, rotate_point(base_spec.cells[c].mean, 15.0 * i), atol=1e-12)
            np.testing.assert_allclose(d.cells[c].cov, rotate_cov(base_spec.cells[c].cov, 15.0 * i), atol=1e-12)
        assert d.cell_probs == base_spec.cell_probs


def test_rotation_needs_2d():
    cells = {c: GaussianCell([0.0, 0.0, 0.0], np.eye(3)) for c in CELLS}
    with pytest.raises(DimensionError):
        make_rotation_family(2, DomainSpec(cells, UNIFORM), 10.0)


def test_cellprob_family(base_spec):
    t1 = [0.1, 0.4, 0.3, 0.2]
    t2 = [0.4, 0.1, 0.2, 0.3]  # same P(y), different P(a | y)
    doms = make_cellprob_family(2, base_spec, [t1, t2])
    np.testing.assert_allclose(label_marginal(doms[0]), label_marginal(doms[1]), atol=1e-15)
    for c in CELLS:
        assert doms[0].cells[c].same_as(doms[1].cells[c])
    with pytest.raises(SpecError):
        make_cellprob_family(1, base_spec, [[0.5, 0.5, 0.5, 0.5]])


def test_mixture_weight_validation(rotation4):
    with pytest.raises(SpecError):
        make_mixture(rotation4[:3], [0.5, 0.5])
    with pytest.raises(SpecError):
        make_mixture(rotation4[:2], [0.7, 0.7])


def test_single_component_mixture_density(rotation4):
    mix = make_mixture(rotation4[:1], [1.0])
    x = np.array([[0.3, -0.2], [1.0, 1.0]])
    np.testing.assert_allclose(log_density_x(mix, x), log_density_x(rotation4[0], x), rtol=1e-14)


def test_mixture_density_is_weighted_sum(rotation4):
    w = [0.2, 0.3, 0.5]
    mix = make_mixture(rotation4[:3], w)
    x = np.array([[0.4, -0.7]])
    for y, a in CELLS:
        direct = sum(
            wk * d.cell_probs[(y, a)] * math.exp(gaussian_logpdf_direct(x[0], d.cells[(y, a)].mean, d.cells[(y, a)].cov))
            for wk, d in zip(w, rotation4[:3])
        )
        got = math.exp(log_density(mix, x, y, a)[0])
        assert abs(got - direct) / direct < 1e-12


def test_logpdf_at_mode():
    cov = np.array([[2.0, 0.3], [0.3, 1.0]])
    cell = GaussianCell([1.0, 2.0], cov)
    want = -math.log(2 * math.pi) - 0.5 * math.log(np.linalg.det(cov))
    assert abs(cell.logpdf(np.array([[1.0, 2.0]]))[0] - want) < 1e-12


def test_zero_probability_cell_gives_neg_inf():
    probs = {(0, 0): 0.5, (0, 1): 0.0, (1, 0): 0.25, (1, 1): 0.25}
    spec = _spec(probs=probs)
    assert log_density(spec, np.zeros((1, 2)), 0, 1)[0] == -math.inf
    with pytest.raises(SpecError):
        x_law(spec, 0, 1)


def test_conditional_densities_are_consistent(rotation4):
    spec = make_mixture(rotation4[:2], [0.4, 0.6])
    x = np.random.default_rng(0).normal(size=(5, 2))
    for y, a in CELLS:
        lhs = log_density(spec, x, y, a)
        rhs = log_density_x_given_ya(spec, x, y, a) + math.log(prob_ya(spec, y, a))
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12)
    joint_y = np.logaddexp(log_density(spec, x, 1, 0), log_density(spec, x, 1, 1))
    np.testing.assert_allclose(log_density_x_given_y(spec, x, 1), joint_y - math.log(prob_y(spec, 1)), rtol=1e-12)
    np.testing.assert_allclose(x_law(spec).logpdf(x), log_density_x(spec, x), rtol=1e-12)


def test_density_integrates_to_one_on_grid(base_spec):
    g = np.linspace(-8, 8, 801)
    xx, yy = np.meshgrid(g, g)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    mass = np.exp(log_density_x(base_spec, pts)).sum() * (g[1] - g[0]) ** 2
    assert abs(mass - 1.0) < 1e-6


def test_sampling_frequencies_and_means():
    n = 10_000
    spec = _spec(mean=(3.0, 3.0))
    ds = sample_dataset(spec, n, seed=11)
    for y, a in CELLS:
        assert abs(ds.cell_mask(y, a).mean() - 0.25) <= 4 / math.sqrt(n)
    assert np.all(np.abs(ds.x.mean(axis=0) - 3.0) <= 4 / math.sqrt(n))


def test_sampling_is_deterministic(rotation4):
    a = sample_dataset(rotation4[1], 500, seed=5).to_csv()
    b = sample_dataset(rotation4[1], 500, seed=5).to_csv()
    c = sample_dataset(rotation4[1], 500, seed=6).to_csv()
    assert a == b and a != c


# regression pin of the documented sampling order (component, cell, features)
FROZEN_SAMPLE = [
    [0.005138196211267543, 0.5552309067119923, 0.0, 0.0],
    [-1.4199615966757653, 0.1394395108097537, 0.0, 0.0],
    [0.49289616153392996, 0.42555315838886054, 1.0, 1.0],
]


def test_sampling_frozen_values(base_spec):
    ds = sample_dataset(base_spec, 3, seed=0)
    got = np.column_stack([ds.x, ds.a, ds.y])
    np.testing.assert_allclose(got, FROZEN_SAMPLE, rtol=0, atol=1e-12)


def test_mixture_sampling_records_component_domains(rotation4):
    ds = sample_dataset(make_mixture(rotation4[:3], [0.2, 0.3, 0.5]), 20_000, seed=1)
    freq = np.bincount(ds.d, minlength=3) / len(ds)
    np.testing.assert_allclose(freq, [0.2, 0.3, 0.5], atol=4 / math.sqrt(len(ds)))
    assert ds.num_domains == 3


def test_csv_round_trip(rotation4):
    ds = sample_dataset(rotation4[2], 50, seed=3)
    text = ds.to_csv()
    assert text.splitlines()[0] == "x0,x1,a,y,d"
    back = Dataset.from_csv("# config_hash=abc\n" + text)
    np.testing.assert_array_equal(back.x, ds.x)
    np.testing.assert_array_equal(back.d, ds.d)
    assert back.to_csv() == text


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 2)), [0, 2], [0, 1], [0, 0], 1)
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 2)), [0, 1], [0, 1], [0, 1], 1)
    with pytest.raises(ValueError):
        Dataset(np.array([[np.nan, 0.0]]), [0], [0], [0], 1)


def test_spec_json_round_trip(rotation4):
    mix = make_mixture(rotation4[:3], [0.2, 0.3, 0.5])
    for spec in (rotation4[1], mix):
        text = spec_to_json(spec)
        assert spec_to_json(spec_from_json(text)) == text
    assert set(json.loads(spec_to_json(rotation4[0]))) == {"cells", "cell_probs", "domain_id"}


@settings(max_examples=30, deadline=None)
@given(st.floats(-180, 180), st.integers(2, 5))
def test_rotation_preserves_label_tables(step, n):
    base = default_base_spec()
    for d in make_rotation_family(n, base, step):
        assert d.cell_probs == base.cell_probs
        for c in CELLS:
            np.testing.assert_allclose(np.linalg.norm(d.cells[c].mean), np.linalg.norm(base.cells[c].mean), rtol=1e-12)
            np.testing.assert_allclose(np.linalg.eigvalsh(d.cells[c].cov), np.linalg.eigvalsh(base.cells[c].cov), rtol=1e-10)
