import numpy as np
import pytest

from dgfair.autograd import GradientError, Tensor, check_finite_grads, parameter
from dgfair.models import GradCheckReport, grad_check
from dgfair.optim import Adam, Sgd


def test_linear_least_squares_gradient_closed_form():
    rng = np.random.default_rng(0)
    X, y = rng.normal(size=(20, 3)), rng.normal(size=(20, 1))
    w = parameter(rng.normal(size=(3, 1)), "w")
    loss = (Tensor(X) @ w - y).square().mean()
    loss.backward()
    want = 2.0 / 20 * X.T @ (X @ w.data - y)
    np.testing.assert_allclose(w.grad, want, atol=1e-10)


def test_zero_loss_point_has_zero_gradient():
    X = np.random.default_rng(1).normal(size=(10, 2))
    w_true = np.array([[1.0], [-2.0]])
    w = parameter(w_true.copy(), "w")
    (Tensor(X) @ w - X @ w_true).square().mean().backward()
    np.testing.assert_allclose(w.grad, 0.0, atol=1e-14)


def _primitive_loss(p):
    h = (Tensor(np.arange(6.0).reshape(3, 2) / 5) @ p).tanh()
    s = h.softmax()
    return (s[np.arange(3), np.array([0, 1, 1])].log().mean() + h.relu().sum() * 0.1 + h.exp().mean() / (h.square().sum() + 1.0)) - h.reciprocal().mean() * 0.0


def test_primitives_match_finite_differences():
    p = parameter(np.random.default_rng(2).normal(size=(2, 2)), "p")
    rep = grad_check(lambda: _primitive_loss(p), [p], probes=4)
    assert isinstance(rep, GradCheckReport)
    assert rep.n_checked == 4
    assert rep.max_rel_error < 1e-6


def test_broadcast_and_shared_nodes_accumulate():
    b = parameter(np.array([1.0, 2.0]), "b")
    x = Tensor(np.ones((4, 2)))
    h = x + b
    (h * h).sum().backward()
    np.testing.assert_allclose(b.grad, 2 * 4 * np.array([2.0, 3.0]))


def test_backward_requires_scalar():
    with pytest.raises(ValueError):
        parameter(np.ones(2), "v").backward()


def test_non_finite_gradient_names_parameter():
    p = parameter(np.zeros(1), "enc.W0")
    p.grad = np.array([np.inf])
    with pytest.raises(GradientError, match="enc.W0"):
        check_finite_grads([p])
    with pytest.raises(GradientError):
        Sgd([p], 0.1).step()


def test_sgd_step():
    p = parameter(np.array([1.0, 2.0]), "p")
    p.grad = np.array([0.5, -1.0])
    opt = Sgd([p], 0.1)
    opt.step()
    np.testing.assert_allclose(p.data, [0.95, 2.1])
    opt.zero_grad()
    assert p.grad is None


def test_adam_matches_reference_recursion():
    rng = np.random.default_rng(3)
    p = parameter(rng.normal(size=3), "p")
    ref = p.data.copy()
    m = np.zeros(3)
    v = np.zeros(3)
    opt = Adam([p], lr=1e-2)
    for t in range(1, 6):
        g = rng.normal(size=3)
        p.grad = g.copy()
        opt.step()
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref - 1e-2 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    np.testing.assert_allclose(p.data, ref, rtol=1e-12)
