import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lightffd.errors import InvalidLabelError, InvalidShapeError
from lightffd.layers import softmax_apply
from lightffd.optim import AdamState, Hyperparams, adam_step, cross_entropy_loss, softmax_ce_grad
from oracles import central_difference, max_rel_error


def test_default_hyperparams():
    h = Hyperparams()
    assert (h.learning_rate, h.batch_size, h.epochs) == (1e-4, 16, 10)
    assert (h.beta1, h.beta2, h.epsilon) == (0.9, 0.999, 1e-8)


@pytest.mark.parametrize("kw", [dict(learning_rate=0), dict(beta1=1.0), dict(beta2=-0.1),
                                dict(epsilon=0), dict(batch_size=0), dict(epochs=0)])
def test_hyperparam_validation(kw):
    with pytest.raises(ValueError):
        Hyperparams(**kw)


def test_cross_entropy_examples():
    assert cross_entropy_loss(np.array([[1.0, 0.0]]), [0]) == 0.0
    assert cross_entropy_loss(np.array([[0.5, 0.5]]), [1]) == pytest.approx(0.693147, abs=1e-6)
    two = cross_entropy_loss(np.array([[1.0, 0.0], [0.5, 0.5]]), [0, 0])
    assert two == pytest.approx(np.log(2) / 2) and two == pytest.approx(0.346574, abs=1e-6)
    # clamped, not infinite
    assert cross_entropy_loss(np.array([[1.0, 0.0]]), [1]) == pytest.approx(-np.log(1e-12))
    with pytest.raises(InvalidLabelError):
        cross_entropy_loss(np.array([[0.5, 0.5]]), [2])


def test_softmax_ce_grad_examples():
    np.testing.assert_array_equal(softmax_ce_grad(np.array([[0.5, 0.5]]), [0]), [[-0.5, 0.5]])
    assert not softmax_ce_grad(np.eye(2), [0, 1]).any()
    with pytest.raises(InvalidLabelError):
        softmax_ce_grad(np.array([[0.5, 0.5]]), [-1])


def test_softmax_ce_grad_finite_differences(rng):
    for _ in range(5):
        z = rng.standard_normal((4, 2))
        labels = list(rng.integers(0, 2, 4))
        g = softmax_ce_grad(softmax_apply(z), labels)
        num = central_difference(lambda: cross_entropy_loss(softmax_apply(z), labels), z)
        assert max_rel_error(g, num) < 1e-6


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(-20, 20), st.floats(-20, 20), st.integers(0, 1)),
                min_size=1, max_size=6))
def test_loss_and_grad_properties(rows):
    z = np.array([r[:2] for r in rows])
    labels = [r[2] for r in rows]
    p = softmax_apply(z)
    assert cross_entropy_loss(p, labels) >= 0
    assert np.abs(softmax_ce_grad(p, labels).sum(axis=1)).max() < 1e-7


def test_adam_zero_gradient_keeps_params():
    params = {"w": np.array([1.5, -2.0], dtype=np.float32)}
    before = params["w"].tobytes()
    state = AdamState()
    adam_step(params, {"w": np.zeros(2, np.float32)}, state, Hyperparams())
    assert params["w"].tobytes() == before and state.t == 1


def test_adam_first_and_second_step():
    params = {"w": np.array([0.0])}
    state = AdamState()
    h = Hyperparams()
    adam_step(params, {"w": np.array([1.0])}, state, h)
    assert params["w"][0] == pytest.approx(-1e-4, rel=1e-7)
    adam_step(params, {"w": np.array([1.0])}, state, h)
    assert params["w"][0] == pytest.approx(-2e-4, rel=1e-7)
    assert state.t == 2


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(1e-5, 1e5), min_size=1, max_size=5), st.booleans())
def test_adam_first_step_bounded_by_lr(mags, neg):
    g = np.array(mags) * (-1 if neg else 1)
    params = {"w": np.zeros_like(g)}
    state = AdamState()
    adam_step(params, {"w": g}, state, Hyperparams())
    assert np.abs(params["w"]).max() <= 1e-4 * (1 + 1e-6)
    assert (state.v["w"] >= 0).all()


def test_adam_shape_mismatch():
    with pytest.raises(InvalidShapeError):
        adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, AdamState(), Hyperparams())
    with pytest.raises(InvalidShapeError):
        adam_step({"w": np.zeros(2)}, {"v": np.zeros(2)}, AdamState(), Hyperparams())
