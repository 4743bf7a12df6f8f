import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lightffd import layers as L
from lightffd.errors import DegenerateBatchError, InvalidShapeError, NumericError
from oracles import central_difference, direct_conv3x3_same, max_rel_error


def _conv(rng, n=2, i=3, o=4, h=8, w=8):
    x = rng.standard_normal((n, i, h, w))
    p = L.ConvParams(rng.standard_normal((o, i, 3, 3)), rng.standard_normal(o))
    return x, p


# -- convolution ---------------------------------------------------------------

def test_conv_same_padding_shape(backend):
    x = np.zeros((1, 3, 224, 224), dtype=np.float32)
    p = L.ConvParams(np.zeros((32, 3, 3, 3), np.float32), np.zeros(32, np.float32))
    out, _ = L.conv2d_forward(x, p)
    assert out.shape == (1, 32, 224, 224) and out.dtype == np.float32


def test_conv_zero_weights_gives_bias(backend):
    x = np.ones((2, 3, 5, 5))
    out, _ = L.conv2d_forward(x, L.ConvParams(np.zeros((4, 3, 3, 3)), np.full(4, 0.25)))
    np.testing.assert_array_equal(out, 0.25)


def test_conv_hand_example(backend):
    x = np.arange(1.0, 10.0).reshape(1, 1, 3, 3)
    out, _ = L.conv2d_forward(x, L.ConvParams(np.ones((1, 1, 3, 3)), np.zeros(1)))
    assert out[0, 0, 1, 1] == 45.0
    assert out[0, 0, 0, 0] == 12.0


def test_conv_matches_direct_loops(backend, rng):
    x, p = _conv(rng, h=5, w=7)
    out, _ = L.conv2d_forward(x, p)
    np.testing.assert_allclose(out, direct_conv3x3_same(x, p.weights, p.bias), rtol=1e-12, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 9), st.integers(1, 9))
def test_conv_preserves_spatial_extent(h, w):
    x = np.ones((1, 2, h, w))
    out, _ = L.conv2d_forward(x, L.ConvParams(np.ones((3, 2, 3, 3)), np.zeros(3)))
    assert out.shape == (1, 3, h, w)


def test_conv_channel_mismatch():
    with pytest.raises(InvalidShapeError):
        L.conv2d_forward(np.zeros((1, 2, 4, 4)), L.ConvParams(np.zeros((4, 3, 3, 3)), np.zeros(4)))


def test_conv_backward_zero_and_single_pixel(backend, rng):
    x, p = _conv(rng, n=1, i=2, o=1, h=5, w=5)
    _, cache = L.conv2d_forward(x, p)
    dx, dw, db = L.conv2d_backward(cache, np.zeros((1, 1, 5, 5)))
    assert not dx.any() and not dw.any() and not db.any()
    d = np.zeros((1, 1, 5, 5))
    d[0, 0, 2, 3] = 1.0
    _, dw, db = L.conv2d_backward(cache, d)
    np.testing.assert_array_equal(dw[0], x[0, :, 1:4, 2:5])
    assert db[0] == 1.0
    with pytest.raises(InvalidShapeError):
        L.conv2d_backward(cache, np.zeros((1, 2, 5, 5)))


def test_conv_backward_finite_differences(backend, rng):
    x, p = _conv(rng)
    r = rng.standard_normal((2, 4, 8, 8))
    _, cache = L.conv2d_forward(x, p)
    dx, dw, db = L.conv2d_backward(cache, r)

    def f():
        return float(np.sum(L.conv2d_forward(x, p)[0] * r))

    assert max_rel_error(dx, central_difference(f, x)) < 1e-4
    assert max_rel_error(dw, central_difference(f, p.weights)) < 1e-4
    assert max_rel_error(db, central_difference(f, p.bias)) < 1e-4


# -- batch norm ------------------------------------------------------------------

def test_bn_constant_channel_gives_zero():
    p = L.BNParams.fresh(2, dtype=np.float64)
    out, _ = L.batchnorm_forward(np.full((2, 2, 3, 3), 4.0), p, "train")
    np.testing.assert_array_equal(out, 0.0)


def test_bn_two_values_example():
    p = L.BNParams.fresh(1, dtype=np.float64)
    out, _ = L.batchnorm_forward(np.array([1.0, 3.0]).reshape(1, 1, 1, 2), p, "train")
    expected = 1.0 / np.sqrt(1.0 + 1e-5)
    np.testing.assert_allclose(out.ravel(), [-expected, expected], rtol=1e-12)
    assert expected == pytest.approx(0.999995, abs=1e-6)


def test_bn_affine():
    p = L.BNParams.fresh(1, dtype=np.float64, epsilon=1e-12)
    p.gamma[:] = 2.0
    p.beta[:] = 5.0
    out, _ = L.batchnorm_forward(np.array([-1.0, 1.0]).reshape(1, 1, 1, 2), p, "train")
    np.testing.assert_allclose(out.ravel(), [3.0, 7.0], rtol=1e-9)


def test_bn_running_stat_update():
    p = L.BNParams.fresh(1, dtype=np.float64, momentum=0.1)
    L.batchnorm_forward(np.array([1.0, 3.0]).reshape(1, 1, 1, 2), p, "train")
    assert p.running_mean[0] == pytest.approx(0.9 * 0.0 + 0.1 * 2.0)
    assert p.running_var[0] == pytest.approx(0.9 * 1.0 + 0.1 * 1.0)


def test_bn_infer_is_pure(rng):
    p = L.BNParams.fresh(3, dtype=np.float64)
    p.running_mean[:] = rng.standard_normal(3)
    p.running_var[:] = rng.uniform(0.5, 2.0, 3)
    before = (p.running_mean.copy(), p.running_var.copy())
    x = rng.standard_normal((2, 3, 4, 4))
    a, cache = L.batchnorm_forward(x, p, "infer")
    b, _ = L.batchnorm_forward(x, p, "infer")
    assert cache is None
    assert a.tobytes() == b.tobytes()
    np.testing.assert_array_equal(p.running_mean, before[0])
    np.testing.assert_array_equal(p.running_var, before[1])
    expected = (x - p.running_mean[None, :, None, None]) / np.sqrt(p.running_var + 1e-5)[None, :, None, None]
    np.testing.assert_allclose(a, expected, rtol=1e-12)


def test_bn_degenerate_batch():
    with pytest.raises(DegenerateBatchError):
        L.batchnorm_forward(np.ones((1, 2, 1, 1)), L.BNParams.fresh(2), "train")
    # infer mode has no such restriction
    L.batchnorm_forward(np.ones((1, 2, 1, 1)), L.BNParams.fresh(2), "infer")


def test_bn_rejects_bad_params():
    with pytest.raises(ValueError):
        L.BNParams.fresh(1, epsilon=0.0)
    with pytest.raises(ValueError):
        L.BNParams.fresh(1, momentum=1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_bn_train_output_is_standardized(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(rng.uniform(-5, 5), rng.uniform(0.1, 4), size=(3, 2, 4, 4))
    out, _ = L.batchnorm_forward(x, L.BNParams.fresh(2, dtype=np.float64), "train")
    assert np.abs(out.mean(axis=(0, 2, 3))).max() < 1e-5
    wide = x.var(axis=(0, 2, 3)) >= 0.01
    assert (np.abs(out.var(axis=(0, 2, 3)) - 1)[wide] < 1e-3).all()


def test_bn_backward(rng):
    x = rng.standard_normal((2, 3, 8, 8)) * 2 + 1
    p = L.BNParams.fresh(3, dtype=np.float64)
    p.gamma[:] = rng.uniform(0.5, 2, 3)
    p.beta[:] = rng.standard_normal(3)
    r = rng.standard_normal(x.shape)
    _, cache = L.batchnorm_forward(x, p, "train")
    zeros = L.batchnorm_backward(cache, np.zeros_like(x))
    assert all(not g.any() for g in zeros)
    dx, dg, dbeta = L.batchnorm_backward(cache, r)
    np.testing.assert_allclose(dbeta, r.sum(axis=(0, 2, 3)))

    def f():
        return float(np.sum(L.batchnorm_forward(x, p, "train")[0] * r))

    assert max_rel_error(dx, central_difference(f, x)) < 1e-4
    assert max_rel_error(dg, central_difference(f, p.gamma)) < 1e-4
    assert max_rel_error(dbeta, central_difference(f, p.beta)) < 1e-4


# -- relu ---------------------------------------------------------------------

def test_relu_examples():
    out, cache = L.relu_apply(np.array([-1.0, 0.0, 2.0]))
    np.testing.assert_array_equal(out, [0, 0, 2])
    pos = np.array([0.5, 3.0])
    np.testing.assert_array_equal(L.relu_apply(pos)[0], pos)
    np.testing.assert_array_equal(L.relu_apply(out)[0], out)
    _, c = L.relu_apply(np.array([-1.0, 2.0]))
    np.testing.assert_array_equal(L.relu_backward(c, np.array([5.0, 5.0])), [0, 5])
    _, c = L.relu_apply(np.array([0.0]))
    np.testing.assert_array_equal(L.relu_backward(c, np.array([7.0])), [0])
    with pytest.raises(InvalidShapeError):
        L.relu_backward(c, np.zeros(2))


def test_relu_finite_differences(rng):
    x = rng.standard_normal((2, 3, 8, 8))
    x[np.abs(x) < 1e-3] = 0.5
    r = rng.standard_normal(x.shape)
    _, cache = L.relu_apply(x)
    dx = L.relu_backward(cache, r)
    num = central_difference(lambda: float(np.sum(L.relu_apply(x)[0] * r)), x)
    assert max_rel_error(dx, num) < 1e-6


# -- max pool -------------------------------------------------------------------

def test_maxpool_examples(backend):
    x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2)
    out, cache = L.maxpool_forward(x)
    assert out.ravel().tolist() == [4.0]
    d = L.maxpool_backward(cache, np.array([[[[10.0]]]]))
    np.testing.assert_array_equal(d[0, 0], [[0, 0], [0, 10]])
    big = np.zeros((1, 32, 224, 224), np.float32)
    assert L.maxpool_forward(big)[0].shape == (1, 32, 112, 112)
    with pytest.raises(InvalidShapeError):
        L.maxpool_forward(np.zeros((1, 1, 1, 4)))


def test_maxpool_odd_extent_and_ties(backend):
    x = np.array([[5.0, 5.0, 9.0], [5.0, 1.0, 9.0], [9.0, 9.0, 9.0]]).reshape(1, 1, 3, 3)
    out, cache = L.maxpool_forward(x)
    assert out.shape == (1, 1, 1, 1) and out[0, 0, 0, 0] == 5.0
    assert cache.argmax.ravel().tolist() == [0]  # lowest flat index among ties


def test_maxpool_properties(backend, rng):
    x = rng.standard_normal((2, 3, 7, 8))
    out, cache = L.maxpool_forward(x)
    for y in range(3):
        for xx in range(4):
            win = x[:, :, 2 * y:2 * y + 2, 2 * xx:2 * xx + 2]
            np.testing.assert_array_equal(out[:, :, y, xx], win.max(axis=(2, 3)))
    d = rng.standard_normal(out.shape)
    dx = L.maxpool_backward(cache, d)
    assert np.count_nonzero(dx) == d.size
    assert np.sort(dx[dx != 0]).tobytes() == np.sort(d.ravel()).tobytes()


def test_maxpool_finite_differences(backend, rng):
    x = rng.permutation(2 * 3 * 8 * 8).reshape(2, 3, 8, 8) / 10.0  # tie-free
    r = rng.standard_normal((2, 3, 4, 4))
    _, cache = L.maxpool_forward(x)
    dx = L.maxpool_backward(cache, r)
    num = central_difference(lambda: float(np.sum(L.maxpool_forward(x)[0] * r)), x)
    assert max_rel_error(dx, num) < 1e-6


# -- fully connected ----------------------------------------------------------------

def test_fc_examples():
    x = np.array([[1.0, 2.0]])
    logits, _ = L.fc_forward(x, np.array([[1.0, 1.0], [0.0, 1.0]]), np.zeros(2))
    np.testing.assert_array_equal(logits, [[3.0, 2.0]])
    out, _ = L.fc_forward(x, np.eye(2), np.array([0.5, -0.5]))
    np.testing.assert_array_equal(out, [[1.5, 1.5]])
    out, _ = L.fc_forward(np.ones((3, 4)), np.zeros((2, 4)), np.array([1.0, 2.0]))
    np.testing.assert_array_equal(out, [[1, 2]] * 3)
    with pytest.raises(InvalidShapeError):
        L.fc_forward(np.ones((1, 3)), np.zeros((2, 4)), np.zeros(2))


def test_fc_backward(rng):
    x = rng.standard_normal((2, 20))
    w, b = rng.standard_normal((2, 20)), rng.standard_normal(2)
    _, cache = L.fc_forward(x, w, b)
    assert all(not g.any() for g in L.fc_backward(cache, np.zeros((2, 2))))
    _, c1 = L.fc_forward(x[:1], w, b)
    _, dw, _ = L.fc_backward(c1, np.array([[0.0, 1.0]]))
    np.testing.assert_array_equal(dw[1], x[0])
    r = rng.standard_normal((2, 2))
    dx, dw, db = L.fc_backward(cache, r)

    def f():
        return float(np.sum(L.fc_forward(x, w, b)[0] * r))

    assert max_rel_error(dx, central_difference(f, x)) < 1e-4
    assert max_rel_error(dw, central_difference(f, w)) < 1e-4
    assert max_rel_error(db, central_difference(f, b)) < 1e-4


# -- softmax -------------------------------------------------------------------

def test_softmax_examples():
    np.testing.assert_allclose(L.softmax_apply(np.array([[0.0, 0.0]])), [[0.5, 0.5]])
    np.testing.assert_allclose(L.softmax_apply(np.array([[np.log(2.0), 0.0]])), [[2 / 3, 1 / 3]],
                               rtol=1e-12)
    np.testing.assert_array_equal(L.softmax_apply(np.array([[1000.0, 1000.0]])), [[0.5, 0.5]])
    with pytest.raises(NumericError):
        L.softmax_apply(np.array([[np.inf, 0.0]]))
    with pytest.raises(InvalidShapeError):
        L.softmax_apply(np.array([[1.0]]))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(-15, 15), st.floats(-15, 15)), min_size=1, max_size=8))
def test_softmax_properties(rows):
    z = np.array(rows)
    p = L.softmax_apply(z)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)
    assert ((p > 0) & (p < 1)).all()
    distinct = np.abs(z[:, 0] - z[:, 1]) > 1e-9
    np.testing.assert_array_equal(p.argmax(axis=1)[distinct], z.argmax(axis=1)[distinct])
