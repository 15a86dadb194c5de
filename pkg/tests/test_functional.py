import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mtpscnn.errors import DimensionMismatch, InvalidConfig
from mtpscnn.nn import Tensor, cosine_loss, dropout, framewise_maxpool, l2_normalize_channels, leaky_relu, no_grad
from mtpscnn.nn.tensor import from_channels_last


def _t(a, grad=True):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=grad)


def test_leaky_relu_values_and_gradient():
    x = _t([2.0, -2.0, -3.0])
    y = leaky_relu(x, 0.1)
    np.testing.assert_allclose(y.data, [2.0, -0.2, -0.3])
    y.sum().backward()
    np.testing.assert_allclose(x.grad, [1.0, 0.1, 0.1])


def test_leaky_relu_preserves_channels_last_layout():
    buf = np.random.default_rng(0).standard_normal((1, 2, 3, 4, 5))
    x = Tensor(from_channels_last(buf))
    assert leaky_relu(x).data.strides == x.data.strides


def test_dropout_modes():
    x = _t(np.arange(12.0).reshape(1, 2, 1, 2, 3))
    assert dropout(x, 0.0, training=True, rng=0) is x
    assert dropout(x, 0.7, training=False) is x
    with pytest.raises(InvalidConfig):
        dropout(x, 1.0, training=True)
    with pytest.raises(InvalidConfig):
        dropout(x, -0.1, training=True)
    a = dropout(x, 0.5, training=True, rng=3).data
    b = dropout(x, 0.5, training=True, rng=3).data
    np.testing.assert_array_equal(a, b)


def test_dropout_statistics():
    x = Tensor(np.full((1, 1, 1, 1000, 1000), 2.0))
    y = dropout(x, 0.5, training=True, rng=11).data
    kept = np.mean(y != 0)
    assert abs(kept - 0.5) < 0.01
    assert abs(y.mean() - 2.0) < 0.02 * 2.0
    assert set(np.unique(y)) <= {0.0, 4.0}


def test_dropout_gradient_matches_mask():
    x = _t(np.ones((1, 2, 2, 3, 3)))
    y = dropout(x, 0.25, training=True, rng=2)
    y.sum().backward()
    np.testing.assert_allclose(x.grad, y.data)


def test_maxpool_example_and_tie_break():
    x = _t(np.array([1.0, 5.0, 3.0]).reshape(1, 1, 3, 1, 1))
    y = framewise_maxpool(x)
    assert y.shape == (1, 1, 1, 1, 1) and y.data.item() == 5.0
    y.sum().backward()
    np.testing.assert_array_equal(x.grad.ravel(), [0, 1, 0])
    tie = _t(np.array([2.0, 7.0, 7.0]).reshape(1, 1, 3, 1, 1))
    framewise_maxpool(tie).sum().backward()
    np.testing.assert_array_equal(tie.grad.ravel(), [0, 1, 0])


def test_maxpool_single_frame_identity():
    x = np.random.default_rng(1).standard_normal((2, 3, 1, 4, 4))
    np.testing.assert_array_equal(framewise_maxpool(_t(x)).data, x)


@given(st.integers(0, 2**31 - 1))
def test_maxpool_permutation_invariant_one_hot_gradient(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 3, 5, 2, 2))
    perm = rng.permutation(5)
    a = framewise_maxpool(_t(x))
    np.testing.assert_array_equal(a.data, framewise_maxpool(_t(x[:, :, perm])).data)
    t = _t(x)
    framewise_maxpool(t).sum().backward()
    np.testing.assert_array_equal(t.grad.sum(axis=2), 1.0)
    assert set(np.unique(t.grad)) <= {0.0, 1.0}


def test_l2_normalize_examples():
    x = np.zeros((1, 3, 1, 1, 3))
    x[0, :, 0, 0, 0] = [0, 0, 2]
    x[0, :, 0, 0, 1] = [0.6, 0, 0.8]
    x[0, :, 0, 0, 2] = [1e-9, 0, 0]
    t = _t(x)
    y = l2_normalize_channels(t)
    np.testing.assert_allclose(y.data[0, :, 0, 0, 0], [0, 0, 1])
    np.testing.assert_allclose(y.data[0, :, 0, 0, 1], [0.6, 0, 0.8])
    np.testing.assert_array_equal(y.data[0, :, 0, 0, 2], 0)
    (y * np.random.default_rng(0).standard_normal(y.shape)).sum().backward()
    np.testing.assert_array_equal(t.grad[0, :, 0, 0, 2], 0)


@given(st.integers(0, 2**31 - 1))
def test_l2_normalize_unit_norm(seed):
    x = np.random.default_rng(seed).standard_normal((2, 3, 1, 3, 3))
    y = l2_normalize_channels(_t(x, grad=False)).data
    np.testing.assert_allclose(np.linalg.norm(y, axis=1), 1.0, atol=1e-12)


def _normals(rng, shape):
    n = rng.standard_normal(shape + (3,))
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


def test_cosine_loss_examples():
    rng = np.random.default_rng(0)
    gt = _normals(rng, (1, 3, 4))
    pred = gt.transpose(0, 3, 1, 2)[:, :, None]
    mask = np.ones((1, 3, 4), bool)
    assert cosine_loss(_t(pred), gt, mask).data == pytest.approx(0.0, abs=1e-12)
    assert cosine_loss(_t(-pred), gt, mask).data == pytest.approx(2.0)
    perp = np.cross(gt, _normals(rng, (1, 3, 4)))
    perp /= np.linalg.norm(perp, axis=-1, keepdims=True)
    assert cosine_loss(_t(perp.transpose(0, 3, 1, 2)[:, :, None]), gt, mask).data == pytest.approx(1.0)


def test_cosine_loss_ignores_background_and_checks_inputs():
    rng = np.random.default_rng(1)
    gt = _normals(rng, (2, 2))
    mask = np.array([[True, False], [False, False]])
    pred = gt.copy()
    pred[0, 1] = -gt[0, 1]
    t = _t(pred.transpose(2, 0, 1)[None, :, None])
    loss = cosine_loss(t, gt, mask)
    assert loss.data == pytest.approx(0.0, abs=1e-12)
    loss.backward()
    assert not t.grad[0, :, 0, 0, 1].any()
    with pytest.raises(InvalidConfig):
        cosine_loss(t, gt, np.zeros((2, 2), bool))
    with pytest.raises(DimensionMismatch):
        cosine_loss(t, gt, np.ones((3, 2), bool))
    with pytest.raises(DimensionMismatch):
        cosine_loss(_t(np.zeros((1, 2, 1, 2, 2))), gt, mask)


def test_no_grad_skips_graph():
    x = _t([1.0, -1.0])
    with no_grad():
        y = leaky_relu(x)
    assert not y.requires_grad
