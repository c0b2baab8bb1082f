import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from osiris.errors import ShapeError
from osiris.nnet import layers as L


def naive_conv1d(x, w, b, stride):
    """Explicit loops over "same"-padded cross-correlation."""
    c_out, c_in, k = w.shape
    n = x.shape[-1]
    out_len = -(-n // stride)
    total = max((out_len - 1) * stride + k - n, 0)
    left = total // 2
    y = np.zeros((c_out, out_len))
    for o in range(c_out):
        for t in range(out_len):
            acc = b[o]
            for c in range(c_in):
                for j in range(k):
                    pos = t * stride + j - left
                    if 0 <= pos < n:
                        acc += w[o, c, j] * x[c, pos]
            y[o, t] = acc
    return y


def naive_depthwise(x, w, b, stride):
    c, k = w.shape
    return np.stack([naive_conv1d(x[i:i + 1], w[i].reshape(1, 1, k), b[i:i + 1], stride)[0] for i in range(c)])


def num_grad(f, arr, eps=1e-6):
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + eps
        fp = f()
        arr[i] = old - eps
        fm = f()
        arr[i] = old
        g[i] = (fp - fm) / (2 * eps)
    return g


@pytest.mark.parametrize("length,kernel,stride", [(16, 3, 1), (16, 4, 2), (15, 5, 4), (7, 7, 2), (3, 5, 1), (33, 15, 4)])
def test_same_padding(length, kernel, stride):
    out_len, left, right = L.same_padding(length, kernel, stride)
    assert out_len == -(-length // stride)
    assert left + right == max((out_len - 1) * stride + kernel - length, 0)
    assert right - left in (0, 1)


@pytest.mark.parametrize("length,kernel,stride", [(16, 3, 1), (17, 4, 2), (30, 15, 4), (9, 7, 2)])
def test_conv1d_matches_loops(length, kernel, stride, rng):
    x = rng.standard_normal((3, length))
    w = rng.standard_normal((4, 3, kernel))
    b = rng.standard_normal(4)
    np.testing.assert_allclose(L.conv1d_forward(x, w, b, stride), naive_conv1d(x, w, b, stride), atol=1e-12)


def test_conv1d_identity_kernel(rng):
    x = rng.standard_normal((2, 11))
    w = np.zeros((2, 2, 1))
    w[0, 0, 0] = w[1, 1, 0] = 1.0
    np.testing.assert_array_equal(L.conv1d_forward(x, w, np.zeros(2), 1), x)


def test_conv1d_batch_equals_single(rng):
    x = rng.standard_normal((5, 2, 40))
    w = rng.standard_normal((3, 2, 5))
    b = rng.standard_normal(3)
    out = L.conv1d_forward(x, w, b, 2)
    for i in range(5):
        np.testing.assert_allclose(out[i], L.conv1d_forward(x[i], w, b, 2), atol=1e-12)


def test_conv1d_shape_error(rng):
    with pytest.raises(ShapeError):
        L.conv1d_forward(rng.standard_normal((3, 10)), rng.standard_normal((2, 2, 3)), np.zeros(2))


@pytest.mark.parametrize("length,kernel,stride", [(16, 3, 1), (17, 7, 2), (32, 5, 2), (8, 5, 4), (5, 7, 2)])
def test_depthwise_matches_loops(length, kernel, stride, rng):
    x = rng.standard_normal((2, 4, length))
    w = rng.standard_normal((4, kernel))
    b = rng.standard_normal(4)
    out, _ = L.depthwise_fwd(x, w, b, stride)
    for i in range(2):
        np.testing.assert_allclose(out[i], naive_depthwise(x[i], w, b, stride), atol=1e-12)


def test_pointwise_matches_einsum(rng):
    z = rng.standard_normal((3, 4, 9))
    w = rng.standard_normal((6, 4))
    b = rng.standard_normal(6)
    out, _ = L.pointwise_fwd(z, w, b)
    np.testing.assert_allclose(out, np.einsum("oc,bct->bot", w, z) + b[None, :, None], atol=1e-12)


def test_separable_identity_is_strided_input(rng):
    x = np.abs(rng.standard_normal((3, 20)))
    dw = np.zeros((3, 3))
    dw[:, 1] = 1.0  # delta at the window center
    out = L.depthwise_separable_forward(x, dw, np.zeros(3), np.eye(3), np.zeros(3), stride=2)
    # "same" padding with k=3, s=2, L=20: total pad 1, left 0 -> center tap reads x[2t+1]
    np.testing.assert_allclose(out, x[:, 1::2], atol=1e-12)
    out1 = L.depthwise_separable_forward(x, dw, np.zeros(3), np.eye(3), np.zeros(3), stride=1)
    np.testing.assert_allclose(out1, x, atol=1e-12)


class TestBackward:
    def _check(self, analytic, numeric, tol=1e-6):
        np.testing.assert_allclose(analytic, numeric, rtol=tol, atol=tol)

    @pytest.mark.parametrize("stride,kernel", [(1, 3), (2, 4), (4, 15)])
    def test_conv1d(self, stride, kernel, rng):
        x = rng.standard_normal((2, 2, 23))
        w = rng.standard_normal((3, 2, kernel))
        b = rng.standard_normal(3)
        g = rng.standard_normal((2, 3, -(-23 // stride)))
        loss = lambda: float(np.sum(L.conv1d_fwd(x, w, b, stride)[0] * g))
        _, cache = L.conv1d_fwd(x, w, b, stride)
        dx, dw, db = L.conv1d_bwd(g, cache)
        self._check(dx, num_grad(loss, x))
        self._check(dw, num_grad(loss, w))
        self._check(db, num_grad(loss, b))

    @pytest.mark.parametrize("stride,kernel,length", [(1, 3, 12), (2, 7, 19), (2, 5, 16), (4, 5, 9)])
    def test_depthwise(self, stride, kernel, length, rng):
        x = rng.standard_normal((2, 3, length))
        w = rng.standard_normal((3, kernel))
        b = rng.standard_normal(3)
        out, cache = L.depthwise_fwd(x, w, b, stride)
        g = rng.standard_normal(out.shape)
        loss = lambda: float(np.sum(L.depthwise_fwd(x, w, b, stride)[0] * g))
        dx, dw, db = L.depthwise_bwd(g, cache)
        self._check(dx, num_grad(loss, x))
        self._check(dw, num_grad(loss, w))
        self._check(db, num_grad(loss, b))

    def test_pointwise(self, rng):
        z = rng.standard_normal((2, 3, 7))
        w = rng.standard_normal((4, 3))
        b = rng.standard_normal(4)
        g = rng.standard_normal((2, 4, 7))
        loss = lambda: float(np.sum(L.pointwise_fwd(z, w, b)[0] * g))
        dz, dw, db = L.pointwise_bwd(g, L.pointwise_fwd(z, w, b)[1])
        self._check(dz, num_grad(loss, z))
        self._check(dw, num_grad(loss, w))
        self._check(db, num_grad(loss, b))

    def test_dense(self, rng):
        x = rng.standard_normal((3, 5))
        w = rng.standard_normal((5, 4))
        b = rng.standard_normal(4)
        g = rng.standard_normal((3, 4))
        loss = lambda: float(np.sum(L.dense_fwd(x, w, b)[0] * g))
        dx, dw, db = L.dense_bwd(g, L.dense_fwd(x, w, b)[1])
        self._check(dx, num_grad(loss, x))
        self._check(dw, num_grad(loss, w))
        self._check(db, num_grad(loss, b))

    def test_relu(self, rng):
        x = rng.standard_normal((4, 6))
        x[np.abs(x) < 1e-3] = 0.5  # keep away from the kink
        g = rng.standard_normal((4, 6))
        loss = lambda: float(np.sum(np.maximum(x, 0) * g))
        _, mask = L.relu_fwd(x.copy())
        self._check(L.relu_bwd(g, mask), num_grad(loss, x))

    def test_cross_entropy_logit_gradient(self, rng):
        logits = rng.standard_normal((4, 7))
        labels = np.array([0, 3, 6, 2])
        loss = lambda: L.cross_entropy(L.softmax(logits), labels)[0]
        _, grad = L.cross_entropy(L.softmax(logits), labels)
        np.testing.assert_allclose(grad, num_grad(loss, logits), rtol=1e-3, atol=1e-8)


def test_relu_in_place_and_mask():
    x = np.array([-1.0, 0.0, 2.0])
    y, mask = L.relu_fwd(x)
    assert y is x
    np.testing.assert_array_equal(y, [0, 0, 2])
    np.testing.assert_array_equal(mask, [False, False, True])


def test_dropout_mask_statistics():
    m = L.dropout_mask((200, 500), 0.3, seed=5)
    assert np.mean(m == 0) == pytest.approx(0.3, abs=0.01)
    assert np.mean(m) == pytest.approx(1.0, abs=0.02)
    np.testing.assert_allclose(np.unique(m), [0.0, 1 / 0.7], rtol=1e-6)
    np.testing.assert_array_equal(m, L.dropout_mask((200, 500), 0.3, seed=5))
    assert not np.array_equal(m, L.dropout_mask((200, 500), 0.3, seed=6))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=12))
def test_softmax_is_a_distribution(logits):
    p = L.softmax(np.array(logits))
    assert abs(p.sum() - 1) < 1e-6
    assert np.all(p >= 0)


def test_cross_entropy_single_vs_batch(rng):
    p = L.softmax(rng.standard_normal((2, 7)))
    loss, grad = L.cross_entropy(p, np.array([1, 4]))
    l0, g0 = L.cross_entropy(p[0], 1)
    l1, g1 = L.cross_entropy(p[1], 4)
    assert loss == pytest.approx((l0 + l1) / 2)
    np.testing.assert_allclose(grad, np.stack([g0, g1]) / 2)
