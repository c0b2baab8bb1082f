"""
Layer kernels with explicit backward passes.

Activations are laid out ``[batch, channels, length]``. Every ``*_fwd``
returns ``(out, cache)`` and the matching ``*_bwd`` consumes the cache.
Convolutions use TensorFlow-style "same" padding: output length
``ceil(L / stride)``, any odd padding sample goes on the right.
"""

from __future__ import annotations

import numpy as np
from numba import njit
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError


def same_padding(length: int, kernel: int, stride: int) -> tuple[int, int, int]:
    """Return ``(out_len, pad_left, pad_right)``."""
    out_len = -(-length // stride)
    total = max((out_len - 1) * stride + kernel - length, 0)
    return out_len, total // 2, total - total // 2


def _batched(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x)
    if x.ndim == 2:
        return x[None], True
    if x.ndim != 3:
        raise ShapeError(f"expected [C, L] or [B, C, L], got shape {x.shape}")
    return x, False


def _pad(x: np.ndarray, left: int, right: int) -> np.ndarray:
    if left == 0 and right == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (left, right)))


# ---------------------------------------------------------------- conv1d

def conv1d_fwd(x, w, b, stride):
    x, squeeze = _batched(x)
    c_out, c_in, k = w.shape
    if x.shape[1] != c_in or b.shape != (c_out,):
        raise ShapeError(f"conv1d: input {x.shape} / weight {w.shape} / bias {b.shape} mismatch")
    B, _, L = x.shape
    out_len, left, right = same_padding(L, k, stride)
    xp = _pad(x, left, right)
    win = sliding_window_view(xp, k, axis=2)[:, :, : (out_len - 1) * stride + 1 : stride, :]
    cols = np.ascontiguousarray(win.transpose(0, 1, 3, 2)).reshape(B, c_in * k, out_len)
    out = np.matmul(w.reshape(c_out, c_in * k), cols) + b[:, None]
    cache = (cols, w, stride, L, left)
    return (out[0] if squeeze else out), cache


def conv1d_bwd(dout, cache, need_dx=True):
    cols, w, stride, L, left = cache
    c_out, c_in, k = w.shape
    B, _, out_len = cols.shape
    dout = dout.reshape(B, c_out, out_len)
    dw = np.tensordot(dout, cols, axes=([0, 2], [0, 2])).reshape(w.shape)
    db = dout.sum(axis=(0, 2))
    if not need_dx:
        return None, dw, db
    dcols = np.matmul(w.reshape(c_out, c_in * k).T, dout).reshape(B, c_in, k, out_len)
    lp = max((out_len - 1) * stride + k, L + left)
    dxp = np.zeros((B, c_in, lp), dtype=dout.dtype)
    span = (out_len - 1) * stride + 1
    for j in range(k):
        dxp[:, :, j : j + span : stride] += dcols[:, :, j, :]
    return dxp[:, :, left : left + L], dw, db


def conv1d_forward(x, w, b, stride: int = 1) -> np.ndarray:
    """Cross-correlation with zero "same" padding; ``[C_out, ceil(L/stride)]`` per item."""
    return conv1d_fwd(x, w, b, stride)[0]


# ---------------------------------------------------- depthwise separable

# reassociation lets the reductions vectorize; the compiled loop order is
# fixed, so results stay bit-reproducible on one machine
_FAST = {"reassoc", "contract"}


@njit(cache=True, fastmath=_FAST)
def _load_phases(src, buf, stride, left):
    # buf[r, m] = src[m * stride + r - left], zero outside the row
    n = src.shape[0]
    for r in range(stride):
        for m in range(buf.shape[1]):
            idx = m * stride + r - left
            buf[r, m] = src[idx] if 0 <= idx < n else 0


@njit(cache=True, fastmath=_FAST)
def _dw_fwd_kernel(x, w, b, stride, left, out_len, n_ph):
    n_batch, n_ch, _ = x.shape
    k = w.shape[1]
    buf = np.empty((stride, n_ph), dtype=x.dtype)
    out = np.empty((n_batch, n_ch, out_len), dtype=x.dtype)
    for bi in range(n_batch):
        for c in range(n_ch):
            _load_phases(x[bi, c], buf, stride, left)
            row = out[bi, c]
            row[:] = b[c]
            for j in range(k):
                wj = w[c, j]
                ph = buf[j % stride]
                off = j // stride
                for l in range(out_len):
                    row[l] += wj * ph[l + off]
    return out


@njit(cache=True, fastmath=_FAST)
def _dw_bwd_kernel(dout, x, w, stride, left, n_ph):
    n_batch, n_ch, out_len = dout.shape
    length = x.shape[2]
    k = w.shape[1]
    buf = np.empty((stride, n_ph), dtype=x.dtype)
    dbuf = np.empty((stride, n_ph), dtype=x.dtype)
    dx = np.zeros_like(x)
    dw = np.zeros(w.shape, dtype=np.float64)
    db = np.zeros(n_ch, dtype=np.float64)
    for bi in range(n_batch):
        for c in range(n_ch):
            _load_phases(x[bi, c], buf, stride, left)
            dbuf[:] = 0
            g = dout[bi, c]
            db[c] += g.sum()
            for j in range(k):
                wj = w[c, j]
                ph = buf[j % stride]
                dph = dbuf[j % stride]
                off = j // stride
                acc = g[0] * 0
                for l in range(out_len):
                    acc += g[l] * ph[l + off]
                for l in range(out_len):
                    dph[l + off] += g[l] * wj
                dw[c, j] += acc
            row = dx[bi, c]
            for r in range(stride):
                for m in range(n_ph):
                    idx = m * stride + r - left
                    if 0 <= idx < length:
                        row[idx] = dbuf[r, m]
    return dx, dw, db


def _n_phase(length, k, stride, out_len, left):
    return max(out_len + (k - 1) // stride, -(-(length + left) // stride))


def depthwise_fwd(x, dw_w, dw_b, stride):
    B, C, L = x.shape
    if dw_w.ndim != 2 or dw_w.shape[0] != C or dw_b.shape != (C,):
        raise ShapeError(f"depthwise: input {x.shape} / kernel {dw_w.shape} mismatch")
    k = dw_w.shape[1]
    out_len, left, _ = same_padding(L, k, stride)
    dtype = np.result_type(x, dw_w)
    x = np.ascontiguousarray(x, dtype=dtype)
    w = np.ascontiguousarray(dw_w, dtype=dtype)
    out = _dw_fwd_kernel(x, w, dw_b.astype(dtype, copy=False), stride, left, out_len,
                         _n_phase(L, k, stride, out_len, left))
    return out, (x, w, stride, left)


def depthwise_bwd(dout, cache):
    x, w, stride, left = cache
    dout = np.ascontiguousarray(dout, dtype=x.dtype)
    L, k, out_len = x.shape[2], w.shape[1], dout.shape[2]
    dx, d_w, d_b = _dw_bwd_kernel(dout, x, w, stride, left, _n_phase(L, k, stride, out_len, left))
    return dx, d_w.astype(w.dtype), d_b.astype(w.dtype)


def pointwise_fwd(z, pw_w, pw_b):
    if pw_w.ndim != 2 or pw_w.shape[1] != z.shape[1] or pw_b.shape != (pw_w.shape[0],):
        raise ShapeError(f"pointwise: input {z.shape} / weight {pw_w.shape} mismatch")
    return np.matmul(pw_w, z) + pw_b[:, None], (z, pw_w)


def pointwise_bwd(dy, cache):
    z, pw_w = cache
    dw = np.matmul(dy, z.transpose(0, 2, 1)).sum(axis=0)
    return np.matmul(pw_w.T, dy), dw, dy.sum(axis=(0, 2))


def depthwise_separable_forward(x, dw_w, dw_b, pw_w, pw_b, stride: int = 1,
                                activation: bool = True) -> np.ndarray:
    """Depthwise conv (carrying the stride), 1x1 pointwise mix, then ReLU."""
    x, squeeze = _batched(x)
    h, _ = depthwise_fwd(x, dw_w, dw_b, stride)
    y, _ = pointwise_fwd(h, pw_w, pw_b)
    if activation:
        y = np.maximum(y, 0)
    return y[0] if squeeze else y


# ------------------------------------------------------------ pointwise ops

def relu_fwd(x):
    """In-place ReLU; callers pass freshly allocated activations."""
    mask = x > 0
    np.maximum(x, 0, out=x)
    return x, mask


def relu_bwd(dout, mask):
    return np.multiply(dout, mask, dtype=dout.dtype)


def dense_fwd(x, w, b):
    """``x @ w + b`` with ``w`` shaped ``[in, out]``."""
    if x.shape[-1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ShapeError(f"dense: input {x.shape} / weight {w.shape} mismatch")
    return x @ w + b, (x, w)


def dense_bwd(dout, cache):
    x, w = cache
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def dropout_mask(shape, rate: float, seed: int, dtype=np.float32) -> np.ndarray:
    """Inverted-dropout mask: zeros with probability ``rate``, survivors scaled by ``1/(1-rate)``."""
    keep = np.random.default_rng(seed).random(shape) >= rate
    return (keep / (1.0 - rate)).astype(dtype)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs, label) -> tuple[float, np.ndarray]:
    """
    Categorical cross-entropy of one distribution or a batch.

    Returns the mean loss and its gradient with respect to the pre-softmax
    logits (``probs - onehot``, divided by the batch size for batches).
    """
    probs = np.asarray(probs)
    label = np.asarray(label)
    batched = probs.ndim == 2
    p = probs if batched else probs[None]
    lab = label.reshape(-1)
    idx = np.arange(p.shape[0])
    loss = -np.log(np.maximum(p[idx, lab], 1e-12))
    grad = p.copy()
    grad[idx, lab] -= 1
    if batched:
        return float(loss.mean()), grad / p.shape[0]
    return float(loss[0]), grad[0]
