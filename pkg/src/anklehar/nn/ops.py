"""Batched forward/backward kernels.

Every ``*_fwd`` takes inputs with a leading batch axis and returns
``(output, cache)``; the matching ``*_bwd`` takes the upstream gradient and
that cache and returns the input gradient followed by parameter gradients.
Sequences are laid out ``(batch, steps, channels)``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def sigmoid(z):
    # tanh form is overflow-free and faster than masking by sign
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def softmax(z):
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def activate(z, activation: str):
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "tanh":
        return np.tanh(z)
    if activation == "softmax":
        return softmax(z)
    return z


def activation_grad(pre, out, activation: str):
    """Elementwise derivative of ``activation`` (softmax is handled by the loss)."""
    if activation == "relu":
        return (pre > 0).astype(pre.dtype)
    if activation == "tanh":
        return 1.0 - out * out
    return np.ones_like(pre)


# ---------------------------------------------------------------- dense

def dense_fwd(x, W, b, activation):
    z = x @ W + b
    y = activate(z, activation)
    return y, (x, z, y, activation)


def dense_bwd(dy, W, cache, logits_grad=False):
    """``logits_grad`` means ``dy`` is already the gradient w.r.t. pre-activations."""
    x, z, y, activation = cache
    dz = dy if logits_grad else dy * activation_grad(z, y, activation)
    return dz @ W.T, x.T @ dz, dz.sum(axis=0)


# ---------------------------------------------------------------- conv1d

def conv1d_fwd(x, W, b, activation):
    batch, steps, cin = x.shape
    cout, k, _ = W.shape
    lout = steps - k + 1
    # (B, Lout, Cin, k) -> (B*Lout, k*Cin) with kernel-major ordering to match W[o, j, i]
    cols = sliding_window_view(x, k, axis=1).transpose(0, 1, 3, 2).reshape(batch * lout, k * cin)
    z = (cols @ W.reshape(cout, k * cin).T).reshape(batch, lout, cout) + b
    y = activate(z, activation)
    return y, (x.shape, cols, z, y, activation)


def conv1d_bwd(dy, W, cache):
    x_shape, cols, z, y, activation = cache
    batch, steps, cin = x_shape
    cout, k, _ = W.shape
    lout = steps - k + 1
    dz = dy * activation_grad(z, y, activation)
    dz2 = dz.reshape(batch * lout, cout)
    dW = (dz2.T @ cols).reshape(cout, k, cin)
    db = dz2.sum(axis=0)
    dx = np.zeros(x_shape, dtype=dy.dtype)
    for j in range(k):
        dx[:, j:j + lout, :] += dz @ W[:, j, :]
    return dx, dW, db


# ---------------------------------------------------------------- pooling

def maxpool1d_fwd(x, pool):
    batch, steps, ch = x.shape
    n = steps // pool
    blocks = x[:, : n * pool].reshape(batch, n, pool, ch)
    idx = blocks.argmax(axis=2)  # first maximum wins ties
    y = np.take_along_axis(blocks, idx[:, :, None, :], axis=2)[:, :, 0, :]
    return y, (x.shape, idx, pool)


def maxpool1d_bwd(dy, cache):
    x_shape, idx, pool = cache
    batch, steps, ch = x_shape
    n = idx.shape[1]
    blocks = np.zeros((batch, n, pool, ch), dtype=dy.dtype)
    np.put_along_axis(blocks, idx[:, :, None, :], dy[:, :, None, :], axis=2)
    dx = np.zeros(x_shape, dtype=dy.dtype)
    dx[:, : n * pool] = blocks.reshape(batch, n * pool, ch)
    return dx


def global_maxpool_fwd(x):
    idx = x.argmax(axis=1)
    y = np.take_along_axis(x, idx[:, None, :], axis=1)[:, 0, :]
    return y, (x.shape, idx)


def global_maxpool_bwd(dy, cache):
    x_shape, idx = cache
    dx = np.zeros(x_shape, dtype=dy.dtype)
    np.put_along_axis(dx, idx[:, None, :], dy[:, None, :], axis=1)
    return dx


# ---------------------------------------------------------------- dropout

def dropout_fwd(x, rate, rng, training):
    if not training or rate == 0.0:
        return x, None
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_bwd(dy, mask):
    return dy if mask is None else dy * mask


# ---------------------------------------------------------------- recurrent

def _output(hs, return_sequences):
    return hs if return_sequences else hs[:, -1, :]


def _expand(dy, shape, return_sequences):
    if return_sequences:
        return dy
    full = np.zeros(shape, dtype=dy.dtype)
    full[:, -1, :] = dy
    return full


def simple_rnn_fwd(x, W, U, b, activation, return_sequences):
    batch, steps, _ = x.shape
    u = U.shape[0]
    xw = x @ W + b
    pre = np.empty((batch, steps, u), dtype=xw.dtype)
    hs = np.empty((batch, steps, u), dtype=xw.dtype)
    h = np.zeros((batch, u), dtype=xw.dtype)
    for t in range(steps):
        a = xw[:, t] + h @ U
        h = activate(a, activation)
        pre[:, t] = a
        hs[:, t] = h
    return _output(hs, return_sequences), (x, pre, hs, activation, return_sequences)


def simple_rnn_bwd(dy, W, U, cache):
    x, pre, hs, activation, return_sequences = cache
    batch, steps, _ = x.shape
    dh_out = _expand(dy, hs.shape, return_sequences)
    da = np.empty_like(pre)
    dh_next = np.zeros((batch, U.shape[0]), dtype=dy.dtype)
    for t in range(steps - 1, -1, -1):
        dh = dh_out[:, t] + dh_next
        da_t = dh * activation_grad(pre[:, t], hs[:, t], activation)
        da[:, t] = da_t
        dh_next = da_t @ U.T
    h_prev = np.concatenate([np.zeros((batch, 1, U.shape[0]), dtype=dy.dtype), hs[:, :-1]], axis=1)
    dW = np.einsum("bti,btu->iu", x, da)
    dU = np.einsum("bti,btu->iu", h_prev, da)
    db = da.sum(axis=(0, 1))
    return da @ W.T, dW, dU, db


def lstm_fwd(x, W, U, b, activation, return_sequences):
    batch, steps, _ = x.shape
    u = U.shape[0]
    xw = x @ W + b
    sig = np.empty((batch, steps, 3 * u), dtype=xw.dtype)  # sigmoid gates i, f, o
    g_pre = np.empty((batch, steps, u), dtype=xw.dtype)
    gs = np.empty((batch, steps, u), dtype=xw.dtype)
    cs = np.empty((batch, steps, u), dtype=xw.dtype)
    sq = np.empty((batch, steps, u), dtype=xw.dtype)  # act(c_t)
    hs = np.empty((batch, steps, u), dtype=xw.dtype)
    h = np.zeros((batch, u), dtype=xw.dtype)
    c = np.zeros((batch, u), dtype=xw.dtype)
    for t in range(steps):
        a = xw[:, t] + h @ U
        i = sigmoid(a[:, :u])
        f = sigmoid(a[:, u:2 * u])
        g = activate(a[:, 2 * u:3 * u], activation)
        o = sigmoid(a[:, 3 * u:])
        c = f * c + i * g
        s = activate(c, activation)
        h = o * s
        sig[:, t, :u], sig[:, t, u:2 * u], sig[:, t, 2 * u:] = i, f, o
        g_pre[:, t], gs[:, t] = a[:, 2 * u:3 * u], g
        cs[:, t], sq[:, t], hs[:, t] = c, s, h
    cache = (x, sig, g_pre, gs, cs, sq, hs, activation, return_sequences)
    return _output(hs, return_sequences), cache


def lstm_bwd(dy, W, U, cache):
    x, sig, g_pre, gs, cs, sq, hs, activation, return_sequences = cache
    batch, steps, _ = x.shape
    u = U.shape[0]
    dh_out = _expand(dy, hs.shape, return_sequences)
    da = np.empty((batch, steps, 4 * u), dtype=dy.dtype)
    dh_next = np.zeros((batch, u), dtype=dy.dtype)
    dc_next = np.zeros((batch, u), dtype=dy.dtype)
    zeros = np.zeros((batch, u), dtype=dy.dtype)
    for t in range(steps - 1, -1, -1):
        i, f, o = sig[:, t, :u], sig[:, t, u:2 * u], sig[:, t, 2 * u:]
        g, c, s = gs[:, t], cs[:, t], sq[:, t]
        c_prev = cs[:, t - 1] if t > 0 else zeros
        dh = dh_out[:, t] + dh_next
        dc = dc_next + dh * o * activation_grad(c, s, activation)
        da[:, t, :u] = dc * g * i * (1.0 - i)
        da[:, t, u:2 * u] = dc * c_prev * f * (1.0 - f)
        da[:, t, 2 * u:3 * u] = dc * i * activation_grad(g_pre[:, t], g, activation)
        da[:, t, 3 * u:] = dh * s * o * (1.0 - o)
        dc_next = dc * f
        dh_next = da[:, t] @ U.T
    h_prev = np.concatenate([np.zeros((batch, 1, u), dtype=dy.dtype), hs[:, :-1]], axis=1)
    dW = np.einsum("bti,btu->iu", x, da)
    dU = np.einsum("bti,btu->iu", h_prev, da)
    db = da.sum(axis=(0, 1))
    return da @ W.T, dW, dU, db


def gru_fwd(x, W, U, b_in, b_rec, activation, return_sequences):
    """Double-bias GRU: candidate = act(x W_h + b_in_h + r * (h U_h + b_rec_h))."""
    batch, steps, _ = x.shape
    u = U.shape[0]
    xw = x @ W + b_in
    zs = np.empty((batch, steps, u), dtype=xw.dtype)
    rs = np.empty((batch, steps, u), dtype=xw.dtype)
    cand_pre = np.empty((batch, steps, u), dtype=xw.dtype)
    cands = np.empty((batch, steps, u), dtype=xw.dtype)
    rec_h = np.empty((batch, steps, u), dtype=xw.dtype)  # h_{t-1} U_h + b_rec_h
    hs = np.empty((batch, steps, u), dtype=xw.dtype)
    h = np.zeros((batch, u), dtype=xw.dtype)
    for t in range(steps):
        hu = h @ U + b_rec
        z = sigmoid(xw[:, t, :u] + hu[:, :u])
        r = sigmoid(xw[:, t, u:2 * u] + hu[:, u:2 * u])
        pre = xw[:, t, 2 * u:] + r * hu[:, 2 * u:]
        cand = activate(pre, activation)
        h = z * h + (1.0 - z) * cand
        zs[:, t], rs[:, t], cand_pre[:, t], cands[:, t], rec_h[:, t], hs[:, t] = z, r, pre, cand, hu[:, 2 * u:], h
    cache = (x, zs, rs, cand_pre, cands, rec_h, hs, activation, return_sequences)
    return _output(hs, return_sequences), cache


def gru_bwd(dy, W, U, cache):
    x, zs, rs, cand_pre, cands, rec_h, hs, activation, return_sequences = cache
    batch, steps, _ = x.shape
    u = U.shape[0]
    dh_out = _expand(dy, hs.shape, return_sequences)
    dxw = np.empty((batch, steps, 3 * u), dtype=dy.dtype)  # gradient w.r.t. x W + b_in
    dhu = np.empty((batch, steps, 3 * u), dtype=dy.dtype)  # gradient w.r.t. h U + b_rec
    dh_next = np.zeros((batch, u), dtype=dy.dtype)
    zeros = np.zeros((batch, u), dtype=dy.dtype)
    for t in range(steps - 1, -1, -1):
        z, r, cand, hr = zs[:, t], rs[:, t], cands[:, t], rec_h[:, t]
        h_prev = hs[:, t - 1] if t > 0 else zeros
        dh = dh_out[:, t] + dh_next
        dz = dh * (h_prev - cand)
        dpre = dh * (1.0 - z) * activation_grad(cand_pre[:, t], cand, activation)
        dr = dpre * hr
        daz = dz * z * (1.0 - z)
        dar = dr * r * (1.0 - r)
        dxw[:, t, :u] = daz
        dxw[:, t, u:2 * u] = dar
        dxw[:, t, 2 * u:] = dpre
        dhu[:, t, :u] = daz
        dhu[:, t, u:2 * u] = dar
        dhu[:, t, 2 * u:] = dpre * r
        dh_next = dh * z + dhu[:, t] @ U.T
    h_prev_all = np.concatenate([np.zeros((batch, 1, u), dtype=dy.dtype), hs[:, :-1]], axis=1)
    dW = np.einsum("bti,btu->iu", x, dxw)
    dU = np.einsum("bti,btu->iu", h_prev_all, dhu)
    db_in = dxw.sum(axis=(0, 1))
    db_rec = dhu.sum(axis=(0, 1))
    return dxw @ W.T, dW, dU, db_in, db_rec
