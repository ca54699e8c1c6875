"""Single-layer forward functions on plain arrays.

These accept either one sample or a batch along a leading axis: a dense input
is ``(in,)`` or ``(B, in)``, a sequence input is ``(L, C)`` or ``(B, L, C)``.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .spec import ShapeError


def _as_batch(x, sample_ndim):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == sample_ndim:
        return x[None], True
    if x.ndim == sample_ndim + 1:
        return x, False
    raise ShapeError("input", f"expected {sample_ndim}-d sample or batch, got shape {x.shape}")


def _unbatch(y, single):
    return y[0] if single else y


def dense_forward(x, W, b, activation="none", layer="Dense"):
    xb, single = _as_batch(x, 1)
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if W.ndim != 2 or xb.shape[-1] != W.shape[0] or b.shape != (W.shape[1],):
        raise ShapeError(layer, f"input {xb.shape[1:]}, W {W.shape}, b {b.shape} do not conform")
    return _unbatch(ops.dense_fwd(xb, W, b, activation)[0], single)


def conv1d_forward(x, W, b, activation="none", layer="Conv1D"):
    xb, single = _as_batch(x, 2)
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 3 or W.shape[2] != xb.shape[2] or np.shape(b) != (W.shape[0],):
        raise ShapeError(layer, f"input {xb.shape[1:]}, W {W.shape}, b {np.shape(b)} do not conform")
    if xb.shape[1] < W.shape[1]:
        raise ShapeError(layer, f"window of {xb.shape[1]} steps is shorter than kernel {W.shape[1]}")
    return _unbatch(ops.conv1d_fwd(xb, W, np.asarray(b, dtype=np.float64), activation)[0], single)


def maxpool1d_forward(x, pool, layer="MaxPool1D"):
    xb, single = _as_batch(x, 2)
    if pool < 1:
        raise ShapeError(layer, "pool size must be at least 1")
    if pool > xb.shape[1]:
        raise ShapeError(layer, f"pool {pool} larger than {xb.shape[1]} steps gives empty output")
    return _unbatch(ops.maxpool1d_fwd(xb, pool)[0], single)


def global_maxpool1d_forward(x):
    xb, single = _as_batch(x, 2)
    return _unbatch(ops.global_maxpool_fwd(xb)[0], single)


def _check_recurrent(xb, W, U, gates, layer):
    u = U.shape[0]
    if W.shape != (xb.shape[2], gates * u) or U.shape != (u, gates * u):
        raise ShapeError(layer, f"input {xb.shape[1:]}, W {W.shape}, U {U.shape} do not conform")


def simple_rnn_forward(x, W, U, b, activation="tanh", return_sequences=False, layer="SimpleRNN"):
    xb, single = _as_batch(x, 2)
    W, U, b = (np.asarray(a, dtype=np.float64) for a in (W, U, b))
    _check_recurrent(xb, W, U, 1, layer)
    return _unbatch(ops.simple_rnn_fwd(xb, W, U, b, activation, return_sequences)[0], single)


def lstm_forward(x, W, U, b, return_sequences=False, activation="tanh", layer="LSTM"):
    """Gate blocks in W, U, b are ordered (input, forget, cell candidate, output)."""
    xb, single = _as_batch(x, 2)
    W, U, b = (np.asarray(a, dtype=np.float64) for a in (W, U, b))
    _check_recurrent(xb, W, U, 4, layer)
    return _unbatch(ops.lstm_fwd(xb, W, U, b, activation, return_sequences)[0], single)


def gru_forward(x, W, U, b_in, b_rec, return_sequences=False, activation="tanh", layer="GRU"):
    """Gate blocks are ordered (update, reset, candidate); separate input and recurrent biases."""
    xb, single = _as_batch(x, 2)
    W, U, b_in, b_rec = (np.asarray(a, dtype=np.float64) for a in (W, U, b_in, b_rec))
    _check_recurrent(xb, W, U, 3, layer)
    return _unbatch(ops.gru_fwd(xb, W, U, b_in, b_rec, activation, return_sequences)[0], single)


def softmax(z):
    return ops.softmax(np.asarray(z, dtype=np.float64))


def dropout_apply(x, rate, rng, training):
    """Inverted dropout; identity when not training."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    return ops.dropout_fwd(np.asarray(x, dtype=np.float64), rate, rng, training)[0]
