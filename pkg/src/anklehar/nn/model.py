"""Parameter bundles, initialisation, and whole-model forward/backward passes."""

from __future__ import annotations

import numpy as np

from . import ops
from .spec import ModelSpec, ShapeError, SpecError, describe_layers, layer_name


class ParameterBundle:
    """Ordered mapping ``"<layer index>.<name>" -> float64 array``.

    Iteration order follows the layer order of the ModelSpec, then the per-layer
    order given by :func:`anklehar.nn.spec.param_shapes`.
    """

    def __init__(self, tensors: dict[str, np.ndarray], dtype=np.float64):
        self.tensors = {k: np.asarray(v, dtype=dtype) for k, v in tensors.items()}

    def __getitem__(self, key):
        return self.tensors[key]

    def __setitem__(self, key, value):
        self.tensors[key] = value

    def __iter__(self):
        return iter(self.tensors)

    def __len__(self):
        return len(self.tensors)

    def keys(self):
        return self.tensors.keys()

    def items(self):
        return self.tensors.items()

    def values(self):
        return self.tensors.values()

    def layer(self, index: int) -> dict[str, np.ndarray]:
        prefix = f"{index}."
        return {k[len(prefix):]: v for k, v in self.tensors.items() if k.startswith(prefix)}

    @property
    def size(self) -> int:
        return int(sum(v.size for v in self.tensors.values()))

    def copy(self) -> "ParameterBundle":
        return ParameterBundle({k: v.copy() for k, v in self.tensors.items()})

    def zeros_like(self) -> "ParameterBundle":
        return ParameterBundle({k: np.zeros_like(v) for k, v in self.tensors.items()})

    def equal(self, other: "ParameterBundle") -> bool:
        return list(self.keys()) == list(other.keys()) and all(
            np.array_equal(self[k], other[k]) for k in self.keys()
        )


def expected_shapes(spec: ModelSpec) -> dict[str, tuple[int, ...]]:
    shapes = {}
    for info in describe_layers(spec):
        for name, shape in info.params.items():
            shapes[f"{info.index}.{name}"] = shape
    return shapes


def check_params(spec: ModelSpec, params: ParameterBundle) -> None:
    expected = expected_shapes(spec)
    if list(expected) != list(params.keys()):
        raise SpecError(
            f"parameters do not match spec {spec.name!r}: "
            f"expected tensors {list(expected)}, got {list(params.keys())}"
        )
    for key, shape in expected.items():
        if params[key].shape != shape:
            raise SpecError(f"tensor {key}: expected shape {shape}, got {params[key].shape}")


def _glorot(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(spec: ModelSpec, rng: np.random.Generator) -> ParameterBundle:
    """Glorot-uniform weights and kernels, zero biases."""
    tensors = {}
    for info in describe_layers(spec):
        for name, shape in info.params.items():
            key = f"{info.index}.{name}"
            if name.startswith("b"):
                tensors[key] = np.zeros(shape)
            elif len(shape) == 3:  # conv kernel (out, k, in)
                cout, k, cin = shape
                tensors[key] = _glorot(rng, shape, k * cin, k * cout)
            else:
                tensors[key] = _glorot(rng, shape, shape[0], shape[1])
    return ParameterBundle(tensors)


def zero_params(spec: ModelSpec) -> ParameterBundle:
    return ParameterBundle({k: np.zeros(s) for k, s in expected_shapes(spec).items()})


def _batched(spec: ModelSpec, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.shape == spec.input_shape
    if single:
        x = x[None]
    if x.shape[1:] != spec.input_shape:
        raise ShapeError("input", f"expected per-sample shape {spec.input_shape}, got {x.shape}")
    return x, single


def _forward(spec, params, x, training, rng):
    caches = []
    for i, layer in enumerate(spec.layers):
        p = params.layer(i)
        kind = layer.kind
        if kind == "Dense":
            act = "none" if layer.activation == "softmax" else layer.activation
            x, cache = ops.dense_fwd(x, p["W"], p["b"], act)
        elif kind == "Conv1D":
            x, cache = ops.conv1d_fwd(x, p["W"], p["b"], layer.activation)
        elif kind == "SimpleRNN":
            x, cache = ops.simple_rnn_fwd(x, p["W"], p["U"], p["b"], layer.activation, layer.return_sequences)
        elif kind == "LSTM":
            x, cache = ops.lstm_fwd(x, p["W"], p["U"], p["b"], layer.activation, layer.return_sequences)
        elif kind == "GRU":
            x, cache = ops.gru_fwd(
                x, p["W"], p["U"], p["b_in"], p["b_rec"], layer.activation, layer.return_sequences
            )
        elif kind == "MaxPool1D":
            x, cache = ops.maxpool1d_fwd(x, layer.pool)
        elif kind == "GlobalMaxPool1D":
            x, cache = ops.global_maxpool_fwd(x)
        elif kind == "Flatten":
            cache = x.shape
            x = x.reshape(x.shape[0], -1)
        else:  # Dropout
            if training and rng is None and layer.dropout_rate > 0:
                raise ValueError("training-mode forward with dropout needs an rng")
            x, cache = ops.dropout_fwd(x, layer.dropout_rate, rng, training)
        caches.append(cache)
    return ops.softmax(x), caches


def model_forward(spec: ModelSpec, params: ParameterBundle, x, training: bool = False, rng=None):
    """Class probabilities for one window ``(T, C)`` or a batch ``(B, T, C)``."""
    check_params(spec, params)
    xb, single = _batched(spec, x)
    probs, _ = _forward(spec, params, xb, training, rng)
    return probs[0] if single else probs


def predict_proba(spec: ModelSpec, params: ParameterBundle, x, batch_size: int = 256):
    """Eval-mode probabilities for a large batch, computed in chunks."""
    check_params(spec, params)
    xb, _ = _batched(spec, x)
    out = np.empty((xb.shape[0], spec.num_classes))
    for start in range(0, xb.shape[0], batch_size):
        out[start:start + batch_size] = _forward(spec, params, xb[start:start + batch_size], False, None)[0]
    return out


def check_one_hot(y, num_classes: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[None]
    if y.shape[-1] != num_classes or not (
        np.all((y == 0) | (y == 1)) and np.all(y.sum(axis=-1) == 1)
    ):
        raise ValueError("target is not a one-hot vector over the model's classes")
    return y


def _backward(spec, params, caches, dlogits):
    grads = {}
    dx = dlogits
    for i in range(len(spec.layers) - 1, -1, -1):
        layer, cache, p = spec.layers[i], caches[i], params.layer(i)
        kind = layer.kind
        if kind == "Dense":
            dx, grads[f"{i}.W"], grads[f"{i}.b"] = ops.dense_bwd(
                dx, p["W"], cache, logits_grad=layer.activation == "softmax"
            )
        elif kind == "Conv1D":
            dx, grads[f"{i}.W"], grads[f"{i}.b"] = ops.conv1d_bwd(dx, p["W"], cache)
        elif kind == "SimpleRNN":
            dx, grads[f"{i}.W"], grads[f"{i}.U"], grads[f"{i}.b"] = ops.simple_rnn_bwd(dx, p["W"], p["U"], cache)
        elif kind == "LSTM":
            dx, grads[f"{i}.W"], grads[f"{i}.U"], grads[f"{i}.b"] = ops.lstm_bwd(dx, p["W"], p["U"], cache)
        elif kind == "GRU":
            dx, grads[f"{i}.W"], grads[f"{i}.U"], grads[f"{i}.b_in"], grads[f"{i}.b_rec"] = ops.gru_bwd(
                dx, p["W"], p["U"], cache
            )
        elif kind == "MaxPool1D":
            dx = ops.maxpool1d_bwd(dx, cache)
        elif kind == "GlobalMaxPool1D":
            dx = ops.global_maxpool_bwd(dx, cache)
        elif kind == "Flatten":
            dx = dx.reshape(cache)
        else:
            dx = ops.dropout_bwd(dx, cache)
    return ParameterBundle({k: grads[k] for k in params.keys()})


def loss_and_gradients(spec: ModelSpec, params: ParameterBundle, x, target, rng=None, training: bool = True):
    """Mean categorical cross-entropy over the batch and its parameter gradients.

    Softmax and cross-entropy are fused, so the gradient entering the output
    layer is ``(p - y) / batch``.
    """
    check_params(spec, params)
    xb, _ = _batched(spec, x)
    y = check_one_hot(target, spec.num_classes)
    if y.shape[0] != xb.shape[0]:
        raise ShapeError("target", f"{y.shape[0]} targets for {xb.shape[0]} inputs")
    probs, caches = _forward(spec, params, xb, training, rng)
    loss = float(np.mean(-np.log(np.maximum(np.sum(probs * y, axis=1), 1e-12))))
    grads = _backward(spec, params, caches, (probs - y) / xb.shape[0])
    return loss, probs, grads


def model_backward(spec: ModelSpec, params: ParameterBundle, x, target, rng=None, training: bool = True):
    return loss_and_gradients(spec, params, x, target, rng, training)[2]


def layer_names(spec: ModelSpec) -> dict[str, str]:
    """Map parameter keys to readable layer names for diagnostics."""
    return {
        key: layer_name(int(key.split(".")[0]), spec.layers[int(key.split(".")[0])])
        for key in expected_shapes(spec)
    }
