"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ParameterBundle, _forward, check_one_hot, init_params, loss_and_gradients
from .spec import ModelSpec, conv1d, dense, flatten, global_maxpool, maxpool, recurrent


@dataclass
class GradientCheckReport:
    max_rel_error: dict[str, float]
    tolerance: float
    step: float
    checked: dict[str, int] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(err < self.tolerance for err in self.max_rel_error.values())

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)


def relative_error(analytic, numeric):
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-12)


def gradient_check(
    spec: ModelSpec,
    params: ParameterBundle,
    x,
    target,
    tolerance: float = 1e-6,
    step: float = 1e-5,
    analytic: ParameterBundle | None = None,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
    oracle_dtype=np.longdouble,
) -> GradientCheckReport:
    """Compare analytic gradients to central differences of the eval-mode loss.

    The analytic side runs in float64.  The difference quotient is evaluated
    with ``oracle_dtype`` (extended precision by default): in float64 the
    rounding noise of ``(f(t+h) - f(t-h)) / 2h`` is around 1e-11, which is
    larger than 1e-6 of the smallest gradient entries of a typical model.

    ``analytic`` overrides the gradients under test (used for negative
    controls).  With ``max_entries`` set, at most that many entries per tensor
    are probed, chosen by ``rng``.
    """
    if analytic is None:
        analytic = loss_and_gradients(spec, params, x, target, training=False)[2]
    work = ParameterBundle(params.tensors, dtype=oracle_dtype)
    xb = np.asarray(x, dtype=oracle_dtype)
    if xb.shape == spec.input_shape:
        xb = xb[None]
    y = check_one_hot(target, spec.num_classes).astype(oracle_dtype)
    h = oracle_dtype(step)

    def loss():
        probs, _ = _forward(spec, work, xb, False, None)
        return np.mean(-np.log(np.sum(probs * y, axis=1)))

    errors, checked = {}, {}
    for key, tensor in work.items():
        flat = tensor.reshape(-1)
        indices = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            indices = (rng or np.random.default_rng(0)).choice(flat.size, max_entries, replace=False)
        worst = 0.0
        for idx in indices:
            orig = flat[idx]
            flat[idx] = orig + h
            up = loss()
            flat[idx] = orig - h
            down = loss()
            flat[idx] = orig
            numeric = float((up - down) / (2 * h))
            worst = max(worst, float(relative_error(analytic[key].reshape(-1)[idx], numeric)))
        errors[key] = worst
        checked[key] = len(indices)
    return GradientCheckReport(errors, tolerance, step, checked)


def layer_suites() -> dict[str, ModelSpec]:
    """Small models that isolate each layer type behind a softmax output."""
    seq = (10, 6)
    return {
        "dense": ModelSpec("gc_dense", (dense(3, "softmax"),), input_shape=(5,), num_classes=3),
        "dense_hidden": ModelSpec(
            "gc_dense_hidden", (dense(6, "relu"), dense(4, "tanh"), dense(3, "softmax")),
            input_shape=(5,), num_classes=3,
        ),
        "conv1d": ModelSpec(
            "gc_conv1d", (conv1d(4, 3, "relu"), conv1d(3, 2, "tanh"), flatten(), dense(3, "softmax")),
            input_shape=(12, 3), num_classes=3,
        ),
        "maxpool1d": ModelSpec(
            "gc_maxpool", (conv1d(4, 3, "tanh"), maxpool(2), flatten(), dense(3, "softmax")),
            input_shape=(12, 3), num_classes=3,
        ),
        "global_maxpool1d": ModelSpec(
            "gc_gmp", (conv1d(4, 3, "tanh"), global_maxpool(), dense(3, "softmax")),
            input_shape=(12, 3), num_classes=3,
        ),
        "simple_rnn": ModelSpec(
            "gc_rnn",
            (recurrent("SimpleRNN", 4, "tanh", seq=True), recurrent("SimpleRNN", 4, "relu", seq=False),
             dense(3, "softmax")),
            input_shape=(8, 3), num_classes=3,
        ),
        "lstm": ModelSpec(
            "gc_lstm", (recurrent("LSTM", 4, seq=False), dense(3, "softmax")), input_shape=seq, num_classes=3,
        ),
        "gru": ModelSpec(
            "gc_gru",
            (recurrent("GRU", 4, seq=True), recurrent("GRU", 3, seq=False), dense(3, "softmax")),
            input_shape=seq, num_classes=3,
        ),
    }


def random_instance(spec: ModelSpec, rng: np.random.Generator, batch: int = 2):
    """Random parameters (biases included), inputs and one-hot targets."""
    params = init_params(spec, rng)
    for key, value in params.items():
        params[key] = value + 0.2 * rng.standard_normal(value.shape)
    x = rng.standard_normal((batch, *spec.input_shape))
    y = np.eye(spec.num_classes)[rng.integers(0, spec.num_classes, size=batch)]
    return params, x, y


def run_layer_suites(instances: int = 10, seed: int = 0, tolerance: float = 1e-6, step: float = 1e-5):
    """Gradient-check every layer suite on ``instances`` random draws.

    Returns ``{suite: worst relative error}``.
    """
    rng = np.random.default_rng(seed)
    results = {}
    for name, spec in layer_suites().items():
        worst = 0.0
        for _ in range(instances):
            params, x, y = random_instance(spec, rng)
            report = gradient_check(spec, params, x, y, tolerance, step)
            worst = max(worst, report.worst)
        results[name] = worst
    return results
