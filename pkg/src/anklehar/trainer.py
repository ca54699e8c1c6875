"""Cross-entropy loss, Adam, mini-batch epochs, early stopping and evaluation."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .nn.model import ParameterBundle, check_one_hot, init_params, layer_names, loss_and_gradients, predict_proba
from .nn.spec import ModelSpec
from .rng import derive_seed, stream


class TrainingDivergence(RuntimeError):
    """A loss or gradient became non-finite."""


class TrainConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 1000
    patience: int = 20
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    validation_fraction: float = 0.1
    master_seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0 or self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise TrainConfigError(f"invalid training configuration: {self}")
        if not 0.0 < self.validation_fraction < 1.0:
            raise TrainConfigError("validation_fraction must lie in (0, 1)")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0 and self.epsilon > 0):
            raise TrainConfigError("Adam betas must lie in [0, 1) and epsilon must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def categorical_crossentropy(p, y) -> float:
    """Mean of ``-sum(y * ln p)`` over samples, with ``p`` floored at 1e-12."""
    p = np.asarray(p, dtype=np.float64)
    y = check_one_hot(y, p.shape[-1])
    p = p.reshape(y.shape)
    return float(np.mean(-np.log(np.maximum(np.sum(p * y, axis=1), 1e-12))))


@dataclass
class AdamState:
    m: ParameterBundle
    v: ParameterBundle
    t: int = 0

    @classmethod
    def zeros(cls, params: ParameterBundle) -> "AdamState":
        return cls(params.zeros_like(), params.zeros_like(), 0)


def adam_step(params: ParameterBundle, grads: ParameterBundle, state: AdamState, config: TrainConfig,
              names: dict[str, str] | None = None, epoch: int | None = None) -> None:
    """One in-place Adam update of ``params`` and ``state``."""
    for key, g in grads.items():
        if not np.all(np.isfinite(g)):
            where = (names or {}).get(key, key)
            raise TrainingDivergence(f"non-finite gradient in {where} (tensor {key}) at epoch {epoch}")
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for key, g in grads.items():
        m = state.m[key]
        v = state.v[key]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        params[key] -= config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.epsilon)


@dataclass
class EarlyStopState:
    patience: int
    best_loss: float = math.inf
    best_epoch: int = 0
    best_params: ParameterBundle | None = None
    since_improvement: int = 0

    def update(self, val_loss: float, params: ParameterBundle, epoch: int) -> bool:
        """Record an epoch's validation loss; True if it improved on the best."""
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.best_epoch = epoch
            self.best_params = params.copy()
            self.since_improvement = 0
            return True
        self.since_improvement += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.since_improvement >= self.patience


@dataclass
class TrainTrace:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    epochs_run: int = 0
    best_epoch: int = 0
    stopped_early: bool = False

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_loss", "val_acc"])
        for i, row in enumerate(zip(self.train_loss, self.val_loss, self.val_accuracy), start=1):
            writer.writerow([i, *(repr(float(v)) for v in row)])
        return buf.getvalue()


def _check_xy(x, y):
    if len(x) == 0:
        raise ValueError("empty dataset")
    if len(x) != len(y):
        raise ValueError(f"{len(x)} windows but {len(y)} labels")


def train_epoch(spec: ModelSpec, params: ParameterBundle, x, y, state: AdamState, config: TrainConfig,
                rng: np.random.Generator, epoch: int | None = None) -> float:
    """Shuffle, run one Adam step per mini-batch (last partial batch kept).

    Returns the sample-weighted mean training loss of the epoch.  Dropout
    masks are drawn from ``rng`` after the shuffle permutation.
    """
    _check_xy(x, y)
    n = len(x)
    order = rng.permutation(n)
    names = layer_names(spec)
    total = 0.0
    for start in range(0, n, config.batch_size):
        idx = order[start:start + config.batch_size]
        loss, _, grads = loss_and_gradients(spec, params, x[idx], y[idx], rng=rng, training=True)
        if not math.isfinite(loss):
            raise TrainingDivergence(f"non-finite training loss at epoch {epoch}")
        adam_step(params, grads, state, config, names, epoch)
        total += loss * len(idx)
    return total / n


def evaluate(spec: ModelSpec, params: ParameterBundle, x, y):
    """Eval-mode accuracy (fraction), mean cross-entropy and predicted classes.

    ``argmax`` breaks ties toward the lowest class index.
    """
    _check_xy(x, y)
    probs = predict_proba(spec, params, x)
    pred = probs.argmax(axis=1)
    truth = np.asarray(y).argmax(axis=1)
    return float(np.mean(pred == truth)), categorical_crossentropy(probs, y), pred


def stratified_split(labels, fraction: float, rng: np.random.Generator):
    """Indices (train, validation) with ``fraction`` of each class held out.

    Classes with a single window keep it in the training portion.
    """
    labels = np.asarray(labels)
    train, val = [], []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(len(idx))]
        k = 0 if len(idx) < 2 else min(len(idx) - 1, max(1, int(round(fraction * len(idx)))))
        val.extend(idx[:k])
        train.extend(idx[k:])
    return np.sort(np.array(train, dtype=np.int64)), np.sort(np.array(val, dtype=np.int64))


def fit(spec: ModelSpec, x, y, config: TrainConfig, seed: int | None = None,
        params: ParameterBundle | None = None):
    """Train with early stopping on a stratified validation split.

    ``seed`` defaults to ``config.master_seed``; independent streams for the
    split, initialisation, and each epoch's shuffle/dropout are derived from it.
    Returns ``(trace, best_params)``.
    """
    _check_xy(x, y)
    seed = config.master_seed if seed is None else seed
    y = np.asarray(y, dtype=np.float64)
    labels = y.argmax(axis=1)
    tr, va = stratified_split(labels, config.validation_fraction, stream(seed, "split"))
    missing = sorted(set(range(spec.num_classes)) - set(labels[tr].tolist()))
    if missing:
        raise TrainConfigError(f"classes {missing} have no training windows")
    if len(va) == 0:
        raise TrainConfigError("validation split is empty")
    xt, yt, xv, yv = x[tr], y[tr], x[va], y[va]

    params = init_params(spec, stream(seed, "init")) if params is None else params.copy()
    state = AdamState.zeros(params)
    stopper = EarlyStopState(config.patience)
    trace = TrainTrace()
    epoch_seed = derive_seed(seed, "epochs")
    for epoch in range(1, config.max_epochs + 1):
        train_loss = train_epoch(spec, params, xt, yt, state, config, stream(epoch_seed, epoch), epoch)
        val_acc, val_loss, _ = evaluate(spec, params, xv, yv)
        if not math.isfinite(val_loss):
            raise TrainingDivergence(f"non-finite validation loss at epoch {epoch}")
        trace.train_loss.append(train_loss)
        trace.val_loss.append(val_loss)
        trace.val_accuracy.append(val_acc)
        trace.epochs_run = epoch
        stopper.update(val_loss, params, epoch)
        if stopper.should_stop:
            trace.stopped_early = epoch < config.max_epochs
            break
    trace.best_epoch = stopper.best_epoch
    return trace, stopper.best_params
