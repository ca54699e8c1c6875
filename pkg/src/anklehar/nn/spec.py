"""Declarative model descriptions, shape propagation and parameter counting."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

KINDS = (
    "Flatten",
    "Dense",
    "SimpleRNN",
    "LSTM",
    "GRU",
    "Conv1D",
    "MaxPool1D",
    "GlobalMaxPool1D",
    "Dropout",
)
ACTIVATIONS = ("none", "relu", "tanh", "softmax")
RECURRENT = ("SimpleRNN", "LSTM", "GRU")


class SpecError(ValueError):
    """A ModelSpec or LayerSpec is malformed."""


class ShapeError(SpecError):
    """Tensor shapes do not conform at a named layer."""

    def __init__(self, layer: str, message: str):
        super().__init__(f"{layer}: {message}")
        self.layer = layer


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    units: int = 0
    kernel: int = 0
    pool: int = 0
    activation: str = "none"
    return_sequences: bool | None = None
    dropout_rate: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise SpecError(f"unknown activation {self.activation!r}")
        if self.kind in ("Dense", "Conv1D", *RECURRENT) and self.units < 1:
            raise SpecError(f"{self.kind} needs a positive unit/filter count")
        if self.kind == "Conv1D" and self.kernel < 1:
            raise SpecError("Conv1D needs a positive kernel size")
        if self.kind == "MaxPool1D" and self.pool < 1:
            raise SpecError("MaxPool1D needs a positive pool size")
        if self.kind in RECURRENT and self.return_sequences is None:
            raise SpecError(f"{self.kind} must declare return_sequences")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise SpecError(f"dropout rate {self.dropout_rate} outside [0, 1)")

    def describe(self) -> str:
        if self.kind == "Dense":
            return f"Dense({self.units}, {self.activation})"
        if self.kind == "Conv1D":
            return f"Conv1D({self.units}, k={self.kernel}, {self.activation})"
        if self.kind in RECURRENT:
            mode = "seq" if self.return_sequences else "last"
            return f"{self.kind}({self.units}, {self.activation}, {mode})"
        if self.kind == "MaxPool1D":
            return f"MaxPool1D({self.pool})"
        if self.kind == "Dropout":
            return f"Dropout({self.dropout_rate:g})"
        return self.kind


# Convenience constructors used by the zoo and the tests.
def dense(units: int, activation: str = "none") -> LayerSpec:
    return LayerSpec("Dense", units=units, activation=activation)


def conv1d(filters: int, kernel: int, activation: str = "relu") -> LayerSpec:
    return LayerSpec("Conv1D", units=filters, kernel=kernel, activation=activation)


def recurrent(kind: str, units: int, activation: str = "tanh", *, seq: bool) -> LayerSpec:
    return LayerSpec(kind, units=units, activation=activation, return_sequences=seq)


def dropout(rate: float) -> LayerSpec:
    return LayerSpec("Dropout", dropout_rate=rate)


def flatten() -> LayerSpec:
    return LayerSpec("Flatten")


def maxpool(pool: int) -> LayerSpec:
    return LayerSpec("MaxPool1D", pool=pool)


def global_maxpool() -> LayerSpec:
    return LayerSpec("GlobalMaxPool1D")


@dataclass(frozen=True)
class ModelSpec:
    name: str
    layers: tuple[LayerSpec, ...]
    input_shape: tuple[int, ...] = (200, 6)
    num_classes: int = 4

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        for i, layer in enumerate(self.layers):
            if layer.activation == "softmax" and i != len(self.layers) - 1:
                raise SpecError(f"layer {i}: softmax is only allowed on the final Dense layer")
        if not self.layers or self.layers[-1].kind != "Dense" or self.layers[-1].activation != "softmax":
            raise SpecError("the final layer must be a softmax Dense layer")
        if self.layers[-1].units != self.num_classes:
            raise SpecError(
                f"output layer has {self.layers[-1].units} units, expected {self.num_classes}"
            )
        layer_shapes(self)

    def canonical(self) -> str:
        """Stable JSON encoding; the basis of the weight-file fingerprint."""
        doc = {
            "name": self.name,
            "input_shape": list(self.input_shape),
            "num_classes": self.num_classes,
            "layers": [asdict(layer) for layer in self.layers],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    def fingerprint(self) -> bytes:
        return hashlib.sha256(self.canonical().encode()).digest()

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelSpec":
        return cls(
            name=doc["name"],
            layers=tuple(LayerSpec(**layer) for layer in doc["layers"]),
            input_shape=tuple(doc["input_shape"]),
            num_classes=doc["num_classes"],
        )

    def to_dict(self) -> dict:
        return json.loads(self.canonical())


def layer_name(index: int, layer: LayerSpec) -> str:
    return f"layer {index} ({layer.kind})"


def output_shape(layer: LayerSpec, in_shape: tuple[int, ...], name: str = "") -> tuple[int, ...]:
    """Per-sample output shape of ``layer`` given a per-sample input shape."""
    name = name or layer.kind
    kind = layer.kind
    if kind == "Dropout":
        return in_shape
    if kind == "Flatten":
        size = 1
        for d in in_shape:
            size *= d
        return (size,)
    if kind == "Dense":
        if len(in_shape) != 1:
            raise ShapeError(name, f"Dense expects a flat input, got shape {in_shape}")
        return (layer.units,)
    if len(in_shape) != 2:
        raise ShapeError(name, f"{kind} expects a (steps, channels) input, got shape {in_shape}")
    steps, _ = in_shape
    if kind == "Conv1D":
        if steps < layer.kernel:
            raise ShapeError(name, f"window of {steps} steps is shorter than kernel {layer.kernel}")
        return (steps - layer.kernel + 1, layer.units)
    if kind == "MaxPool1D":
        if layer.pool > steps:
            raise ShapeError(name, f"pool {layer.pool} larger than {steps} steps gives empty output")
        return (steps // layer.pool, in_shape[1])
    if kind == "GlobalMaxPool1D":
        return (in_shape[1],)
    # recurrent
    if layer.return_sequences:
        return (steps, layer.units)
    return (layer.units,)


def layer_shapes(spec: ModelSpec) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """(input shape, output shape) for every layer, raising ShapeError on mismatch."""
    shapes = []
    shape = spec.input_shape
    for i, layer in enumerate(spec.layers):
        out = output_shape(layer, shape, layer_name(i, layer))
        shapes.append((shape, out))
        shape = out
    return shapes


def param_shapes(layer: LayerSpec, in_shape: tuple[int, ...]) -> dict[str, tuple[int, ...]]:
    """Named parameter tensor shapes of one layer.

    Layouts: Dense W[in, out], b[out]; Conv1D W[out, k, in], b[out];
    SimpleRNN W[in, u], U[u, u], b[u]; LSTM W[in, 4u], U[u, 4u], b[4u] with gate
    blocks ordered (input, forget, cell candidate, output); GRU W[in, 3u],
    U[u, 3u], b_in[3u], b_rec[3u] with blocks ordered (update, reset, candidate).
    """
    kind, u = layer.kind, layer.units
    if kind == "Dense":
        return {"W": (in_shape[-1], u), "b": (u,)}
    if kind == "Conv1D":
        return {"W": (u, layer.kernel, in_shape[-1]), "b": (u,)}
    if kind == "SimpleRNN":
        return {"W": (in_shape[-1], u), "U": (u, u), "b": (u,)}
    if kind == "LSTM":
        return {"W": (in_shape[-1], 4 * u), "U": (u, 4 * u), "b": (4 * u,)}
    if kind == "GRU":
        return {"W": (in_shape[-1], 3 * u), "U": (u, 3 * u), "b_in": (3 * u,), "b_rec": (3 * u,)}
    return {}


def layer_param_count(layer: LayerSpec, fan_in: int) -> int:
    """Closed-form trainable parameter count for one layer with ``fan_in`` input channels."""
    u = layer.units
    if layer.kind == "Dense":
        return fan_in * u + u
    if layer.kind == "Conv1D":
        return u * (layer.kernel * fan_in + 1)
    if layer.kind == "SimpleRNN":
        return u * (fan_in + u + 1)
    if layer.kind == "LSTM":
        return 4 * u * (fan_in + u + 1)
    if layer.kind == "GRU":
        return 3 * u * (fan_in + u + 2)
    return 0


def param_count(spec: ModelSpec) -> int:
    return sum(
        layer_param_count(layer, in_shape[-1])
        for layer, (in_shape, _) in zip(spec.layers, layer_shapes(spec))
    )


@dataclass
class LayerInfo:
    index: int
    layer: LayerSpec
    in_shape: tuple[int, ...]
    out_shape: tuple[int, ...]
    params: dict[str, tuple[int, ...]] = field(default_factory=dict)


def describe_layers(spec: ModelSpec) -> list[LayerInfo]:
    return [
        LayerInfo(i, layer, a, b, param_shapes(layer, a))
        for i, (layer, (a, b)) in enumerate(zip(spec.layers, layer_shapes(spec)))
    ]
