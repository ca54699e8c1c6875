"""The nine benchmark architectures and their published parameter counts.

Every model takes a (200, 6) window and ends in Dense(4, softmax).  Dropout
(rate 0.3 by default) follows every hidden parametric layer; the raw input
and the output layer get none.

Derivation status:

* ``paper-derivable``: the layer list follows directly from the model text.
* ``reconstructed``: the conv/recurrent hybrids.  Conv filters (24, 56) with
  kernels (4, 5), recurrent widths (32, 16, 16) and a (64, 32) tanh tail
  reproduce all three published totals exactly.
* ``searched``: the CNN beyond its two-conv prefix is the first exact match
  of :func:`anklehar.search.solve_conv_architecture` for 51,308.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

from .nn.model import init_params
from .nn.spec import ModelSpec, conv1d, dense, dropout, flatten, param_count, recurrent
from .rng import stream
from .search import CnnSearchSpace, solve_conv_architecture

MODEL_NAMES = ("Shallow_NN", "DL", "RNN", "LSTM", "GRU", "CNN", "CNN_RNN", "CNN_GRU", "CNN_LSTM")
HYBRIDS = {"CNN_RNN": "SimpleRNN", "CNN_GRU": "GRU", "CNN_LSTM": "LSTM"}
DROPOUT_RATE = 0.3

EXPECTED_COUNTS = {
    "Shallow_NN": 4804,
    "DL": 39620,
    "RNN": 7652,
    "LSTM": 6884,
    "GRU": 14500,
    "CNN": 51308,
    "CNN_RNN": 14836,
    "CNN_GRU": 23348,
    "CNN_LSTM": 27316,
}
STATUS = {name: "paper-derivable" for name in MODEL_NAMES}
STATUS.update({name: "reconstructed" for name in HYBRIDS})
STATUS["CNN"] = "searched"


class UnknownModelError(KeyError):
    def __str__(self):
        return f"unknown model {self.args[0]!r}; choose from {', '.join(MODEL_NAMES)}"


def _with_dropout(layers, rate):
    """Insert dropout after every parametric layer except the last."""
    out = []
    for i, layer in enumerate(layers):
        out.append(layer)
        if rate and i < len(layers) - 1 and layer.kind in ("Dense", "Conv1D", "SimpleRNN", "LSTM", "GRU"):
            out.append(dropout(rate))
    return tuple(out)


def _tail(activation):
    return [dense(64, activation), dense(32, activation), dense(4, "softmax")]


@lru_cache(maxsize=1)
def cnn_solution():
    """Solver result for the CNN target (cached; the search is deterministic)."""
    return solve_conv_architecture(EXPECTED_COUNTS["CNN"], CnnSearchSpace())


def _layers(name):
    if name == "Shallow_NN":
        return [flatten(), dense(4, "softmax")]
    if name == "DL":
        return [flatten(), dense(32, "relu"), dense(32, "relu"), dense(4, "softmax")]
    if name == "RNN":
        return [recurrent("SimpleRNN", 32, "relu", seq=True), recurrent("SimpleRNN", 32, "relu", seq=False),
                *_tail("relu")]
    if name == "LSTM":
        return [recurrent("LSTM", 16, seq=True), recurrent("LSTM", 16, seq=False), *_tail("tanh")]
    if name == "GRU":
        # same structure as RNN; tanh replaces relu throughout
        return [recurrent("GRU", 32, seq=True), recurrent("GRU", 32, seq=False), *_tail("tanh")]
    if name in HYBRIDS:
        cell = HYBRIDS[name]
        return [conv1d(24, 4), conv1d(56, 5), recurrent(cell, 32, seq=True), recurrent(cell, 16, seq=True),
                recurrent(cell, 16, seq=False), *_tail("tanh")]
    if name == "CNN":
        return list(cnn_solution().best.to_spec("CNN").layers)
    raise UnknownModelError(name)


def build_model(name: str, dropout_rate: float = DROPOUT_RATE) -> ModelSpec:
    """Canonical spec for one of :data:`MODEL_NAMES`."""
    if name not in MODEL_NAMES:
        raise UnknownModelError(name)
    return ModelSpec(name, _with_dropout(_layers(name), dropout_rate))


def resolve_models(selection) -> list[str]:
    """Accept ``"all"``, a comma-separated string, or an iterable of names."""
    if isinstance(selection, str):
        selection = MODEL_NAMES if selection == "all" else [s.strip() for s in selection.split(",") if s.strip()]
    names = list(selection)
    for name in names:
        if name not in MODEL_NAMES:
            raise UnknownModelError(name)
    if not names:
        raise ValueError("no models selected")
    return names


@dataclass(frozen=True)
class CountRow:
    name: str
    computed: int
    expected: int
    status: str
    allocated: int

    @property
    def delta(self) -> int:
        return self.computed - self.expected

    @property
    def match(self) -> bool:
        return self.delta == 0 and self.allocated == self.computed

    @property
    def hard_failure(self) -> bool:
        # a searched model reports its delta instead of failing
        return not self.match and self.status != "searched"


def manifest() -> list[dict]:
    """One entry per model: name, layers, expected and computed count, status."""
    rows = []
    for name in MODEL_NAMES:
        spec = build_model(name)
        rows.append({
            "name": name,
            "layers": [layer.describe() for layer in spec.layers],
            "expected": EXPECTED_COUNTS[name],
            "computed": param_count(spec),
            "status": STATUS[name],
        })
    return rows


def manifest_json() -> str:
    return json.dumps({"version": 1, "models": manifest()}, indent=2) + "\n"


def verify_param_counts(expected: dict | None = None, allocate: bool = True) -> list[CountRow]:
    """Compare structural counts with ``expected`` (defaults to the published totals).

    With ``allocate`` the parameters are also instantiated and their scalars
    counted, so the bundle layout is checked against the formula.
    """
    expected = dict(EXPECTED_COUNTS if expected is None else expected)
    rows = []
    for name in MODEL_NAMES:
        spec = build_model(name)
        computed = param_count(spec)
        allocated = init_params(spec, stream(0, "verify", name)).size if allocate else computed
        rows.append(CountRow(name, computed, int(expected[name]), STATUS[name], allocated))
    return rows


def format_count_table(rows: list[CountRow]) -> str:
    lines = [f"{'model':<11} {'computed':>9} {'expected':>9} {'delta':>6}  {'status':<16} result"]
    for r in rows:
        result = "ok" if r.match else ("FAIL" if r.hard_failure else "delta reported")
        lines.append(f"{r.name:<11} {r.computed:>9,} {r.expected:>9,} {r.delta:>+6}  {r.status:<16} {result}")
    return "\n".join(lines)
