"""Zoo definitions, published counts and the parameter-count solver."""

import json
from math import prod

import numpy as np
import pytest

from anklehar.nn import init_params, model_forward, param_count
from anklehar.nn.spec import describe_layers, layer_param_count, recurrent
from anklehar.search import CnnSearchSpace, ListFamily, dense_family, hybrid_family, solve_conv_architecture
from anklehar.zoo import (
    EXPECTED_COUNTS,
    MODEL_NAMES,
    STATUS,
    UnknownModelError,
    build_model,
    cnn_solution,
    manifest_json,
    resolve_models,
    verify_param_counts,
)

PUBLISHED = {
    "Shallow_NN": 4804, "DL": 39620, "RNN": 7652, "LSTM": 6884, "GRU": 14500,
    "CNN": 51308, "CNN_RNN": 14836, "CNN_GRU": 23348, "CNN_LSTM": 27316,
}


def _layer_counts(spec):
    """Per parametric layer scalar counts, from the allocated tensor shapes."""
    return [sum(prod(s) for s in info.params.values()) for info in describe_layers(spec) if info.params]


def test_expected_counts_are_the_published_totals():
    assert EXPECTED_COUNTS == PUBLISHED


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_zoo_count_matches_published(name):
    assert param_count(build_model(name)) == PUBLISHED[name]


def test_verify_table_all_match():
    rows = verify_param_counts()
    assert [r.name for r in rows] == list(MODEL_NAMES)
    assert all(r.match and not r.hard_failure for r in rows)


def test_verify_flags_corrupted_expectation():
    bad = dict(PUBLISHED, DL=39621, CNN=51000)
    rows = {r.name: r for r in verify_param_counts(bad, allocate=False)}
    assert rows["DL"].hard_failure and rows["DL"].delta == -1
    # a searched model reports its delta rather than failing
    assert not rows["CNN"].match and not rows["CNN"].hard_failure and rows["CNN"].delta == 308


def test_rnn_decomposition():
    assert _layer_counts(build_model("RNN")) == [1248, 2080, 2112, 2080, 132]


def test_cnn_gru_decomposition():
    counts = _layer_counts(build_model("CNN_GRU"))
    assert (sum(counts[:2]), sum(counts[2:5]), sum(counts[5:])) == (7376, 12672, 3300)
    assert 3 * 32 * 90 + 3 * 16 * 50 + 3 * 16 * 34 == 12672


def test_lstm_layer_dims():
    spec = build_model("LSTM")
    assert [layer.units for layer in spec.layers if layer.units] == [16, 16, 64, 32, 4]


def test_hybrid_reconstruction_identities():
    cin = [56, 32, 16]
    units = [32, 16, 16]
    rnn_sum = sum(layer_param_count(recurrent("SimpleRNN", u, seq=False), c) for c, u in zip(cin, units))
    assert PUBLISHED["CNN_LSTM"] - PUBLISHED["CNN_RNN"] == 3 * rnn_sum == 12480
    assert PUBLISHED["CNN_GRU"] - PUBLISHED["CNN_RNN"] == 2 * rnn_sum + 3 * sum(units) == 8512
    counts = {n: param_count(build_model(n)) for n in ("CNN_RNN", "CNN_GRU", "CNN_LSTM")}
    assert counts["CNN_LSTM"] - counts["CNN_RNN"] == 12480
    assert counts["CNN_GRU"] - counts["CNN_RNN"] == 8512


def test_hybrid_recurrent_sequence_flags():
    rec = [layer for layer in build_model("CNN_LSTM").layers if layer.kind == "LSTM"]
    assert [layer.return_sequences for layer in rec] == [True, True, False]


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_dropout_after_hidden_layers_only(name):
    layers = build_model(name).layers
    hidden = [layer for layer in layers[:-1] if layer.kind in ("Dense", "Conv1D", "SimpleRNN", "LSTM", "GRU")]
    assert layers[-1].kind == "Dense"
    assert sum(layer.kind == "Dropout" for layer in layers) == len(hidden)
    for a, b in zip(layers, layers[1:]):
        if b.kind == "Dropout":
            assert a.kind in ("Dense", "Conv1D", "SimpleRNN", "LSTM", "GRU")
            assert b.dropout_rate == 0.3
    assert param_count(build_model(name, dropout_rate=0.0)) == PUBLISHED[name]


def test_unknown_model_rejected():
    with pytest.raises(UnknownModelError, match="Transformer"):
        build_model("Transformer")
    with pytest.raises(UnknownModelError):
        resolve_models("DL,Bogus")
    assert resolve_models("all") == list(MODEL_NAMES)
    assert resolve_models("LSTM, DL") == ["LSTM", "DL"]


def test_cnn_status_and_shape():
    assert STATUS["CNN"] == "searched"
    assert {STATUS[n] for n in ("CNN_RNN", "CNN_GRU", "CNN_LSTM")} == {"reconstructed"}
    spec = build_model("CNN")
    assert spec.layers[0].units == 24 and spec.layers[0].kernel == 4
    p = model_forward(spec, init_params(spec, np.random.default_rng(0)), np.zeros((200, 6)))
    assert p.shape == (4,)


def test_manifest_lists_every_model():
    doc = json.loads(manifest_json())
    assert doc["version"] == 1
    assert [m["name"] for m in doc["models"]] == list(MODEL_NAMES)
    for m in doc["models"]:
        assert m["computed"] == m["expected"] == PUBLISHED[m["name"]]
        assert m["layers"] and m["status"] in ("paper-derivable", "reconstructed", "searched")


# solver

def test_hybrid_target_contains_canonical_config():
    result = solve_conv_architecture(14836, hybrid_family("SimpleRNN"))
    hidden = [c.hidden for c in result.exact]
    assert (64, 32) in hidden
    for c in result.exact:
        assert c.count == 14836 and c.delta == 0
        assert param_count(c.to_spec("h")) == 14836


def test_dense_direct_output_is_the_only_match():
    result = solve_conv_architecture(4804, dense_family(max_hidden=1, min_hidden=0))
    assert [c.hidden for c in result.exact] == [()]
    # h = 4 gives 4824, not 4804, once a hidden layer is forced
    forced = solve_conv_architecture(4804, dense_family(max_hidden=1, min_hidden=1))
    assert len(forced.exact) == 0
    assert forced.nearest[0].hidden == (4,) and forced.nearest[0].delta == 20


def test_impossible_target_gives_no_exact_match():
    result = solve_conv_architecture(3)
    assert len(result.exact) == 0
    assert len(result.nearest) == 5
    deltas = [abs(c.delta) for c in result.nearest]
    assert deltas == sorted(deltas) and deltas[0] > 0
    for c in result.nearest:
        assert param_count(c.to_spec("n")) - 3 == c.delta


def test_empty_space_rejected():
    with pytest.raises(ValueError, match="empty"):
        solve_conv_architecture(100, ListFamily([]))


def test_solver_is_deterministic():
    a = solve_conv_architecture(51308, CnnSearchSpace())
    b = solve_conv_architecture(51308, CnnSearchSpace())
    assert len(a.exact) == len(b.exact)
    np.testing.assert_array_equal(a.exact.counts, b.exact.counts)
    np.testing.assert_array_equal(a.exact.trunks, b.exact.trunks)
    np.testing.assert_array_equal(a.exact.widths, b.exact.widths)


def test_cnn_exact_matches_recount_to_target():
    exact = cnn_solution().exact
    assert len(exact) > 0
    for c in exact:
        assert param_count(c.to_spec("c")) == 51308
    for c in exact[:25]:
        assert init_params(c.to_spec("c"), np.random.default_rng(0)).size == 51308


def test_cnn_matches_sorted_by_layer_count_then_widths():
    exact = cnn_solution().exact
    n_layers = [len(c.trunk) + len(c.hidden) for c in exact[:2000]]
    assert n_layers == sorted(n_layers)
    first = exact[0]
    assert first.hidden == (174, 190)
