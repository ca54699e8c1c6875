"""Specs, parameter counting, whole-model passes, gradients and weight files."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anklehar.nn import (
    GradientCheckReport,
    LayerSpec,
    ModelSpec,
    SpecError,
    WeightFileError,
    gradient_check,
    init_params,
    load_weights,
    loss_and_gradients,
    model_backward,
    model_forward,
    param_count,
    save_weights,
    zero_params,
)
from anklehar.nn.gradcheck import layer_suites, random_instance
from anklehar.nn.serialize import WeightMismatchError
from anklehar.nn.spec import conv1d, dense, dropout, flatten, layer_param_count, recurrent
from anklehar.zoo import MODEL_NAMES, build_model


def _rng(seed=0):
    return np.random.default_rng(seed)


# spec validation

def test_softmax_only_on_final_layer():
    with pytest.raises(SpecError, match="softmax"):
        ModelSpec("bad", (flatten(), dense(8, "softmax"), dense(4, "softmax")))


def test_final_layer_must_be_softmax_dense():
    with pytest.raises(SpecError):
        ModelSpec("bad", (flatten(), dense(4, "relu")))


def test_dropout_rate_must_be_below_one():
    with pytest.raises(SpecError):
        dropout(1.0)


def test_recurrent_must_declare_return_sequences():
    with pytest.raises(SpecError, match="return_sequences"):
        LayerSpec("LSTM", units=4)


def test_shape_propagation_failure_names_layer():
    with pytest.raises(SpecError, match="layer 0"):
        ModelSpec("bad", (dense(4, "softmax"),))  # dense on a (200, 6) input


def test_spec_round_trips_through_dict():
    spec = build_model("CNN_GRU")
    assert ModelSpec.from_dict(spec.to_dict()) == spec
    assert spec.fingerprint() == ModelSpec.from_dict(spec.to_dict()).fingerprint()


# parameter counting

def test_per_layer_formulas():
    assert layer_param_count(dense(4), 1200) == 4804
    assert layer_param_count(recurrent("LSTM", 16, seq=True), 6) == 1472
    assert layer_param_count(recurrent("GRU", 32, seq=True), 6) == 3840
    assert layer_param_count(recurrent("GRU", 32, seq=False), 32) == 6336
    assert layer_param_count(conv1d(24, 4), 6) == 600


@given(st.integers(1, 64), st.integers(1, 64))
def test_recurrent_count_identities(cin, u):
    rnn = layer_param_count(recurrent("SimpleRNN", u, seq=False), cin)
    assert layer_param_count(recurrent("LSTM", u, seq=False), cin) == 4 * rnn
    assert layer_param_count(recurrent("GRU", u, seq=False), cin) == 3 * rnn + 3 * u


@pytest.mark.parametrize("name, expected", [("Shallow_NN", 4804), ("DL", 39620), ("GRU", 14500)])
def test_param_count_examples(name, expected):
    assert param_count(build_model(name)) == expected


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_allocated_scalars_equal_structural_count(name):
    spec = build_model(name)
    assert init_params(spec, _rng()).size == param_count(spec)


# model forward

def test_shallow_zero_weights_uniform_output():
    spec = build_model("Shallow_NN")
    p = model_forward(spec, zero_params(spec), _rng().normal(size=(200, 6)))
    np.testing.assert_array_equal(p, 0.25)


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_every_zoo_model_outputs_a_distribution(name):
    spec = build_model(name)
    params = init_params(spec, _rng(1))
    x = _rng(2).normal(size=(3, 200, 6))
    p = model_forward(spec, params, x)
    assert p.shape == (3, 4)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, rtol=0, atol=1e-12)
    assert np.all((p > 0) & (p < 1))
    np.testing.assert_array_equal(model_forward(spec, params, x), p)


def test_training_forward_reproducible_with_seed():
    spec = build_model("DL")
    params = init_params(spec, _rng(3))
    x = _rng(4).normal(size=(5, 200, 6))
    a = model_forward(spec, params, x, training=True, rng=_rng(9))
    b = model_forward(spec, params, x, training=True, rng=_rng(9))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, model_forward(spec, params, x))


def test_params_mismatch_rejected():
    with pytest.raises(SpecError):
        model_forward(build_model("DL"), init_params(build_model("Shallow_NN"), _rng()), np.zeros((200, 6)))


# gradients

def test_non_one_hot_target_rejected():
    spec = build_model("Shallow_NN")
    with pytest.raises(ValueError, match="one-hot"):
        model_backward(spec, zero_params(spec), np.zeros((200, 6)), np.array([0.5, 0.5, 0.0, 0.0]))


def test_dense_only_gradient_matches_closed_form():
    spec = ModelSpec("lin", (dense(3, "softmax"),), input_shape=(5,), num_classes=3)
    params = init_params(spec, _rng(5))
    params["0.b"] = _rng(6).normal(size=3)
    x = _rng(7).normal(size=(4, 5))
    y = np.eye(3)[[0, 2, 1, 2]]
    loss, p, grads = loss_and_gradients(spec, params, x, y, training=False)
    np.testing.assert_allclose(grads["0.W"], x.T @ (p - y) / 4, rtol=0, atol=1e-15)
    np.testing.assert_allclose(grads["0.b"], (p - y).mean(axis=0), rtol=0, atol=1e-15)
    np.testing.assert_allclose(loss, -np.mean(np.log(p[np.arange(4), y.argmax(1)])), rtol=1e-15)


def test_logit_gradient_vanishes_as_prediction_becomes_exact():
    spec = ModelSpec("lin", (dense(3, "softmax"),), input_shape=(2,), num_classes=3)
    params = zero_params(spec)
    x = np.array([[1.0, 0.0]])
    for scale, bound in ((10.0, 1e-4), (40.0, 1e-16)):
        params["0.W"] = np.array([[scale, -scale, -scale], [0.0, 0.0, 0.0]])
        grads = model_backward(spec, params, x, np.array([[1.0, 0.0, 0.0]]), training=False)
        assert np.abs(grads["0.b"]).max() < bound


def test_gradcheck_dense_5_to_3():
    spec = layer_suites()["dense"]
    params, x, y = random_instance(spec, _rng(8))
    report = gradient_check(spec, params, x, y, tolerance=1e-6, step=1e-5)
    assert report.passed, report.max_rel_error
    assert report.step == 1e-5


def test_gradcheck_lstm_6_to_4_ten_steps():
    spec = layer_suites()["lstm"]
    assert spec.input_shape == (10, 6) and spec.layers[0].units == 4
    params, x, y = random_instance(spec, _rng(9))
    assert gradient_check(spec, params, x, y).passed


def test_gradcheck_detects_corrupted_gradient():
    spec = layer_suites()["gru"]
    params, x, y = random_instance(spec, _rng(10))
    grads = model_backward(spec, params, x, y, training=False)
    grads["0.U"] = grads["0.U"] * 1.1
    report = gradient_check(spec, params, x, y, analytic=grads)
    assert not report.passed
    assert report.max_rel_error["0.U"] > 0.05
    assert report.max_rel_error["2.W"] < 1e-6


def test_gradcheck_report_pass_rule():
    assert GradientCheckReport({"a": 1e-7, "b": 5e-7}, 1e-6, 1e-5).passed
    assert not GradientCheckReport({"a": 1e-7, "b": 1e-6}, 1e-6, 1e-5).passed


@pytest.mark.parametrize("name", ["CNN", "CNN_LSTM"])
def test_gradcheck_sampled_entries_of_zoo_model(name):
    # full zoo models are too large to probe exhaustively; sample entries per tensor
    spec = build_model(name, dropout_rate=0.0)
    params = init_params(spec, _rng(11))
    x = _rng(12).normal(size=(1, 200, 6))
    report = gradient_check(spec, params, x, np.eye(4)[[2]], max_entries=3, rng=_rng(13))
    assert report.passed, report.max_rel_error


# weight files

def test_save_load_forward_bit_identical():
    spec = build_model("CNN_GRU")
    params = init_params(spec, _rng(14))
    blob = save_weights(params, spec)
    loaded = load_weights(blob, spec)
    assert loaded.equal(params)
    x = _rng(15).normal(size=(2, 200, 6))
    np.testing.assert_array_equal(model_forward(spec, loaded, x), model_forward(spec, params, x))
    assert save_weights(loaded, spec) == blob


def test_truncated_weights_rejected():
    spec = build_model("LSTM")
    blob = save_weights(init_params(spec, _rng()), spec)
    for cut in (3, 40, len(blob) // 2, len(blob) - 1):
        with pytest.raises(WeightFileError):
            load_weights(blob[:cut], spec)


def test_flipped_byte_rejected():
    spec = build_model("LSTM")
    blob = bytearray(save_weights(init_params(spec, _rng()), spec))
    blob[100] ^= 0xFF
    with pytest.raises(WeightFileError):
        load_weights(bytes(blob), spec)


def test_shallow_weights_into_dl_spec_rejected():
    shallow = build_model("Shallow_NN")
    blob = save_weights(init_params(shallow, _rng()), shallow)
    with pytest.raises(WeightMismatchError):
        load_weights(blob, build_model("DL"))


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_weight_round_trip_arbitrary_dense_models(width, depth, seed):
    layers = [flatten()] + [dense(width, "tanh") for _ in range(depth)] + [dense(4, "softmax")]
    spec = ModelSpec("mlp", tuple(layers), input_shape=(3, 2))
    params = init_params(spec, _rng(seed))
    assert load_weights(save_weights(params, spec), spec).equal(params)
