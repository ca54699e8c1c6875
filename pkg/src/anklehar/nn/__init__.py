"""Numpy neural-network engine: layer kernels, model specs, gradients."""

from .functional import (
    conv1d_forward,
    dense_forward,
    dropout_apply,
    global_maxpool1d_forward,
    gru_forward,
    lstm_forward,
    maxpool1d_forward,
    simple_rnn_forward,
    softmax,
)
from .gradcheck import GradientCheckReport, gradient_check
from .model import (
    ParameterBundle,
    init_params,
    loss_and_gradients,
    model_backward,
    model_forward,
    predict_proba,
    zero_params,
)
from .serialize import WeightFileError, load_weights, save_weights
from .spec import LayerSpec, ModelSpec, ShapeError, SpecError, param_count
