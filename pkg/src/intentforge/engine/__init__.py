from intentforge.engine.adam import AdamState, adam_step
from intentforge.engine.layers import (
    BatchNormParams,
    DenseParams,
    LstmParams,
    batchnorm_backward,
    batchnorm_forward,
    dense_backward,
    dense_forward,
    dropout_backward,
    dropout_forward,
    lstm_backward,
    lstm_forward,
    sigmoid,
)
from intentforge.engine.model import (
    ModelParams,
    init_params,
    model_backward,
    model_forward,
    predict_proba,
    weighted_bce,
    with_running_stats,
    zero_params,
)

__all__ = [
    "AdamState", "adam_step",
    "BatchNormParams", "DenseParams", "LstmParams",
    "batchnorm_backward", "batchnorm_forward", "dense_backward", "dense_forward",
    "dropout_backward", "dropout_forward", "lstm_backward", "lstm_forward", "sigmoid",
    "ModelParams", "init_params", "model_backward", "model_forward", "predict_proba",
    "weighted_bce", "with_running_stats", "zero_params",
]
