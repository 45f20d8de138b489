"""The purchase-intent network: LSTM(64) -> BN -> Dropout -> LSTM(32) -> BN ->
Dropout -> Dense(16, ReLU) -> BN -> Dense(1, sigmoid).

Each LSTM hands its final hidden state to the next block, so the second LSTM
always sees a length-1 sequence.
"""
import dataclasses
from dataclasses import dataclass

import numpy as np

from intentforge.engine import layers
from intentforge.engine.layers import (
    BatchNormParams,
    DenseParams,
    LstmParams,
)
from intentforge.errors import InvalidDimensionError, InvalidRateError, StaleCacheError

LSTM1_UNITS = 64
LSTM2_UNITS = 32
DENSE_UNITS = 16
PROB_CLIP = 1e-7

_LAYERS = ("lstm1", "bn1", "lstm2", "bn2", "dense1", "bn3", "dense2")
_LEARNABLE = {
    LstmParams: ("w_input", "w_hidden", "bias"),
    BatchNormParams: ("gamma", "beta"),
    DenseParams: ("w", "b"),
}
_BUFFERS = ("running_mean", "running_var")


@dataclass
class ModelParams:
    lstm1: LstmParams
    bn1: BatchNormParams
    lstm2: LstmParams
    bn2: BatchNormParams
    dense1: DenseParams
    bn3: BatchNormParams
    dense2: DenseParams
    dropout_rate: float = 0.2

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidRateError(f"dropout rate must lie in [0, 1), got {self.dropout_rate}")
        chain = [
            (self.lstm1.hidden_dim, LSTM1_UNITS),
            (self.bn1.dim, LSTM1_UNITS),
            (self.lstm2.input_dim, LSTM1_UNITS),
            (self.lstm2.hidden_dim, LSTM2_UNITS),
            (self.bn2.dim, LSTM2_UNITS),
            (self.dense1.w.shape, (DENSE_UNITS, LSTM2_UNITS)),
            (self.bn3.dim, DENSE_UNITS),
            (self.dense2.w.shape, (1, DENSE_UNITS)),
        ]
        for got, want in chain:
            if got != want:
                raise InvalidDimensionError(f"layer dimension {got} breaks the 64-32-16-1 chain (want {want})")

    @property
    def state_size(self):
        return self.lstm1.input_dim

    def learnable(self):
        """Trainable tensors keyed ``"<layer>.<field>"`` (views, not copies)."""
        out = {}
        for name in _LAYERS:
            layer = getattr(self, name)
            for field in _LEARNABLE[type(layer)]:
                out[f"{name}.{field}"] = getattr(layer, field)
        return out

    def arrays(self):
        """Every tensor, trainable or not, in a stable order."""
        out = self.learnable()
        for name in ("bn1", "bn2", "bn3"):
            for field in _BUFFERS:
                out[f"{name}.{field}"] = getattr(getattr(self, name), field)
        return out

    def replace(self, tensors):
        """Copy of self with some tensors swapped; ``tensors`` is keyed as in :meth:`arrays`."""
        updates = {}
        for key, value in tensors.items():
            layer, field = key.split(".")
            updates.setdefault(layer, {})[field] = np.asarray(value, dtype=np.float64)
        kwargs = {}
        for layer, fields in updates.items():
            kwargs[layer] = dataclasses.replace(getattr(self, layer), **fields)
        return dataclasses.replace(self, **kwargs)

    def copy(self):
        return self.replace({k: v.copy() for k, v in self.arrays().items()})

    def batchnorm_settings(self):
        return {name: (getattr(self, name).momentum, getattr(self, name).eps) for name in ("bn1", "bn2", "bn3")}

    @classmethod
    def from_arrays(cls, arrays, dropout_rate=0.2, bn_settings=None):
        bn_settings = bn_settings or {}
        a = {k: np.array(v, dtype=np.float64) for k, v in arrays.items()}

        def bn(name):
            momentum, eps = bn_settings.get(name, (0.9, 1e-5))
            return BatchNormParams(
                a[f"{name}.gamma"], a[f"{name}.beta"],
                a[f"{name}.running_mean"], a[f"{name}.running_var"], momentum, eps,
            )

        def lstm(name):
            return LstmParams(a[f"{name}.w_input"], a[f"{name}.w_hidden"], a[f"{name}.bias"])

        return cls(
            lstm1=lstm("lstm1"), bn1=bn("bn1"), lstm2=lstm("lstm2"), bn2=bn("bn2"),
            dense1=DenseParams(a["dense1.w"], a["dense1.b"]), bn3=bn("bn3"),
            dense2=DenseParams(a["dense2.w"], a["dense2.b"]),
            dropout_rate=dropout_rate,
        )


def init_params(state_size, seed, dropout_rate=0.2):
    """Glorot-uniform weights, zero biases (forget gate 1.0), identity batchnorm."""
    if state_size < 1:
        raise InvalidDimensionError(f"state_size must be >= 1, got {state_size}")
    rng = np.random.default_rng(seed)
    return ModelParams(
        lstm1=LstmParams.init(rng, state_size, LSTM1_UNITS),
        bn1=BatchNormParams.init(LSTM1_UNITS),
        lstm2=LstmParams.init(rng, LSTM1_UNITS, LSTM2_UNITS),
        bn2=BatchNormParams.init(LSTM2_UNITS),
        dense1=DenseParams.init(rng, LSTM2_UNITS, DENSE_UNITS),
        bn3=BatchNormParams.init(DENSE_UNITS),
        dense2=DenseParams.init(rng, DENSE_UNITS, 1),
        dropout_rate=dropout_rate,
    )


def zero_params(state_size, dropout_rate=0.2):
    """All weights, biases and betas zero; gammas one. Predicts exactly 0.5."""
    p = init_params(state_size, 0, dropout_rate)
    return p.replace({k: np.zeros_like(v) for k, v in p.learnable().items() if not k.endswith("gamma")})


def _batch_major(batch):
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, None, :]
    if x.ndim != 3:
        raise InvalidDimensionError(f"expected (batch, time, state_size) input, got {x.shape}")
    return x


def model_forward(params: ModelParams, batch, training=False, rng=None):
    """Purchase probability per row of ``batch`` shaped (batch, time, state_size).

    A 2-D batch is read as a single timestep. Returns ``(probs, cache)``.
    """
    x = _batch_major(batch)
    if x.shape[2] != params.state_size:
        raise InvalidDimensionError(f"feature width {x.shape[2]} != state_size {params.state_size}")
    rate = params.dropout_rate
    seq = np.swapaxes(x, 0, 1)

    _, h1, _, c_l1 = layers.lstm_forward(params.lstm1, seq, training=training)
    n1, c_bn1 = layers.batchnorm_forward(params.bn1, h1, training)
    d1, m1 = layers.dropout_forward(n1, rate, rng, training)
    _, h2, _, c_l2 = layers.lstm_forward(params.lstm2, d1[None], training=training)
    n2, c_bn2 = layers.batchnorm_forward(params.bn2, h2, training)
    d2, m2 = layers.dropout_forward(n2, rate, rng, training)
    pre1 = layers.dense_forward(params.dense1, d2)
    r1 = np.maximum(pre1, 0.0)
    n3, c_bn3 = layers.batchnorm_forward(params.bn3, r1, training)
    logits = layers.dense_forward(params.dense2, n3)[:, 0]
    logits = np.clip(logits, -layers.LOGIT_BOUND, layers.LOGIT_BOUND)
    probs = layers.sigmoid(logits)

    if not training:
        return probs, None
    cache = {
        "batch": x.shape[0],
        "lstm1": c_l1, "bn1": c_bn1, "mask1": m1,
        "lstm2": c_l2, "bn2": c_bn2, "mask2": m2,
        "d2": d2, "pre1": pre1, "bn3": c_bn3, "n3": n3, "logits": logits,
    }
    return probs, cache


def with_running_stats(params: ModelParams, cache):
    """Fold the batchnorm statistics of a training pass into the running averages."""
    return dataclasses.replace(
        params,
        bn1=layers.with_running_stats(params.bn1, cache["bn1"]),
        bn2=layers.with_running_stats(params.bn2, cache["bn2"]),
        bn3=layers.with_running_stats(params.bn3, cache["bn3"]),
    )


def _check_pair(probs, labels):
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if probs.ndim != 1 or probs.shape != labels.shape:
        raise InvalidDimensionError(f"probs {probs.shape} and labels {labels.shape} must be equal-length vectors")
    return probs, labels


def sample_weights(labels, class_weights):
    w0, w1 = class_weights
    return np.where(np.asarray(labels) > 0.5, w1, w0)


def weighted_bce(probs, labels, class_weights=(1.0, 1.0)):
    """Mean class-weighted binary cross-entropy; probabilities clipped to [1e-7, 1-1e-7]."""
    probs, labels = _check_pair(probs, labels)
    if probs.size == 0:
        raise InvalidDimensionError("empty batch")
    p = np.clip(probs, PROB_CLIP, 1.0 - PROB_CLIP)
    w = sample_weights(labels, class_weights)
    return float(np.mean(-w * (labels * np.log(p) + (1.0 - labels) * np.log1p(-p))))


def model_backward(params: ModelParams, cache, probs, labels, class_weights=(1.0, 1.0)):
    """Gradient of :func:`weighted_bce` with respect to every learnable tensor.

    The loss derivative is taken before probability clipping (dL/dlogit =
    w * (p - y) / n), which is what the clip converges to away from saturation.
    """
    if cache is None:
        raise StaleCacheError("model_backward needs the cache of a training-mode forward pass")
    probs, labels = _check_pair(probs, labels)
    n = probs.shape[0]
    if n != cache["batch"]:
        raise StaleCacheError(f"cache holds a batch of {cache['batch']}, got {n} labels")

    w = sample_weights(labels, class_weights)
    d_logit = w * (probs - labels) / n
    d_logit = d_logit * (np.abs(cache["logits"]) < layers.LOGIT_BOUND)
    d_logit = d_logit[:, None]

    grads = {}
    d_n3, grads["dense2.w"], grads["dense2.b"] = layers.dense_backward(params.dense2, cache["n3"], d_logit)
    d_r1, grads["bn3.gamma"], grads["bn3.beta"] = layers.batchnorm_backward(cache["bn3"], d_n3)
    d_pre1 = d_r1 * (cache["pre1"] > 0.0)
    d_d2, grads["dense1.w"], grads["dense1.b"] = layers.dense_backward(params.dense1, cache["d2"], d_pre1)
    d_n2 = layers.dropout_backward(cache["mask2"], d_d2)
    d_h2, grads["bn2.gamma"], grads["bn2.beta"] = layers.batchnorm_backward(cache["bn2"], d_n2)

    g_l2, d_in2 = layers.lstm_backward(cache["lstm2"], d_h2[None])
    for k, v in g_l2.items():
        grads[f"lstm2.{k}"] = v
    d_n1 = layers.dropout_backward(cache["mask1"], d_in2[0])
    d_h1, grads["bn1.gamma"], grads["bn1.beta"] = layers.batchnorm_backward(cache["bn1"], d_n1)

    T = cache["lstm1"]["xs"].shape[0]
    d_hs1 = np.zeros((T,) + d_h1.shape)
    d_hs1[-1] = d_h1
    g_l1, _ = layers.lstm_backward(cache["lstm1"], d_hs1)
    for k, v in g_l1.items():
        grads[f"lstm1.{k}"] = v

    return {k: grads[k] for k in params.learnable()}


def predict_proba(params: ModelParams, x, batch_size=4096):
    """Inference-mode probabilities, evaluated in chunks."""
    x = _batch_major(x)
    out = [model_forward(params, x[i:i + batch_size])[0] for i in range(0, x.shape[0], batch_size)]
    return np.concatenate(out) if out else np.zeros(0)
