"""Layer primitives with hand-derived gradients.

Every array is float64. Forward functions never mutate their parameters;
batchnorm reports its updated running statistics through the cache.
"""
from dataclasses import dataclass

import numpy as np

from intentforge.errors import (
    DegenerateBatchError,
    InvalidDimensionError,
    InvalidRateError,
)

LOGIT_BOUND = 30.0


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def glorot_uniform(rng, fan_out, fan_in):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


@dataclass
class LstmParams:
    """LSTM weights; the four gate blocks are stacked as [input, forget, cell, output]."""

    w_input: np.ndarray  # (4H, I)
    w_hidden: np.ndarray  # (4H, H)
    bias: np.ndarray  # (4H,)

    def __post_init__(self):
        h4 = self.w_hidden.shape[0]
        if (
            h4 % 4
            or self.w_hidden.shape != (h4, h4 // 4)
            or self.w_input.ndim != 2
            or self.w_input.shape[0] != h4
            or self.bias.shape != (h4,)
        ):
            raise InvalidDimensionError(
                f"inconsistent LSTM shapes: w_input {self.w_input.shape}, "
                f"w_hidden {self.w_hidden.shape}, bias {self.bias.shape}"
            )

    @property
    def input_dim(self):
        return self.w_input.shape[1]

    @property
    def hidden_dim(self):
        return self.w_hidden.shape[1]

    @classmethod
    def init(cls, rng, input_dim, hidden_dim):
        bias = np.zeros(4 * hidden_dim)
        bias[hidden_dim:2 * hidden_dim] = 1.0
        return cls(
            w_input=glorot_uniform(rng, 4 * hidden_dim, input_dim),
            w_hidden=glorot_uniform(rng, 4 * hidden_dim, hidden_dim),
            bias=bias,
        )


@dataclass
class BatchNormParams:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.9
    eps: float = 1e-5

    def __post_init__(self):
        dim = self.gamma.shape
        if any(a.shape != dim for a in (self.beta, self.running_mean, self.running_var)):
            raise InvalidDimensionError("batchnorm vectors must share one length")
        if not 0.0 < self.momentum < 1.0:
            raise ValueError(f"momentum must lie in (0, 1), got {self.momentum}")

    @property
    def dim(self):
        return self.gamma.shape[0]

    @classmethod
    def init(cls, dim, momentum=0.9, eps=1e-5):
        return cls(np.ones(dim), np.zeros(dim), np.zeros(dim), np.ones(dim), momentum, eps)


@dataclass
class DenseParams:
    w: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)

    def __post_init__(self):
        if self.w.ndim != 2 or self.b.shape != (self.w.shape[0],):
            raise InvalidDimensionError(
                f"dense weight {self.w.shape} does not match bias {self.b.shape}"
            )

    @classmethod
    def init(cls, rng, in_dim, out_dim):
        return cls(glorot_uniform(rng, out_dim, in_dim), np.zeros(out_dim))


# --------------------------------------------------------------------------
# LSTM
# --------------------------------------------------------------------------


def _as_sequence(inputs):
    xs = np.asarray(inputs, dtype=np.float64)
    if xs.ndim != 3:
        raise InvalidDimensionError(
            f"expected a (time, batch, features) sequence, got shape {xs.shape}"
        )
    return xs


def lstm_forward(params: LstmParams, inputs, h0=None, c0=None, training=False):
    """Run the recurrence over ``inputs`` shaped (T, batch, input_dim).

    Returns ``(hidden_sequence, h_final, c_final, cache)``; ``cache`` is None
    unless ``training`` is set.
    """
    xs = _as_sequence(inputs)
    T, B, I = xs.shape
    H = params.hidden_dim
    if T == 0:
        raise InvalidDimensionError("empty input sequence")
    if I != params.input_dim:
        raise InvalidDimensionError(f"input width {I} != LSTM input_dim {params.input_dim}")
    h = np.zeros((B, H)) if h0 is None else np.asarray(h0, dtype=np.float64)
    c = np.zeros((B, H)) if c0 is None else np.asarray(c0, dtype=np.float64)
    if h.shape != (B, H) or c.shape != (B, H):
        raise InvalidDimensionError(f"initial state must be {(B, H)}")

    hs = np.empty((T + 1, B, H))
    cs = np.empty((T + 1, B, H))
    gates = np.empty((T, B, 4 * H))
    tanh_c = np.empty((T, B, H))
    hs[0], cs[0] = h, c
    w_in_t = params.w_input.T
    w_h_t = params.w_hidden.T
    # input projection for all timesteps at once
    x_proj = xs.reshape(T * B, I) @ w_in_t
    x_proj = x_proj.reshape(T, B, 4 * H) + params.bias
    for t in range(T):
        z = x_proj[t] + hs[t] @ w_h_t
        a = gates[t]
        a[:, :2 * H] = sigmoid(z[:, :2 * H])
        a[:, 2 * H:3 * H] = np.tanh(z[:, 2 * H:3 * H])
        a[:, 3 * H:] = sigmoid(z[:, 3 * H:])
        cs[t + 1] = a[:, H:2 * H] * cs[t] + a[:, :H] * a[:, 2 * H:3 * H]
        tanh_c[t] = np.tanh(cs[t + 1])
        hs[t + 1] = a[:, 3 * H:] * tanh_c[t]

    cache = None
    if training:
        cache = {"params": params, "xs": xs, "hs": hs, "cs": cs, "gates": gates, "tanh_c": tanh_c}
    return hs[1:], hs[-1], cs[-1], cache


def lstm_backward(cache, grad_hidden_sequence):
    """Backpropagation through time.

    ``grad_hidden_sequence`` holds dL/dh_t for every timestep, shaped like the
    forward hidden sequence. Returns ``(param_grads, input_grads)`` where
    ``param_grads`` is keyed like :class:`LstmParams`.
    """
    params = cache["params"]
    xs, hs, cs, gates, tanh_c = (cache[k] for k in ("xs", "hs", "cs", "gates", "tanh_c"))
    T, B, _ = xs.shape
    H = params.hidden_dim
    dhs = np.asarray(grad_hidden_sequence, dtype=np.float64)
    if dhs.shape != (T, B, H):
        raise InvalidDimensionError(f"upstream gradient {dhs.shape} != {(T, B, H)}")

    dz_all = np.empty((T, B, 4 * H))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in reversed(range(T)):
        a = gates[t]
        i, f, g, o = a[:, :H], a[:, H:2 * H], a[:, 2 * H:3 * H], a[:, 3 * H:]
        dh = dhs[t] + dh_next
        dc = dc_next + dh * o * (1.0 - tanh_c[t] ** 2)
        dz = dz_all[t]
        dz[:, :H] = dc * g * i * (1.0 - i)
        dz[:, H:2 * H] = dc * cs[t] * f * (1.0 - f)
        dz[:, 2 * H:3 * H] = dc * i * (1.0 - g ** 2)
        dz[:, 3 * H:] = dh * tanh_c[t] * o * (1.0 - o)
        dc_next = dc * f
        dh_next = dz @ params.w_hidden

    flat_dz = dz_all.reshape(T * B, 4 * H)
    grads = {
        "w_input": flat_dz.T @ xs.reshape(T * B, -1),
        "w_hidden": flat_dz.T @ hs[:-1].reshape(T * B, H),
        "bias": flat_dz.sum(axis=0),
    }
    dx = (flat_dz @ params.w_input).reshape(xs.shape)
    return grads, dx


# --------------------------------------------------------------------------
# Batch normalization
# --------------------------------------------------------------------------


def batchnorm_forward(params: BatchNormParams, x, training=False):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.dim:
        raise InvalidDimensionError(f"batchnorm expects (batch, {params.dim}), got {x.shape}")
    if not training:
        x_hat = (x - params.running_mean) / np.sqrt(params.running_var + params.eps)
        return params.gamma * x_hat + params.beta, None
    if x.shape[0] < 2:
        raise DegenerateBatchError("batchnorm training needs a batch of at least 2 rows")
    mean = x.mean(axis=0)
    var = x.var(axis=0)
    inv_std = 1.0 / np.sqrt(var + params.eps)
    x_hat = (x - mean) * inv_std
    m = params.momentum
    cache = {
        "gamma": params.gamma,
        "x_hat": x_hat,
        "inv_std": inv_std,
        "running_mean": m * params.running_mean + (1.0 - m) * mean,
        "running_var": m * params.running_var + (1.0 - m) * var,
    }
    return params.gamma * x_hat + params.beta, cache


def batchnorm_backward(cache, grad_y):
    """Returns ``(grad_x, grad_gamma, grad_beta)`` through the batch statistics."""
    x_hat, inv_std, gamma = cache["x_hat"], cache["inv_std"], cache["gamma"]
    dy = np.asarray(grad_y, dtype=np.float64)
    if dy.shape != x_hat.shape:
        raise InvalidDimensionError(f"upstream gradient {dy.shape} != {x_hat.shape}")
    n = x_hat.shape[0]
    grad_gamma = (dy * x_hat).sum(axis=0)
    grad_beta = dy.sum(axis=0)
    dx_hat = dy * gamma
    grad_x = (inv_std / n) * (
        n * dx_hat - dx_hat.sum(axis=0) - x_hat * (dx_hat * x_hat).sum(axis=0)
    )
    return grad_x, grad_gamma, grad_beta


def with_running_stats(params: BatchNormParams, cache):
    """New params carrying the running statistics produced by a training pass."""
    return BatchNormParams(
        params.gamma, params.beta, cache["running_mean"], cache["running_var"],
        params.momentum, params.eps,
    )


# --------------------------------------------------------------------------
# Dropout and dense
# --------------------------------------------------------------------------


def dropout_forward(x, rate, rng=None, training=False):
    """Inverted dropout. Returns ``(y, mask)``; the mask already carries the 1/(1-rate) scale."""
    if not 0.0 <= rate < 1.0:
        raise InvalidRateError(f"dropout rate must lie in [0, 1), got {rate}")
    x = np.asarray(x, dtype=np.float64)
    if not training:
        return x, None
    if rate == 0.0:
        mask = np.ones_like(x)
    else:
        mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(mask, grad_y):
    return grad_y * mask


def dense_forward(params: DenseParams, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.w.shape[1]:
        raise InvalidDimensionError(f"dense expects (batch, {params.w.shape[1]}), got {x.shape}")
    return x @ params.w.T + params.b


def dense_backward(params: DenseParams, x, grad_y):
    """Returns ``(grad_x, grad_w, grad_b)``."""
    return grad_y @ params.w, grad_y.T @ x, grad_y.sum(axis=0)
