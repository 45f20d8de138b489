"""Bias-corrected Adam over named tensors."""
from dataclasses import dataclass, field

import numpy as np

from intentforge.errors import InvalidDimensionError


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params, grads, state: AdamState, lr=0.001):
    """One Adam update.

    ``params`` is either a mapping of name -> array or any object exposing
    ``learnable()`` and ``replace()`` (such as ``ModelParams``); the same kind
    is returned together with the advanced state. Inputs are not mutated.
    """
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    tensors = params.learnable() if hasattr(params, "learnable") else params
    if set(grads) != set(tensors):
        raise InvalidDimensionError(
            f"gradient names {sorted(set(grads) ^ set(tensors))} do not match parameters"
        )

    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    new_tensors, m_out, v_out = {}, {}, {}
    for name, p in tensors.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != np.shape(p):
            raise InvalidDimensionError(f"{name}: gradient {g.shape} != parameter {np.shape(p)}")
        m = state.m.get(name, 0.0)
        v = state.v.get(name, 0.0)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        new_tensors[name] = p - lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)
        m_out[name] = m
        v_out[name] = v

    new_state = AdamState(m_out, v_out, t, b1, b2, state.eps)
    if hasattr(params, "replace"):
        return params.replace(new_tensors), new_state
    return new_tensors, new_state
