"""Compare hand-derived gradients of the full model with central differences."""
import numpy as np

from intentforge.engine import init_params, model_backward, model_forward, weighted_bce
from intentforge.engine.gradcheck import numeric_gradient, relative_error

rng = np.random.default_rng(0)
params = init_params(state_size=6, seed=0, dropout_rate=0.0)

# a batch of 4 sessions, 3 timesteps each
x = rng.normal(size=(4, 3, 6))
y = np.array([1.0, 0.0, 0.0, 1.0])
weights = (0.6, 3.0)  # the minority class counts five times as much

probs, cache = model_forward(params, x, training=True)
grads = model_backward(params, cache, probs, y, weights)
loss = lambda: weighted_bce(model_forward(params, x, training=True)[0], y, weights)

print(f"loss {loss():.6f}")
# lstm2 reads a single step from a zero state, so its recurrent weights get exactly zero gradient
for name, arr in params.learnable().items():
    idx = rng.choice(arr.size, size=min(10, arr.size), replace=False)  # spot-check 10 entries
    err = relative_error(grads[name], numeric_gradient(loss, arr, indices=idx))
    print(f"{name:<18} {str(arr.shape):<12} rel err {err:.2e}")
