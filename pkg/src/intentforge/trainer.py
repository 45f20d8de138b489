"""Replay/epsilon training loop for the purchase-intent model.

Each epoch the replay memory is refilled from the training set and
``ceil(N / batch_size)`` batches are sampled from it uniformly. With
probability epsilon a sampled session has Gaussian noise added to its numeric
features (one-hot groups are left alone). Epsilon decays exponentially from
``epsilon_start`` to ``epsilon_end`` over ``max_epochs``. Parameters with the
lowest validation loss are retained; training stops after ``patience`` epochs
without improvement.
"""
import logging
import math
import time
from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np

from intentforge.data.split import class_weights
from intentforge.engine import (
    AdamState,
    ModelParams,
    adam_step,
    init_params,
    model_backward,
    model_forward,
    predict_proba,
    weighted_bce,
    with_running_stats,
)
from intentforge.errors import (
    ConfigError,
    DivergenceError,
    InsufficientMemoryError,
    InvalidDimensionError,
)

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 10
    dropout_rate: float = 0.2
    epsilon_start: float = 1.0
    epsilon_end: float = 0.01
    noise_sigma: float = 0.1
    replay_capacity: Optional[int] = None  # None: size of the training set
    seed: int = 0
    replay_enabled: bool = True
    exploration_enabled: bool = True
    class_weighting: bool = True
    max_sequence_length: Optional[int] = None

    def __post_init__(self):
        if not 0.0 < self.epsilon_end <= self.epsilon_start <= 1.0:
            raise ConfigError("train.epsilon_end/epsilon_start: need 0 < end <= start <= 1")
        if self.max_epochs < 1:
            raise ConfigError(f"train.max_epochs: must be >= 1, got {self.max_epochs}")
        if not 0 <= self.patience <= self.max_epochs:
            raise ConfigError(f"train.patience: must lie in [0, max_epochs], got {self.patience}")
        if self.batch_size < 2:
            raise ConfigError(f"train.batch_size: must be >= 2, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError("train.learning_rate: must be positive")
        if self.noise_sigma < 0:
            raise ConfigError("train.noise_sigma: must be >= 0")
        if self.replay_capacity is not None and self.replay_capacity < self.batch_size:
            raise ConfigError("train.replay_capacity: must hold at least one batch")

    @classmethod
    def from_dict(cls, d, prefix="train"):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"{prefix}.{unknown[0]}: unknown key")
        return cls(**d)

    def banner(self):
        return (f"lr={self.learning_rate:g} batch={self.batch_size} "
                f"epochs={self.max_epochs} patience={self.patience}")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    epsilon: float
    seconds: float


@dataclass
class Checkpoint:
    params: ModelParams
    schema_digest: str
    config: TrainConfig
    best_epoch: int
    val_loss: float
    schema: Optional[dict] = None


def epsilon_schedule(epoch, config: TrainConfig):
    """Exponential decay hitting ``epsilon_start`` at epoch 0 and ``epsilon_end`` at the last epoch."""
    if not 0 <= epoch < config.max_epochs:
        raise IndexError(f"epoch {epoch} outside [0, {config.max_epochs})")
    if config.max_epochs == 1 or epoch == 0:
        return config.epsilon_start
    if epoch == config.max_epochs - 1:
        return config.epsilon_end
    ratio = config.epsilon_end / config.epsilon_start
    return config.epsilon_start * ratio ** (epoch / (config.max_epochs - 1))


class ReplayMemory:
    """Fixed-capacity ring buffer of (features, label) samples; the oldest entry is evicted first."""

    def __init__(self, capacity, sample_shape):
        if capacity < 1:
            raise ValueError("replay capacity must be >= 1")
        self.capacity = int(capacity)
        self.sample_shape = tuple(sample_shape)
        self._x = np.zeros((self.capacity,) + self.sample_shape)
        self._y = np.zeros(self.capacity)
        self.inserted = 0

    def __len__(self):
        return min(self.inserted, self.capacity)

    def remember(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.sample_shape:
            raise InvalidDimensionError(f"sample shape {x.shape} != memory shape {self.sample_shape}")
        slot = self.inserted % self.capacity
        self._x[slot] = x
        self._y[slot] = y
        self.inserted += 1
        return self

    def extend(self, xs, ys):
        xs = np.asarray(xs, dtype=np.float64)
        if xs.shape[1:] != self.sample_shape:
            raise InvalidDimensionError(f"sample shape {xs.shape[1:]} != memory shape {self.sample_shape}")
        n = len(xs)
        if n >= self.capacity:
            # only the newest `capacity` survive; keep slot positions consistent with one-by-one inserts
            self.inserted += n - self.capacity
            xs, ys, n = xs[-self.capacity:], ys[-self.capacity:], self.capacity
        slots = (self.inserted + np.arange(n)) % self.capacity
        self._x[slots] = xs
        self._y[slots] = ys
        self.inserted += n
        return self

    def contents(self):
        """Stored samples, oldest first."""
        n = len(self)
        slots = (self.inserted - n + np.arange(n)) % self.capacity
        return self._x[slots], self._y[slots]

    def sample(self, batch_size, rng):
        """Uniform draw without replacement inside one batch. Returns ``(x, y, slots)``."""
        n = len(self)
        if n < batch_size:
            raise InsufficientMemoryError(f"memory holds {n} samples, batch needs {batch_size}")
        slots = rng.choice(n, size=batch_size, replace=False)
        return self._x[slots], self._y[slots], slots


def apply_exploration_noise(batch, epsilon, noise_sigma, rng, numeric_columns):
    """Perturb whole samples with probability ``epsilon``.

    Selected samples get N(0, sigma^2) added to the ``numeric_columns`` of the
    last axis, then those columns are re-clamped to [0, 1]. Other columns are
    never touched.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    out = np.array(batch, dtype=np.float64, copy=True)
    cols = np.asarray(numeric_columns, dtype=np.int64)
    if epsilon == 0.0 or noise_sigma == 0.0 or cols.size == 0:
        return out
    chosen = np.flatnonzero(rng.random(out.shape[0]) < epsilon)
    if chosen.size:
        sub = out[chosen][..., cols]
        sub = np.clip(sub + rng.normal(0.0, noise_sigma, sub.shape), 0.0, 1.0)
        idx = np.ix_(chosen, *[np.arange(s) for s in out.shape[1:-1]], cols)
        out[idx] = sub
    return out


class EarlyStopping:
    def __init__(self, patience):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = -1
        self.wait = 0

    def update(self, epoch, val_loss):
        """Record an epoch; returns True once ``patience`` epochs passed without improvement."""
        if val_loss < self.best:
            self.best, self.best_epoch, self.wait = val_loss, epoch, 0
        else:
            self.wait += 1
        return self.wait >= self.patience


def rng_streams(seed):
    """Independent generators for (init, sampling, noise, dropout)."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)]


def sequential_batches(n, batch_size):
    """Contiguous index blocks; a trailing single row joins the previous block."""
    starts = list(range(0, n, batch_size))
    blocks = [np.arange(s, min(s + batch_size, n)) for s in starts]
    if len(blocks) > 1 and len(blocks[-1]) == 1:
        tail = blocks.pop()
        blocks[-1] = np.concatenate([blocks[-1], tail])
    return blocks


def train(config: TrainConfig, split, params: Optional[ModelParams] = None, on_batch=None):
    """Fit the model on ``split.train``; select by ``split.validation`` loss.

    Returns ``(Checkpoint, history)``. ``on_batch(epoch, batch, loss)`` is
    called after every optimizer step when given.
    """
    max_len = config.max_sequence_length
    x_train = split.train.model_input(max_len)
    y_train = split.train.labels
    x_val = split.validation.model_input(x_train.shape[1] if split.train.mode == "sequence" else None)
    y_val = split.validation.labels
    n = len(y_train)
    if n < config.batch_size:
        raise InsufficientMemoryError(f"training set has {n} rows, fewer than batch_size={config.batch_size}")
    if len(y_val) == 0:
        raise InvalidDimensionError("validation split is empty")

    weights = class_weights(y_train) if config.class_weighting else (1.0, 1.0)
    init_rng, sample_rng, noise_rng, dropout_rng = rng_streams(config.seed)
    if params is None:
        params = init_params(x_train.shape[2], init_rng, config.dropout_rate)
    numeric = split.schema.numeric_columns(split.train.mode)
    memory = ReplayMemory(config.replay_capacity or n, x_train.shape[1:]) if config.replay_enabled else None
    adam = AdamState()
    stopper = EarlyStopping(config.patience)
    best_params = params
    history = []
    log.info("training on %d sessions, class weights %.4f/%.4f, %s", n, *weights, config.banner())

    for epoch in range(config.max_epochs):
        started = time.perf_counter()
        eps = epsilon_schedule(epoch, config)
        if memory is not None:
            memory.extend(x_train, y_train)
            batches = (memory.sample(config.batch_size, sample_rng)[:2]
                       for _ in range(math.ceil(n / config.batch_size)))
        else:
            batches = ((x_train[ix], y_train[ix]) for ix in sequential_batches(n, config.batch_size))

        losses = []
        for b, (xb, yb) in enumerate(batches):
            if config.exploration_enabled:
                xb = apply_exploration_noise(xb, eps, config.noise_sigma, noise_rng, numeric)
            probs, cache = model_forward(params, xb, training=True, rng=dropout_rng)
            loss = weighted_bce(probs, yb, weights)
            if not math.isfinite(loss):
                err = DivergenceError(epoch, b, loss)
                err.history = history
                raise err
            grads = model_backward(params, cache, probs, yb, weights)
            params, adam = adam_step(params, grads, adam, config.learning_rate)
            params = with_running_stats(params, cache)
            losses.append(loss)
            if on_batch is not None:
                on_batch(epoch, b, loss)

        val_loss = weighted_bce(predict_proba(params, x_val), y_val, weights)
        if not math.isfinite(val_loss):
            err = DivergenceError(epoch, len(losses), val_loss)
            err.history = history
            raise err
        stats = EpochStats(epoch, float(np.mean(losses)), val_loss, eps, time.perf_counter() - started)
        history.append(stats)
        log.info("epoch %d train=%.5f val=%.5f eps=%.4f (%.1fs)",
                 epoch, stats.train_loss, val_loss, eps, stats.seconds)
        improved = val_loss < stopper.best
        stop = stopper.update(epoch, val_loss)
        if improved:
            best_params = params
        if stop:
            log.info("early stop after epoch %d; best epoch %d", epoch, stopper.best_epoch)
            break

    ckpt = Checkpoint(
        params=best_params,
        schema_digest=split.schema.digest,
        config=config,
        best_epoch=stopper.best_epoch,
        val_loss=stopper.best,
        schema=split.schema.to_dict(),
    )
    return ckpt, history


def history_csv(history):
    lines = ["epoch,train_loss,val_loss,epsilon,seconds"]
    lines += [f"{h.epoch},{h.train_loss!r},{h.val_loss!r},{h.epsilon!r},{h.seconds:.3f}" for h in history]
    return "\n".join(lines) + "\n"


def config_dict(config: TrainConfig):
    return asdict(config)
