import numpy as np
import pytest

from intentforge.data import prepare_file
from intentforge.engine import (
    AdamState,
    adam_step,
    init_params,
    model_backward,
    model_forward,
    predict_proba,
    weighted_bce,
    with_running_stats,
)
from intentforge.data.split import class_weights
from intentforge.errors import ConfigError, DivergenceError, InsufficientMemoryError, InvalidDimensionError
from intentforge.synth import GeneratorConfig, generate
from intentforge.trainer import (
    EarlyStopping,
    ReplayMemory,
    TrainConfig,
    apply_exploration_noise,
    epsilon_schedule,
    rng_streams,
    sequential_batches,
    train,
)


@pytest.fixture(scope="module")
def split():
    return prepare_file(generate(GeneratorConfig(n_users=250, seed=5)).csv, seed=5)


def test_epsilon_schedule_values():
    cfg = TrainConfig()
    eps = [epsilon_schedule(e, cfg) for e in range(50)]
    assert eps[0] == 1.0 and eps[49] == 0.01
    assert eps[24] == pytest.approx(0.1049, abs=1e-4)
    assert all(b < a for a, b in zip(eps, eps[1:]))
    assert epsilon_schedule(0, TrainConfig(max_epochs=1, patience=1)) == 1.0
    with pytest.raises(IndexError):
        epsilon_schedule(50, cfg)


def test_replay_memory_evicts_oldest():
    mem = ReplayMemory(2, (1, 3))
    for k in (1, 2, 3):
        mem.remember(np.full((1, 3), k), k % 2)
    xs, ys = mem.contents()
    assert len(mem) == 2 and mem.inserted == 3
    assert xs[:, 0, 0].tolist() == [2.0, 3.0] and ys.tolist() == [0.0, 1.0]
    with pytest.raises(InvalidDimensionError):
        mem.remember(np.zeros((1, 4)), 0)


def test_replay_extend_matches_one_by_one():
    xs = np.arange(7, dtype=float).reshape(7, 1, 1)
    a, b = ReplayMemory(3, (1, 1)), ReplayMemory(3, (1, 1))
    a.extend(xs[:2], np.zeros(2)).extend(xs[2:], np.zeros(5))
    for x in xs:
        b.remember(x, 0)
    assert a.inserted == b.inserted == 7
    assert np.array_equal(a.contents()[0], b.contents()[0])
    assert a.contents()[0].ravel().tolist() == [4.0, 5.0, 6.0]


def test_replay_sampling():
    mem = ReplayMemory(4, (1, 1)).extend(np.arange(4.0).reshape(4, 1, 1), np.zeros(4))
    rng = np.random.default_rng(0)
    with pytest.raises(InsufficientMemoryError):
        mem.sample(5, rng)
    x, _, slots = mem.sample(4, rng)
    assert sorted(slots.tolist()) == [0, 1, 2, 3]
    counts = np.zeros(4)
    draws = 100_000
    for _ in range(draws):
        counts[mem.sample(1, rng)[2]] += 1
    assert np.all(np.abs(counts / draws - 0.25) <= 0.01)
    for _ in range(200):
        s = mem.sample(3, rng)[2]
        assert len(set(s.tolist())) == 3
    a = mem.sample(2, np.random.default_rng(7))[2]
    assert np.array_equal(a, mem.sample(2, np.random.default_rng(7))[2])


def test_exploration_noise_statistics():
    numeric = np.array([1, 2])
    batch = np.zeros((20_000, 1, 4))
    batch[:, 0, 0] = 1.0
    batch[:, 0, 1:3] = 0.5
    out = apply_exploration_noise(batch, 1.0, 0.1, np.random.default_rng(0), numeric)
    assert np.array_equal(out[..., [0, 3]], batch[..., [0, 3]])
    assert abs(out[..., 1:3].std() - 0.1) <= 0.005
    assert out.min() >= 0.0 and out.max() <= 1.0
    assert np.array_equal(apply_exploration_noise(batch, 0.0, 0.1, np.random.default_rng(0), numeric), batch)
    assert np.array_equal(apply_exploration_noise(batch, 1.0, 0.0, np.random.default_rng(0), numeric), batch)
    part = apply_exploration_noise(batch, 0.3, 0.1, np.random.default_rng(1), numeric)
    touched = np.any(part != batch, axis=(1, 2)).mean()
    assert abs(touched - 0.3) < 0.02


def test_exploration_noise_clamps_at_edges():
    batch = np.ones((500, 2, 3))
    out = apply_exploration_noise(batch, 1.0, 0.5, np.random.default_rng(2), [2])
    assert out.max() == 1.0 and out[..., 2].min() >= 0.0


def test_noise_preserves_onehot_groups(split):
    x = split.train.model_input()[:200]
    numeric = split.schema.numeric_columns(split.train.mode)
    out = apply_exploration_noise(x, 1.0, 0.3, np.random.default_rng(0), numeric)
    for group in split.schema.onehot_groups(split.train.mode):
        assert np.array_equal(out[..., group], x[..., group])
        assert np.allclose(out[..., group].sum(axis=-1), 1.0, atol=1e-12)


def test_early_stopping_rule():
    stopper = EarlyStopping(patience=2)
    stops = [stopper.update(e, v) for e, v in enumerate([0.7, 0.6, 0.61, 0.62])]
    assert stops == [False, False, False, True]
    assert stopper.best_epoch == 1 and stopper.best == 0.6
    tie = EarlyStopping(patience=1)
    assert tie.update(0, 0.5) is False and tie.update(1, 0.5) is True


def test_sequential_batches_merge_trailing_singleton():
    assert [len(b) for b in sequential_batches(65, 32)] == [32, 33]
    assert [len(b) for b in sequential_batches(66, 32)] == [32, 32, 2]


def test_plain_minibatch_equivalence(split):
    cfg = TrainConfig(max_epochs=1, patience=1, seed=9, replay_enabled=False, exploration_enabled=False)
    trace = []
    ckpt, _ = train(cfg, split, on_batch=lambda e, b, loss: trace.append(loss))

    init_rng, _, _, dropout_rng = rng_streams(9)
    x, y = split.train.model_input(), split.train.labels
    weights = class_weights(y)
    params, state, oracle = init_params(x.shape[2], init_rng), AdamState(), []
    for ix in sequential_batches(len(y), 32):
        probs, cache = model_forward(params, x[ix], training=True, rng=dropout_rng)
        oracle.append(weighted_bce(probs, y[ix], weights))
        params, state = adam_step(params, model_backward(params, cache, probs, y[ix], weights), state)
        params = with_running_stats(params, cache)
    assert trace == oracle
    for name, arr in params.arrays().items():
        assert np.array_equal(arr, ckpt.params.arrays()[name]), name


def test_training_is_deterministic_and_keeps_best(split):
    cfg = TrainConfig(max_epochs=4, patience=4, seed=2)
    a, ha = train(cfg, split)
    b, hb = train(cfg, split)
    assert [h.val_loss for h in ha] == [h.val_loss for h in hb]
    for name, arr in a.params.arrays().items():
        assert np.array_equal(arr, b.params.arrays()[name])
    assert a.val_loss == min(h.val_loss for h in ha)
    assert len(ha) <= a.best_epoch + cfg.patience + 1
    untrained = init_params(split.schema.state_size, rng_streams(2)[0])
    w = class_weights(split.train.labels)
    initial = weighted_bce(predict_proba(untrained, split.validation.model_input()), split.validation.labels, w)
    assert a.val_loss < initial
    assert ha[a.best_epoch].val_loss == a.val_loss
    val = weighted_bce(predict_proba(a.params, split.validation.model_input()), split.validation.labels, w)
    assert val == a.val_loss
    assert [h.epsilon for h in ha] == [epsilon_schedule(e, cfg) for e in range(4)]
    c, _ = train(TrainConfig(max_epochs=4, patience=4, seed=3), split)
    assert not np.array_equal(a.params.lstm1.w_input, c.params.lstm1.w_input)


def test_divergence_is_reported(split):
    params = init_params(split.schema.state_size, 0)
    params = params.replace({"dense2.w": np.full_like(params.dense2.w, np.nan)})
    with pytest.raises(DivergenceError) as info:
        train(TrainConfig(max_epochs=2, patience=2), split, params=params)
    assert info.value.epoch == 0 and info.value.batch == 0
    assert info.value.history == []


def test_config_validation():
    with pytest.raises(ConfigError, match="train.nope"):
        TrainConfig.from_dict({"nope": 1})
    for bad in ({"epsilon_end": 0.0}, {"epsilon_end": 2.0}, {"patience": 60}, {"batch_size": 1}):
        with pytest.raises(ConfigError):
            TrainConfig(**bad)
    assert TrainConfig().banner() == "lr=0.001 batch=32 epochs=50 patience=10"
