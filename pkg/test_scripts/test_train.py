"""
Splitting, schedules, optimizers and the training loop.
"""
import math

import numpy as np
import pandas as pd
import pytest

from molseq.model import ModelConfig, init_params
from molseq.tokenize import TokenSeq
from molseq.train import (
    AdamState,
    NonFiniteError,
    PlateauSchedule,
    SequenceData,
    SplitSpec,
    TrainConfig,
    adam_step,
    clip_gradients,
    evaluate,
    mean_auc,
    sgd_step,
    split_indices,
    split_random,
    split_sizes,
    train_model,
)


def toy_data(n=24, seed=0):
    """Label is 1 when the last token is 2."""
    rng = np.random.default_rng(seed)
    seqs, labels = [], []
    for row in range(n):
        body = tuple(int(t) for t in rng.integers(2, 5, size=int(rng.integers(1, 4))))
        last = 2 if row % 2 == 0 else 3
        seqs.append(TokenSeq(body + (last,)))
        labels.append(1.0 if last == 2 else 0.0)
    return SequenceData(seqs, np.array(labels))


def toy_config(kind="lstm"):
    return ModelConfig(kind, vocab_size=5, embed_dim=4, hidden_dim=4)


# Splitting ====================================================================


@pytest.mark.parametrize("n, sizes", [(100, (80, 10, 10)), (15, (13, 1, 1)), (10, (8, 1, 1)), (29, (25, 2, 2))])
def test_split_sizes(n, sizes):
    assert split_sizes(n, SplitSpec()) == sizes


def test_split_indices_are_a_disjoint_cover():
    train, val, test = split_indices(57, SplitSpec(seed=4))
    combined = np.concatenate([train, val, test])
    assert sorted(combined.tolist()) == list(range(57))
    assert (len(train), len(val), len(test)) == (47, 5, 5)


def test_split_is_deterministic_per_seed():
    first = split_indices(40, SplitSpec(seed=1))
    again = split_indices(40, SplitSpec(seed=1))
    other = split_indices(40, SplitSpec(seed=2))
    assert all(np.array_equal(a, b) for a, b in zip(first, again))
    assert not all(np.array_equal(a, b) for a, b in zip(first, other))


def test_split_rejects_tiny_datasets():
    with pytest.raises(ValueError):
        split_indices(9, SplitSpec())


def test_split_spec_validation():
    with pytest.raises(ValueError):
        SplitSpec((0.5, 0.3, 0.1))
    with pytest.raises(ValueError):
        SplitSpec((1.2, -0.1, -0.1))


def test_split_random_on_frames_and_lists():
    frame = pd.DataFrame({"x": range(20)})
    train, val, test = split_random(frame, SplitSpec(seed=3))
    assert (len(train), len(val), len(test)) == (16, 2, 2)
    assert list(train.index) == list(range(16))
    parts = split_random(list("abcdefghijklmnopqrst"), SplitSpec(seed=3))
    assert sorted(sum(parts, [])) == list("abcdefghijklmnopqrst")


# Schedule =====================================================================


def test_plateau_schedule_stops_and_drops_learning_rate():
    schedule = PlateauSchedule(lr=1e-3, max_epochs=30, es_patience=10, lr_patience=5, lr_factor=0.5)
    scores = [0.7] + [0.6] * 29
    stopped_at = None
    for score in scores:
        _, stop = schedule.update(score)
        if stop:
            stopped_at = schedule.epoch
            break
    assert stopped_at == 11
    assert schedule.lr_drops == [6, 11]
    assert schedule.lr == pytest.approx(2.5e-4)
    assert schedule.best_score == 0.7


def test_equal_score_is_not_an_improvement():
    schedule = PlateauSchedule(lr=1.0)
    assert schedule.update(0.5) == (True, False)
    assert schedule.update(0.5) == (False, False)
    assert schedule.epochs_since_improve == 1


def test_nan_never_improves():
    schedule = PlateauSchedule(lr=1.0, es_patience=3)
    results = [schedule.update(math.nan) for _ in range(3)]
    assert [improved for improved, _ in results] == [False, False, False]
    assert results[-1][1] is True


def test_improvement_resets_both_counters():
    schedule = PlateauSchedule(lr=1.0, es_patience=4, lr_patience=2)
    for score in [0.5, 0.4, 0.4, 0.6, 0.5]:
        schedule.update(score)
    assert schedule.lr_drops == [3]
    assert schedule.epochs_since_improve == 1
    assert schedule.epochs_since_lr_drop == 1


def test_disabled_patience_runs_to_max_epochs():
    schedule = PlateauSchedule(lr=1.0, max_epochs=5, es_patience=None, lr_patience=None)
    stops = [schedule.update(0.1)[1] for _ in range(5)]
    assert stops == [False, False, False, False, True]
    assert schedule.lr == 1.0


def test_train_config_validation():
    assert TrainConfig().to_dict()["optimizer"] == "adam"
    with pytest.raises(ValueError):
        TrainConfig(es_patience=0)
    with pytest.raises(ValueError):
        TrainConfig(lr_factor=1.0)
    with pytest.raises(ValueError):
        TrainConfig(optimizer="rmsprop")


# Optimizers ===================================================================


def test_adam_first_step_is_sign_sized():
    params = {"w": np.array([1.0, -2.0])}
    grads = {"w": np.array([0.3, -5.0])}
    state = AdamState.zeros_like(params)
    new_params, new_state = adam_step(params, grads, state, lr=0.1)
    np.testing.assert_allclose(new_params["w"], [0.9, -1.9], atol=1e-6)
    assert new_state.t == 1
    np.testing.assert_array_equal(params["w"], [1.0, -2.0])
    assert state.t == 0


def test_adam_ignores_zero_gradients_from_a_fresh_state():
    params = {"w": np.array([[0.5, -1.5], [2.0, 0.0]]), "b": np.array([3.0])}
    grads = {k: np.zeros_like(p) for k, p in params.items()}
    state = AdamState.zeros_like(params)
    for _ in range(3):
        params_next, state = adam_step(params, grads, state, lr=0.1)
        for k in params:
            np.testing.assert_array_equal(params_next[k], params[k])
    assert state.t == 3


def test_adam_finds_the_minimum_of_a_convex_quadratic():
    hessian = np.array([[3.0, 1.0], [1.0, 2.0]])
    target = np.array([1.0, -2.0])
    params = {"x": np.zeros(2)}
    state = AdamState.zeros_like(params)
    for step in range(5000):
        grads = {"x": hessian @ (params["x"] - target)}
        params, state = adam_step(params, grads, state, lr=0.05 * 0.998 ** step)
    assert np.max(np.abs(params["x"] - target)) < 1e-4


def test_sgd_step():
    new_params = sgd_step({"w": np.array([1.0])}, {"w": np.array([2.0])}, lr=0.25)
    np.testing.assert_allclose(new_params["w"], [0.5])


def test_non_finite_gradients_raise():
    with pytest.raises(NonFiniteError):
        sgd_step({"w": np.array([1.0])}, {"w": np.array([np.nan])}, lr=0.1)
    params = {"w": np.zeros(1)}
    with pytest.raises(NonFiniteError):
        adam_step(params, {"w": np.array([np.inf])}, AdamState.zeros_like(params), lr=0.1)


def test_clip_gradients_uses_global_norm():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    clipped = clip_gradients(grads, 1.0)
    np.testing.assert_allclose([clipped["a"][0], clipped["b"][0]], [0.6, 0.8])
    assert clip_gradients(grads, 10.0) is grads


# Evaluation ===================================================================


def test_mean_auc_skips_single_class_outputs():
    probs = np.array([[0.1, 0.5], [0.9, 0.5], [0.2, 0.5]])
    labels = np.array([[0, 1], [1, 1], [0, 1]])
    assert mean_auc(probs, labels) == 1.0
    assert math.isnan(mean_auc(probs[:, 1:], labels[:, 1:]))


def test_evaluate_reports_undefined_auc_as_none():
    data = SequenceData([TokenSeq((2,)), TokenSeq((3, 4))], np.array([[1.0, 0.0], [1.0, 1.0]]))
    config = ModelConfig("lstm", vocab_size=5, embed_dim=2, hidden_dim=2, n_outputs=2)
    result = evaluate(init_params(config), config, data)
    assert result["auc"][0] is None
    assert result["auc"][1] in (0.0, 0.5, 1.0)
    assert result["probabilities"].shape == (2, 2)
    assert math.isfinite(result["loss"])


def test_sequence_data_requires_matching_labels():
    with pytest.raises(ValueError):
        SequenceData([TokenSeq((2,))], np.array([1.0, 0.0]))


# Training loop ================================================================


def test_train_model_writes_history(tmp_path):
    data = toy_data()
    config = toy_config()
    cfg = TrainConfig(max_epochs=3, batch_size=8, lr_init=0.01)
    path = tmp_path / "history.csv"
    result = train_model(init_params(config), config, data, data, cfg, history_path=str(path))

    assert result.epochs_run == 3
    assert list(result.history.columns) == ["epoch", "train_loss", "val_auc", "lr"]
    assert 1 <= result.best_epoch <= 3
    assert result.best_val_auc == pytest.approx(result.history["val_auc"].max())
    assert len(pd.read_csv(path)) == 3


def test_train_model_is_deterministic():
    data = toy_data()
    config = toy_config("qk_lstm")
    cfg = TrainConfig(max_epochs=2, batch_size=6, lr_init=0.01, seed=5)
    first = train_model(init_params(config, 1), config, data, data, cfg)
    second = train_model(init_params(config, 1), config, data, data, cfg)
    pd.testing.assert_frame_equal(first.history, second.history)
    assert all(np.array_equal(first.params[k], second.params[k]) for k in first.params)


def test_single_class_validation_stops_at_patience():
    data = toy_data()
    val = SequenceData(data.seqs[:4], np.ones(4))
    config = toy_config()
    cfg = TrainConfig(max_epochs=10, es_patience=3, batch_size=8)
    result = train_model(init_params(config), config, data, val, cfg)
    assert result.epochs_run == 3
    assert result.best_epoch == 0
    assert math.isnan(result.best_val_auc)


def test_empty_training_split_raises():
    config = toy_config()
    empty = SequenceData([], np.zeros((0, 1)))
    with pytest.raises(ValueError):
        train_model(init_params(config), config, empty, toy_data(), TrainConfig())


@pytest.mark.slow
@pytest.mark.parametrize(
    "kind, hidden, epochs, floor",
    [("lstm", 32, 200, 0.99), ("qk_lstm", 8, 300, 0.95)],
)
def test_models_overfit_twenty_separable_samples(kind, hidden, epochs, floor):
    data = toy_data(n=20)
    config = ModelConfig(kind, vocab_size=5, embed_dim=4, hidden_dim=hidden)
    if kind == "qk_lstm":
        assert config.n_qubits == 3
    cfg = TrainConfig(max_epochs=epochs, es_patience=None, batch_size=8, lr_init=0.05)
    result = train_model(init_params(config, 0), config, data, data, cfg)
    assert result.epochs_run <= epochs
    assert result.best_val_auc >= floor
