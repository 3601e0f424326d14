"""
LSTM and QK-LSTM classifiers: shapes, masking, gradients and checkpoints.
"""
import math

import numpy as np
import pytest

from molseq.model import (
    CellState,
    ModelConfig,
    ModelKind,
    ShapeError,
    bce_loss,
    check_params,
    copy_params,
    count_parameters,
    embed,
    encode_batch,
    forward_sequence,
    init_params,
    load_checkpoint,
    loss_and_grads,
    lstm_cell_step,
    param_shapes,
    predict,
    predict_proba,
    qk_lstm_cell_step,
    save_checkpoint,
    zero_params,
)
from molseq.tokenize import TokenSeq, pad_batch

VOCAB = 6
SEQS = [TokenSeq((2, 3, 4, 5, 2)), TokenSeq((3, 3)), TokenSeq((5, 4, 2))]
LABELS = np.array([1.0, 0.0, 1.0])


def small_config(kind, n_outputs=1, n_layers=1):
    return ModelConfig(kind, vocab_size=VOCAB, embed_dim=4, hidden_dim=8, n_layers=n_layers, n_outputs=n_outputs)


# Configuration ================================================================


def test_qubit_count_follows_hidden_width():
    assert small_config("qk_lstm").n_qubits == 3
    assert ModelConfig("qk_lstm", vocab_size=5, hidden_dim=12).n_qubits == 4
    assert ModelConfig("qk_lstm", vocab_size=5, hidden_dim=32).n_qubits == 5
    with pytest.raises(ValueError):
        ModelConfig("qk_lstm", vocab_size=5, hidden_dim=8, n_qubits=4)
    with pytest.raises(ValueError):
        ModelConfig("lstm", vocab_size=5, n_qubits=3)


def test_model_kind_parse():
    assert ModelKind.parse("QK-LSTM") is ModelKind.QK_LSTM
    assert ModelKind.parse("lstm").label == "LSTM"


def test_config_dict_round_trip():
    config = small_config("qk_lstm", n_outputs=3)
    assert ModelConfig.from_dict(config.to_dict()) == config


def test_parameter_count_for_lstm():
    params = init_params(small_config("lstm"))
    assert count_parameters(params) == VOCAB * 4 + 4 * (12 * 8 + 8) + 8 + 1


def test_qk_parameter_shapes():
    shapes = param_shapes(small_config("qk_lstm", n_layers=2))
    assert shapes["W_in_forget"] == (12, 3)
    assert shapes["theta_cell"] == (2, 3)
    assert shapes["W_out_output"] == (3, 8)
    assert shapes["head_W"] == (8, 1)


def test_init_is_seeded():
    config = small_config("lstm")
    a, b = init_params(config, seed=3), init_params(config, seed=3)
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert not np.array_equal(a["W_forget"], init_params(config, seed=4)["W_forget"])


def test_check_params_reports_mismatch():
    config = small_config("lstm")
    params = zero_params(config)
    params["b_cell"] = np.zeros(7)
    with pytest.raises(ShapeError):
        check_params(params, config)
    del params["head_b"]
    with pytest.raises(ShapeError):
        check_params(params, config)


# Forward ======================================================================


def test_embed_rows_and_bounds():
    table = np.arange(12.0).reshape(6, 2)
    np.testing.assert_array_equal(embed(TokenSeq((5, 0)), table), [[10.0, 11.0], [0.0, 1.0]])
    with pytest.raises(IndexError):
        embed(TokenSeq((6,)), table)


@pytest.mark.parametrize("kind, step", [("lstm", lstm_cell_step), ("qk_lstm", qk_lstm_cell_step)])
def test_cell_steps_match_sequence_forward(kind, step):
    config = small_config(kind)
    params = init_params(config, seed=1)
    seq = SEQS[0]
    state = CellState.zeros(config.hidden_dim)
    for x in embed(seq, params["embedding"]):
        state = step(x, state, params, config)
    assert state.h.shape == (8,)
    np.testing.assert_allclose(state.h, forward_sequence(seq, params, config), atol=1e-12)


def test_cell_step_checks_kind_and_width():
    config = small_config("lstm")
    params = init_params(config)
    with pytest.raises(ShapeError):
        qk_lstm_cell_step(np.zeros(4), CellState.zeros(8), params, config)
    with pytest.raises(ShapeError):
        lstm_cell_step(np.zeros(5), CellState.zeros(8), params, config)


@pytest.mark.parametrize("kind", ["lstm", "qk_lstm"])
def test_padding_does_not_change_predictions(kind):
    config = small_config(kind)
    params = init_params(config, seed=2)
    tokens, lengths = pad_batch(SEQS)
    batched = predict_proba(params, config, tokens, lengths)

    for row, seq in enumerate(SEQS):
        alone = predict(forward_sequence(seq, params, config), params)
        np.testing.assert_allclose(batched[row], alone, atol=1e-12)

    scrambled = tokens.copy()
    scrambled[1, 2:] = 5
    np.testing.assert_allclose(predict_proba(params, config, scrambled, lengths), batched, atol=1e-12)


def test_multi_output_head_shape():
    config = small_config("lstm", n_outputs=3)
    tokens, lengths = pad_batch(SEQS)
    p = predict_proba(init_params(config), config, tokens, lengths)
    assert p.shape == (3, 3)
    assert np.all((p > 0) & (p < 1))


def test_invalid_batches():
    config = small_config("lstm")
    params = init_params(config)
    with pytest.raises(ValueError):
        forward_sequence(TokenSeq(()), params, config)
    with pytest.raises(IndexError):
        encode_batch(params, config, np.array([[VOCAB]]), np.array([1]))
    with pytest.raises(ShapeError):
        encode_batch(params, config, np.array([[2, 3]]), np.array([3]))


def test_bce_loss_values():
    assert bce_loss([0.5], [1.0]) == pytest.approx(math.log(2))
    assert bce_loss([0.0], [1.0]) == pytest.approx(-math.log(1e-7))
    assert bce_loss([0.9, 0.2], [1.0, 0.0]) == pytest.approx(-(math.log(0.9) + math.log(0.8)) / 2)


# Cell semantics ===============================================================


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def test_zero_parameters_keep_a_zero_state():
    config = small_config("lstm")
    x = np.random.default_rng(0).normal(size=config.embed_dim)
    state = lstm_cell_step(x, CellState.zeros(config.hidden_dim), zero_params(config), config)
    np.testing.assert_array_equal(state.h, np.zeros(config.hidden_dim))
    np.testing.assert_array_equal(state.c, np.zeros(config.hidden_dim))


def test_open_forget_and_closed_input_gates_keep_the_memory():
    config = small_config("lstm")
    params = init_params(config, 3)
    params["W_forget"][:] = 0.0
    params["b_forget"][:] = 50.0
    params["W_input"][:] = 0.0
    params["b_input"][:] = -50.0
    rng = np.random.default_rng(1)
    state = CellState(rng.normal(size=config.hidden_dim), rng.normal(size=config.hidden_dim))
    for _ in range(5):
        new = lstm_cell_step(rng.normal(size=config.embed_dim), state, params, config)
        np.testing.assert_allclose(new.c, state.c, atol=1e-12)
        state = new


def test_lstm_cell_matches_hand_written_equations():
    config = small_config("lstm")
    p = init_params(config, 7)
    for gate in ("forget", "input", "cell", "output"):
        p[f"b_{gate}"] = np.random.default_rng(len(gate)).normal(size=config.hidden_dim)
    rng = np.random.default_rng(2)
    x, h, c = rng.normal(size=4), rng.normal(size=8), rng.normal(size=8)

    v = np.concatenate([x, h])
    f = sigmoid(v @ p["W_forget"] + p["b_forget"])
    i = sigmoid(v @ p["W_input"] + p["b_input"])
    g = np.tanh(v @ p["W_cell"] + p["b_cell"])
    o = sigmoid(v @ p["W_output"] + p["b_output"])
    c_ref = f * c + i * g
    h_ref = o * np.tanh(c_ref)

    state = lstm_cell_step(x, CellState(h, c), p, config)
    np.testing.assert_allclose(state.c, c_ref, atol=1e-12)
    np.testing.assert_allclose(state.h, h_ref, atol=1e-12)


def test_qk_cell_without_rotations_is_an_affine_gated_cell():
    config = small_config("qk_lstm")
    p = init_params(config, 5)
    rng = np.random.default_rng(3)
    for gate in ("forget", "input", "cell", "output"):
        p[f"theta_{gate}"][:] = 0.0
        p[f"W_in_{gate}"][:] = 0.0
        p[f"b_in_{gate}"][:] = 0.0
        p[f"b_out_{gate}"] = rng.normal(size=config.hidden_dim)
    x, h, c = rng.normal(size=4), rng.normal(size=8), rng.normal(size=8)

    ones = np.ones(config.n_qubits)
    z = {gate: ones @ p[f"W_out_{gate}"] + p[f"b_out_{gate}"] for gate in ("forget", "input", "cell", "output")}
    c_ref = sigmoid(z["forget"]) * c + sigmoid(z["input"]) * np.tanh(z["cell"])
    h_ref = sigmoid(z["output"]) * np.tanh(c_ref)

    state = qk_lstm_cell_step(x, CellState(h, c), p, config)
    np.testing.assert_allclose(state.c, c_ref, atol=1e-10)
    np.testing.assert_allclose(state.h, h_ref, atol=1e-10)


def test_qk_cell_with_zero_head_weights_keeps_a_zero_state():
    config = small_config("qk_lstm")
    p = init_params(config, 6)
    for gate in ("forget", "input", "cell", "output"):
        p[f"W_out_{gate}"][:] = 0.0
    state = qk_lstm_cell_step(np.ones(4), CellState.zeros(8), p, config)
    np.testing.assert_allclose(state.h, 0.0, atol=1e-15)
    np.testing.assert_allclose(state.c, 0.0, atol=1e-15)


# Gradients ====================================================================


def numeric_grads(params, config, tokens, lengths, labels, eps=1e-6):
    grads = {}
    for name, value in params.items():
        grad = np.zeros_like(value)
        for idx in np.ndindex(value.shape):
            plus, minus = copy_params(params), copy_params(params)
            plus[name][idx] += eps
            minus[name][idx] -= eps
            grad[idx] = (
                loss_and_grads(plus, config, tokens, lengths, labels)[0]
                - loss_and_grads(minus, config, tokens, lengths, labels)[0]
            ) / (2 * eps)
        grads[name] = grad
    return grads


@pytest.mark.parametrize("kind", ["lstm", "qk_lstm"])
def test_gradients_match_finite_differences(kind):
    config = small_config(kind)
    params = init_params(config, seed=5)
    tokens, lengths = pad_batch(SEQS)

    loss, grads = loss_and_grads(params, config, tokens, lengths, LABELS)
    assert loss == pytest.approx(bce_loss(predict_proba(params, config, tokens, lengths), LABELS[:, None]))

    expected = numeric_grads(params, config, tokens, lengths, LABELS)
    for name in params:
        np.testing.assert_allclose(grads[name], expected[name], rtol=1e-4, atol=1e-7, err_msg=name)


def test_gradients_with_several_outputs_and_layers():
    config = small_config("qk_lstm", n_outputs=2, n_layers=2)
    params = init_params(config, seed=9)
    tokens, lengths = pad_batch(SEQS[:2])
    labels = np.array([[1.0, 0.0], [0.0, 1.0]])
    _, grads = loss_and_grads(params, config, tokens, lengths, labels)
    expected = numeric_grads(params, config, tokens, lengths, labels)
    for name in ("theta_forget", "W_in_cell", "embedding", "head_W"):
        np.testing.assert_allclose(grads[name], expected[name], rtol=1e-4, atol=1e-7, err_msg=name)


# Checkpoints ==================================================================


@pytest.mark.parametrize("kind", ["lstm", "qk_lstm"])
def test_checkpoint_round_trip(kind, tmp_path):
    config = small_config(kind)
    params = init_params(config, seed=11)
    path = save_checkpoint(str(tmp_path / "model.json"), params, config, vocab_sha256="abc", extra={"epoch": 4})

    loaded, loaded_config, meta = load_checkpoint(path)
    assert loaded_config == config
    assert meta == {"vocab_sha256": "abc", "extra": {"epoch": 4}}
    for name, value in params.items():
        assert np.array_equal(loaded[name], value)


def test_load_checkpoint_rejects_other_json(tmp_path):
    path = tmp_path / "other.json"
    path.write_text('{"format": "something-else"}')
    with pytest.raises(ValueError):
        load_checkpoint(str(path))
