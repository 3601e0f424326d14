"""
Embedding + LSTM / QK-LSTM sequence classifiers with exact gradients.

Parameters are a flat dict of named float64 arrays. Row-vector convention:
the gate input v = [x_t; h_{t-1}] is multiplied on the left, v @ W.

In the QK-LSTM every gate pre-activation is produced by
    a = v @ W_in + b_in      (n angles)
    e = kernel circuit(a)    (n expectations)
    z = e @ W_out + b_out    (h values)
with independent parameters per gate.
"""
from __future__ import annotations

import base64
import logging
import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.special import expit

from molseq.qsim import KernelCircuitSpec, backprop_grad, run_kernel_circuit
from molseq.storage import read_json, write_json
from molseq.tokenize import TokenSeq, pad_batch

logger = logging.getLogger(__name__)

Params = Dict[str, np.ndarray]

GATES = ("forget", "input", "cell", "output")
EPS = 1e-7
CHECKPOINT_FORMAT = "molseq-checkpoint"
CHECKPOINT_VERSION = 1


class ShapeError(ValueError):
    """Tensor or sequence shape inconsistent with the model configuration."""


class ModelKind(str, Enum):
    LSTM = "lstm"
    QK_LSTM = "qk_lstm"

    @classmethod
    def parse(cls, value: str) -> "ModelKind":
        return cls(value.replace("-", "_").lower())

    @property
    def label(self) -> str:
        return "LSTM" if self is ModelKind.LSTM else "QK-LSTM"


def qubits_for_hidden(hidden_dim: int) -> int:
    return max(1, math.ceil(math.log2(hidden_dim)))


@dataclass(frozen=True)
class ModelConfig:
    kind: ModelKind
    vocab_size: int
    embed_dim: int = 64
    hidden_dim: int = 32
    n_qubits: Optional[int] = None
    n_layers: int = 1
    n_outputs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        for name in ("vocab_size", "embed_dim", "hidden_dim", "n_outputs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.kind is ModelKind.QK_LSTM:
            expected = qubits_for_hidden(self.hidden_dim)
            if self.n_qubits is None:
                object.__setattr__(self, "n_qubits", expected)
            elif self.n_qubits != expected:
                raise ValueError(f"n_qubits must be ceil(log2({self.hidden_dim})) = {expected}")
            if self.n_layers < 0:
                raise ValueError("n_layers must be non-negative")
        elif self.n_qubits is not None:
            raise ValueError("n_qubits only applies to qk_lstm models")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["kind"] = self.kind.value
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(**data)


@dataclass
class CellState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden_dim: int, batch: Optional[int] = None) -> "CellState":
        shape = (hidden_dim,) if batch is None else (batch, hidden_dim)
        return cls(np.zeros(shape), np.zeros(shape))


def param_shapes(config: ModelConfig) -> Dict[str, Tuple[int, ...]]:
    d, h = config.embed_dim, config.hidden_dim
    shapes: Dict[str, Tuple[int, ...]] = {"embedding": (config.vocab_size, d)}
    for g in GATES:
        if config.kind is ModelKind.LSTM:
            shapes[f"W_{g}"] = (d + h, h)
            shapes[f"b_{g}"] = (h,)
        else:
            n = config.n_qubits
            shapes[f"W_in_{g}"] = (d + h, n)
            shapes[f"b_in_{g}"] = (n,)
            shapes[f"theta_{g}"] = (config.n_layers, n)
            shapes[f"W_out_{g}"] = (n, h)
            shapes[f"b_out_{g}"] = (h,)
    shapes["head_W"] = (h, config.n_outputs)
    shapes["head_b"] = (config.n_outputs,)
    return shapes


def init_params(config: ModelConfig, seed: int = 0) -> Params:
    """Seeded initialization.

    Weight matrices (the embedding table included) ~ U(-1/sqrt(rows), 1/sqrt(rows)),
    circuit angles ~ U(0, 2*pi), biases zero.
    """
    rng = np.random.default_rng(seed)
    params: Params = {}
    for name, shape in param_shapes(config).items():
        if name.startswith("theta_"):
            params[name] = rng.uniform(0.0, 2 * np.pi, size=shape)
        elif name.startswith("b") or name == "head_b":
            params[name] = np.zeros(shape)
        else:
            bound = 1.0 / math.sqrt(shape[0])
            params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def zero_params(config: ModelConfig) -> Params:
    return {name: np.zeros(shape) for name, shape in param_shapes(config).items()}


def check_params(params: Params, config: ModelConfig):
    shapes = param_shapes(config)
    missing = sorted(set(shapes) - set(params))
    if missing:
        raise ShapeError(f"missing parameter tensors: {', '.join(missing)}")
    for name, shape in shapes.items():
        if params[name].shape != shape:
            raise ShapeError(f"{name} has shape {params[name].shape}, expected {shape}")


def count_parameters(params: Params) -> int:
    return int(sum(p.size for p in params.values()))


def _circuit(params: Params, config: ModelConfig, gate: str) -> KernelCircuitSpec:
    return KernelCircuitSpec(config.n_qubits, config.n_layers, params[f"theta_{gate}"])


# Forward ======================================================================


def embed(seq: TokenSeq, table: np.ndarray) -> np.ndarray:
    """Row lookup, shape (len(seq), d)."""
    indices = np.asarray(seq.indices, dtype=np.int64)
    if indices.size and (indices.min() < 0 or indices.max() >= table.shape[0]):
        raise IndexError(f"token index outside embedding table of {table.shape[0]} rows")
    return table[indices]


def _gate_preactivations(v: np.ndarray, params: Params, config: ModelConfig, cache: Optional[dict]):
    z = {}
    for g in GATES:
        if config.kind is ModelKind.LSTM:
            z[g] = v @ params[f"W_{g}"] + params[f"b_{g}"]
        else:
            a = v @ params[f"W_in_{g}"] + params[f"b_in_{g}"]
            e = run_kernel_circuit(a, _circuit(params, config, g))
            z[g] = e @ params[f"W_out_{g}"] + params[f"b_out_{g}"]
            if cache is not None:
                cache[f"a_{g}"] = a
                cache[f"e_{g}"] = e
    return z


def _cell(x: np.ndarray, h: np.ndarray, c: np.ndarray, params: Params, config: ModelConfig, cache=None):
    v = np.concatenate([x, h], axis=-1)
    z = _gate_preactivations(v, params, config, cache)
    f = expit(z["forget"])
    i = expit(z["input"])
    g = np.tanh(z["cell"])
    o = expit(z["output"])
    c_new = f * c + i * g
    h_new = o * np.tanh(c_new)
    if cache is not None:
        cache.update(v=v, f=f, i=i, g=g, o=o, c_prev=c, c=c_new)
    return h_new, c_new


def _check_step(x: np.ndarray, state: CellState, config: ModelConfig):
    if x.shape[-1] != config.embed_dim or state.h.shape[-1] != config.hidden_dim:
        raise ShapeError("input or state width does not match the model configuration")


def lstm_cell_step(x_t: np.ndarray, state: CellState, params: Params, config: ModelConfig) -> CellState:
    if config.kind is not ModelKind.LSTM:
        raise ShapeError("lstm_cell_step needs an lstm configuration")
    _check_step(x_t, state, config)
    h, c = _cell(np.atleast_2d(x_t), np.atleast_2d(state.h), np.atleast_2d(state.c), params, config)
    if np.ndim(x_t) == 1:
        return CellState(h[0], c[0])
    return CellState(h, c)


def qk_lstm_cell_step(x_t: np.ndarray, state: CellState, params: Params, config: ModelConfig) -> CellState:
    if config.kind is not ModelKind.QK_LSTM:
        raise ShapeError("qk_lstm_cell_step needs a qk_lstm configuration")
    _check_step(x_t, state, config)
    h, c = _cell(np.atleast_2d(x_t), np.atleast_2d(state.h), np.atleast_2d(state.c), params, config)
    if np.ndim(x_t) == 1:
        return CellState(h[0], c[0])
    return CellState(h, c)


def _validate_batch(tokens: np.ndarray, lengths: np.ndarray, config: ModelConfig):
    if tokens.ndim != 2 or lengths.shape != (tokens.shape[0],):
        raise ShapeError("expected an index matrix (B, T) and one length per row")
    if np.any(lengths < 1):
        raise ValueError("empty sequence")
    if np.any(lengths > tokens.shape[1]):
        raise ShapeError("length longer than the padded batch")
    if tokens.size and (tokens.min() < 0 or tokens.max() >= config.vocab_size):
        raise IndexError(f"token index outside vocabulary of size {config.vocab_size}")


def encode_batch(
    params: Params, config: ModelConfig, tokens: np.ndarray, lengths: np.ndarray, caches: Optional[list] = None
) -> np.ndarray:
    """Final hidden states (B, h); recurrence stops at each row's true length."""
    tokens = np.asarray(tokens, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64)
    _validate_batch(tokens, lengths, config)
    batch = tokens.shape[0]
    h = np.zeros((batch, config.hidden_dim))
    c = np.zeros((batch, config.hidden_dim))
    for t in range(int(lengths.max())):
        active = (t < lengths)[:, None]
        cache = {} if caches is not None else None
        x = params["embedding"][tokens[:, t]]
        h_new, c_new = _cell(x, h, c, params, config, cache)
        h = np.where(active, h_new, h)
        c = np.where(active, c_new, c)
        if caches is not None:
            cache["tokens"] = tokens[:, t]
            cache["active"] = active
            caches.append(cache)
    return h


def forward_sequence(seq: TokenSeq, params: Params, config: ModelConfig) -> np.ndarray:
    """h_T for one sequence."""
    if len(seq) == 0:
        raise ValueError("empty sequence")
    tokens, lengths = pad_batch([seq])
    return encode_batch(params, config, tokens, lengths)[0]


def predict(h_t: np.ndarray, params: Params) -> np.ndarray:
    """Sigmoid head probabilities."""
    return expit(h_t @ params["head_W"] + params["head_b"])


def predict_proba(params: Params, config: ModelConfig, tokens: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    return predict(encode_batch(params, config, tokens, lengths), params)


def bce_loss(p, y) -> float:
    """Mean binary cross-entropy with p clamped to [1e-7, 1 - 1e-7]."""
    p = np.clip(np.asarray(p, dtype=np.float64), EPS, 1 - EPS)
    y = np.asarray(y, dtype=np.float64)
    return float(np.mean(-(y * np.log(p) + (1 - y) * np.log(1 - p))))


# Backward =====================================================================


def _backward_gates(cache: dict, dz: Dict[str, np.ndarray], params: Params, config: ModelConfig, grads: Params):
    dv = np.zeros_like(cache["v"])
    for g in GATES:
        if config.kind is ModelKind.LSTM:
            grads[f"W_{g}"] += cache["v"].T @ dz[g]
            grads[f"b_{g}"] += dz[g].sum(axis=0)
            dv += dz[g] @ params[f"W_{g}"].T
        else:
            grads[f"W_out_{g}"] += cache[f"e_{g}"].T @ dz[g]
            grads[f"b_out_{g}"] += dz[g].sum(axis=0)
            de = dz[g] @ params[f"W_out_{g}"].T
            d_theta, da = backprop_grad(cache[f"a_{g}"], _circuit(params, config, g), de)
            grads[f"theta_{g}"] += d_theta
            grads[f"W_in_{g}"] += cache["v"].T @ da
            grads[f"b_in_{g}"] += da.sum(axis=0)
            dv += da @ params[f"W_in_{g}"].T
    return dv


def loss_and_grads(
    params: Params, config: ModelConfig, tokens: np.ndarray, lengths: np.ndarray, labels: np.ndarray
) -> Tuple[float, Params]:
    """Mean BCE over the batch and its exact gradient by backpropagation through time."""
    labels = np.asarray(labels, dtype=np.float64).reshape(len(lengths), config.n_outputs)
    caches: List[dict] = []
    h_final = encode_batch(params, config, tokens, lengths, caches)
    logits = h_final @ params["head_W"] + params["head_b"]
    p = expit(logits)
    loss = bce_loss(p, labels)

    pc = np.clip(p, EPS, 1 - EPS)
    inside = (p > EPS) & (p < 1 - EPS)
    d_pc = (-labels / pc + (1 - labels) / (1 - pc)) / labels.size
    d_logits = d_pc * inside * p * (1 - p)

    grads = {name: np.zeros_like(value) for name, value in params.items()}
    grads["head_W"] = h_final.T @ d_logits
    grads["head_b"] = d_logits.sum(axis=0)

    dh = d_logits @ params["head_W"].T
    dc = np.zeros_like(dh)
    d = config.embed_dim
    for cache in reversed(caches):
        active = cache["active"]
        dh_step = np.where(active, dh, 0.0)
        dc_step = np.where(active, dc, 0.0)
        f, i, g, o = cache["f"], cache["i"], cache["g"], cache["o"]
        tanh_c = np.tanh(cache["c"])
        dc_total = dc_step + dh_step * o * (1 - tanh_c ** 2)
        dz = {
            "forget": dc_total * cache["c_prev"] * f * (1 - f),
            "input": dc_total * g * i * (1 - i),
            "cell": dc_total * i * (1 - g ** 2),
            "output": dh_step * tanh_c * o * (1 - o),
        }
        dv = _backward_gates(cache, dz, params, config, grads)
        np.add.at(grads["embedding"], cache["tokens"], dv[:, :d])
        dh = dv[:, d:] + np.where(active, 0.0, dh)
        dc = dc_total * f + np.where(active, 0.0, dc)

    return loss, grads


# Checkpoints ==================================================================


def _encode_tensor(array: np.ndarray) -> dict:
    data = np.ascontiguousarray(array, dtype="<f8").tobytes()
    return {"shape": list(array.shape), "dtype": "<f8", "data": base64.b64encode(data).decode("ascii")}


def _decode_tensor(payload: dict) -> np.ndarray:
    raw = base64.b64decode(payload["data"])
    return np.frombuffer(raw, dtype=payload.get("dtype", "<f8")).astype(np.float64).reshape(payload["shape"])


def save_checkpoint(path: str, params: Params, config: ModelConfig, vocab_sha256: str = "", extra: Optional[dict] = None) -> str:
    """JSON container: config echo, vocab hash and base64 little-endian float64 tensors."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": config.to_dict(),
        "vocab_sha256": vocab_sha256,
        "tensors": {name: _encode_tensor(value) for name, value in params.items()},
        "extra": extra or {},
    }
    return write_json(path, payload)


def load_checkpoint(path: str) -> Tuple[Params, ModelConfig, dict]:
    payload = read_json(path)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a molseq checkpoint")
    config = ModelConfig.from_dict(payload["config"])
    params = {name: _decode_tensor(t) for name, t in payload["tensors"].items()}
    check_params(params, config)
    meta = {"vocab_sha256": payload.get("vocab_sha256", ""), "extra": payload.get("extra", {})}
    return params, config, meta


def copy_params(params: Params) -> Params:
    return {name: value.copy() for name, value in params.items()}
