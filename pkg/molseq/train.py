"""
Training protocol: random split, minibatch epochs, early stopping on
validation ROC-AUC and learning-rate reduction on plateau.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from molseq.metrics import roc_auc, UndefinedAucError
from molseq.model import ModelConfig, Params, bce_loss, copy_params, loss_and_grads, predict_proba
from molseq.storage import write_frame_csv
from molseq.tokenize import TokenSeq, pad_batch

logger = logging.getLogger(__name__)

MIN_ROWS = 10
HISTORY_COLUMNS = ["epoch", "train_loss", "val_auc", "lr"]


class NonFiniteError(RuntimeError):
    def __init__(self, message: str, epoch: int = 0, batch_index: int = 0):
        self.epoch = epoch
        self.batch_index = batch_index
        super().__init__(f"{message} (epoch {epoch}, batch {batch_index})")


class Optimizer(str, Enum):
    ADAM = "adam"
    SGD = "sgd"


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 30
    es_patience: Optional[int] = 10
    lr_patience: Optional[int] = 5
    lr_factor: float = 0.5
    lr_init: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    optimizer: Optimizer = Optimizer.ADAM
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "optimizer", Optimizer(self.optimizer))
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")
        for name in ("es_patience", "lr_patience"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ValueError(f"{name} must be at least 1 (or None to disable)")
        if not 0 < self.lr_factor < 1:
            raise ValueError("lr_factor must be in (0, 1)")
        if self.lr_init <= 0 or self.batch_size < 1:
            raise ValueError("lr_init and batch_size must be positive")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")

    def to_dict(self) -> dict:
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        data["optimizer"] = self.optimizer.value
        return data


@dataclass(frozen=True)
class SplitSpec:
    fractions: Tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "fractions", tuple(float(f) for f in self.fractions))
        if len(self.fractions) != 3 or any(f < 0 for f in self.fractions):
            raise ValueError("fractions must be three non-negative numbers")
        if not math.isclose(sum(self.fractions), 1.0, abs_tol=1e-9):
            raise ValueError("split fractions must sum to 1")


@dataclass
class SequenceData:
    """Index sequences with an (N, n_outputs) label matrix."""

    seqs: List[TokenSeq]
    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.labels.ndim == 1:
            self.labels = self.labels[:, None]
        if len(self.seqs) != self.labels.shape[0]:
            raise ValueError("one label row per sequence is required")

    def __len__(self) -> int:
        return len(self.seqs)

    def batch(self, indices: Sequence[int]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        tokens, lengths = pad_batch([self.seqs[i] for i in indices])
        return tokens, lengths, self.labels[list(indices)]


# Splitting ====================================================================


def split_sizes(n: int, spec: SplitSpec) -> Tuple[int, int, int]:
    n_val = int(math.floor(n * spec.fractions[1]))
    n_test = int(math.floor(n * spec.fractions[2]))
    return n - n_val - n_test, n_val, n_test


def split_indices(n: int, spec: SplitSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    if n < MIN_ROWS:
        raise ValueError(f"dataset too small to split: {n} rows (need at least {MIN_ROWS})")
    n_train, n_val, _ = split_sizes(n, spec)
    order = np.random.default_rng(spec.seed).permutation(n)
    train = np.sort(order[:n_train])
    val = np.sort(order[n_train:n_train + n_val])
    test = np.sort(order[n_train + n_val:])
    return train, val, test


def split_random(dataset, spec: SplitSpec):
    """Disjoint (train, val, test) cover of a DataFrame or sequence; deterministic per seed."""
    train, val, test = split_indices(len(dataset), spec)
    if isinstance(dataset, pd.DataFrame):
        return tuple(dataset.iloc[idx].reset_index(drop=True) for idx in (train, val, test))
    return tuple([dataset[i] for i in idx] for idx in (train, val, test))


# Schedules ====================================================================


@dataclass
class PlateauSchedule:
    """Early-stopping and learning-rate counters driven by validation scores.

    A score counts as an improvement only when strictly greater than the best
    so far; NaN never improves.
    """

    lr: float
    max_epochs: int = 30
    es_patience: Optional[int] = 10
    lr_patience: Optional[int] = 5
    lr_factor: float = 0.5
    epoch: int = 0
    best_score: float = -math.inf
    epochs_since_improve: int = 0
    epochs_since_lr_drop: int = 0
    lr_drops: List[int] = field(default_factory=list)

    @classmethod
    def from_config(cls, config: TrainConfig) -> "PlateauSchedule":
        return cls(
            lr=config.lr_init,
            max_epochs=config.max_epochs,
            es_patience=config.es_patience,
            lr_patience=config.lr_patience,
            lr_factor=config.lr_factor,
        )

    def update(self, score: float) -> Tuple[bool, bool]:
        """Record one epoch's score; returns (improved, stop)."""
        self.epoch += 1
        improved = bool(score > self.best_score)
        if improved:
            self.best_score = float(score)
            self.epochs_since_improve = 0
            self.epochs_since_lr_drop = 0
        else:
            self.epochs_since_improve += 1
            self.epochs_since_lr_drop += 1
            if self.lr_patience is not None and self.epochs_since_lr_drop >= self.lr_patience:
                self.lr *= self.lr_factor
                self.epochs_since_lr_drop = 0
                self.lr_drops.append(self.epoch)
                logger.warning(f"⚠️ Validation plateau at epoch {self.epoch}: learning rate -> {self.lr:.3g}")
        stop = self.epoch >= self.max_epochs or (
            self.es_patience is not None and self.epochs_since_improve >= self.es_patience
        )
        return improved, stop


# Optimizers ===================================================================


@dataclass
class AdamState:
    m: Params
    v: Params
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Params) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()}, {k: np.zeros_like(p) for k, p in params.items()})


def _check_finite(grads: Params, epoch: int = 0, batch_index: int = 0):
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient in {name}", epoch, batch_index)


def adam_step(
    params: Params, grads: Params, state: AdamState, lr: float,
    beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
) -> Tuple[Params, AdamState]:
    """Bias-corrected Adam update; inputs are not modified."""
    _check_finite(grads)
    t = state.t + 1
    new_params, m, v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        m[name] = beta1 * state.m[name] + (1 - beta1) * g
        v[name] = beta2 * state.v[name] + (1 - beta2) * g * g
        m_hat = m[name] / (1 - beta1 ** t)
        v_hat = v[name] / (1 - beta2 ** t)
        new_params[name] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new_params, AdamState(m, v, t)


def sgd_step(params: Params, grads: Params, lr: float) -> Params:
    _check_finite(grads)
    return {name: p - lr * grads[name] for name, p in params.items()}


def clip_gradients(grads: Params, max_norm: float) -> Params:
    """Scale all gradients together so their global L2 norm is at most max_norm."""
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm <= max_norm or norm == 0.0:
        return grads
    scale = max_norm / norm
    return {name: g * scale for name, g in grads.items()}


# Evaluation and training loop =================================================


def predict_data(params: Params, config: ModelConfig, data: SequenceData, batch_size: int = 256) -> np.ndarray:
    out = []
    for start in range(0, len(data), batch_size):
        tokens, lengths, _ = data.batch(range(start, min(start + batch_size, len(data))))
        out.append(predict_proba(params, config, tokens, lengths))
    if not out:
        return np.zeros((0, config.n_outputs))
    return np.concatenate(out, axis=0)


def mean_auc(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean ROC-AUC over outputs with both classes; NaN when none qualify."""
    scores = []
    for k in range(labels.shape[1]):
        try:
            scores.append(roc_auc(probs[:, k], labels[:, k]))
        except UndefinedAucError:
            continue
    return float(np.mean(scores)) if scores else math.nan


def evaluate(params: Params, config: ModelConfig, data: SequenceData) -> Dict[str, object]:
    """Loss, per-output ROC-AUC (None when undefined) and mean AUC on one split."""
    probs = predict_data(params, config, data)
    per_output = []
    for k in range(data.labels.shape[1]):
        try:
            per_output.append(roc_auc(probs[:, k], data.labels[:, k]))
        except UndefinedAucError:
            per_output.append(None)
    defined = [a for a in per_output if a is not None]
    return {
        "loss": bce_loss(probs, data.labels) if len(data) else math.nan,
        "auc": per_output,
        "mean_auc": float(np.mean(defined)) if defined else math.nan,
        "probabilities": probs,
    }


@dataclass
class TrainResult:
    params: Params
    history: pd.DataFrame
    best_epoch: int
    best_val_auc: float
    epochs_run: int


def train_model(
    params: Params,
    config: ModelConfig,
    train_data: SequenceData,
    val_data: SequenceData,
    train_cfg: TrainConfig,
    history_path: Optional[str] = None,
    progress: bool = False,
) -> TrainResult:
    """Train with minibatches and return the best checkpoint by validation ROC-AUC.

    Raises:
        NonFiniteError: when a batch loss is not finite.
    """
    if len(train_data) == 0:
        raise ValueError("training split is empty")
    rng = np.random.default_rng(train_cfg.seed)
    schedule = PlateauSchedule.from_config(train_cfg)
    adam = AdamState.zeros_like(params)
    best_params = copy_params(params)
    best_epoch = 0
    history: List[dict] = []
    warned_undefined = False

    epochs = tqdm(range(1, train_cfg.max_epochs + 1), desc="epochs", disable=not progress, leave=False)
    for epoch in epochs:
        lr = schedule.lr
        order = rng.permutation(len(train_data))
        total, seen = 0.0, 0
        for batch_index, start in enumerate(range(0, len(order), train_cfg.batch_size)):
            idx = order[start:start + train_cfg.batch_size]
            tokens, lengths, labels = train_data.batch(idx)
            loss, grads = loss_and_grads(params, config, tokens, lengths, labels)
            if not math.isfinite(loss):
                raise NonFiniteError("non-finite training loss", epoch, batch_index)
            if train_cfg.clip_norm is not None:
                grads = clip_gradients(grads, train_cfg.clip_norm)
            _check_finite(grads, epoch, batch_index)
            if train_cfg.optimizer is Optimizer.ADAM:
                params, adam = adam_step(params, grads, adam, lr, train_cfg.beta1, train_cfg.beta2, train_cfg.eps)
            else:
                params = sgd_step(params, grads, lr)
            total += loss * len(idx)
            seen += len(idx)

        val_auc = mean_auc(predict_data(params, config, val_data), val_data.labels) if len(val_data) else math.nan
        if math.isnan(val_auc) and not warned_undefined:
            logger.warning("⚠️ Validation ROC-AUC undefined (single-class split); epochs cannot improve")
            warned_undefined = True
        history.append({"epoch": epoch, "train_loss": total / seen, "val_auc": val_auc, "lr": lr})

        improved, stop = schedule.update(val_auc)
        if improved:
            best_params = copy_params(params)
            best_epoch = epoch
        epochs.set_postfix(loss=f"{total / seen:.4f}", val_auc=f"{val_auc:.3f}")
        if stop:
            break

    if best_epoch == 0:
        best_params = copy_params(params)
    frame = pd.DataFrame(history, columns=HISTORY_COLUMNS)
    if history_path:
        write_frame_csv(history_path, frame)
    logger.info(
        f"Training finished after {len(history)} epochs; best val ROC-AUC {schedule.best_score:.4f} at epoch {best_epoch}"
    )
    best = schedule.best_score if best_epoch else math.nan
    return TrainResult(best_params, frame, best_epoch, best, len(history))
