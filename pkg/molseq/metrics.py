"""
ROC-AUC and summary statistics.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.stats import rankdata

logger = logging.getLogger(__name__)


class UndefinedAucError(ValueError):
    """ROC-AUC requested for labels containing a single class."""


@dataclass(frozen=True, eq=False)
class ScoredLabels:
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64).ravel()
        labels = np.asarray(self.labels).ravel()
        if scores.shape != labels.shape:
            raise ValueError("scores and labels must have the same length")
        if not np.all(np.isin(labels, (0, 1))):
            raise ValueError("labels must be 0 or 1")
        if not np.all(np.isfinite(scores)):
            raise ValueError("scores must be finite")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels.astype(np.int64))

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[float, int]]) -> "ScoredLabels":
        pairs = list(pairs)
        return cls(np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs]))

    @property
    def n_pos(self) -> int:
        return int(self.labels.sum())

    @property
    def n_neg(self) -> int:
        return int(self.labels.size - self.labels.sum())

    def require_both_classes(self):
        if self.n_pos == 0 or self.n_neg == 0:
            raise UndefinedAucError(
                f"ROC-AUC is undefined for a single class ({self.n_pos} positive, {self.n_neg} negative)"
            )


Scored = Union[ScoredLabels, Sequence[Tuple[float, int]]]


def _scored(data: Scored, labels=None) -> ScoredLabels:
    if isinstance(data, ScoredLabels):
        return data
    if labels is not None:
        return ScoredLabels(data, labels)
    return ScoredLabels.from_pairs(data)


def roc_auc(data: Scored, labels=None) -> float:
    """Mann-Whitney ROC-AUC with midranks for tied scores.

    Accepts a ScoredLabels, a list of (score, label) pairs, or scores and labels
    as two arrays.
    """
    data = _scored(data, labels)
    data.require_both_classes()
    ranks = rankdata(data.scores, method="average")
    n_pos, n_neg = data.n_pos, data.n_neg
    rank_sum = ranks[data.labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def roc_curve(data: Scored, labels=None) -> List[Tuple[float, float]]:
    """(FPR, TPR) points with one threshold per distinct score, highest first."""
    data = _scored(data, labels)
    data.require_both_classes()
    points = [(0.0, 0.0)]
    for threshold in np.unique(data.scores)[::-1]:
        predicted = data.scores >= threshold
        tpr = np.sum(predicted & (data.labels == 1)) / data.n_pos
        fpr = np.sum(predicted & (data.labels == 0)) / data.n_neg
        points.append((float(fpr), float(tpr)))
    return points


def trapezoid_area(curve: Sequence[Tuple[float, float]]) -> float:
    xs = np.array([p[0] for p in curve])
    ys = np.array([p[1] for p in curve])
    return float(np.sum((xs[1:] - xs[:-1]) * (ys[1:] + ys[:-1]) / 2))


def curve_frame(curve: Sequence[Tuple[float, float]]) -> pd.DataFrame:
    return pd.DataFrame(curve, columns=["fpr", "tpr"])


@dataclass(frozen=True)
class AggregateStat:
    mean: float
    std: float
    n: int

    def __str__(self) -> str:
        return format_stat(self)

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "n": self.n}


def aggregate(values: Iterable[float], ddof: int = 0) -> AggregateStat:
    """Mean and standard deviation (population by default, ddof=1 for sample)."""
    values = np.asarray(list(values), dtype=np.float64)
    if values.size == 0:
        raise ValueError("cannot aggregate an empty list")
    if values.size <= ddof:
        raise ValueError(f"need more than {ddof} values for ddof={ddof}")
    return AggregateStat(float(values.mean()), float(values.std(ddof=ddof)), int(values.size))


def format_stat(stat: AggregateStat, digits: int = 3) -> str:
    return f"{stat.mean:.{digits}f} ± {stat.std:.{digits}f}"


def safe_auc(scores, labels) -> Optional[float]:
    """roc_auc, or None when only one class is present."""
    try:
        return roc_auc(scores, labels)
    except UndefinedAucError:
        return None
