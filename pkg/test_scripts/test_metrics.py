"""
ROC-AUC and aggregate statistics.
"""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from molseq.metrics import (
    AggregateStat,
    ScoredLabels,
    UndefinedAucError,
    aggregate,
    curve_frame,
    format_stat,
    roc_auc,
    roc_curve,
    safe_auc,
    trapezoid_area,
)


def pairwise_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


scored_lists = st.lists(
    st.tuples(st.integers(0, 6).map(lambda k: k / 6), st.integers(0, 1)), min_size=2, max_size=40
).filter(lambda pairs: len({y for _, y in pairs}) == 2)


def test_perfect_and_inverted_ranking():
    assert roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == pytest.approx(0.75)
    assert roc_auc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
    assert roc_auc([0.1, 0.2, 0.9], [1, 1, 0]) == 0.0


def test_all_tied_scores_give_one_half():
    assert roc_auc([0.3] * 6, [0, 1, 0, 1, 1, 0]) == 0.5


def test_accepts_pairs_and_scored_labels():
    pairs = [(0.2, 0), (0.7, 1), (0.5, 0)]
    assert roc_auc(pairs) == 1.0
    assert roc_auc(ScoredLabels.from_pairs(pairs)) == 1.0


@settings(max_examples=200)
@given(scored_lists)
def test_auc_matches_pairwise_count(pairs):
    scores, labels = zip(*pairs)
    assert roc_auc(list(scores), list(labels)) == pytest.approx(pairwise_auc(scores, labels))


@settings(max_examples=200)
@given(scored_lists)
def test_auc_equals_trapezoid_area(pairs):
    data = ScoredLabels.from_pairs(pairs)
    assert trapezoid_area(roc_curve(data)) == pytest.approx(roc_auc(data))


@given(scored_lists)
def test_auc_is_invariant_under_monotone_transform(pairs):
    scores, labels = zip(*pairs)
    transformed = [3 * s ** 3 + 1 for s in scores]
    assert roc_auc(transformed, labels) == pytest.approx(roc_auc(scores, labels))


def test_single_class_is_undefined():
    with pytest.raises(UndefinedAucError):
        roc_auc([0.1, 0.2], [1, 1])
    with pytest.raises(UndefinedAucError):
        roc_curve([0.1, 0.2], [0, 0])
    assert safe_auc([0.1, 0.2], [0, 0]) is None
    assert safe_auc([0.1, 0.2], [0, 1]) == 1.0


def test_invalid_inputs():
    with pytest.raises(ValueError):
        ScoredLabels(np.array([0.1, 0.2]), np.array([0, 2]))
    with pytest.raises(ValueError):
        ScoredLabels(np.array([0.1]), np.array([0, 1]))
    with pytest.raises(ValueError):
        ScoredLabels(np.array([np.nan, 0.2]), np.array([0, 1]))


def test_roc_curve_points_and_frame():
    curve = roc_curve([0.9, 0.6, 0.6, 0.1], [1, 0, 1, 0])
    assert curve == [(0.0, 0.0), (0.0, 0.5), (0.5, 1.0), (1.0, 1.0)]
    frame = curve_frame(curve)
    assert list(frame.columns) == ["fpr", "tpr"]
    assert len(frame) == 4


def test_aggregate_population_and_sample():
    stat = aggregate([0.50, 0.55, 0.60])
    assert stat.mean == pytest.approx(0.55)
    assert stat.std == pytest.approx(np.std([0.50, 0.55, 0.60]))
    assert stat.n == 3
    assert aggregate([0.50, 0.55, 0.60], ddof=1).std == pytest.approx(0.05)


def test_aggregate_edge_cases():
    assert aggregate([0.7]) == AggregateStat(0.7, 0.0, 1)
    with pytest.raises(ValueError):
        aggregate([])
    with pytest.raises(ValueError):
        aggregate([0.7], ddof=1)


def test_format_stat():
    stat = AggregateStat(0.5567, 0.0411, 3)
    assert format_stat(stat) == "0.557 ± 0.041"
    assert str(stat) == "0.557 ± 0.041"
    assert stat.to_dict() == {"mean": 0.5567, "std": 0.0411, "n": 3}
