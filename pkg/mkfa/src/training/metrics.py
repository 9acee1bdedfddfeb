"""Frame-level detection metrics"""
from typing import Sequence, Tuple

import numpy as np
from scipy.stats import rankdata

from ..utils.errors import EvaluationError


def _check(scores: Sequence[float], labels: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise EvaluationError(f"scores {scores.shape} and labels {labels.shape} must be equal-length vectors")
    if not np.isin(labels, (0, 1)).all():
        raise EvaluationError("labels must be 0 (real) or 1 (fake)")
    return scores, labels


def auc_pair_counts(scores: Sequence[float], labels: Sequence[int]) -> Tuple[float, int]:
    """(Σ_pairs [s_fake > s_real] + ½[s_fake = s_real], n_fake·n_real)"""
    scores, labels = _check(scores, labels)
    fake = labels == 1
    n_fake = int(fake.sum())
    n_real = labels.size - n_fake
    if n_fake == 0 or n_real == 0:
        raise EvaluationError(f"AUC needs both classes, got {n_real} real and {n_fake} fake")
    ranks = rankdata(scores)
    return float(ranks[fake].sum() - n_fake * (n_fake + 1) / 2), n_fake * n_real


def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann–Whitney AUC with half credit for ties; fake is the positive class"""
    wins, pairs = auc_pair_counts(scores, labels)
    return wins / pairs


def accuracy(scores: Sequence[float], labels: Sequence[int], threshold: float = 0.5) -> float:
    """
    Fraction correct when 'fake' means score > threshold

    Scores exactly at the threshold carry no decision and count as the majority
    label, so a constant-score model scores the larger class prior.
    """
    scores, labels = _check(scores, labels)
    if scores.size == 0:
        raise EvaluationError("accuracy of an empty set")
    predicted = (scores > threshold).astype(int)
    majority = int(labels.mean() > 0.5)
    predicted[scores == threshold] = majority
    return float((predicted == labels).mean())
