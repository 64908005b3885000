"""Classification metrics computed from label arrays and scores."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


def accuracy(y_true, y_pred) -> float:
    y_true = np.asarray(y_true)
    return float(np.mean(y_true == np.asarray(y_pred)))


def f1_for_class(y_true, y_pred, cls: int = 1) -> float:
    """F1 of one class; 0.0 when the class is neither present nor predicted."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    tp = int(np.sum((y_true == cls) & (y_pred == cls)))
    fp = int(np.sum((y_true != cls) & (y_pred == cls)))
    fn = int(np.sum((y_true == cls) & (y_pred != cls)))
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def macro_f1(y_true, y_pred) -> float:
    """Unweighted mean of per-class F1 over labels seen in either array."""
    classes = np.union1d(np.asarray(y_true), np.asarray(y_pred))
    return float(np.mean([f1_for_class(y_true, y_pred, int(c)) for c in classes]))


def binary_auc(y_true, scores) -> float | None:
    """Mann-Whitney AUC with tied scores counted as half; None if one class is missing."""
    y_true = np.asarray(y_true)
    scores = np.asarray(scores, dtype=np.float64)
    pos = y_true == 1
    n_pos = int(pos.sum())
    n_neg = len(y_true) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(scores, method="average")
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def macro_ovr_auc(y_true, probabilities) -> float | None:
    """Macro one-vs-rest AUC over classes that have both positives and negatives."""
    y_true = np.asarray(y_true)
    probabilities = np.asarray(probabilities, dtype=np.float64)
    aucs = []
    for k in range(probabilities.shape[1]):
        auc = binary_auc((y_true == k).astype(int), probabilities[:, k])
        if auc is not None:
            aucs.append(auc)
    return float(np.mean(aucs)) if aucs else None
