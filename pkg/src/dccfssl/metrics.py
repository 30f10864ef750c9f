"""Test-set metrics, pseudo-label diagnostics, and training stability."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from . import model
from .losses import LossHyper
from .model import ModelParams


@dataclass(frozen=True)
class MetricsRecord:
    round: int
    accuracy: float
    macro_auc: float
    macro_precision: float
    macro_f1: float
    mean_auth_fraction: float
    pseudo_label_accuracy: float | None = None


def _binary_rank_auc(scores: np.ndarray, is_positive: np.ndarray) -> float | None:
    """One-vs-rest rank AUC with ties counted half; None if degenerate."""
    n_pos = int(is_positive.sum())
    n_neg = scores.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(scores)
    return float(
        (ranks[is_positive].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)
    )


def multiclass_auc(probs: np.ndarray, labels: np.ndarray,
                   average: str = "macro") -> float:
    """One-vs-rest rank AUC, macro (default) or micro averaged.

    Classes without positives or negatives are skipped in the macro mean;
    0.5 is returned if no class is scorable.
    """
    labels = np.asarray(labels, dtype=np.int64)
    num_classes = probs.shape[1]
    onehot = np.zeros_like(probs, dtype=bool)
    onehot[np.arange(labels.size), labels] = True
    if average == "micro":
        auc = _binary_rank_auc(probs.ravel(), onehot.ravel())
        return 0.5 if auc is None else auc
    if average != "macro":
        raise ValueError("average must be 'macro' or 'micro'")
    per_class = [
        _binary_rank_auc(probs[:, c], onehot[:, c]) for c in range(num_classes)
    ]
    valid = [a for a in per_class if a is not None]
    return float(np.mean(valid)) if valid else 0.5


def classification_metrics(probs: np.ndarray, labels: np.ndarray) -> dict:
    """Accuracy plus macro precision/F1/AUC with the 0/0 -> 0 convention."""
    labels = np.asarray(labels, dtype=np.int64)
    if probs.size == 0:
        raise ValueError("cannot score an empty batch")
    num_classes = probs.shape[1]
    predicted = np.argmax(probs, axis=1)

    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (labels, predicted), 1)
    tp = np.diag(confusion).astype(np.float64)
    fp = confusion.sum(axis=0) - tp
    fn = confusion.sum(axis=1) - tp

    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(tp + fp > 0, tp / (tp + fp), 0.0)
        recall = np.where(tp + fn > 0, tp / (tp + fn), 0.0)
        f1 = np.where(precision + recall > 0,
                      2 * precision * recall / (precision + recall), 0.0)

    return {
        "accuracy": float(tp.sum() / labels.size),
        "macro_auc": multiclass_auc(probs, labels, average="macro"),
        "macro_precision": float(precision.mean()),
        "macro_f1": float(f1.mean()),
    }


def stability_std(accuracies, window: int) -> float:
    """Population standard deviation of the final ``window`` values."""
    accuracies = np.asarray(accuracies, dtype=np.float64)
    if window < 1 or window > accuracies.size:
        raise ValueError(
            "window %d out of range for history of length %d"
            % (window, accuracies.size)
        )
    return float(np.std(accuracies[-window:]))


def pseudo_label_report(params: ModelParams, unlabeled_clients,
                        h: LossHyper) -> dict[int, tuple[float, float | None]]:
    """Per-client (coverage, accuracy of confident pseudo labels).

    Accuracy is None when nothing clears the confidence threshold. Uses
    sealed labels; evaluation only.
    """
    out = {}
    for ds in unlabeled_clients:
        probs = model.predict_probs(params, ds.features_matrix())
        confident = probs.max(axis=1) >= h.t_thr
        coverage = float(confident.mean())
        if confident.any():
            pseudo = np.argmax(probs[confident], axis=1)
            truth = ds.sealed_labels()[confident]
            accuracy = float(np.mean(pseudo == truth))
        else:
            accuracy = None
        out[ds.client_id] = (coverage, accuracy)
    return out
