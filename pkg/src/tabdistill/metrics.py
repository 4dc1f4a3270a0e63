"""Evaluation kernels: ROC AUC, log loss, accuracy, prediction correlation,
and train-vs-test overfit probes. All kernels are pure functions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tabdistill.errors import DataError

PROB_EPS = 1e-12


@dataclass(frozen=True)
class EvalReport:
    auc: float
    log_loss: float
    accuracy: float
    n_pos: int
    n_neg: int

    def as_dict(self) -> dict:
        return {"auc": self.auc, "log_loss": self.log_loss,
                "accuracy": self.accuracy, "n_pos": self.n_pos, "n_neg": self.n_neg}


def _midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with tied values sharing the mid-rank."""
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    n = len(values)
    # group boundaries of equal values in sorted order
    boundary = np.empty(n, dtype=bool)
    boundary[0] = True
    boundary[1:] = sorted_vals[1:] != sorted_vals[:-1]
    starts = np.flatnonzero(boundary)
    ends = np.append(starts[1:], n)
    group_rank = (starts + ends + 1) / 2.0  # mean of ranks start+1 .. end
    ranks_sorted = np.repeat(group_rank, ends - starts)
    ranks = np.empty(n)
    ranks[order] = ranks_sorted
    return ranks


def roc_auc(scores, labels) -> float:
    """Probability that a random positive outranks a random negative, with
    ties counting one half. Rank-sum formulation; exactly equal to pair
    counting."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise DataError("scores and labels must have equal length")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise DataError("ROC AUC needs both classes present")
    ranks = _midranks(scores)
    rank_sum_pos = ranks[labels == 1].sum()
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def log_loss(scores, labels) -> float:
    """Mean binary cross-entropy with probabilities clamped away from 0/1."""
    p = np.clip(np.asarray(scores, dtype=np.float64), PROB_EPS, 1.0 - PROB_EPS)
    y = np.asarray(labels, dtype=np.float64)
    return float(np.mean(-y * np.log(p) - (1.0 - y) * np.log(1.0 - p)))


def accuracy(scores, labels) -> float:
    pred = (np.asarray(scores) >= 0.5).astype(np.int64)
    return float(np.mean(pred == np.asarray(labels)))


def evaluate(scores, labels) -> EvalReport:
    labels = np.asarray(labels)
    return EvalReport(
        auc=float(roc_auc(scores, labels)),
        log_loss=log_loss(scores, labels),
        accuracy=accuracy(scores, labels),
        n_pos=int((labels == 1).sum()),
        n_neg=int((labels == 0).sum()),
    )


def pearson(preds_a, preds_b) -> float:
    """Product-moment correlation; raises on constant input rather than
    silently returning 0."""
    a = np.asarray(preds_a, dtype=np.float64)
    b = np.asarray(preds_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 2:
        raise DataError("pearson needs two equal-length vectors of length >= 2")
    ac = a - a.mean()
    bc = b - b.mean()
    na = np.sqrt((ac * ac).sum())
    nb = np.sqrt((bc * bc).sum())
    if na == 0.0 or nb == 0.0:
        raise DataError("pearson is undefined for a constant vector")
    r = float((ac * bc).sum() / (na * nb))
    return min(1.0, max(-1.0, r))


def generation_correlation_matrix(models, rows) -> np.ndarray:
    """Pairwise Pearson correlation of model prediction vectors on ``rows``.

    Symmetric with unit diagonal; the off-diagonal structure is the
    diagnostic for how diverse a chain of generations is.
    """
    if len(models) < 2:
        raise DataError("need at least two models")
    preds = [np.asarray(m.predict(rows), dtype=np.float64) for m in models]
    k = len(preds)
    mat = np.ones((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            r = pearson(preds[i], preds[j])
            mat[i, j] = r
            mat[j, i] = r
    return mat


def overfit_probe(model, train, test) -> tuple[EvalReport, EvalReport]:
    """Paired train/test reports for one model; the train-minus-test AUC gap
    is reported, never asserted."""
    train_report = evaluate(model.predict(train), train.labels)
    test_report = evaluate(model.predict(test), test.labels)
    return train_report, test_report
