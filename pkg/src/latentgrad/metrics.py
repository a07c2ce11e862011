"""Evaluation metrics: downstream accuracy, V-measure, unlabeled attachment score.

V-measure is the harmonic mean of homogeneity and completeness, both defined
from conditional entropies of the (true, predicted) label contingency table.
It is invariant to permuting predicted labels, which makes it the right
cluster-recovery score when the latent categories carry no fixed identity.
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["ClusteringScore", "accuracy", "v_measure", "uas"]


@dataclass(frozen=True)
class ClusteringScore:
    homogeneity: float
    completeness: float
    v_measure: float


def accuracy(pred, true):
    """Fraction of exactly matching entries."""
    pred = np.asarray(pred)
    true = np.asarray(true)
    if pred.shape != true.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {true.shape}")
    if pred.size == 0:
        raise ValueError("empty input")
    return float(np.mean(pred == true))


def _sorted_sum(terms):
    # summing in sorted order makes the result a function of the term
    # multiset only, so relabeling clusters cannot move the float result
    return float(np.sort(terms, axis=None).sum())


def _entropy(counts):
    # natural-log entropy of a count vector
    counts = counts[counts > 0]
    p = counts / counts.sum()
    return -_sorted_sum(p * np.log(p))


def v_measure(pred, true):
    """Homogeneity, completeness, and their harmonic mean, in [0, 1].

    Entropies use natural log (the base cancels in the ratios). Degenerate
    conventions: homogeneity is 1 when the true labeling has zero entropy,
    completeness is 1 when the predicted labeling has zero entropy, and the
    harmonic mean is 0 when h + c = 0.
    """
    pred = np.asarray(pred)
    true = np.asarray(true)
    if pred.shape != true.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {true.shape}")
    if pred.size == 0:
        raise ValueError("empty input")

    _, ti = np.unique(true, return_inverse=True)
    _, pi = np.unique(pred, return_inverse=True)
    n_t = ti.max() + 1
    n_p = pi.max() + 1
    table = np.zeros((n_t, n_p))
    np.add.at(table, (ti, pi), 1.0)

    h_true = _entropy(table.sum(axis=1))
    h_pred = _entropy(table.sum(axis=0))
    n = table.sum()

    # H(true | pred) = -sum_ij n_ij/n log(n_ij / n_.j); likewise transposed.
    # Terms are accumulated in sorted order (see _sorted_sum).
    nz = table > 0
    p_joint = table[nz] / n
    col_tot = np.broadcast_to(table.sum(axis=0, keepdims=True), table.shape)[nz]
    row_tot = np.broadcast_to(table.sum(axis=1, keepdims=True), table.shape)[nz]
    h_true_given_pred = -_sorted_sum(p_joint * np.log(table[nz] / col_tot))
    h_pred_given_true = -_sorted_sum(p_joint * np.log(table[nz] / row_tot))

    h = 1.0 if h_true == 0.0 else 1.0 - h_true_given_pred / h_true
    c = 1.0 if h_pred == 0.0 else 1.0 - h_pred_given_true / h_pred
    v = 0.0 if h + c == 0.0 else 2.0 * h * c / (h + c)
    return ClusteringScore(homogeneity=h, completeness=c, v_measure=v)


def uas(pred_heads, gold_heads):
    """Unlabeled attachment score over a corpus of head arrays.

    Each element of the inputs is the head array of one sentence: entry m-1
    holds the head (0 = root) of token m. Score is the token-level fraction
    of correctly attached heads.
    """
    if len(pred_heads) != len(gold_heads):
        raise ValueError("corpus length mismatch")
    correct = 0
    total = 0
    for p, g in zip(pred_heads, gold_heads):
        p = np.asarray(p)
        g = np.asarray(g)
        if p.shape != g.shape:
            raise ValueError("sentence length mismatch")
        correct += int(np.sum(p == g))
        total += p.size
    if total == 0:
        raise ValueError("empty input")
    return correct / total
