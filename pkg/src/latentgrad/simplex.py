"""Categorical (unstructured) geometry on the probability simplex.

The latent space is {e_1, ..., e_K}; its convex hull is the simplex. This
module provides the three forward maps used throughout (hard argmax, softmax,
sparsemax) and the vector-Jacobian products of the two differentiable ones.

All functions take and return 1-D float64 arrays and are pure.
"""

import numpy as np

__all__ = [
    "argmax_onehot",
    "softmax",
    "sparsemax",
    "softmax_vjp",
    "sparsemax_vjp",
]


def _as_scores(s):
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 1:
        raise ValueError(f"expected a 1-D score vector, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    return s


def argmax_onehot(s):
    """One-hot vector of the highest-scoring index.

    Ties are broken toward the lowest index, so the result is deterministic.
    """
    s = _as_scores(s)
    out = np.zeros_like(s)
    out[np.argmax(s)] = 1.0
    return out


def softmax(s):
    """Exponentiated scores normalized to the simplex, computed with max-shift."""
    s = _as_scores(s)
    e = np.exp(s - s.max())
    return e / e.sum()


def sparsemax(s):
    """Euclidean projection of s onto the simplex (sort-and-threshold).

    Returns argmin_p ||p - s||^2 over the simplex. The support is the set of
    coordinates above a threshold tau chosen so the positive parts sum to 1;
    entries below tau are exactly zero.
    """
    s = _as_scores(s)
    z = np.sort(s)[::-1]
    cumsum = np.cumsum(z) - 1.0
    ks = np.arange(1, s.size + 1)
    support = z * ks > cumsum
    k = np.count_nonzero(support)
    tau = cumsum[k - 1] / k
    return np.maximum(s - tau, 0.0)


def softmax_vjp(s, g):
    """J^T g for J = diag(p) - p p^T, the softmax Jacobian at p = softmax(s)."""
    s = _as_scores(s)
    g = np.asarray(g, dtype=np.float64)
    if g.shape != s.shape:
        raise ValueError(f"shape mismatch: scores {s.shape}, cotangent {g.shape}")
    p = softmax(s)
    return p * (g - p @ g)


def sparsemax_vjp(s, g):
    """J^T g for the sparsemax Jacobian at s.

    On the support S the projection is locally s - tau(s) with tau affine, so
    the Jacobian centers the cotangent over S; off-support coordinates get 0.
    """
    s = _as_scores(s)
    g = np.asarray(g, dtype=np.float64)
    if g.shape != s.shape:
        raise ValueError(f"shape mismatch: scores {s.shape}, cotangent {g.shape}")
    support = sparsemax(s) > 0.0
    out = np.zeros_like(s)
    out[support] = g[support] - g[support].mean()
    return out
