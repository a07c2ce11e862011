"""Vectorized kernels for full-batch training on the categorical task.

Row-wise twins of the simplex operations and of the per-example estimators:
every function takes (N, K) score rows and agrees with the per-example APIs
to float precision. The training harness runs these once per epoch; the
per-example modules remain the reference implementations and the batched
forms are tested against them.
"""

from dataclasses import dataclass

import numpy as np

from latentgrad.models import sigmoid

__all__ = [
    "softmax_b",
    "sparsemax_b",
    "argmax_b",
    "softmax_vjp_b",
    "sparsemax_vjp_b",
    "row_dot",
    "BatchBackward",
    "decoder_calls_per_example",
    "batch_estimator",
]


def row_dot(A, B):
    return np.einsum("nk,nk->n", A, B)


def softmax_b(S):
    Z = S - S.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def argmax_b(S):
    # ties resolve to the lowest index, as in the per-example argmax
    out = np.zeros_like(S)
    out[np.arange(S.shape[0]), np.argmax(S, axis=1)] = 1.0
    return out


def sparsemax_b(S):
    N, K = S.shape
    Z = -np.sort(-S, axis=1)
    css = np.cumsum(Z, axis=1) - 1.0
    ks = np.arange(1, K + 1)
    support = Z * ks > css
    sizes = support.sum(axis=1)
    tau = css[np.arange(N), sizes - 1] / sizes
    return np.maximum(S - tau[:, None], 0.0)


def softmax_vjp_b(S, G):
    P = softmax_b(S)
    return P * (G - row_dot(P, G)[:, None])


def sparsemax_vjp_b(S, G):
    M = sparsemax_b(S) > 0
    mean = np.where(M, G, 0.0).sum(axis=1) / M.sum(axis=1)
    return np.where(M, G - mean[:, None], 0.0)


@dataclass
class BatchBackward:
    mu_forward: np.ndarray  # (N, K) decoder input on the forward pass
    surrogate: np.ndarray  # (N, K) per-example d loss / d scores
    decoder_calls_per_example: int


def decoder_calls_per_example(spec):
    """Distinct decoder evaluations one example costs per training step.

    Iterative pullbacks pay one call per inner step; starting the descent at
    the marginals (CE/EG) adds one more because the decoder's own forward
    point is the argmax vertex, not the descent start.
    """
    if spec.method in ("ste-i", "spigot"):
        return spec.k
    if spec.method in ("spigot-ce", "spigot-eg"):
        return spec.k + 1
    return 1


def batch_estimator(spec, S, P, y, b_g, rng=None, sfe_state=None, gumbel_noise=None, sample_u=None):
    """Forward point and surrogate score-gradients for a whole batch.

    S are encoder scores, P[i] = W_g x_i the per-cluster decoder logits, so
    the decode of mu is row_dot(mu, P) + b_g and gamma stays a rank-1 row
    scaling of P. Stochastic methods draw from rng unless explicit noise
    (gumbel_noise, sample_u) is injected for reproducibility tests.

    SFE's moving-average baseline is shared across the batch (its pre-update
    value) and then updated once with the batch mean loss; a batch of one
    reproduces the per-example state trajectory exactly.
    """
    S = np.asarray(S, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)

    def logit(MU):
        return row_dot(MU, P) + float(b_g)

    def gamma(MU):
        coef = -y * sigmoid(-y * logit(MU))
        return coef[:, None] * P

    def loss(MU):
        return np.logaddexp(0.0, -y * logit(MU))

    calls = decoder_calls_per_example(spec)
    method = spec.method

    if method == "exact-argmax":
        mu_fwd = argmax_b(S)
        return BatchBackward(mu_fwd, np.zeros_like(S), calls)

    if method == "softmax":
        mu_fwd = softmax_b(S)
        return BatchBackward(mu_fwd, softmax_vjp_b(S, gamma(mu_fwd)), calls)

    if method == "sparsemax":
        mu_fwd = sparsemax_b(S)
        return BatchBackward(mu_fwd, sparsemax_vjp_b(S, gamma(mu_fwd)), calls)

    if method == "ste-s":
        mu_fwd = argmax_b(S)
        return BatchBackward(mu_fwd, softmax_vjp_b(S, gamma(mu_fwd)), calls)

    if method == "ste-i":
        mu_fwd = argmax_b(S)
        mu = mu_fwd
        acc = np.zeros_like(S)
        for _ in range(spec.k):
            step = spec.eta * gamma(mu)
            acc = acc + step
            mu = mu - step
        return BatchBackward(mu_fwd, acc, calls)

    if method in ("spigot", "spigot-ce"):
        mu_fwd = argmax_b(S)
        mu0 = mu_fwd if method == "spigot" else softmax_b(S)
        mu = mu0
        for _ in range(spec.k):
            mu = sparsemax_b(mu - spec.eta * gamma(mu))
        return BatchBackward(mu_fwd, mu0 - mu, calls)

    if method == "spigot-eg":
        mu_fwd = argmax_b(S)
        s_t = S
        mu0 = softmax_b(S)
        mu = mu0
        for _ in range(spec.k):
            s_t = s_t - spec.eta * gamma(mu)
            mu = softmax_b(s_t)
        return BatchBackward(mu_fwd, mu0 - mu, calls)

    if method in ("sfe", "sfe-baseline"):
        prob = softmax_b(S)
        u = rng.random(S.shape[0]) if sample_u is None else np.asarray(sample_u)
        idx = np.minimum(
            (np.cumsum(prob, axis=1) < u[:, None]).sum(axis=1), S.shape[1] - 1
        )
        EZ = np.zeros_like(S)
        EZ[np.arange(S.shape[0]), idx] = 1.0
        LZ = loss(EZ)
        b = 0.0
        if method == "sfe-baseline":
            b = sfe_state.baseline if sfe_state.warm else 0.0
            mean_loss = float(LZ.mean())
            sfe_state.baseline = (
                spec.baseline_decay * sfe_state.baseline
                + (1.0 - spec.baseline_decay) * mean_loss
                if sfe_state.warm
                else mean_loss
            )
            sfe_state.warm = True
        return BatchBackward(EZ, (LZ - b)[:, None] * (EZ - prob), calls)

    if method in ("gumbel-softmax", "st-gumbel"):
        g = rng.gumbel(size=S.shape) if gumbel_noise is None else gumbel_noise
        s_tilde = (S + g) / spec.temperature
        mu_fwd = argmax_b(s_tilde) if method == "st-gumbel" else softmax_b(s_tilde)
        return BatchBackward(mu_fwd, softmax_vjp_b(s_tilde, gamma(mu_fwd)), calls)

    if method == "perturb-and-map":
        g = rng.gumbel(size=S.shape) if gumbel_noise is None else gumbel_noise
        s_tilde = S + g
        mu_fwd = argmax_b(s_tilde)
        return BatchBackward(mu_fwd, softmax_vjp_b(s_tilde, gamma(mu_fwd)), calls)

    raise ValueError(f"unknown method: {method}")
