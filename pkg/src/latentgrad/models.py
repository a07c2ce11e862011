"""Differentiable host networks around the discrete latent node.

Unstructured task: linear encoder s = W_f x + b_f into K cluster scores, and
a bilinear decoder logit = mu^T W_g x + b_g, so a one-hot mu selects one of K
linear models. Structured toy task: a two-layer tanh scorer produces arc
scores, and the decoder pools elementwise head-modifier feature products
weighted by the arc mean vector.

The downstream loss is binary logistic on targets y in {-1, +1}. Both decode
maps are affine in mu, which gamma (the loss gradient at the latent node) and
the pulled-back estimators rely on.

Parameters live in plain dicts of float64 arrays, so the optimizer and the
finite-difference checker can treat every model uniformly.
"""

import json
from dataclasses import dataclass

import numpy as np

from latentgrad import treedp

__all__ = [
    "UnstructuredModel",
    "StructuredToyModel",
    "sigmoid",
    "logistic_loss",
    "finite_diff_grad",
    "finite_diff_check",
    "save_params",
    "load_params",
]


def sigmoid(t):
    t = np.asarray(t, dtype=np.float64)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out if out.ndim else float(out)


def logistic_loss(logit, y):
    """log(1 + exp(-y * logit)), stable at large magnitudes."""
    return float(np.logaddexp(0.0, -y * logit))


def _loss_dlogit(logit, y):
    # d/dlogit log(1 + exp(-y logit)) = -y * sigmoid(-y * logit)
    return -y * sigmoid(-y * logit)


@dataclass
class UnstructuredModel:
    """Linear encoder over K clusters, bilinear decoder, logistic loss."""

    params: dict
    n_clusters: int
    dim: int

    @classmethod
    def init(cls, rng, n_clusters, dim, scale=0.1):
        params = {
            "W_f": scale * rng.normal(size=(n_clusters, dim)),
            "b_f": np.zeros(n_clusters),
            "W_g": scale * rng.normal(size=(n_clusters, dim)),
            "b_g": np.zeros(()),
        }
        return cls(params=params, n_clusters=n_clusters, dim=dim)

    def clone(self):
        return UnstructuredModel(
            params={k: v.copy() for k, v in self.params.items()},
            n_clusters=self.n_clusters,
            dim=self.dim,
        )

    def encode(self, x):
        return self.params["W_f"] @ x + self.params["b_f"]

    def decode(self, x, mu):
        return float(mu @ (self.params["W_g"] @ x) + self.params["b_g"])

    def loss(self, x, y, mu):
        return logistic_loss(self.decode(x, mu), y)

    def gamma(self, x, y, mu):
        """Loss gradient at the latent node: coef * (W_g x), affine decode."""
        coef = _loss_dlogit(self.decode(x, mu), y)
        return coef * (self.params["W_g"] @ x)

    def param_grads(self, x, y, surrogate_grad_s, mu_forward):
        """Encoder grads chain the surrogate through the linear encoder;
        decoder grads are the exact loss gradients at the forward point."""
        coef = _loss_dlogit(self.decode(x, mu_forward), y)
        return {
            "W_f": np.outer(surrogate_grad_s, x),
            "b_f": np.asarray(surrogate_grad_s, dtype=np.float64).copy(),
            "W_g": coef * np.outer(mu_forward, x),
            "b_g": np.asarray(coef, dtype=np.float64),
        }


@dataclass
class StructuredToyModel:
    """Arc-factored tree scorer plus a marginal-weighted pooling decoder.

    Arc h -> m is scored V^T tanh(W [x_h; x_m] + c); the decoder pools the
    elementwise products x_h * x_m of all arcs, weighted by mu and averaged
    over the L tokens. The artificial root token uses a learned embedding that
    therefore receives gradient through both the scorer and the decoder.

    No parameter depends on the sentence length, so one model serves inputs
    of any length; xs is always an (L, dim) array of token features.
    """

    params: dict
    dim: int
    hidden: int

    @classmethod
    def init(cls, rng, dim, hidden=8, scale=0.5):
        params = {
            "W": scale * rng.normal(size=(hidden, 2 * dim)),
            "c": np.zeros(hidden),
            "V": scale * rng.normal(size=hidden),
            "w": scale * rng.normal(size=dim),
            "b": np.zeros(()),
            "root": scale * rng.normal(size=dim),
        }
        return cls(params=params, dim=dim, hidden=hidden)

    def clone(self):
        return StructuredToyModel(
            params={k: v.copy() for k, v in self.params.items()},
            dim=self.dim,
            hidden=self.hidden,
        )

    def _token(self, xs, i):
        return self.params["root"] if i == 0 else xs[i - 1]

    def encode(self, xs):
        L = xs.shape[0]
        s = np.zeros(treedp.num_arcs(L))
        W, c, V = self.params["W"], self.params["c"], self.params["V"]
        for m in range(1, L + 1):
            for h in range(L + 1):
                if h == m:
                    continue
                u = np.tanh(W @ np.concatenate([self._token(xs, h), self._token(xs, m)]) + c)
                s[treedp.arc_index(h, m, L)] = V @ u
        return s

    def _arc_features(self, xs):
        L = xs.shape[0]
        feats = np.zeros((treedp.num_arcs(L), self.dim))
        for m in range(1, L + 1):
            for h in range(L + 1):
                if h == m:
                    continue
                feats[treedp.arc_index(h, m, L)] = self._token(xs, h) * self._token(xs, m)
        return feats

    def decode(self, xs, mu):
        feats = self._arc_features(xs)
        pooled = (mu @ feats) / xs.shape[0]
        return float(self.params["w"] @ pooled + self.params["b"])

    def loss(self, xs, y, mu):
        return logistic_loss(self.decode(xs, mu), y)

    def gamma(self, xs, y, mu):
        coef = _loss_dlogit(self.decode(xs, mu), y)
        return coef * (self._arc_features(xs) @ self.params["w"]) / xs.shape[0]

    def param_grads(self, xs, y, surrogate_grad_s, mu_forward):
        L = xs.shape[0]
        W, c, V = self.params["W"], self.params["c"], self.params["V"]
        d = self.dim
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}

        # encoder path: chain the surrogate through the tanh scorer
        for m in range(1, L + 1):
            for h in range(L + 1):
                if h == m:
                    continue
                sbar = surrogate_grad_s[treedp.arc_index(h, m, L)]
                if sbar == 0.0:
                    continue
                pair = np.concatenate([self._token(xs, h), self._token(xs, m)])
                u = np.tanh(W @ pair + c)
                grads["V"] += sbar * u
                back = sbar * V * (1.0 - u * u)
                grads["W"] += np.outer(back, pair)
                grads["c"] += back
                if h == 0:
                    grads["root"] += W[:, :d].T @ back

        # decoder path: exact gradients of the loss at the forward point
        feats = self._arc_features(xs)
        coef = _loss_dlogit(self.decode(xs, mu_forward), y)
        pooled = (mu_forward @ feats) / L
        grads["w"] += coef * pooled
        grads["b"] = grads["b"] + coef
        for m in range(1, L + 1):
            a = treedp.arc_index(0, m, L)
            # root-headed arc features are root * x_m
            grads["root"] += coef * mu_forward[a] * (self.params["w"] * xs[m - 1]) / L
        return grads


def finite_diff_grad(f, point, step=1e-5):
    """Central-difference gradient of a scalar function of a flat vector."""
    point = np.asarray(point, dtype=np.float64)
    out = np.zeros_like(point)
    for j in range(point.size):
        e = np.zeros_like(point)
        e[j] = step
        out[j] = (f(point + e) - f(point - e)) / (2.0 * step)
    return out


def finite_diff_check(f, grad, point, step=1e-5):
    """Worst-case relative error between an analytic gradient and central
    differences of f at point; the scale floor guards near-zero entries."""
    grad = np.asarray(grad, dtype=np.float64)
    fd = finite_diff_grad(f, point, step)
    scale = np.maximum(np.maximum(np.abs(grad), np.abs(fd)), 1.0)
    return float(np.max(np.abs(grad - fd) / scale))


def save_params(path, params, meta=None):
    """Checkpoint as an npz archive: one named float64 array per parameter
    (npy headers record shape, dtype, and endianness)."""
    arrays = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
    if meta:
        arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_params(path):
    with np.load(path) as archive:
        params = {k: archive[k] for k in archive.files if k != "__meta__"}
        meta = None
        if "__meta__" in archive.files:
            meta = json.loads(archive["__meta__"].tobytes().decode())
    return params, meta
