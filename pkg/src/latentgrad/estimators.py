"""Surrogate and stochastic gradient estimators for a discrete latent node.

Every method shares one forward pass (the MAP vertex of the latent polytope)
and differs only in the backward pass, which turns the downstream loss
gradient gamma(mu) = dL/dmu into a surrogate gradient with respect to the
scores s. The pulled-back-label family iterates an inner descent on gamma
starting from a convenient initial guess and returns mu0 - muk:

    STE-I      mu0 = MAP(s),  unconstrained steps  (k=1: exactly eta * gamma)
    SPIGOT     mu0 = MAP(s),  projected-gradient steps onto the polytope
    SPIGOT-CE  mu0 = Marg(s), projected-gradient steps
    SPIGOT-EG  mu0 = Marg(s), mirror-descent steps (Marg of shifted scores)

The estimator layer is generic over a PolytopeOracle, so the categorical and
the projective-tree cases run through identical code. Decoder work is
accounted by CountingGradLoss: calls at a repeated point are cache hits, so
STE-I and SPIGOT at k=1 add no decoder passes beyond the one the trainer
already spends at the forward vertex, while the Marg-initialized methods pay
one extra.
"""

from dataclasses import dataclass

import numpy as np

from latentgrad import simplex, treedp
from latentgrad.sparsemap import SparseSolution, sparsemap_solve, sparsemap_vjp

__all__ = [
    "EstimatorSpec",
    "PolytopeOracle",
    "SimplexOracle",
    "TreeOracle",
    "CountingGradLoss",
    "SFEState",
    "forward",
    "backward_ste_i",
    "backward_ste_s",
    "backward_spigot",
    "backward_spigot_ce",
    "backward_spigot_eg",
    "backward_exact_argmax",
    "sfe_gradient",
    "gumbel_forward_backward",
    "perturb_and_map_estimator",
]

METHODS = (
    "ste-i",
    "ste-s",
    "spigot",
    "spigot-ce",
    "spigot-eg",
    "sfe",
    "sfe-baseline",
    "gumbel-softmax",
    "st-gumbel",
    "perturb-and-map",
    "softmax",
    "sparsemax",
    "exact-argmax",
)


@dataclass(frozen=True)
class EstimatorSpec:
    """Method selector plus the knobs the backward passes read.

    eta is the pullback step size, k the number of inner iterations,
    temperature the Gumbel divisor, baseline_decay the moving-average
    coefficient of the SFE control variate.
    """

    method: str
    eta: float = 1.0
    k: int = 1
    temperature: float = 1.0
    baseline_decay: float = 0.9

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if not 0.0 <= self.baseline_decay < 1.0:
            raise ValueError("baseline_decay must lie in [0, 1)")


class PolytopeOracle:
    """Geometry bundle for one latent space: MAP, marginals, projection,
    sampling, and a vertex validator."""

    def map(self, s):
        raise NotImplementedError

    def marg(self, s):
        raise NotImplementedError

    def marg_vjp(self, s, g):
        raise NotImplementedError

    def project(self, v) -> SparseSolution:
        raise NotImplementedError

    def sample(self, s, rng):
        raise NotImplementedError

    def is_vertex(self, z) -> bool:
        raise NotImplementedError


class SimplexOracle(PolytopeOracle):
    """Categorical latent space: vertices are the K one-hot vectors."""

    def __init__(self, k):
        if k < 2:
            raise ValueError("need at least two categories")
        self.k = k

    def map(self, s):
        return simplex.argmax_onehot(s)

    def marg(self, s):
        return simplex.softmax(s)

    def marg_vjp(self, s, g):
        return simplex.softmax_vjp(s, g)

    def project(self, v):
        # projection onto the simplex has the sparsemax closed form; package
        # it as a SparseSolution so both geometries look alike downstream
        mean = simplex.sparsemax(v)
        idx = np.flatnonzero(mean > 0.0)
        support = [np.eye(self.k)[i] for i in idx]
        return SparseSolution(
            mean=mean,
            support=support,
            weights=mean[idx].copy(),
            converged=True,
            iterations=0,
        )

    def sample(self, s, rng):
        p = simplex.softmax(s)
        i = int(np.searchsorted(np.cumsum(p), rng.random()))
        i = min(i, self.k - 1)
        out = np.zeros(self.k)
        out[i] = 1.0
        return out

    def is_vertex(self, z):
        z = np.asarray(z)
        return z.shape == (self.k,) and set(np.unique(z)) <= {0.0, 1.0} and z.sum() == 1.0


class TreeOracle(PolytopeOracle):
    """Single-root projective trees over L tokens; scores index L^2 arcs."""

    def __init__(self, length):
        if length < 1:
            raise ValueError("need at least one token")
        self.length = length
        self.k = treedp.num_arcs(length)

    def map(self, s):
        return treedp.map_tree(s)

    def marg(self, s):
        return treedp.marginals(s)[0]

    def marg_vjp(self, s, g):
        return treedp.marginals_vjp(s, g)

    def project(self, v):
        return sparsemap_solve(v, treedp.map_tree)

    def sample(self, s, rng):
        return treedp.sample_perturb_map(s, rng)

    def is_vertex(self, z):
        return treedp.is_valid_tree(z)


class CountingGradLoss:
    """Memoizing wrapper around a gamma callback.

    Counts distinct evaluation points, so repeated calls at the same mu (the
    trainer's decoder update at the forward vertex, STE-I/SPIGOT's first
    inner step at that same vertex) cost a single decoder pass.
    """

    def __init__(self, fn):
        self._fn = fn
        self._cache = {}
        self.calls = 0

    def __call__(self, mu):
        mu = np.asarray(mu, dtype=np.float64)
        key = mu.tobytes()
        if key not in self._cache:
            self.calls += 1
            out = np.asarray(self._fn(mu), dtype=np.float64)
            if not np.all(np.isfinite(out)):
                raise FloatingPointError("non-finite loss gradient gamma")
            self._cache[key] = out
        return self._cache[key]


@dataclass
class SFEState:
    """Moving-average control variate for the score function estimator."""

    baseline: float = 0.0
    warm: bool = False


def forward(s, oracle):
    """The shared forward pass: the MAP vertex of the latent polytope."""
    return oracle.map(s)


def backward_ste_i(spec, s, grad_loss, oracle):
    """Unconstrained inner descent from the MAP vertex.

    The telescoped return mu0 - muk equals the accumulated sum of the
    eta * gamma steps; accumulating directly makes the k=1 case bitwise equal
    to eta * gamma(z_hat).
    """
    mu = oracle.map(s)
    acc = np.zeros_like(mu)
    for _ in range(spec.k):
        step = spec.eta * grad_loss(mu)
        acc = acc + step
        mu = mu - step
    return acc


def _projected_descent(spec, mu0, grad_loss, oracle):
    # mu stays inside the polytope throughout, so a zero gradient step means
    # the projection is the identity; skipping it keeps the null-gradient
    # fixed point exact instead of polluted by solver jitter
    mu = mu0
    for _ in range(spec.k):
        gamma = grad_loss(mu)
        if not np.any(gamma):
            continue
        mu = oracle.project(mu - spec.eta * gamma).mean
    return mu0 - mu


def backward_spigot(spec, s, grad_loss, oracle):
    """Projected-gradient inner descent from the MAP vertex."""
    return _projected_descent(spec, oracle.map(s), grad_loss, oracle)


def backward_spigot_ce(spec, s, grad_loss, oracle):
    """Projected-gradient inner descent from the marginals."""
    return _projected_descent(spec, oracle.marg(s), grad_loss, oracle)


def backward_spigot_eg(spec, s, grad_loss, oracle):
    """Mirror-descent inner loop: shift scores, re-take marginals.

    Iterates stay inside the polytope by construction; at k=1 this returns
    Marg(s) - Marg(s - eta * gamma).
    """
    s_t = np.asarray(s, dtype=np.float64)
    mu0 = oracle.marg(s_t)
    mu = mu0
    for _ in range(spec.k):
        s_t = s_t - spec.eta * grad_loss(mu)
        mu = oracle.marg(s_t)
    return mu0 - mu


def backward_ste_s(spec, s, grad_loss, oracle):
    """Straight-through with the marginals Jacobian: vJp of Marg at s applied
    to gamma at the forward vertex."""
    gamma = grad_loss(oracle.map(s))
    return oracle.marg_vjp(s, gamma)


def backward_exact_argmax(spec, s, grad_loss, oracle):
    """The true gradient of a piecewise-constant forward: zero."""
    return np.zeros_like(np.asarray(s, dtype=np.float64))


def sfe_gradient(spec, s, loss_value_fn, rng, state, sample_u=None):
    """Score function estimator on the categorical simplex.

    Samples z from softmax(s) and returns (L(z) - b) * (z - softmax(s)), the
    single-sample REINFORCE gradient. With method sfe-baseline, b is the
    moving average of past losses (used before being updated); plain sfe uses
    b = 0. Returns (vertex, gradient estimate).
    """
    s = np.asarray(s, dtype=np.float64)
    p = simplex.softmax(s)
    u = rng.random() if sample_u is None else sample_u
    i = min(int(np.searchsorted(np.cumsum(p), u)), s.size - 1)
    z = np.zeros_like(s)
    z[i] = 1.0

    loss = float(loss_value_fn(z))
    if spec.method == "sfe-baseline":
        b = state.baseline if state.warm else 0.0
        state.baseline = (
            spec.baseline_decay * state.baseline + (1.0 - spec.baseline_decay) * loss
            if state.warm
            else loss
        )
        state.warm = True
    else:
        b = 0.0
    return z, (loss - b) * (z - p)


def gumbel_forward_backward(spec, s, grad_loss, rng, noise=None):
    """Gumbel-perturbed categorical estimator.

    Perturbs the scores, s_tilde = (s + Gumbel) / temperature. Gumbel-Softmax
    keeps the relaxed forward softmax(s_tilde); ST-Gumbel snaps the forward to
    argmax(s_tilde). Both backpropagate through softmax(s_tilde), evaluating
    gamma at their own forward point. Returns (forward point, surrogate).
    """
    s = np.asarray(s, dtype=np.float64)
    g = rng.gumbel(size=s.size) if noise is None else noise
    s_tilde = (s + g) / spec.temperature
    if spec.method == "st-gumbel":
        mu_fwd = simplex.argmax_onehot(s_tilde)
    else:
        mu_fwd = simplex.softmax(s_tilde)
    gamma = grad_loss(mu_fwd)
    return mu_fwd, simplex.softmax_vjp(s_tilde, gamma)


def perturb_and_map_estimator(spec, s, grad_loss, oracle, rng, noise=None):
    """Structured stochastic estimator: sample by MAP over perturbed scores,
    backpropagate with the marginals Jacobian at those perturbed scores."""
    s = np.asarray(s, dtype=np.float64)
    g = rng.gumbel(size=s.size) if noise is None else noise
    s_tilde = s + g
    z = oracle.map(s_tilde)
    gamma = grad_loss(z)
    return z, oracle.marg_vjp(s_tilde, gamma)
