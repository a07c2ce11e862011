"""Surrogate gradients for discrete latent variables.

Categorical and structured (projective dependency tree) latent spaces,
the pulled-back-label estimator family (STE-I, STE-S, SPIGOT, SPIGOT-CE,
SPIGOT-EG), stochastic estimators (SFE, Gumbel variants, Perturb-and-MAP),
relaxed baselines, exact brute-force oracles, and a synthetic experiment
harness.

Submodules: simplex, treedp, sparsemap, estimators, models, data, metrics,
batched, harness.
"""

__version__ = "0.1.0"
