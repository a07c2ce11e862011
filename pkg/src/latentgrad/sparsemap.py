"""SparseMAP: Euclidean projection onto a marginal polytope via active sets.

Solves max_{mu in M} s^T mu - 1/2 ||mu||^2, where M = conv(Z) is described
only through a MAP oracle (argmax of a linear function over the vertex set).
Since the objective equals -1/2 ||mu - s||^2 up to a constant, this is the
projection of s onto M; the solution is a convex combination of few vertices.

The active-set method alternates between (a) asking the MAP oracle for the
vertex most aligned with the current gradient s - mu and (b) re-solving the
quadratic problem restricted to the currently selected vertices, dropping
vertices whose weight would go negative. The restricted problem is the
equality-constrained KKT system

    [ 0   1^T ] [ tau   ]   [ 1     ]
    [ 1   G   ] [ alpha ] = [ Z s   ]      G = Z Z^T (+ jitter on degeneracy)

solved by direct factorization; supports here stay tiny.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = ["SparseSolution", "sparsemap_solve", "sparsemap_vjp"]

_JITTER = 1e-10


@dataclass
class SparseSolution:
    mean: np.ndarray
    support: list
    weights: np.ndarray
    converged: bool
    iterations: int
    objective_trace: list = field(default_factory=list)

    def objective(self, s):
        return float(s @ self.mean - 0.5 * self.mean @ self.mean)


def _solve_restricted(Z, s):
    """KKT solve of the equality-constrained restricted QP; returns alpha."""
    n = len(Z)
    G = Z @ Z.T
    if n > 1:
        # jitter keeps the factorization stable when vertices are affinely
        # dependent; at these scales it perturbs weights by ~1e-10
        G = G + _JITTER * np.eye(n)
    kkt = np.zeros((n + 1, n + 1))
    kkt[0, 1:] = 1.0
    kkt[1:, 0] = 1.0
    kkt[1:, 1:] = G
    rhs = np.concatenate([[1.0], Z @ s])
    return np.linalg.solve(kkt, rhs)[1:]


def sparsemap_solve(s, map_oracle, max_iter=50, tol=1e-6):
    """Project s onto the polytope reachable through map_oracle.

    Each outer iteration calls map_oracle once on the residual s - mu. Stops
    when the duality gap (s - mu)^T (z_new - mu) falls to tol, or when the
    oracle returns a vertex already in the support (no further progress is
    possible at working precision). Hitting max_iter returns the best iterate
    with converged=False.
    """
    s = np.asarray(s, dtype=np.float64)
    z0 = np.asarray(map_oracle(s), dtype=np.float64)
    support = [z0]
    keys = {z0.tobytes()}
    alpha = np.array([1.0])
    mean = z0.copy()
    trace = [float(s @ mean - 0.5 * mean @ mean)]
    converged = False
    it = 0

    for it in range(1, max_iter + 1):
        residual = s - mean
        z_new = np.asarray(map_oracle(residual), dtype=np.float64)
        gap = residual @ z_new - residual @ mean
        if gap <= tol or z_new.tobytes() in keys:
            converged = True
            break

        support.append(z_new)
        keys.add(z_new.tobytes())
        alpha = np.concatenate([alpha, [0.0]])

        # inner active-set loop: re-solve, drop negative weights
        while True:
            Z = np.array(support)
            target = _solve_restricted(Z, s)
            if np.all(target >= -1e-12):
                alpha = np.maximum(target, 0.0)
                break
            neg = target < -1e-12
            steps = alpha[neg] / (alpha[neg] - target[neg])
            gamma = steps.min()
            alpha = alpha + gamma * (target - alpha)
            drop = int(np.argmin(np.where(neg, np.abs(alpha), np.inf)))
            del support[drop]
            alpha = np.delete(alpha, drop)
            keys = {z.tobytes() for z in support}

        alpha = alpha / alpha.sum()
        mean = np.array(support).T @ alpha
        trace.append(float(s @ mean - 0.5 * mean @ mean))

    # prune exact zeros so the support spans only the active face
    keep = alpha > 0.0
    support = [z for z, k in zip(support, keep) if k]
    alpha = alpha[keep]
    alpha = alpha / alpha.sum()
    mean = np.array(support).T @ alpha

    return SparseSolution(
        mean=mean,
        support=support,
        weights=alpha,
        converged=converged,
        iterations=it,
        objective_trace=trace,
    )


def sparsemap_vjp(sol, g):
    """J^T g for the projection's Jacobian on the active face.

    Differentiating the restricted KKT system at fixed support Z gives
    J = Z^T (G^-1 - G^-1 1 1^T G^-1 / (1^T G^-1 1)) Z, which annihilates any
    direction leaving the affine hull of the face; a singleton support is
    locally constant, so its Jacobian is zero.
    """
    if not sol.converged:
        raise ValueError("cannot differentiate an unconverged projection")
    g = np.asarray(g, dtype=np.float64)
    if g.shape != sol.mean.shape:
        raise ValueError(f"shape mismatch: mean {sol.mean.shape}, cotangent {g.shape}")
    Z = np.array(sol.support)
    n = len(Z)
    if n == 1:
        return np.zeros_like(g)
    G = Z @ Z.T + _JITTER * np.eye(n)
    Ginv = np.linalg.inv(G)
    one = np.ones(n)
    corr = Ginv @ one
    S = Ginv - np.outer(corr, corr) / (one @ corr)
    return Z.T @ (S @ (Z @ g))
