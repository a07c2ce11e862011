"""Single-root projective dependency trees: indexing, MAP, marginals, sampling.

A sentence has L tokens 1..L plus an artificial root 0. A tree assigns every
token exactly one head; exactly one token is the root's child; arcs drawn
above the sentence do not cross. Trees are encoded as 0/1 vectors over the
K = L^2 candidate arcs (h, m), h != m.

MAP inference is Eisner's O(L^3) split-head dynamic program. Marginals of the
Gibbs distribution p(z) proportional to exp(s^T z) come from the same chart
run in log-space, with the outside quantities obtained by reverse-mode
differentiation of the inside recurrences (the adjoint of an incomplete cell
is exactly its arc's marginal). The Eisner grammar gives each tree a unique
derivation, so the log-partition and the enumeration oracle agree exactly.

Eisner items over spans of 1..L, all score bookkeeping in log-space:

    C_r[i, j]  complete, head i, covering i..j
    C_l[i, j]  complete, head j, covering i..j
    I_r[i, j]  incomplete, arc i -> j
    I_l[i, j]  incomplete, arc j -> i

    I_r[i, j] = op_{i <= k < j} C_r[i, k] + C_l[k+1, j] + s(i -> j)
    I_l[i, j] = op_{i <= k < j} C_r[i, k] + C_l[k+1, j] + s(j -> i)
    C_r[i, j] = op_{i < k <= j} I_r[i, k] + C_r[k, j]
    C_l[i, j] = op_{i <= k < j} C_l[i, k] + I_l[k, j]

with op = max for MAP and op = logsumexp for the partition function, and the
root attached last: total = op_{r} s(0 -> r) + C_l[1, r] + C_r[r, L].
"""

import math

import numpy as np

__all__ = [
    "num_arcs",
    "arc_index",
    "arc_pair",
    "sentence_length",
    "tree_vector",
    "heads_of",
    "is_valid_tree",
    "enumerate_trees",
    "map_tree",
    "marginals",
    "marginals_vjp",
    "sample_perturb_map",
    "gibbs_sample_oracle",
]

MAX_ENUM_LENGTH = 8


def num_arcs(L):
    """Dimension of the arc score vector: L choices of head per modifier."""
    return L * L


def arc_index(h, m, L):
    """Coordinate of arc h -> m in the length-L^2 score vector.

    Modifiers own consecutive blocks of L entries; within modifier m the L
    valid heads {0..L} minus {m} appear in increasing order.
    """
    if not (1 <= m <= L and 0 <= h <= L and h != m):
        raise ValueError(f"invalid arc ({h} -> {m}) for L={L}")
    return (m - 1) * L + (h if h < m else h - 1)


def arc_pair(i, L):
    """Inverse of arc_index."""
    if not (0 <= i < L * L):
        raise ValueError(f"arc id {i} out of range for L={L}")
    m = i // L + 1
    h = i % L
    if h >= m:
        h += 1
    return h, m


def sentence_length(k):
    """Recover L from a score-vector length K = L^2."""
    L = math.isqrt(k)
    if L * L != k or L < 1:
        raise ValueError(f"score length {k} is not a positive perfect square")
    return L


def tree_vector(heads):
    """0/1 arc vector from a head array (entry m-1 is the head of token m)."""
    heads = np.asarray(heads, dtype=np.int64)
    L = heads.size
    z = np.zeros(num_arcs(L))
    for m, h in enumerate(heads, start=1):
        z[arc_index(int(h), m, L)] = 1.0
    return z


def heads_of(z):
    """Head array from a 0/1 arc vector; requires exactly one head per token."""
    z = np.asarray(z)
    L = sentence_length(z.size)
    heads = np.full(L, -1, dtype=np.int64)
    for i in np.flatnonzero(z):
        h, m = arc_pair(int(i), L)
        if heads[m - 1] != -1:
            raise ValueError(f"token {m} has two heads")
        heads[m - 1] = h
    if np.any(heads < 0):
        raise ValueError("some token has no head")
    return heads


def _descendants(heads, node):
    L = heads.size
    out = set()
    frontier = [node]
    while frontier:
        h = frontier.pop()
        for m in range(1, L + 1):
            if heads[m - 1] == h and m not in out:
                out.add(m)
                frontier.append(m)
    return out


def is_valid_tree(z):
    """Standalone validator: one head per token, single root child, connected,
    acyclic, and projective (every token between h and m descends from h)."""
    z = np.asarray(z)
    if not set(np.unique(z)) <= {0.0, 1.0}:
        return False
    try:
        heads = heads_of(z)
    except ValueError:
        return False
    L = heads.size
    if np.count_nonzero(heads == 0) != 1:
        return False
    # every token must reach the root without cycles
    for m in range(1, L + 1):
        seen = set()
        cur = m
        while cur != 0:
            if cur in seen:
                return False
            seen.add(cur)
            cur = int(heads[cur - 1])
    # projectivity
    for m in range(1, L + 1):
        h = int(heads[m - 1])
        desc = _descendants(heads, h) | {h}
        lo, hi = min(h, m), max(h, m)
        for t in range(lo + 1, hi):
            if t not in desc:
                return False
    return True


def enumerate_trees(L):
    """All single-root projective trees as rows of a (count, L^2) 0/1 matrix.

    Recursively expands the Eisner grammar, whose derivations are in
    bijection with trees, so no deduplication is needed. Restricted to
    L <= 8 because the count grows by roughly an order of magnitude per
    token.
    """
    if not (1 <= L <= MAX_ENUM_LENGTH):
        raise ValueError(f"enumeration supported for 1 <= L <= {MAX_ENUM_LENGTH}")
    memo = {}

    def items(kind, i, j):
        # each entry is a tuple of (h, m) arcs
        if i == j:
            return [()]
        key = (kind, i, j)
        if key in memo:
            return memo[key]
        out = []
        if kind == "cr":
            for k in range(i + 1, j + 1):
                for a in items("ir", i, k):
                    for b in items("cr", k, j):
                        out.append(a + b)
        elif kind == "cl":
            for k in range(i, j):
                for a in items("cl", i, k):
                    for b in items("il", k, j):
                        out.append(a + b)
        elif kind == "ir":
            for k in range(i, j):
                for a in items("cr", i, k):
                    for b in items("cl", k + 1, j):
                        out.append(a + b + ((i, j),))
        elif kind == "il":
            for k in range(i, j):
                for a in items("cr", i, k):
                    for b in items("cl", k + 1, j):
                        out.append(a + b + ((j, i),))
        memo[key] = out
        return out

    trees = []
    for r in range(1, L + 1):
        for left in items("cl", 1, r):
            for right in items("cr", r, L):
                arcs = ((0, r),) + left + right
                z = np.zeros(num_arcs(L))
                for h, m in arcs:
                    z[arc_index(h, m, L)] = 1.0
                trees.append(z)
    return np.array(trees)


def _score_matrix(s):
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 1:
        raise ValueError(f"expected a 1-D arc score vector, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise ValueError("arc scores must be finite")
    L = sentence_length(s.size)
    A = np.full((L + 1, L + 1), -np.inf)
    for m in range(1, L + 1):
        for h in range(L + 1):
            if h != m:
                A[h, m] = s[arc_index(h, m, L)]
    return A, L


def map_tree(s):
    """Highest-scoring single-root projective tree (Eisner, O(L^3)).

    Ties are broken by the DP's fixed iteration order: the first maximizing
    split/root in increasing index order wins, which makes the result
    deterministic.
    """
    A, L = _score_matrix(s)
    neg = -np.inf
    cr = np.full((L + 2, L + 2), neg)
    cl = np.full((L + 2, L + 2), neg)
    ir = np.full((L + 2, L + 2), neg)
    il = np.full((L + 2, L + 2), neg)
    bcr = np.zeros((L + 2, L + 2), dtype=np.int64)
    bcl = np.zeros((L + 2, L + 2), dtype=np.int64)
    bi = np.zeros((L + 2, L + 2), dtype=np.int64)
    for i in range(1, L + 1):
        cr[i, i] = 0.0
        cl[i, i] = 0.0

    for length in range(1, L):
        for i in range(1, L - length + 1):
            j = i + length
            # incomplete items share split scores
            best, arg = neg, i
            for k in range(i, j):
                v = cr[i, k] + cl[k + 1, j]
                if v > best:
                    best, arg = v, k
            ir[i, j] = best + A[i, j]
            il[i, j] = best + A[j, i]
            bi[i, j] = arg
            best, arg = neg, i + 1
            for k in range(i + 1, j + 1):
                v = ir[i, k] + cr[k, j]
                if v > best:
                    best, arg = v, k
            cr[i, j] = best
            bcr[i, j] = arg
            best, arg = neg, i
            for k in range(i, j):
                v = cl[i, k] + il[k, j]
                if v > best:
                    best, arg = v, k
            cl[i, j] = best
            bcl[i, j] = arg

    best, root = neg, 1
    for r in range(1, L + 1):
        v = A[0, r] + cl[1, r] + cr[r, L]
        if v > best:
            best, root = v, r

    arcs = [(0, root)]

    def walk(kind, i, j):
        if i == j and kind in ("cr", "cl"):
            return
        if kind == "cr":
            k = bcr[i, j]
            walk("ir", i, k)
            walk("cr", k, j)
        elif kind == "cl":
            k = bcl[i, j]
            walk("cl", i, k)
            walk("il", k, j)
        else:
            arcs.append((i, j) if kind == "ir" else (j, i))
            k = bi[i, j]
            walk("cr", i, k)
            walk("cl", k + 1, j)

    walk("cl", 1, root)
    walk("cr", root, L)
    z = np.zeros(num_arcs(L))
    for h, m in arcs:
        z[arc_index(h, m, L)] = 1.0
    return z


def _logsumexp(v):
    m = np.max(v)
    if m == -np.inf:
        return -np.inf
    return m + np.log(np.sum(np.exp(v - m)))


def marginals(s):
    """Arc marginals of p(z) ~ exp(s^T z) and the log-partition.

    Inside pass: the MAP chart with logsumexp in place of max. Outside pass:
    adjoints of logZ with respect to each chart cell, walked from large spans
    to small; the adjoint of an incomplete cell is its arc's marginal because
    that cell is the only place the arc score enters.
    """
    A, L = _score_matrix(s)
    neg = -np.inf
    cr = np.full((L + 2, L + 2), neg)
    cl = np.full((L + 2, L + 2), neg)
    ir = np.full((L + 2, L + 2), neg)
    il = np.full((L + 2, L + 2), neg)
    for i in range(1, L + 1):
        cr[i, i] = 0.0
        cl[i, i] = 0.0

    for length in range(1, L):
        for i in range(1, L - length + 1):
            j = i + length
            split = _logsumexp(cr[i, i:j] + cl[i + 1 : j + 1, j])
            ir[i, j] = split + A[i, j]
            il[i, j] = split + A[j, i]
            cr[i, j] = _logsumexp(ir[i, i + 1 : j + 1] + cr[i + 1 : j + 1, j])
            cl[i, j] = _logsumexp(cl[i, i:j] + il[i:j, j])

    root_terms = np.array([A[0, r] + cl[1, r] + cr[r, L] for r in range(1, L + 1)])
    logZ = _logsumexp(root_terms)

    # adjoint arrays, seeded by the root attachment
    acr = np.zeros((L + 2, L + 2))
    acl = np.zeros((L + 2, L + 2))
    air = np.zeros((L + 2, L + 2))
    ail = np.zeros((L + 2, L + 2))
    mu = np.zeros(num_arcs(L))
    root_w = np.exp(root_terms - logZ)
    for r in range(1, L + 1):
        mu[arc_index(0, r, L)] = root_w[r - 1]
        acl[1, r] += root_w[r - 1]
        acr[r, L] += root_w[r - 1]

    for length in range(L - 1, 0, -1):
        for i in range(1, L - length + 1):
            j = i + length
            # complete cells first: they feed same-length incomplete cells
            if acr[i, j] != 0.0:
                w = np.exp(ir[i, i + 1 : j + 1] + cr[i + 1 : j + 1, j] - cr[i, j])
                air[i, i + 1 : j + 1] += acr[i, j] * w
                acr[i + 1 : j + 1, j] += acr[i, j] * w
            if acl[i, j] != 0.0:
                w = np.exp(cl[i, i:j] + il[i:j, j] - cl[i, j])
                acl[i, i:j] += acl[i, j] * w
                ail[i:j, j] += acl[i, j] * w
            for kind, adj in (("ir", air[i, j]), ("il", ail[i, j])):
                if adj == 0.0:
                    continue
                cell = ir[i, j] if kind == "ir" else il[i, j]
                w = np.exp(cr[i, i:j] + cl[i + 1 : j + 1, j] + (A[i, j] if kind == "ir" else A[j, i]) - cell)
                acr[i, i:j] += adj * w
                acl[i + 1 : j + 1, j] += adj * w
                h, m = (i, j) if kind == "ir" else (j, i)
                mu[arc_index(h, m, L)] = adj

    return mu, float(logZ)


def marginals_vjp(s, g):
    """H^T g with H the Jacobian of marginals(s), exactly Cov_p[z, z].

    Computed by enumeration: H g = E_p[z (z^T g)] - mu (mu^T g). Restricted to
    L <= 8 where enumeration stays cheap; this keeps the backward pass exact
    rather than approximating a second-order dynamic program.
    """
    s = np.asarray(s, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if g.shape != s.shape:
        raise ValueError(f"shape mismatch: scores {s.shape}, cotangent {g.shape}")
    L = sentence_length(s.size)
    Z = enumerate_trees(L)
    q = Z @ s
    p = np.exp(q - _logsumexp(q))
    mu = Z.T @ p
    return Z.T @ (p * (Z @ g)) - mu * (mu @ g)


def sample_perturb_map(s, rng):
    """Approximate sample: MAP after i.i.d. standard Gumbel noise on each arc."""
    s = np.asarray(s, dtype=np.float64)
    noise = rng.gumbel(size=s.size)
    return map_tree(s + noise)


def gibbs_sample_oracle(s, rng):
    """Exact Gibbs sample by enumeration (test oracle, L <= 8)."""
    s = np.asarray(s, dtype=np.float64)
    L = sentence_length(s.size)
    Z = enumerate_trees(L)
    q = Z @ s
    p = np.exp(q - _logsumexp(q))
    idx = rng.choice(len(Z), p=p / p.sum())
    return Z[idx]
