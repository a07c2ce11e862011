"""Synthetic datasets with known generative structure.

Mixture task: z ~ Categorical(1/K), x ~ Normal(m_z, sigma I), and a binary
label y = sign(w_z^T x + b_z) from a per-cluster linear model. Knowing the
process lets experiments score cluster recovery, not just accuracy.

Structured task: token features plus a hidden arc scorer; the latent target
z* is the MAP projective tree of the hidden scores and the label comes from
a hidden decoder applied to z*, so head recovery (UAS) is measurable.

All randomness flows through numpy's default_rng (PCG64, a documented 64-bit
permuted congruential generator), so the same seed reproduces files bitwise
across platforms. Files are CSV plus a JSON sidecar holding the spec and the
realized generator parameters.
"""

import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from latentgrad import treedp
from latentgrad.models import StructuredToyModel

__all__ = [
    "MixtureSpec",
    "MixtureDataset",
    "StructuredSpec",
    "StructuredDataset",
    "gen_mixture",
    "gen_structured_toy",
    "save_mixture",
    "load_mixture",
    "save_structured",
    "load_structured",
]


@dataclass(frozen=True)
class MixtureSpec:
    """Generative constants for the mixture-of-linear-models task.

    Centers sit on a sphere of `radius` (well separated against `noise`, so
    the clusters are recoverable). Each cluster's weight vector has norm
    `margin_scale` and points along +/- its center direction at `align_angle`
    radians; the +/- sign pattern is mixed across clusters. Thresholds keep
    within-cluster label rates moderate (offset up to `threshold_spread`
    within-cluster standard deviations), so a single global hyperplane cannot
    win by predicting per-cluster majorities. Draws whose label margin falls
    within `margin_gap` within-cluster margin deviations of the threshold are
    redrawn, leaving a slab between the label regions; without that slab a
    per-cluster linear rule in a few hundred dimensions cannot be estimated
    well from a few thousand examples, and dimension is what separates the
    estimator families under study (sampling noise per coordinate grows with
    dim while deterministic surrogate directions do not degrade).

    The geometry constants were calibrated once on the default seed so a
    global logistic model sits near 68% accuracy while a decoder given the
    true clusters sits near 92%, and are frozen here.
    """

    n_clusters: int = 3
    dim: int = 100
    n_train: int = 5000
    n_valid: int = 1000
    n_test: int = 1000
    noise: float = 1.0
    radius: float = 6.0
    margin_scale: float = 3.0
    align_angle: float = 1.40
    threshold_spread: float = 0.8
    margin_gap: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_clusters < 2:
            raise ValueError("need at least two clusters")
        if self.dim < 2:
            raise ValueError("need at least two input dimensions")
        if not self.noise > 0:
            raise ValueError("noise must be positive")
        if not 0 < self.align_angle < np.pi / 2:
            raise ValueError("align_angle must lie strictly inside (0, pi/2)")
        if not 0 <= self.margin_gap < 4.0:
            raise ValueError("margin_gap must lie in [0, 4)")
        for name in ("n_train", "n_valid", "n_test"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


@dataclass
class Split:
    x: np.ndarray  # (n, D) float64
    y: np.ndarray  # (n,) float64 in {-1, +1}
    z: np.ndarray  # (n,) int64 cluster ids

    def __post_init__(self):
        if not np.all(np.isin(self.y, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")

    def __eq__(self, other):
        return (
            np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.z, other.z)
        )


@dataclass
class MixtureDataset:
    spec: MixtureSpec
    centers: np.ndarray  # (K, D)
    weights: np.ndarray  # (K, D) true per-cluster w_z
    biases: np.ndarray  # (K,) true per-cluster b_z
    train: Split
    valid: Split
    test: Split

    def __eq__(self, other):
        return (
            self.spec == other.spec
            and np.array_equal(self.centers, other.centers)
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.biases, other.biases)
            and self.train == other.train
            and self.valid == other.valid
            and self.test == other.test
        )


def _sign_label(margin):
    # sign with the measure-zero tie sent to +1 so labels stay in {-1, +1}
    return np.where(margin >= 0.0, 1.0, -1.0)


def _gaussian_cdf(t):
    return 0.5 * (1.0 + math.erf(t / math.sqrt(2.0)))


def _positive_rate(u, gap):
    # P(margin > 0 | |margin| >= gap) for a standardized margin N(u, 1)
    above = _gaussian_cdf(u - gap)
    below = 1.0 - _gaussian_cdf(u + gap)
    return above / (above + below)


def _balance_shift(offsets, gap):
    """Shift delta such that the expected label balance is one half.

    Within cluster k the label margin is N(t_k, (margin_scale*noise)^2) with
    t_k = margin_scale*noise*(offsets[k] + delta), and draws inside the
    margin gap are rejected, so the positive rate is the truncated-Gaussian
    expression in _positive_rate. Recentring the threshold pattern keeps a
    majority classifier from pocketing most of the accuracy when a small K
    draws all thresholds on one side.
    """
    lo = -(np.max(offsets) + 8.0)
    hi = -(np.min(offsets) - 8.0)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.mean([_positive_rate(u + mid, gap) for u in offsets]) < 0.5:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def gen_mixture(spec):
    rng = np.random.default_rng(spec.seed)
    K, D = spec.n_clusters, spec.dim

    # centers: random directions, redrawn until pairwise well separated
    while True:
        directions = rng.normal(size=(K, D))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        cosines = directions @ directions.T
        if np.max(cosines - np.eye(K)) < 0.45:
            break
    centers = spec.radius * directions

    # one minority-sign cluster per three: their thresholds cannot all be
    # served by the decoder's single shared intercept
    signs = np.ones(K)
    n_minus = max(1, round(0.3 * K))
    signs[rng.permutation(K)[:n_minus]] = -1.0

    weights = np.zeros((K, D))
    biases = np.zeros(K)
    offsets = np.zeros(K)
    for k in range(K):
        g = rng.normal(size=D)
        perp = g - (g @ directions[k]) * directions[k]
        perp /= np.linalg.norm(perp)
        w_dir = np.cos(spec.align_angle) * signs[k] * directions[k] + np.sin(
            spec.align_angle
        ) * perp
        weights[k] = spec.margin_scale * w_dir
        # threshold offset in units of the within-cluster margin deviation
        offsets[k] = rng.uniform(-spec.threshold_spread, spec.threshold_spread)
    shift = _balance_shift(offsets, spec.margin_gap)
    for k in range(K):
        t = spec.margin_scale * spec.noise * (offsets[k] + shift)
        biases[k] = t - weights[k] @ centers[k]

    def draw(n):
        z = rng.integers(0, K, size=n)
        x = centers[z] + spec.noise * rng.normal(size=(n, D))
        if spec.margin_gap > 0.0:
            slab = spec.margin_gap * spec.margin_scale * spec.noise
            for _ in range(1000):
                g = np.einsum("nd,nd->n", x, weights[z]) + biases[z]
                bad = np.flatnonzero(np.abs(g) < slab)
                if bad.size == 0:
                    break
                x[bad] = centers[z[bad]] + spec.noise * rng.normal(size=(bad.size, D))
            else:
                raise RuntimeError("margin gap rejection did not converge")
        y = _sign_label(np.einsum("nd,nd->n", x, weights[z]) + biases[z])
        return Split(x=x, y=y, z=z)

    return MixtureDataset(
        spec=spec,
        centers=centers,
        weights=weights,
        biases=biases,
        train=draw(spec.n_train),
        valid=draw(spec.n_valid),
        test=draw(spec.n_test),
    )


@dataclass(frozen=True)
class StructuredSpec:
    """Generative constants for the projective-tree toy task.

    Labels are centered at the median hidden-decoder logit and examples too
    close to that threshold are rejected, so a decoder given the true trees
    can separate the classes cleanly.
    """

    min_length: int = 3
    max_length: int = 6
    dim: int = 4
    hidden: int = 8
    n_train: int = 400
    n_valid: int = 200
    n_test: int = 200
    margin: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.min_length <= self.max_length <= treedp.MAX_ENUM_LENGTH:
            raise ValueError("lengths must fit the exact-inference range")
        if self.dim < 1 or self.hidden < 1:
            raise ValueError("dim and hidden must be positive")
        if self.margin < 0:
            raise ValueError("margin must be nonnegative")


@dataclass
class TreeSplit:
    xs: list  # list of (L, d) float64 arrays
    y: np.ndarray  # (n,) float64 in {-1, +1}
    heads: list  # list of (L,) int64 head arrays

    def __eq__(self, other):
        return (
            len(self.xs) == len(other.xs)
            and all(np.array_equal(a, b) for a, b in zip(self.xs, other.xs))
            and np.array_equal(self.y, other.y)
            and all(np.array_equal(a, b) for a, b in zip(self.heads, other.heads))
        )


@dataclass
class StructuredDataset:
    spec: StructuredSpec
    scorer_params: dict = field(repr=False)
    threshold: float = 0.0
    train: TreeSplit = None
    valid: TreeSplit = None
    test: TreeSplit = None

    def __eq__(self, other):
        return (
            self.spec == other.spec
            and set(self.scorer_params) == set(other.scorer_params)
            and all(
                np.array_equal(self.scorer_params[k], other.scorer_params[k])
                for k in self.scorer_params
            )
            and self.threshold == other.threshold
            and self.train == other.train
            and self.valid == other.valid
            and self.test == other.test
        )


def gen_structured_toy(spec):
    """Token features -> hidden scorer -> MAP tree -> hidden decoder label.

    The label threshold is the median hidden logit of a generation pool, and
    pool items within `margin` of it are discarded; rejected draws are simply
    skipped, so generation stays deterministic given the seed.
    """
    rng = np.random.default_rng(spec.seed)
    hidden_model = StructuredToyModel.init(rng, spec.dim, hidden=spec.hidden, scale=1.0)

    n_total = spec.n_train + spec.n_valid + spec.n_test
    pool_xs, pool_heads, pool_logits = [], [], []
    # oversample, then threshold at the pool median for balanced labels
    while len(pool_xs) < 2 * n_total:
        L = int(rng.integers(spec.min_length, spec.max_length + 1))
        xs = rng.normal(size=(L, spec.dim))
        z_star = treedp.map_tree(hidden_model.encode(xs))
        pool_xs.append(xs)
        pool_heads.append(treedp.heads_of(z_star))
        pool_logits.append(hidden_model.decode(xs, z_star))
    logits = np.asarray(pool_logits)
    threshold = float(np.median(logits))
    keep = np.abs(logits - threshold) > spec.margin
    idx = np.flatnonzero(keep)[:n_total]
    if idx.size < n_total:
        raise RuntimeError("margin filter rejected too many examples")

    xs = [pool_xs[i] for i in idx]
    heads = [pool_heads[i] for i in idx]
    y = _sign_label(logits[idx] - threshold)

    def take(lo, hi):
        return TreeSplit(xs=xs[lo:hi], y=y[lo:hi].copy(), heads=heads[lo:hi])

    a, b = spec.n_train, spec.n_train + spec.n_valid
    ds = StructuredDataset(
        spec=spec,
        scorer_params=hidden_model.params,
        threshold=threshold,
        train=take(0, a),
        valid=take(a, b),
        test=take(b, n_total),
    )
    balance = float(np.mean(ds.train.y > 0))
    if not 0.4 <= balance <= 0.6:
        raise RuntimeError(f"label balance {balance:.3f} outside [0.4, 0.6]")
    return ds


# ---------------------------------------------------------------------------
# serialization: CSV per split plus a JSON sidecar with generator parameters


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _read_csv(path):
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split(",")
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    return header, rows


def save_mixture(ds, outdir):
    """train/valid/test.csv with header x0..x{D-1},y,z_true, plus meta.json.

    Floats are written with repr, the shortest digits that round-trip
    float64 exactly.
    """
    os.makedirs(outdir, exist_ok=True)
    D = ds.spec.dim
    header = [f"x{j}" for j in range(D)] + ["y", "z_true"]
    for name in ("train", "valid", "test"):
        split = getattr(ds, name)
        rows = (
            [repr(float(v)) for v in split.x[i]]
            + [str(int(split.y[i])), str(int(split.z[i]))]
            for i in range(len(split.y))
        )
        _write_csv(os.path.join(outdir, f"{name}.csv"), header, rows)
    meta = {
        "task": "mixture",
        "spec": asdict(ds.spec),
        "centers": ds.centers.tolist(),
        "weights": ds.weights.tolist(),
        "biases": ds.biases.tolist(),
    }
    with open(os.path.join(outdir, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=1)


def load_mixture(outdir):
    with open(os.path.join(outdir, "meta.json")) as fh:
        meta = json.load(fh)
    if meta.get("task") != "mixture":
        raise ValueError(f"not a mixture dataset: {outdir}")
    spec = MixtureSpec(**meta["spec"])
    splits = {}
    for name in ("train", "valid", "test"):
        header, rows = _read_csv(os.path.join(outdir, f"{name}.csv"))
        D = spec.dim
        if header != [f"x{j}" for j in range(D)] + ["y", "z_true"]:
            raise ValueError(f"unexpected header in {name}.csv")
        x = np.array([[float(v) for v in row[:D]] for row in rows])
        y = np.array([float(row[D]) for row in rows])
        z = np.array([int(row[D + 1]) for row in rows], dtype=np.int64)
        splits[name] = Split(x=x, y=y, z=z)
    return MixtureDataset(
        spec=spec,
        centers=np.array(meta["centers"]),
        weights=np.array(meta["weights"]),
        biases=np.array(meta["biases"]),
        **splits,
    )


def save_structured(ds, outdir):
    """Rows are y,L,h1..h{Lmax},x0..x{Lmax*d-1}; heads pad with -1 and
    features with 0.0 up to the spec's max length."""
    os.makedirs(outdir, exist_ok=True)
    Lmax, d = ds.spec.max_length, ds.spec.dim
    header = (
        ["y", "L"]
        + [f"h{m}" for m in range(1, Lmax + 1)]
        + [f"x{j}" for j in range(Lmax * d)]
    )
    for name in ("train", "valid", "test"):
        split = getattr(ds, name)

        def rows():
            for i in range(len(split.y)):
                L = split.xs[i].shape[0]
                heads = list(split.heads[i]) + [-1] * (Lmax - L)
                feats = np.zeros(Lmax * d)
                feats[: L * d] = split.xs[i].ravel()
                yield (
                    [str(int(split.y[i])), str(L)]
                    + [str(int(h)) for h in heads]
                    + [repr(float(v)) for v in feats]
                )

        _write_csv(os.path.join(outdir, f"{name}.csv"), header, rows())
    meta = {
        "task": "structured",
        "spec": asdict(ds.spec),
        "threshold": ds.threshold,
        "scorer_params": {k: np.asarray(v).tolist() for k, v in ds.scorer_params.items()},
    }
    with open(os.path.join(outdir, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=1)


def load_structured(outdir):
    with open(os.path.join(outdir, "meta.json")) as fh:
        meta = json.load(fh)
    if meta.get("task") != "structured":
        raise ValueError(f"not a structured dataset: {outdir}")
    spec = StructuredSpec(**meta["spec"])
    Lmax, d = spec.max_length, spec.dim
    splits = {}
    for name in ("train", "valid", "test"):
        _, rows = _read_csv(os.path.join(outdir, f"{name}.csv"))
        xs, heads, y = [], [], []
        for row in rows:
            y.append(float(row[0]))
            L = int(row[1])
            heads.append(np.array([int(v) for v in row[2 : 2 + L]], dtype=np.int64))
            flat = [float(v) for v in row[2 + Lmax : 2 + Lmax + L * d]]
            xs.append(np.array(flat).reshape(L, d))
        splits[name] = TreeSplit(xs=xs, y=np.array(y), heads=heads)
    params = {k: np.array(v) for k, v in meta["scorer_params"].items()}
    return StructuredDataset(
        spec=spec,
        scorer_params=params,
        threshold=meta["threshold"],
        **splits,
    )
