"""Full-batch training runs over the synthetic tasks.

One run = one (method, lr, eta, k, seed) cell: AdamW over the full training
split for a fixed number of epochs, periodic evaluation, final test metrics
from the best-validation-accuracy snapshot.  Everything a run produces lands
in a RunRecord whose numeric content is deterministic given (config, dataset);
wall time is the one field allowed to differ between repeats.

Besides the estimator methods, two reference rows are trainable:

* ``linear``: a single-cluster model, which collapses the latent layer to a
  constant and reduces the architecture to logistic regression.  Its cluster
  prediction is constant, so the V-measure is 0 by definition of the metric.
* ``oracle``: the decoder is fed the one-hot true cluster (or the gold tree);
  the encoder never trains.  Cluster recovery is perfect by construction.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from ..batched import (
    argmax_b,
    batch_estimator,
    decoder_calls_per_example,
    row_dot,
    softmax_b,
    sparsemax_b,
)
from ..data import MixtureDataset, StructuredDataset
from ..estimators import (
    METHODS,
    CountingGradLoss,
    EstimatorSpec,
    SFEState,
    TreeOracle,
    backward_exact_argmax,
    backward_spigot,
    backward_spigot_ce,
    backward_spigot_eg,
    backward_ste_i,
    backward_ste_s,
)
from ..metrics import uas, v_measure
from ..models import StructuredToyModel, UnstructuredModel, sigmoid
from ..sparsemap import sparsemap_vjp
from ..treedp import gibbs_sample_oracle, heads_of, tree_vector
from .optim import AdamWConfig, adamw_init, adamw_step

__all__ = [
    "TRAIN_METHODS",
    "TrainConfig",
    "RunRecord",
    "train",
    "records_match",
]

# reference rows on top of the estimator set
TRAIN_METHODS = ("linear", "oracle") + METHODS


@dataclass(frozen=True)
class TrainConfig:
    """One training cell: method, optimizer, and estimator knobs.

    lr/eta follow the synthetic-task grids (lr in {1e-4, 1e-3, 2e-3}, eta in
    {0.1, 1, 2}); epochs and full-batch updates are fixed by the protocol.
    eval_every controls both the metric time series and the snapshots the
    best-validation model is selected from.
    """

    method: str
    lr: float = 1e-3
    eta: float = 1.0
    k: int = 1
    temperature: float = 1.0
    baseline_decay: float = 0.9
    epochs: int = 10000
    seed: int = 0
    eval_every: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    init_scale: float = 0.1
    hidden: int = 8

    def __post_init__(self) -> None:
        if self.method not in TRAIN_METHODS:
            raise ValueError(
                f"unknown method {self.method!r}; choose from {TRAIN_METHODS}"
            )
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.eval_every < 1:
            raise ValueError("eval_every must be at least 1")
        if self.init_scale <= 0.0:
            raise ValueError("init_scale must be positive")
        if self.hidden < 1:
            raise ValueError("hidden must be at least 1")
        # delegate range checks for the shared knobs
        self.optimizer()
        self.estimator_spec()

    def optimizer(self) -> AdamWConfig:
        return AdamWConfig(
            lr=self.lr,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
            weight_decay=self.weight_decay,
        )

    def estimator_spec(self) -> EstimatorSpec | None:
        """The estimator behind this cell; None for the oracle row.

        The linear baseline trains a single-cluster model, so its latent
        forward is the constant vertex and exact-argmax (the null surrogate)
        is the matching estimator.
        """
        if self.method == "oracle":
            return None
        name = "exact-argmax" if self.method == "linear" else self.method
        return EstimatorSpec(
            method=name,
            eta=self.eta,
            k=self.k,
            temperature=self.temperature,
            baseline_decay=self.baseline_decay,
        )


@dataclass
class RunRecord:
    """Everything one run emits.

    history rows carry (epoch, train_loss, train_acc, valid_acc, valid_v or
    valid_uas, decoder_calls); final carries the test metrics of the best
    validation snapshot.  All numeric fields are plain Python ints/floats so
    two records can be compared exactly; wall_time is excluded from that
    comparison (see records_match).
    """

    config: dict[str, Any]
    history: list[dict[str, Any]] = field(default_factory=list)
    final: dict[str, Any] = field(default_factory=dict)
    decoder_calls: int = 0
    wall_time: float = 0.0
    failed: bool = False
    error: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "config": dict(self.config),
            "history": [dict(row) for row in self.history],
            "final": dict(self.final),
            "decoder_calls": self.decoder_calls,
            "wall_time": self.wall_time,
            "failed": self.failed,
            "error": self.error,
        }


def records_match(a: RunRecord, b: RunRecord) -> bool:
    """Exact equality of two records' numeric content, ignoring wall time."""
    da, db = a.to_dict(), b.to_dict()
    da.pop("wall_time")
    db.pop("wall_time")
    return da == db


def _config_snapshot(config: TrainConfig, dataset) -> dict[str, Any]:
    task = "mixture" if isinstance(dataset, MixtureDataset) else "structured"
    return {**asdict(config), "task": task, "data": asdict(dataset.spec)}


def _onehot(labels, k):
    out = np.zeros((labels.size, k))
    out[np.arange(labels.size), labels] = 1.0
    return out


# ---------------------------------------------------------------------------
# mixture task


def _eval_mu_mixture(method, S, z_true, k):
    # deterministic evaluation forward: relaxed methods decode their relaxed
    # point, every argmax-forward method (and the stochastic ones, evaluated
    # noise-free) decodes the MAP vertex
    if method == "oracle":
        return _onehot(z_true, k)
    if method in ("softmax", "gumbel-softmax"):
        return softmax_b(S)
    if method == "sparsemax":
        return sparsemax_b(S)
    return argmax_b(S)


def _eval_mixture(model, method, split):
    S = split.x @ model.params["W_f"].T + model.params["b_f"]
    P = split.x @ model.params["W_g"].T
    mu = _eval_mu_mixture(method, S, split.z, model.n_clusters)
    logit = row_dot(mu, P) + float(model.params["b_g"])
    pred_y = np.where(logit >= 0.0, 1.0, -1.0)
    acc = float(np.mean(pred_y == split.y))
    # cluster predictions are always the encoder argmax; the oracle's
    # assignment is the gold labeling it was given
    labels = split.z if method == "oracle" else np.argmax(S, axis=1)
    v = float(v_measure(labels, split.z).v_measure)
    return acc, v


def _train_mixture(config: TrainConfig, dataset: MixtureDataset, model=None) -> RunRecord:
    t0 = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    k = 1 if config.method == "linear" else dataset.spec.n_clusters
    if model is None:
        model = UnstructuredModel.init(rng, k, dataset.spec.dim, scale=config.init_scale)
    spec = config.estimator_spec()
    opt = config.optimizer()
    opt_state = adamw_init(model.params)
    sfe_state = SFEState()

    X, y, n = dataset.train.x, dataset.train.y, dataset.train.x.shape[0]
    mu_oracle = _onehot(dataset.train.z, k) if config.method == "oracle" else None
    calls_per_example = 1 if spec is None else decoder_calls_per_example(spec)

    record = RunRecord(config=_config_snapshot(config, dataset))
    best_acc, best_epoch, best_params = -1.0, 0, None

    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, config.epochs + 1):
            S = X @ model.params["W_f"].T + model.params["b_f"]
            P = X @ model.params["W_g"].T
            if spec is None:
                mu_fwd, surrogate = mu_oracle, np.zeros_like(S)
            else:
                bb = batch_estimator(
                    spec, S, P, y, model.params["b_g"], rng=rng, sfe_state=sfe_state
                )
                mu_fwd, surrogate = bb.mu_forward, bb.surrogate

            logit = row_dot(mu_fwd, P) + float(model.params["b_g"])
            train_loss = float(np.mean(np.logaddexp(0.0, -y * logit)))
            if not np.isfinite(train_loss):
                record.failed, record.error = True, "non-finite training loss"
                break

            coef = -y * sigmoid(-y * logit)
            grads = {
                "W_f": surrogate.T @ X / n,
                "b_f": surrogate.mean(axis=0),
                "W_g": (coef[:, None] * mu_fwd).T @ X / n,
                "b_g": np.asarray(coef.mean()),
            }
            try:
                adamw_step(model.params, grads, opt_state, opt)
            except FloatingPointError as exc:
                record.failed, record.error = True, str(exc)
                break
            record.decoder_calls += calls_per_example * n

            if epoch % config.eval_every == 0 or epoch == config.epochs:
                train_acc, _ = _eval_mixture(model, config.method, dataset.train)
                valid_acc, valid_v = _eval_mixture(model, config.method, dataset.valid)
                record.history.append(
                    {
                        "epoch": epoch,
                        "train_loss": train_loss,
                        "train_acc": train_acc,
                        "valid_acc": valid_acc,
                        "valid_v": valid_v,
                        "decoder_calls": record.decoder_calls,
                    }
                )
                if valid_acc > best_acc:
                    best_acc, best_epoch = valid_acc, epoch
                    best_params = {k_: p.copy() for k_, p in model.params.items()}

    if best_params is not None:
        chosen = model.clone()
        chosen.params.update(best_params)
        test_acc, test_v = _eval_mixture(chosen, config.method, dataset.test)
        record.final = {
            "best_epoch": best_epoch,
            "best_valid_acc": best_acc,
            "test_acc": test_acc,
            "test_v": test_v,
        }
    record.wall_time = time.perf_counter() - t0
    return record


# ---------------------------------------------------------------------------
# structured task


def _example_backward(spec, s, oracle, grad_loss, rng):
    """Forward point and surrogate for one structured example.

    Stochastic score-function methods are handled by the caller (their
    baseline is shared across the batch); everything else dispatches here.
    """
    m = spec.method
    if m == "exact-argmax":
        return oracle.map(s), backward_exact_argmax(spec, s, grad_loss, oracle)
    if m == "softmax":
        mu = oracle.marg(s)
        return mu, oracle.marg_vjp(s, grad_loss(mu))
    if m == "sparsemax":
        sol = oracle.project(s)
        return sol.mean, sparsemap_vjp(sol, grad_loss(sol.mean))
    if m == "ste-s":
        return oracle.map(s), backward_ste_s(spec, s, grad_loss, oracle)
    if m == "ste-i":
        return oracle.map(s), backward_ste_i(spec, s, grad_loss, oracle)
    if m == "spigot":
        return oracle.map(s), backward_spigot(spec, s, grad_loss, oracle)
    if m == "spigot-ce":
        return oracle.map(s), backward_spigot_ce(spec, s, grad_loss, oracle)
    if m == "spigot-eg":
        return oracle.map(s), backward_spigot_eg(spec, s, grad_loss, oracle)
    if m in ("gumbel-softmax", "st-gumbel"):
        noise = rng.gumbel(size=np.asarray(s).size)
        s_tilde = (np.asarray(s, dtype=np.float64) + noise) / spec.temperature
        mu = oracle.map(s_tilde) if m == "st-gumbel" else oracle.marg(s_tilde)
        return mu, oracle.marg_vjp(s_tilde, grad_loss(mu))
    if m == "perturb-and-map":
        noise = rng.gumbel(size=np.asarray(s).size)
        s_tilde = np.asarray(s, dtype=np.float64) + noise
        z = oracle.map(s_tilde)
        return z, oracle.marg_vjp(s_tilde, grad_loss(z))
    raise ValueError(f"method {m!r} has no structured backward")


def _eval_mu_structured(method, s, oracle, gold_vec):
    if method == "oracle":
        return gold_vec
    if method in ("softmax", "gumbel-softmax"):
        return oracle.marg(s)
    if method == "sparsemax":
        return oracle.project(s).mean
    return oracle.map(s)


def _eval_structured(model, method, split, oracles):
    correct = 0
    pred_heads, gold_heads = [], []
    for xs, y_i, heads in zip(split.xs, split.y, split.heads):
        oracle = oracles[xs.shape[0]]
        s = model.encode(xs)
        mu = _eval_mu_structured(method, s, oracle, tree_vector(heads))
        logit = model.decode(xs, mu)
        pred = 1.0 if logit >= 0.0 else -1.0
        correct += pred == y_i
        pred_heads.append(heads if method == "oracle" else heads_of(oracle.map(s)))
        gold_heads.append(heads)
    acc = correct / len(split.xs)
    # micro-average UAS: one elementwise comparison over all tokens
    tree_score = float(uas(np.concatenate(pred_heads), np.concatenate(gold_heads)))
    return float(acc), tree_score


def _train_structured(config: TrainConfig, dataset: StructuredDataset, model=None) -> RunRecord:
    if config.method == "linear":
        raise ValueError("the linear baseline is specific to the mixture task")
    t0 = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    if model is None:
        model = StructuredToyModel.init(
            rng, dataset.spec.dim, hidden=config.hidden, scale=config.init_scale
        )
    spec = config.estimator_spec()
    opt = config.optimizer()
    opt_state = adamw_init(model.params)
    sfe_state = SFEState()

    split = dataset.train
    n = len(split.xs)
    oracles = {
        length: TreeOracle(length)
        for length in sorted({xs.shape[0] for xs in split.xs})
    }
    for part in (dataset.valid, dataset.test):
        for xs in part.xs:
            oracles.setdefault(xs.shape[0], TreeOracle(xs.shape[0]))
    gold_vecs = [tree_vector(h) for h in split.heads]
    calls_per_example = 1 if spec is None else decoder_calls_per_example(spec)
    sfe_method = spec is not None and spec.method in ("sfe", "sfe-baseline")

    record = RunRecord(config=_config_snapshot(config, dataset))
    best_acc, best_epoch, best_params = -1.0, 0, None

    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, config.epochs + 1):
            grads = {name: np.zeros_like(p) for name, p in model.params.items()}
            train_loss = 0.0
            # score-function baseline: shared pre-update value, one update
            # with the batch mean loss (mirrors the batched mixture path)
            sfe_b = sfe_state.baseline if sfe_state.warm else 0.0

            for i in range(n):
                xs, y_i = split.xs[i], split.y[i]
                oracle = oracles[xs.shape[0]]
                s = model.encode(xs)
                grad_loss = CountingGradLoss(lambda mu, xs=xs, y_i=y_i: model.gamma(xs, y_i, mu))
                if spec is None:
                    mu_fwd, surrogate = gold_vecs[i], np.zeros_like(s)
                elif sfe_method:
                    mu_fwd = gibbs_sample_oracle(s, rng)
                    loss_z = model.loss(xs, y_i, mu_fwd)
                    surrogate = (loss_z - sfe_b) * (mu_fwd - oracle.marg(s))
                else:
                    mu_fwd, surrogate = _example_backward(spec, s, oracle, grad_loss, rng)
                pg = model.param_grads(xs, y_i, surrogate, mu_fwd)
                for name in grads:
                    grads[name] += pg[name] / n
                train_loss += model.loss(xs, y_i, mu_fwd) / n

            if sfe_method and spec.method == "sfe-baseline":
                mean_loss = float(train_loss)
                sfe_state.baseline = (
                    spec.baseline_decay * sfe_state.baseline
                    + (1.0 - spec.baseline_decay) * mean_loss
                    if sfe_state.warm
                    else mean_loss
                )
                sfe_state.warm = True

            if not np.isfinite(train_loss):
                record.failed, record.error = True, "non-finite training loss"
                break
            try:
                adamw_step(model.params, grads, opt_state, opt)
            except FloatingPointError as exc:
                record.failed, record.error = True, str(exc)
                break
            record.decoder_calls += calls_per_example * n

            if epoch % config.eval_every == 0 or epoch == config.epochs:
                train_acc, _ = _eval_structured(model, config.method, split, oracles)
                valid_acc, valid_uas = _eval_structured(
                    model, config.method, dataset.valid, oracles
                )
                record.history.append(
                    {
                        "epoch": epoch,
                        "train_loss": float(train_loss),
                        "train_acc": train_acc,
                        "valid_acc": valid_acc,
                        "valid_uas": valid_uas,
                        "decoder_calls": record.decoder_calls,
                    }
                )
                if valid_acc > best_acc:
                    best_acc, best_epoch = valid_acc, epoch
                    best_params = {k_: p.copy() for k_, p in model.params.items()}

    if best_params is not None:
        chosen = model.clone()
        chosen.params.update(best_params)
        test_acc, test_uas = _eval_structured(chosen, config.method, dataset.test, oracles)
        record.final = {
            "best_epoch": best_epoch,
            "best_valid_acc": best_acc,
            "test_acc": test_acc,
            "test_uas": test_uas,
        }
    record.wall_time = time.perf_counter() - t0
    return record


def train(config: TrainConfig, dataset, model=None) -> RunRecord:
    """Run one training cell and return its record.

    A passed-in model is trained in place and left at its final-epoch state;
    the record's test metrics always come from the best-validation snapshot.
    Divergence (non-finite loss or gradients) marks the record failed and
    preserves everything gathered so far.
    """
    if isinstance(dataset, MixtureDataset):
        return _train_mixture(config, dataset, model)
    if isinstance(dataset, StructuredDataset):
        return _train_structured(config, dataset, model)
    raise TypeError(f"unsupported dataset type {type(dataset).__name__}")
