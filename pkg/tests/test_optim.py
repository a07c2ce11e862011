"""AdamW: hand-computed steps, decay factor, abort on bad gradients."""

import numpy as np
import pytest

from latentgrad.harness.optim import AdamWConfig, adamw_init, adamw_step


def make_params(rng):
    return {
        "w": rng.normal(size=(3, 4)),
        "b": rng.normal(size=3),
        "c": np.asarray(rng.normal()),
    }


def zero_grads(params):
    return {k: np.zeros_like(p) for k, p in params.items()}


def reference_adamw(params, grad_seq, cfg):
    # independent reimplementation with scalar loops, used as the oracle
    out = {k: p.copy() for k, p in params.items()}
    m = {k: np.zeros_like(p) for k, p in params.items()}
    v = {k: np.zeros_like(p) for k, p in params.items()}
    for t, grads in enumerate(grad_seq, start=1):
        for k in out:
            m[k] = cfg.beta1 * m[k] + (1 - cfg.beta1) * grads[k]
            v[k] = cfg.beta2 * v[k] + (1 - cfg.beta2) * grads[k] ** 2
            mhat = m[k] / (1 - cfg.beta1**t)
            vhat = v[k] / (1 - cfg.beta2**t)
            out[k] = out[k] * (1 - cfg.lr * cfg.weight_decay) - cfg.lr * mhat / (
                np.sqrt(vhat) + cfg.eps
            )
    return out


def test_config_validation():
    with pytest.raises(ValueError):
        AdamWConfig(lr=0.0)
    with pytest.raises(ValueError):
        AdamWConfig(lr=1e-3, beta1=1.0)
    with pytest.raises(ValueError):
        AdamWConfig(lr=1e-3, beta2=-0.1)
    with pytest.raises(ValueError):
        AdamWConfig(lr=1e-3, eps=0.0)
    with pytest.raises(ValueError):
        AdamWConfig(lr=1e-3, weight_decay=-1.0)


def test_zero_grads_leave_params_bitwise_unchanged():
    rng = np.random.default_rng(0)
    params = make_params(rng)
    before = {k: p.copy() for k, p in params.items()}
    state = adamw_init(params)
    cfg = AdamWConfig(lr=1e-3)
    for _ in range(5):
        adamw_step(params, zero_grads(params), state, cfg)
    assert state.t == 5
    for k in params:
        assert np.array_equal(params[k], before[k])


def test_single_step_matches_hand_formula():
    # from zero state, mhat = g and vhat = g^2, so the update is
    # -lr * g / (|g| + eps) regardless of the betas
    rng = np.random.default_rng(1)
    params = make_params(rng)
    before = {k: p.copy() for k, p in params.items()}
    grads = {k: rng.normal(size=p.shape) for k, p in params.items()}
    state = adamw_init(params)
    cfg = AdamWConfig(lr=0.01)
    adamw_step(params, grads, state, cfg)
    for k in params:
        expect = before[k] - cfg.lr * grads[k] / (np.abs(grads[k]) + cfg.eps)
        np.testing.assert_allclose(params[k], expect, rtol=1e-14)


def test_weight_decay_only_shrinks_by_decoupled_factor():
    rng = np.random.default_rng(2)
    params = make_params(rng)
    before = {k: p.copy() for k, p in params.items()}
    state = adamw_init(params)
    cfg = AdamWConfig(lr=0.1, weight_decay=0.5)
    adamw_step(params, zero_grads(params), state, cfg)
    for k in params:
        np.testing.assert_array_equal(params[k], before[k] * (1 - 0.1 * 0.5))


def test_matches_reference_over_random_trajectories():
    for trial in range(20):
        rng = np.random.default_rng(100 + trial)
        params = make_params(rng)
        start = {k: p.copy() for k, p in params.items()}
        cfg = AdamWConfig(
            lr=10 ** rng.uniform(-4, -1),
            beta1=rng.uniform(0.5, 0.99),
            beta2=rng.uniform(0.9, 0.9999),
            weight_decay=float(rng.choice([0.0, 0.01, 0.3])),
        )
        grad_seq = [
            {k: rng.normal(size=p.shape) for k, p in params.items()} for _ in range(7)
        ]
        state = adamw_init(params)
        for grads in grad_seq:
            adamw_step(params, grads, state, cfg)
        expect = reference_adamw(start, grad_seq, cfg)
        for k in params:
            np.testing.assert_allclose(params[k], expect[k], rtol=1e-12, atol=1e-15)


def test_update_is_in_place():
    rng = np.random.default_rng(3)
    params = make_params(rng)
    handles = {k: p for k, p in params.items()}
    state = adamw_init(params)
    adamw_step(params, {k: np.ones_like(p) for k, p in params.items()}, state, AdamWConfig(lr=1e-2))
    for k in params:
        assert params[k] is handles[k]


def test_nonfinite_grads_raise_before_touching_state():
    rng = np.random.default_rng(4)
    params = make_params(rng)
    before = {k: p.copy() for k, p in params.items()}
    state = adamw_init(params)
    cfg = AdamWConfig(lr=1e-3)
    bad = zero_grads(params)
    bad["w"][0, 0] = np.nan
    with pytest.raises(FloatingPointError):
        adamw_step(params, bad, state, cfg)
    assert state.t == 0
    for k in params:
        assert np.array_equal(params[k], before[k])
        assert np.all(state.m[k] == 0.0)

    bad["w"][0, 0] = np.inf
    with pytest.raises(FloatingPointError):
        adamw_step(params, bad, state, cfg)
    assert state.t == 0
