"""AdamW over named parameter dicts.

Parameters live in plain ``{name: ndarray}`` dicts (see ``models``), so the
optimizer mirrors that layout: one first/second moment buffer per name, one
shared step counter.  Updates are applied in place; scalar parameters must be
0-d arrays, not Python floats.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["AdamWConfig", "AdamWState", "adamw_init", "adamw_step"]


@dataclass(frozen=True)
class AdamWConfig:
    """Hyperparameters for :func:`adamw_step`."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    def __post_init__(self) -> None:
        if not self.lr > 0.0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not 0.0 <= b < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {b}")
        if not self.eps > 0.0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.weight_decay < 0.0:
            raise ValueError(f"weight_decay must be nonnegative, got {self.weight_decay}")


@dataclass
class AdamWState:
    """Moment buffers keyed like the parameter dict, plus the step count."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = field(default=0)


def adamw_init(params: dict[str, np.ndarray]) -> AdamWState:
    """Fresh zero-moment state shaped like ``params``."""
    return AdamWState(
        m={name: np.zeros_like(p) for name, p in params.items()},
        v={name: np.zeros_like(p) for name, p in params.items()},
    )


def adamw_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamWState,
    config: AdamWConfig,
) -> None:
    """One AdamW update, in place.

    Decoupled weight decay multiplies each parameter by ``1 - lr * wd``
    before the gradient step; the moment estimates never see the decay
    term.  Bias correction uses the shared step counter, so all parameter
    groups must be updated together on every step.

    Raises ``FloatingPointError`` on any non-finite gradient entry, before
    touching params or state, so a diverged run can be aborted and recorded
    with its last consistent snapshot intact.
    """
    for name in params:
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")

    state.t += 1
    t = state.t
    bc1 = 1.0 - config.beta1 ** t
    bc2 = 1.0 - config.beta2 ** t
    decay = 1.0 - config.lr * config.weight_decay

    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= config.beta1
        m += (1.0 - config.beta1) * g
        v *= config.beta2
        v += (1.0 - config.beta2) * np.square(g)
        if config.weight_decay != 0.0:
            p *= decay
        p -= config.lr * (m / bc1) / (np.sqrt(v / bc2) + config.eps)
