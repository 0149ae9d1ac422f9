"""Bias-corrected Adam with global gradient-norm clipping, plus the stepped
learning-rate schedule used by every gradient-trained classifier."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class AdamHyper:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = None


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0

    @classmethod
    def for_params(cls, params) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params], t=0)


def clip_gradients(grads, clip_norm: float | None):
    """Scale the whole gradient list so its global L2 norm is at most clip_norm."""
    if clip_norm is None:
        return [g.copy() for g in grads]
    total = math.sqrt(sum(float(np.sum(np.abs(g) ** 2)) for g in grads))
    if total <= clip_norm or total == 0.0:
        return [g.copy() for g in grads]
    scale = clip_norm / total
    return [g * scale for g in grads]


def adam_step(params, grads, state: AdamState, hyper: AdamHyper):
    """One bias-corrected Adam update; returns (new_params, new_state).

    Gradients are clipped to the hyper's global L2 norm threshold first.
    """
    if len(params) != len(grads):
        raise ValueError("params and grads must align")
    if not state.m:
        state = AdamState.for_params(params)
    g = clip_gradients(grads, hyper.clip_norm)
    t = state.t + 1
    new_m, new_v, new_p = [], [], []
    for p, gi, m, v in zip(params, g, state.m, state.v):
        m = hyper.beta1 * m + (1 - hyper.beta1) * gi
        v = hyper.beta2 * v + (1 - hyper.beta2) * gi**2
        m_hat = m / (1 - hyper.beta1**t)
        v_hat = v / (1 - hyper.beta2**t)
        new_p.append(p - hyper.learning_rate * m_hat / (np.sqrt(v_hat) + hyper.eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(m=new_m, v=new_v, t=t)


def sgd_step(params, grads, hyper: AdamHyper):
    g = clip_gradients(grads, hyper.clip_norm)
    return [p - hyper.learning_rate * gi for p, gi in zip(params, g)]


def stepped_learning_rate(initial: float, epoch: int, drop_factor: float = 0.5,
                          drop_period: int = 20) -> float:
    """50 percent drops scheduled periodically, as a function of the epoch."""
    if not 0.0 < drop_factor < 1.0:
        raise ValueError("drop_factor must lie in (0, 1)")
    if drop_period <= 0:
        raise ValueError("drop_period must be positive")
    return initial * drop_factor ** (epoch // drop_period)
