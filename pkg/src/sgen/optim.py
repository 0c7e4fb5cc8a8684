"""Adam with bias correction, operating on a flat parameter store.

Moments are kept per parameter name inside AdamState; the update is the
standard form

    m_hat = m / (1 - beta1^t),  v_hat = v / (1 - beta2^t)
    p    -= lr * m_hat / (sqrt(v_hat) + eps)

so the very first step with unit gradients moves each weight by almost
exactly lr.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ParamStore

__all__ = ["AdamState", "init_adam", "adam_step"]


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def init_adam(
    params: ParamStore, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8
) -> AdamState:
    state = AdamState(beta1=beta1, beta2=beta2, eps=eps)
    for name, tensor in params.items():
        state.m[name] = np.zeros_like(tensor.data)
        state.v[name] = np.zeros_like(tensor.data)
    return state


def adam_step(params: ParamStore, grads, state: AdamState, lr: float) -> None:
    """Apply one update in place.

    ``grads`` maps parameter names to gradient arrays; pass None to read
    each tensor's own grad buffer.  A missing gradient is an error naming
    the parameter, catching forgotten backward passes early.
    """
    if grads is None:
        grads = {name: t.grad for name, t in params.items()}
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            raise ValueError(f"adam_step: missing gradient for parameter {name!r}")
        if g.shape != p.data.shape:
            raise ValueError(
                f"adam_step: gradient shape {g.shape} does not match parameter"
                f" {name!r} shape {p.data.shape}"
            )
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)
