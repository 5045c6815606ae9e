"""AdaDelta optimizer."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["OptimizerState", "adadelta_step"]


@dataclass
class OptimizerState:
    rho: float = 0.95
    eps: float = 1e-6
    lr: float = 1.0
    sq_grad: dict[str, np.ndarray] = field(default_factory=dict)
    sq_delta: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def fresh(cls, weights: dict[str, np.ndarray], rho=0.95, eps=1e-6, lr=1.0) -> "OptimizerState":
        zeros = {k: np.zeros_like(v) for k, v in weights.items()}
        return cls(rho, eps, lr, zeros, {k: v.copy() for k, v in zeros.items()})


def adadelta_step(state: OptimizerState, weights: dict[str, np.ndarray],
                  grads: dict[str, np.ndarray]):
    """One AdaDelta update; returns ``(new_weights, new_state)`` without mutating inputs.

    ``E[g^2] <- rho E[g^2] + (1 - rho) g^2``,
    ``delta = -sqrt(E[delta^2] + eps) / sqrt(E[g^2] + eps) * g``,
    ``E[delta^2] <- rho E[delta^2] + (1 - rho) delta^2``, ``w <- w + lr * delta``.
    """
    rho, eps = state.rho, state.eps
    new_w, new_g2, new_d2 = {}, {}, {}
    for k, w in weights.items():
        g = grads[k]
        if g.shape != w.shape:
            raise ValueError(f"gradient for {k} has shape {g.shape}, expected {w.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {k}")
        g2 = rho * state.sq_grad[k] + (1 - rho) * g * g
        delta = -np.sqrt(state.sq_delta[k] + eps) / np.sqrt(g2 + eps) * g
        new_d2[k] = rho * state.sq_delta[k] + (1 - rho) * delta * delta
        new_g2[k] = g2
        new_w[k] = (w + state.lr * delta).astype(w.dtype, copy=False)
    return new_w, OptimizerState(rho, eps, state.lr, new_g2, new_d2, state.step + 1)
