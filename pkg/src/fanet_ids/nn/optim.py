"""Adam with bias correction."""
from dataclasses import dataclass, field

import numpy as np

BETA1, BETA2, EPSILON = 0.9, 0.999, 1e-8


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, weights):
        return cls([np.zeros_like(w) for w in weights], [np.zeros_like(w) for w in weights], 0)


def adam_step(weights, grads, state, lr, beta1=BETA1, beta2=BETA2, eps=EPSILON):
    """One Adam update. Returns new ``(weights, state)``; inputs are not mutated."""
    if len(grads) != len(weights) or len(state.m) != len(weights):
        raise ValueError("weights, gradients and optimizer state disagree in length")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient")
    t = state.t + 1
    m = [beta1 * mi + (1.0 - beta1) * g for mi, g in zip(state.m, grads)]
    v = [beta2 * vi + (1.0 - beta2) * g * g for vi, g in zip(state.v, grads)]
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    new = [w - lr * (mi / c1) / (np.sqrt(vi / c2) + eps) for w, mi, vi in zip(weights, m, v)]
    return new, AdamState(m, v, t)
