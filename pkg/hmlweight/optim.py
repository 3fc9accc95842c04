"""
Adam optimizer over flat parameter vectors.
"""

from dataclasses import dataclass

import numpy as np

BETA1 = 0.9
BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class AdamState:
    """First/second moment estimates and the step counter."""
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n))


def adam_step(
    params: np.ndarray,
    grads: np.ndarray,
    state: AdamState,
    lr: float,
    beta1: float = BETA1,
    beta2: float = BETA2,
    eps: float = ADAM_EPS,
    weight_decay: float = 0.0,
) -> np.ndarray:
    """
    One bias-corrected Adam update. `state` is advanced in place.

    weight_decay adds an L2 term (weight_decay * params) to the gradient.

    Returns:
        Updated parameter vector (a new array).
    """
    grads = np.asarray(grads, dtype=np.float64)
    if weight_decay:
        grads = grads + weight_decay * params

    state.t += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grads
    state.v = beta2 * state.v + (1.0 - beta2) * grads * grads
    m_hat = state.m / (1.0 - beta1 ** state.t)
    v_hat = state.v / (1.0 - beta2 ** state.t)
    return params - lr * m_hat / (np.sqrt(v_hat) + eps)
