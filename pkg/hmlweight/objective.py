"""
Combined training objective.

    L = mean_{b,i}( W[b,i] * F[b,i] * mc_loss(y_tilde, y)[b,i] )

W is the (scheduled) imbalance weight matrix and F the focal factor
u0 + U^k. Both enter as constants: the backward pass treats them as fixed
multipliers of the elementwise loss.
"""

from dataclasses import dataclass

import numpy as np

from .constraint import ConstrainedOutputs, mc_loss, mc_loss_grad, mcm_backward, mcm_forward
from .errors import ShapeError
from .network import Mlp


@dataclass(frozen=True, eq=False)
class LossGraph:
    """Recorded forward pass of the objective for one member and batch."""
    value: float
    elementwise: np.ndarray      # scale * mc_loss, B x N
    scale: np.ndarray            # W * F / (B * N), B x N
    outputs: ConstrainedOutputs

    def backward(self) -> np.ndarray:
        """dL / d raw_probs, B x N."""
        grad_y_tilde = self.scale * mc_loss_grad(self.outputs.y_tilde, self.outputs.labels)
        return mcm_backward(self.outputs, grad_y_tilde)


def _constant(values: np.ndarray | None, shape: tuple[int, int], name: str) -> np.ndarray:
    if values is None:
        return np.ones(shape)
    values = np.asarray(values, dtype=np.float64)
    if values.shape != shape:
        raise ShapeError(f"{name} has shape {values.shape}, expected {shape}")
    return values


def weighted_mc_loss(
    raw_probs: np.ndarray,
    labels: np.ndarray,
    A: np.ndarray,
    weights: np.ndarray | None = None,
    focal: np.ndarray | None = None,
) -> LossGraph:
    """Weighted, focal-scaled max-constraint loss reduced by the mean over B x N."""
    raw_probs = np.asarray(raw_probs, dtype=np.float64)
    shape = raw_probs.shape
    weights = _constant(weights, shape, "weights")
    focal = _constant(focal, shape, "focal")

    outputs = mcm_forward(raw_probs, labels, A)
    scale = weights * focal / raw_probs.size
    elementwise = scale * mc_loss(outputs.y_tilde, outputs.labels)
    return LossGraph(value=float(elementwise.sum()), elementwise=elementwise, scale=scale, outputs=outputs)


def backward(
    model: Mlp,
    theta: np.ndarray,
    x: np.ndarray,
    masks: tuple[np.ndarray, np.ndarray],
    graph: LossGraph,
) -> np.ndarray:
    """Parameter gradient of the recorded loss (reverse mode through the network)."""
    return model.vjp(theta, x, masks, graph.backward())


def loss_and_grad(
    model: Mlp,
    theta: np.ndarray,
    x: np.ndarray,
    labels: np.ndarray,
    A: np.ndarray,
    masks: tuple[np.ndarray, np.ndarray],
    weights: np.ndarray | None = None,
    focal: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Convenience wrapper: forward with fixed masks, objective, parameter gradient."""
    probs = model.forward(theta, x, masks=masks)
    graph = weighted_mc_loss(probs, labels, A, weights, focal)
    return graph.value, backward(model, theta, x, masks, graph)
