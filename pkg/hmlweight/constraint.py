"""
Max-constraint output function and loss.

f_cm replaces each node's probability with the maximum over its descendant
set, so a parent is never less probable than any descendant. Training uses the
asymmetric target-side prediction

    y_a     = f_cm(p)
    y_b     = f_cm(y * p)
    y_tilde = (1 - y) * y_a + y_b

so a positive node is only lifted by positive descendants. Gradients of a max
are routed to one argmax element per (row, node); ties go to the lowest index.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

BCE_EPS = 1e-7

# rows per chunk so the B x N x N masked tensor stays small
_CHUNK_CELLS = 4_000_000


@dataclass(frozen=True, eq=False)
class ConstrainedOutputs:
    """Constrained predictions plus the argmax routes used by the backward pass."""
    y_a: np.ndarray
    y_b: np.ndarray
    y_tilde: np.ndarray
    labels: np.ndarray
    route_a: np.ndarray
    route_b: np.ndarray


def _check_shapes(probs: np.ndarray, A: np.ndarray) -> None:
    if probs.ndim != 2:
        raise ShapeError(f"Expected a B x N matrix, got shape {probs.shape}")
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeError(f"Descendant matrix must be square, got shape {A.shape}")
    if probs.shape[1] != A.shape[0]:
        raise ShapeError(f"Width {probs.shape[1]} does not match {A.shape[0]} hierarchy nodes")


def constrained_max(probs: np.ndarray, A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Masked row-max over descendant sets.

    Returns:
        values: B x N, values[b, i] = max_{j in S_i} probs[b, j]
        route:  B x N, the lowest j attaining that maximum
    """
    probs = np.asarray(probs, dtype=np.float64)
    A = np.asarray(A)
    _check_shapes(probs, A)

    batch, n = probs.shape
    mask = A.astype(bool)
    route = np.empty((batch, n), dtype=np.int64)
    rows_per_chunk = max(1, _CHUNK_CELLS // max(1, n * n))
    for start in range(0, batch, rows_per_chunk):
        block = probs[start:start + rows_per_chunk]
        masked = np.where(mask[None, :, :], block[:, None, :], -np.inf)
        # np.argmax returns the first occurrence on ties
        route[start:start + rows_per_chunk] = np.argmax(masked, axis=2)
    values = np.take_along_axis(probs, route, axis=1)
    return values, route


def f_cm(probs: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Hierarchical constraint: out[b, i] = max over descendants j of probs[b, j]."""
    values, _ = constrained_max(probs, A)
    return values


def mcm_forward(raw_probs: np.ndarray, labels: np.ndarray, A: np.ndarray) -> ConstrainedOutputs:
    """Evaluate y_a, y_b and the training prediction y_tilde for closed labels."""
    raw_probs = np.asarray(raw_probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if labels.shape != raw_probs.shape:
        raise ShapeError(f"Labels {labels.shape} do not match predictions {raw_probs.shape}")

    y_a, route_a = constrained_max(raw_probs, A)
    y_b, route_b = constrained_max(labels * raw_probs, A)
    y_tilde = (1.0 - labels) * y_a + y_b
    return ConstrainedOutputs(
        y_a=y_a, y_b=y_b, y_tilde=y_tilde, labels=labels,
        route_a=route_a, route_b=route_b,
    )


def mcm_backward(outputs: ConstrainedOutputs, grad_y_tilde: np.ndarray) -> np.ndarray:
    """Pull dL/dy_tilde back to dL/draw_probs through the argmax routes."""
    grad_y_tilde = np.asarray(grad_y_tilde, dtype=np.float64)
    labels = outputs.labels
    batch, _ = labels.shape
    rows = np.arange(batch)[:, None]

    grad = np.zeros_like(grad_y_tilde)
    np.add.at(grad, (rows, outputs.route_a), (1.0 - labels) * grad_y_tilde)
    # y_b reads labels * p, so only positive descendants receive gradient
    picked_labels = np.take_along_axis(labels, outputs.route_b, axis=1)
    np.add.at(grad, (rows, outputs.route_b), picked_labels * grad_y_tilde)
    return grad


def mc_loss(y_tilde: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Unreduced binary cross-entropy with the prediction clamped to [eps, 1 - eps]."""
    y_tilde = np.asarray(y_tilde, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if y_tilde.shape != labels.shape:
        raise ShapeError(f"Labels {labels.shape} do not match predictions {y_tilde.shape}")
    p = np.clip(y_tilde, BCE_EPS, 1.0 - BCE_EPS)
    return -(labels * np.log(p) + (1.0 - labels) * np.log1p(-p))


def mc_loss_grad(y_tilde: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Elementwise d mc_loss / d y_tilde; zero where the clamp is active."""
    y_tilde = np.asarray(y_tilde, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    p = np.clip(y_tilde, BCE_EPS, 1.0 - BCE_EPS)
    grad = -labels / p + (1.0 - labels) / (1.0 - p)
    inside = (y_tilde >= BCE_EPS) & (y_tilde <= 1.0 - BCE_EPS)
    return np.where(inside, grad, 0.0)


def predict(raw_probs: np.ndarray, A: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Binarize f_cm(raw_probs); entries >= threshold are positive."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    return (f_cm(raw_probs, A) >= threshold).astype(np.uint8)
