"""
Feed-forward network used by every ensemble member.

Three affine layers, ReLU after the first two, sigmoid on the output:
    h1 = relu(W1 x + b1) * m1
    h2 = relu(W2 h1 + b2) * m2
    p  = sigmoid(W3 h2 + b3)

m1, m2 are inverted-dropout masks (entries 0 or 1/(1 - rate)); masks of ones
disable dropout. Parameters live in one flat float64 vector laid out as
[W1, b1, W2, b2 | W3, b3] with column-major weight blocks; everything before
the bar is the trunk, the rest is the output head.

Forward evaluation and its reverse-mode vector-Jacobian product are CasADi
Functions, built once per batch size.
"""

from dataclasses import dataclass, field

import casadi as ca
import numpy as np

from .errors import ShapeError

DEFAULT_DROPOUT = 0.7


@dataclass
class Mlp:
    """Dimensions and dropout rate of the three-layer network."""
    input_dim: int
    hidden_dim: int
    output_dim: int
    dropout_rate: float = DEFAULT_DROPOUT
    _functions: dict[int, tuple[ca.Function, ca.Function]] = field(
        default_factory=dict, init=False, repr=False, compare=False
    )

    def __post_init__(self):
        if min(self.input_dim, self.hidden_dim, self.output_dim) < 1:
            raise ValueError("Network dimensions must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        """(fan_out, fan_in) of each affine layer."""
        F, H, N = self.input_dim, self.hidden_dim, self.output_dim
        return [(H, F), (H, H), (N, H)]

    @property
    def trunk_size(self) -> int:
        F, H = self.input_dim, self.hidden_dim
        return H * F + H + H * H + H

    @property
    def head_size(self) -> int:
        H, N = self.hidden_dim, self.output_dim
        return N * H + N

    @property
    def n_params(self) -> int:
        return self.trunk_size + self.head_size

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias."""
        blocks = []
        for fan_out, fan_in in self.layer_shapes:
            bound = 1.0 / np.sqrt(fan_in)
            blocks.append(rng.uniform(-bound, bound, size=fan_out * fan_in))
            blocks.append(rng.uniform(-bound, bound, size=fan_out))
        return np.concatenate(blocks).astype(np.float64)

    def init_head(self, rng: np.random.Generator) -> np.ndarray:
        return self.init_params(rng)[self.trunk_size:]

    def dropout_masks(self, batch: int, rng: np.random.Generator | None, dropout_on: bool) -> tuple[np.ndarray, np.ndarray]:
        """Two B x H inverted-dropout masks; all ones when dropout is off or the rate is 0."""
        shape = (batch, self.hidden_dim)
        if not dropout_on or self.dropout_rate == 0.0:
            return np.ones(shape), np.ones(shape)
        if rng is None:
            raise ValueError("An rng is required when dropout is on")
        scale = 1.0 / (1.0 - self.dropout_rate)
        m1 = (rng.random(shape) >= self.dropout_rate) * scale
        m2 = (rng.random(shape) >= self.dropout_rate) * scale
        return m1, m2

    def _check_input(self, theta: np.ndarray, x: np.ndarray) -> None:
        if theta.shape != (self.n_params,):
            raise ShapeError(f"Expected {self.n_params} parameters, got shape {theta.shape}")
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ShapeError(f"Input must be B x {self.input_dim}, got shape {x.shape}")

    def functions(self, batch: int) -> tuple[ca.Function, ca.Function]:
        if batch not in self._functions:
            self._functions[batch] = (
                create_forward_function(self, batch),
                create_vjp_function(self, batch),
            )
        return self._functions[batch]

    def forward(
        self,
        theta: np.ndarray,
        x: np.ndarray,
        dropout_on: bool = False,
        rng: np.random.Generator | None = None,
        masks: tuple[np.ndarray, np.ndarray] | None = None,
    ) -> np.ndarray:
        """B x N sigmoid outputs. Pass `masks` to replay a specific dropout draw."""
        theta = np.asarray(theta, dtype=np.float64)
        x = np.asarray(x, dtype=np.float64)
        self._check_input(theta, x)
        if masks is None:
            masks = self.dropout_masks(x.shape[0], rng, dropout_on)
        f_forward, _ = self.functions(x.shape[0])
        out = f_forward(theta, *_columns(x, *masks))
        return np.asarray(out.full()).T

    def vjp(
        self,
        theta: np.ndarray,
        x: np.ndarray,
        masks: tuple[np.ndarray, np.ndarray],
        seed: np.ndarray,
    ) -> np.ndarray:
        """Parameter gradient of sum(seed * forward(theta, x, masks))."""
        theta = np.asarray(theta, dtype=np.float64)
        x = np.asarray(x, dtype=np.float64)
        self._check_input(theta, x)
        seed = np.asarray(seed, dtype=np.float64)
        if seed.shape != (x.shape[0], self.output_dim):
            raise ShapeError(f"Seed must be B x {self.output_dim}, got shape {seed.shape}")
        _, f_vjp = self.functions(x.shape[0])
        grad = f_vjp(theta, *_columns(x, *masks, seed))
        return np.asarray(grad.full()).ravel()


def _columns(*arrays: np.ndarray) -> list[np.ndarray]:
    """Row-major B x K arrays to the K x B column layout CasADi functions take."""
    return [np.ascontiguousarray(a.T, dtype=np.float64) for a in arrays]


def _unpack(model: Mlp, theta: ca.MX) -> list[ca.MX]:
    """Split the flat parameter vector into [W1, b1, W2, b2, W3, b3]."""
    pieces = []
    offset = 0
    for fan_out, fan_in in model.layer_shapes:
        n_weights = fan_out * fan_in
        pieces.append(ca.reshape(theta[offset:offset + n_weights], fan_out, fan_in))
        offset += n_weights
        pieces.append(theta[offset:offset + fan_out])
        offset += fan_out
    return pieces


def _symbolic_forward(model: Mlp, batch: int):
    theta = ca.MX.sym('theta', model.n_params)
    x = ca.MX.sym('x', model.input_dim, batch)
    m1 = ca.MX.sym('m1', model.hidden_dim, batch)
    m2 = ca.MX.sym('m2', model.hidden_dim, batch)

    W1, b1, W2, b2, W3, b3 = _unpack(model, theta)
    h1 = ca.fmax(ca.mtimes(W1, x) + ca.repmat(b1, 1, batch), 0) * m1
    h2 = ca.fmax(ca.mtimes(W2, h1) + ca.repmat(b2, 1, batch), 0) * m2
    logits = ca.mtimes(W3, h2) + ca.repmat(b3, 1, batch)
    # sigmoid via tanh keeps value and derivative finite for large |logits|
    p = 0.5 * (1 + ca.tanh(logits / 2))
    return theta, x, m1, m2, p


def create_forward_function(model: Mlp, batch: int) -> ca.Function:
    """
    CasADi function for the network forward pass.

    Returns:
        f_forward: (theta, x[F x B], m1[H x B], m2[H x B]) -> p[N x B]
    """
    theta, x, m1, m2, p = _symbolic_forward(model, batch)
    return ca.Function('mlp_forward', [theta, x, m1, m2], [p])


def create_vjp_function(model: Mlp, batch: int) -> ca.Function:
    """
    CasADi function for the reverse-mode vector-Jacobian product.

    The gradient of <seed, p> with respect to theta is J^T seed, which CasADi
    evaluates with a single reverse sweep.

    Returns:
        f_vjp: (theta, x, m1, m2, seed[N x B]) -> dtheta[P x 1]
    """
    theta, x, m1, m2, p = _symbolic_forward(model, batch)
    seed = ca.MX.sym('seed', model.output_dim, batch)
    grad = ca.gradient(ca.dot(p, seed), theta)
    return ca.Function('mlp_vjp', [theta, x, m1, m2, seed], [grad])
