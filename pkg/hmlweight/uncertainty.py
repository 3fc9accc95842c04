"""
Ensemble statistics and the focal-uncertainty measures.

All inputs are plain numpy arrays produced from detached member outputs, so
nothing computed here can carry a gradient back into the network.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import rel_entr

from .errors import InsufficientEnsemble, ShapeError
from .network import Mlp

PROB_EPS = 1e-7
SNR_EPS = 1e-12
DEFAULT_U0 = 0.25
DEFAULT_FOCAL_K = 1.0


class FocalKind(str, Enum):
    NONE = "none"
    BBMA = "bbma"
    GMU = "gmu"
    EPISTEMIC_KL = "ep-kl"
    EPISTEMIC_JS = "ep-js"


class Divergence(str, Enum):
    KL = "kl"
    JS = "js"


@dataclass(frozen=True, eq=False)
class EnsembleOutput:
    """Member probabilities (M x B x N) with their mean and population variance."""
    member_probs: np.ndarray
    mean: np.ndarray
    var: np.ndarray

    @property
    def size(self) -> int:
        return self.member_probs.shape[0]


@dataclass(frozen=True, eq=False)
class FocalWeights:
    u: np.ndarray
    u0: float
    k: float
    combined: np.ndarray


def ensemble_stats(member_probs: np.ndarray) -> EnsembleOutput:
    member_probs = np.array(member_probs, dtype=np.float64)
    if member_probs.ndim != 3 or member_probs.shape[0] < 1:
        raise ShapeError(f"Member probabilities must be M x B x N with M >= 1, got {member_probs.shape}")
    member_probs.setflags(write=False)
    return EnsembleOutput(
        member_probs=member_probs,
        mean=member_probs.mean(axis=0),
        var=member_probs.var(axis=0),
    )


def u_bbma(e: EnsembleOutput) -> np.ndarray:
    """Binary BMA uncertainty: 1 - 2(max(mu, 1 - mu) - 0.5) = 2 min(mu, 1 - mu)."""
    mu_max = np.maximum(e.mean, 1.0 - e.mean)
    return 1.0 - 2.0 * (mu_max - 0.5)


def u_gmu(e: EnsembleOutput) -> np.ndarray:
    """
    Gated margin uncertainty.

    margin = max(mu, 1-mu) - min(mu, 1-mu) is gated by the signal-to-noise
    ratio margin / 2 sigma (the standard deviation of p and 1 - p coincide):
        U = 1 - margin * (1 - exp(-SNR))
    """
    mu, sigma = e.mean, np.sqrt(e.var)
    margin = np.maximum(mu, 1.0 - mu) - np.minimum(mu, 1.0 - mu)
    denom = 2.0 * sigma

    snr = np.zeros_like(mu)
    tiny = denom < SNR_EPS
    regular = ~tiny & (margin > 0)
    snr[regular] = margin[regular] / denom[regular]
    snr[tiny & (margin > 0)] = np.inf
    return 1.0 - margin * (1.0 - np.exp(-snr))


def _bernoulli_kl(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    return rel_entr(p, q) + rel_entr(1.0 - p, 1.0 - q)


def _bernoulli_js(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    m = 0.5 * (p + q)
    return (0.5 * _bernoulli_kl(p, m) + 0.5 * _bernoulli_kl(q, m)) / np.log(2.0)


def u_epistemic(member_probs: np.ndarray, divergence: Divergence = Divergence.KL) -> np.ndarray:
    """
    Mean divergence over ordered member pairs, each node a Bernoulli(p).

    KL is in nats and unbounded; JS uses base-2 logs and lies in [0, 1].

    Raises:
        InsufficientEnsemble: fewer than two members
    """
    probs = np.asarray(member_probs, dtype=np.float64)
    if probs.ndim != 3:
        raise ShapeError(f"Member probabilities must be M x B x N, got {probs.shape}")
    n_members = probs.shape[0]
    if n_members < 2:
        raise InsufficientEnsemble(f"Epistemic uncertainty needs at least 2 members, got {n_members}")

    probs = np.clip(probs, PROB_EPS, 1.0 - PROB_EPS)
    divergence_fn = _bernoulli_kl if Divergence(divergence) is Divergence.KL else _bernoulli_js
    # M x M x B x N; the diagonal is zero for both divergences
    pairwise = divergence_fn(probs[:, None], probs[None, :])
    return pairwise.sum(axis=(0, 1)) / (n_members * (n_members - 1))


def focal_weights(u: np.ndarray, u0: float = DEFAULT_U0, k: float = DEFAULT_FOCAL_K) -> FocalWeights:
    """combined = u0 + u^k, returned as a read-only constant."""
    if k <= 0:
        raise ValueError(f"focal exponent must be positive, got {k}")
    u = np.array(u, dtype=np.float64)
    if np.any(u < 0):
        raise ValueError("uncertainty must be non-negative")
    combined = u0 + np.power(u, k)
    combined.setflags(write=False)
    return FocalWeights(u=u, u0=u0, k=k, combined=combined)


def uncertainty(kind: FocalKind, e: EnsembleOutput) -> np.ndarray:
    """Dispatch to the measure named by `kind` (not valid for FocalKind.NONE)."""
    kind = FocalKind(kind)
    if kind is FocalKind.BBMA:
        return u_bbma(e)
    if kind is FocalKind.GMU:
        return u_gmu(e)
    if kind is FocalKind.EPISTEMIC_KL:
        return u_epistemic(e.member_probs, Divergence.KL)
    if kind is FocalKind.EPISTEMIC_JS:
        return u_epistemic(e.member_probs, Divergence.JS)
    raise ValueError("FocalKind.NONE has no uncertainty measure")


def mc_dropout_probs(
    model: Mlp,
    theta: np.ndarray,
    x: np.ndarray,
    passes: int,
    rng: np.random.Generator,
) -> EnsembleOutput:
    """Stochastic forward passes with dropout active, stacked as an ensemble."""
    if passes < 1:
        raise ValueError(f"passes must be at least 1, got {passes}")
    member_probs = np.stack([
        model.forward(theta, x, dropout_on=True, rng=rng) for _ in range(passes)
    ])
    return ensemble_stats(member_probs)
