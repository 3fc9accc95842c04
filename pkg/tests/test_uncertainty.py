import itertools

import numpy as np
import pytest

from hmlweight.errors import InsufficientEnsemble, ShapeError
from hmlweight.network import Mlp
from hmlweight.uncertainty import (
    Divergence,
    FocalKind,
    ensemble_stats,
    focal_weights,
    mc_dropout_probs,
    u_bbma,
    u_epistemic,
    u_gmu,
    uncertainty,
)


def cell(*values):
    """M x 1 x 1 member array from one value per member."""
    return np.asarray(values, dtype=np.float64).reshape(-1, 1, 1)


def test_ensemble_stats():
    e = ensemble_stats(cell(0.4, 0.6))
    assert e.mean[0, 0] == pytest.approx(0.5)
    assert e.var[0, 0] == pytest.approx(0.01)
    single = ensemble_stats(cell(0.3))
    assert single.mean[0, 0] == 0.3 and single.var[0, 0] == 0.0
    with pytest.raises(ShapeError):
        ensemble_stats(np.zeros((2, 3)))


def test_bbma_values():
    assert u_bbma(ensemble_stats(cell(0.8)))[0, 0] == pytest.approx(0.4)
    assert u_bbma(ensemble_stats(cell(0.5)))[0, 0] == pytest.approx(1.0)
    assert u_bbma(ensemble_stats(cell(1.0)))[0, 0] == 0.0


def test_bbma_identity():
    rng = np.random.default_rng(0)
    e = ensemble_stats(rng.random((5, 20, 7)))
    np.testing.assert_allclose(u_bbma(e), 2 * np.minimum(e.mean, 1 - e.mean), atol=1e-15)


def test_gmu_hand_value():
    # mean 0.9, population std 0.05
    assert u_gmu(ensemble_stats(cell(0.85, 0.95)))[0, 0] == pytest.approx(0.20027, abs=1e-4)


def test_gmu_edge_cases():
    assert u_gmu(ensemble_stats(cell(1.0, 1.0)))[0, 0] == 0.0
    assert u_gmu(ensemble_stats(cell(0.5, 0.5)))[0, 0] == 1.0
    assert u_gmu(ensemble_stats(cell(0.3, 0.7)))[0, 0] == pytest.approx(1.0)


def test_gmu_bounded_on_random_cells():
    rng = np.random.default_rng(1)
    probs = rng.random((4, 25_000, 4))
    probs[:, :100] = 0.5
    probs[:, 100:200] = probs[:1, 100:200]
    u = u_gmu(ensemble_stats(probs))
    assert np.all((u >= 0) & (u <= 1))


def test_epistemic_hand_values():
    kl = u_epistemic(cell(0.9, 0.1), Divergence.KL)[0, 0]
    js = u_epistemic(cell(0.9, 0.1), Divergence.JS)[0, 0]
    assert kl == pytest.approx(0.8 * np.log(9), abs=1e-6)
    assert kl == pytest.approx(1.75778, abs=1e-4)
    assert js == pytest.approx(0.53104, abs=1e-4)


def _naive(member_probs, divergence):
    probs = np.clip(member_probs, 1e-7, 1 - 1e-7)
    m = probs.shape[0]

    def kl(p, q):
        return p * np.log(p / q) + (1 - p) * np.log((1 - p) / (1 - q))

    total = np.zeros(probs.shape[1:])
    for a, b in itertools.permutations(range(m), 2):
        p, q = probs[a], probs[b]
        if divergence is Divergence.KL:
            total += kl(p, q)
        else:
            mid = (p + q) / 2
            total += (0.5 * kl(p, mid) + 0.5 * kl(q, mid)) / np.log(2)
    return total / (m * (m - 1))


@pytest.mark.parametrize("divergence", list(Divergence))
def test_epistemic_matches_pairwise_loop(divergence):
    rng = np.random.default_rng(2)
    probs = rng.random((5, 6, 4))
    got = u_epistemic(probs, divergence)
    np.testing.assert_allclose(got, _naive(probs, divergence), rtol=1e-10)
    np.testing.assert_allclose(u_epistemic(probs[::-1], divergence), got, rtol=1e-12)
    if divergence is Divergence.JS:
        assert np.all((got >= 0) & (got <= 1))


def test_epistemic_identical_members_is_zero():
    np.testing.assert_allclose(u_epistemic(np.full((3, 2, 2), 0.3)), 0.0, atol=1e-15)


def test_epistemic_needs_two_members():
    with pytest.raises(InsufficientEnsemble):
        u_epistemic(cell(0.4))
    with pytest.raises(InsufficientEnsemble):
        uncertainty(FocalKind.EPISTEMIC_JS, ensemble_stats(cell(0.4)))


def test_focal_weights():
    assert focal_weights(np.array([1.0]), 0.25, 1.0).combined[0] == 1.25
    assert focal_weights(np.array([0.0]), 0.25, 1.0).combined[0] == 0.25
    assert focal_weights(np.array([0.4]), 0.25, 2.0).combined[0] == pytest.approx(0.41)
    fw = focal_weights(np.array([0.4]))
    assert not fw.combined.flags.writeable
    with pytest.raises(ValueError):
        focal_weights(np.array([0.4]), k=0)


def test_gate_shifts_every_weight_equally():
    u = np.random.default_rng(3).random((3, 4))
    low, high = focal_weights(u, 0.1, 2.0), focal_weights(u, 0.6, 2.0)
    np.testing.assert_allclose(high.combined - low.combined, 0.5)


def test_uncertainty_rejects_none():
    with pytest.raises(ValueError):
        uncertainty(FocalKind.NONE, ensemble_stats(cell(0.4)))


def test_mc_dropout_is_seeded():
    model = Mlp(4, 8, 3, dropout_rate=0.7)
    theta = model.init_params(np.random.default_rng(0))
    x = np.random.default_rng(1).random((5, 4))
    first = mc_dropout_probs(model, theta, x, 10, np.random.default_rng(9))
    second = mc_dropout_probs(model, theta, x, 10, np.random.default_rng(9))
    np.testing.assert_array_equal(first.member_probs, second.member_probs)
    assert first.size == 10
    assert np.any(first.var > 0)


def test_mc_dropout_without_dropout_has_no_variance():
    model = Mlp(4, 8, 3, dropout_rate=0.0)
    theta = model.init_params(np.random.default_rng(0))
    e = mc_dropout_probs(model, theta, np.ones((2, 4)), 5, np.random.default_rng(0))
    np.testing.assert_allclose(e.var, 0.0, atol=1e-30)
