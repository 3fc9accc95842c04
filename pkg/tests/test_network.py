import numpy as np
import pytest

from hmlweight.errors import ShapeError
from hmlweight.network import Mlp
from hmlweight.optim import AdamState, adam_step


def test_parameter_layout():
    model = Mlp(5, 4, 3)
    assert model.trunk_size == 4 * 5 + 4 + 4 * 4 + 4
    assert model.head_size == 3 * 4 + 3
    assert model.init_params(np.random.default_rng(0)).shape == (model.n_params,)


def test_zero_parameters_give_one_half():
    model = Mlp(3, 4, 2, dropout_rate=0.5)
    probs = model.forward(np.zeros(model.n_params), np.random.default_rng(0).random((6, 3)))
    np.testing.assert_array_equal(probs, 0.5)


def test_outputs_in_open_unit_interval():
    model = Mlp(3, 6, 4)
    theta = model.init_params(np.random.default_rng(1)) * 50
    probs = model.forward(theta, np.random.default_rng(2).normal(size=(8, 3)) * 10)
    assert np.all(np.isfinite(probs))
    assert np.all((probs >= 0) & (probs <= 1))


def test_dropout_rate_zero_ignores_flag():
    model = Mlp(3, 4, 2, dropout_rate=0.0)
    theta = model.init_params(np.random.default_rng(0))
    x = np.ones((2, 3))
    np.testing.assert_array_equal(
        model.forward(theta, x, dropout_on=True, rng=np.random.default_rng(5)),
        model.forward(theta, x),
    )


def test_seeded_dropout_replays():
    model = Mlp(3, 16, 2, dropout_rate=0.7)
    theta = model.init_params(np.random.default_rng(0))
    x = np.ones((4, 3))
    a = model.forward(theta, x, dropout_on=True, rng=np.random.default_rng(3))
    b = model.forward(theta, x, dropout_on=True, rng=np.random.default_rng(3))
    np.testing.assert_array_equal(a, b)


def test_dropout_needs_rng():
    model = Mlp(3, 4, 2, dropout_rate=0.5)
    with pytest.raises(ValueError):
        model.forward(np.zeros(model.n_params), np.ones((1, 3)), dropout_on=True)


def test_inverted_dropout_scale():
    model = Mlp(3, 1000, 2, dropout_rate=0.7)
    m1, m2 = model.dropout_masks(20, np.random.default_rng(0), dropout_on=True)
    assert set(np.unique(m1)) <= {0.0, 1.0 / 0.3}
    assert m1.mean() == pytest.approx(1.0, abs=0.05)


def test_shape_errors():
    model = Mlp(3, 4, 2)
    with pytest.raises(ShapeError):
        model.forward(np.zeros(model.n_params), np.ones((2, 4)))
    with pytest.raises(ShapeError):
        model.forward(np.zeros(model.n_params + 1), np.ones((2, 3)))
    with pytest.raises(ValueError):
        Mlp(3, 4, 2, dropout_rate=1.0)


def test_vjp_matches_finite_differences():
    rng = np.random.default_rng(4)
    model = Mlp(4, 6, 3, dropout_rate=0.5)
    theta = model.init_params(rng)
    x = rng.normal(size=(3, 4))
    masks = model.dropout_masks(3, rng, dropout_on=True)
    seed = rng.normal(size=(3, 3))

    grad = model.vjp(theta, x, masks, seed)
    step = 1e-6
    numeric = np.empty_like(theta)
    for k in range(theta.size):
        up, down = theta.copy(), theta.copy()
        up[k] += step
        down[k] -= step
        numeric[k] = (np.sum(seed * model.forward(up, x, masks=masks))
                      - np.sum(seed * model.forward(down, x, masks=masks))) / (2 * step)
    np.testing.assert_allclose(grad, numeric, rtol=1e-4, atol=1e-8)


def test_adam_zero_gradient_keeps_params():
    params = np.array([1.0, -2.0])
    np.testing.assert_array_equal(adam_step(params, np.zeros(2), AdamState.zeros(2), lr=0.1), params)


def test_adam_first_step_moves_by_lr():
    params = np.zeros(3)
    state = AdamState.zeros(3)
    updated = adam_step(params, np.array([0.5, -2.0, 3.0]), state, lr=1e-3)
    np.testing.assert_allclose(updated, [-1e-3, 1e-3, -1e-3], rtol=1e-6)
    assert state.t == 1


def test_adam_weight_decay_pulls_towards_zero():
    params = np.array([2.0])
    updated = adam_step(params, np.zeros(1), AdamState.zeros(1), lr=1e-2, weight_decay=1e-4)
    assert updated[0] < 2.0


def test_adam_is_deterministic():
    rng = np.random.default_rng(0)
    grads = rng.normal(size=(5, 4))

    def run():
        params, state = np.ones(4), AdamState.zeros(4)
        for g in grads:
            params = adam_step(params, g, state, lr=1e-2)
        return params

    np.testing.assert_array_equal(run(), run())
