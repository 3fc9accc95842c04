import numpy as np
import pytest

from hmlweight.errors import EmptyDataset
from hmlweight.hierarchy import NodeFrequencies
from hmlweight.imbalance import (
    NClassesMode,
    SchedulerKind,
    SchedulerState,
    imbalance_weights,
    mixed_loss,
    raw_weights,
    rescale_weights,
    scheduled_weights,
    weight_matrix,
    weight_table,
    weight_table_csv,
)


def freqs(counts, total):
    return NodeFrequencies(counts=np.asarray(counts), total_obs=total)


def test_raw_weights_worked_example():
    np.testing.assert_allclose(raw_weights(freqs([100, 50, 40, 10], 100)), [0.25, 0.5, 0.625, 2.5])


def test_raw_weights_uniform_and_binary():
    np.testing.assert_allclose(raw_weights(freqs([20, 20, 20], 20)), [1 / 3] * 3)
    np.testing.assert_allclose(raw_weights(freqs([10, 10], 20), NClassesMode.BINARY), [1.0, 1.0])


def test_zero_count_node_gets_rarest_weight(caplog):
    w = raw_weights(freqs([100, 10, 0], 100))
    assert w[2] == w[1]
    assert "no positive annotations" in caplog.text


def test_no_positives_raises():
    with pytest.raises(EmptyDataset):
        raw_weights(freqs([0, 0], 10))


def test_rescaled_worked_example():
    w = imbalance_weights(freqs([100, 50, 40, 10], 100), w0=0.25)
    np.testing.assert_allclose(w.rescaled, [0.25, 0.30556, 0.35417, 2.75], atol=1e-5)


def test_rescale_degenerate_range():
    np.testing.assert_array_equal(rescale_weights(np.array([0.5, 0.5]), 0.25), [0.25, 0.25])


def test_gate_floor_and_strict_monotonicity():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        n = int(rng.integers(2, 40))
        total = 1000
        counts = rng.choice(np.arange(1, total + 1), size=n, replace=False)
        w0 = float(rng.uniform(0, 1))
        w = imbalance_weights(freqs(counts, total), w0=w0)
        assert w.rescaled.min() == w0
        order = np.argsort(counts)
        assert np.all(np.diff(w.rescaled[order]) < 0)


def test_weight_matrix():
    w_tilde = np.array([0.25, 2.75])
    np.testing.assert_array_equal(weight_matrix(w_tilde, np.array([[1, 0], [0, 0], [1, 1]])),
                                  [[0.25, 1.0], [1.0, 1.0], [0.25, 2.75]])


def test_exponential_schedule_hand_values():
    state = SchedulerState(kind=SchedulerKind.EXPONENTIAL, k_exp=3.0)
    state.reset(4)
    got = []
    for _ in range(4):
        got.append(scheduled_weights(np.array([0.4]), state)[0])
        state.advance()
    np.testing.assert_allclose(got, [0.4, 0.42222, 0.57778, 1.0], atol=1e-5)


@pytest.mark.parametrize("kind", [SchedulerKind.LINEAR, SchedulerKind.EXPONENTIAL])
def test_schedule_endpoints_are_exact(kind):
    rng = np.random.default_rng(5)
    for _ in range(100):
        n_steps = int(rng.integers(2, 513))
        w_tilde = rng.uniform(0.0, 5.0, size=6)
        state = SchedulerState(kind=kind, k_exp=3.0)
        state.reset(n_steps)
        np.testing.assert_array_equal(scheduled_weights(w_tilde, state), w_tilde)
        state.t = n_steps - 1
        np.testing.assert_array_equal(scheduled_weights(w_tilde, state), np.ones(6))


def test_schedule_monotone_below_one():
    state = SchedulerState(kind=SchedulerKind.LINEAR)
    state.reset(10)
    previous = -np.inf
    for _ in range(10):
        value = scheduled_weights(np.array([0.3]), state)[0]
        assert value >= previous
        previous = value
        state.advance()


def test_alternating_and_none():
    w_tilde = np.array([0.25, 2.0])
    state = SchedulerState(kind=SchedulerKind.ALTERNATING)
    state.reset(3)
    np.testing.assert_array_equal(scheduled_weights(w_tilde, state), w_tilde)
    state.advance()
    np.testing.assert_array_equal(scheduled_weights(w_tilde, state), [1.0, 1.0])
    none = SchedulerState(kind=SchedulerKind.NONE)
    np.testing.assert_array_equal(scheduled_weights(w_tilde, none), w_tilde)


def test_step_outside_epoch_rejected():
    state = SchedulerState(kind=SchedulerKind.LINEAR)
    state.reset(2)
    state.t = 2
    with pytest.raises(ValueError):
        scheduled_weights(np.array([0.5]), state)


def test_mixed_loss():
    a, b = np.array([[2.0]]), np.array([[1.0]])
    assert mixed_loss(a, b, 1.0)[0, 0] == 2.0
    assert mixed_loss(a, b, 0.0)[0, 0] == 1.0
    assert mixed_loss(a, b, 0.5)[0, 0] == 1.5
    with pytest.raises(ValueError):
        mixed_loss(a, b, 1.5)


def test_weight_table_sorted_rarest_first():
    f = freqs([100, 50, 40, 10], 100)
    rows = weight_table(["a", "b", "c", "d"], f, imbalance_weights(f))
    assert [r.node_id for r in rows] == ["d", "c", "b", "a"]
    text = weight_table_csv(rows)
    assert text.splitlines()[0] == "node_id,n_i,f_i,w_i,w_tilde"
    assert text.splitlines()[1] == "d,10,0.1,2.5,2.75"
