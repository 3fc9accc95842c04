import numpy as np
import pytest

from hmlweight.config import TrainConfig
from hmlweight.data import Dataset
from hmlweight.errors import NotDefined
from hmlweight.experiment import (
    ARMS,
    ArmSummary,
    _criteria,
    experiment_csv,
    fraction_csv,
    rare_quartile_nodes,
    run_directional,
    run_fraction_sweep,
    weighting_advantage,
)
from hmlweight.synth import SYNTH_SPECS, SynthSpec, synth

FAST = TrainConfig(epochs=1, ensemble_size=2, hidden_dim=4)


def test_weighting_advantage():
    assert weighting_advantage(0.6, 0.5) == pytest.approx(0.2)
    assert weighting_advantage(0.4, 0.5) == pytest.approx(-0.2)
    with pytest.raises(NotDefined):
        weighting_advantage(0.3, 0.0)


def test_rare_quartile_needs_test_presence(chain):
    # closed training counts a=4, b=2, c=1; the 0.25 quantile is 1.5
    train_set = Dataset(np.zeros((4, 1)), np.array([[1, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]), chain)
    present = Dataset(np.zeros((1, 1)), np.array([[0, 0, 1]]), chain)
    absent = Dataset(np.zeros((1, 1)), np.array([[1, 0, 0]]), chain)
    np.testing.assert_array_equal(rare_quartile_nodes(train_set, present), [2])
    assert rare_quartile_nodes(train_set, absent).size == 0


def test_criteria():
    summary = {
        "unweighted": ArmSummary(mean_f1=0.40, std_f1=0.01, mean_rare_recall=0.10),
        "imbalance": ArmSummary(mean_f1=0.45, std_f1=0.02, mean_rare_recall=0.20),
        "imbalance+gmu": ArmSummary(mean_f1=0.44, std_f1=0.02, mean_rare_recall=0.21),
    }
    assert _criteria(summary) == {"rare_recall_gain": True, "macro_f1_gain": True, "focal_no_regression": True}
    assert _criteria({"imbalance": summary["imbalance"]})["macro_f1_gain"] is None


def test_directional_smoke():
    report = run_directional(SYNTH_SPECS["tiny"], FAST, seeds=[0], arms={k: ARMS[k] for k in ("unweighted", "imbalance")})
    assert [(r.arm, r.seed) for r in report.runs] == [("unweighted", 0), ("imbalance", 0)]
    assert set(report.summary) == {"unweighted", "imbalance"}
    assert report.criteria["focal_no_regression"] is None
    lines = experiment_csv(report).splitlines()
    assert lines[0] == "arm,seed,macro_f1,rare_recall" and len(lines) == 3


def test_fraction_sweep_smoke(tiny_splits):
    points = run_fraction_sweep(tiny_splits, FAST, [0.5, 1.0])
    assert [p.fraction for p in points] == [0.5, 1.0]
    assert fraction_csv(points).splitlines()[0] == "fraction,f1_weighted,f1_unweighted,advantage"


@pytest.mark.slow
def test_directional_run_meets_every_criterion():
    spec = SYNTH_SPECS["directional"]
    cfg = TrainConfig(epochs=20, ensemble_size=10, hidden_dim=64, lr=1e-3, batch_size=32)
    report = run_directional(spec, cfg, seeds=range(5))
    assert len(report.runs) == 5 * len(ARMS)
    assert report.criteria["rare_recall_gain"] is True
    assert report.criteria["macro_f1_gain"] is True
    assert report.criteria["focal_no_regression"] is True


@pytest.mark.slow
def test_fraction_sweep_on_long_tail():
    splits = synth(SynthSpec(n_nodes=60, n_obs=2000, tail_exponent=1.5))
    cfg = TrainConfig(epochs=10, ensemble_size=3, hidden_dim=32, lr=1e-3, batch_size=16)
    points = run_fraction_sweep(splits, cfg, [0.25, 1.0])
    assert all(p.f1_weighted >= 0 and p.f1_unweighted >= 0 for p in points)
