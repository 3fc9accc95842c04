import json

import numpy as np
import pytest

from hmlweight.cli import main
from hmlweight.config import read_kv_file
from hmlweight.data import write_dataset
from hmlweight.synth import SYNTH_SPECS, synth

TRAIN = ["train", "--synth", "tiny", "--epochs", "1", "--ensemble-size", "2", "--hidden-dim", "4"]


@pytest.fixture(autouse=True)
def output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("HMLW_OUTPUT_DIR", str(tmp_path / "runs"))
    return tmp_path / "runs"


def _last_line(capsys) -> str:
    return capsys.readouterr().out.strip().splitlines()[-1]


def test_train_writes_run_directory(tmp_path, capsys):
    assert main(TRAIN + ["--output-dir", str(tmp_path), "--run-name", "r1"]) == 0
    run = tmp_path / "r1"
    assert _last_line(capsys) == str(run)
    for name in ("config.resolved", "model.hmlc", "metrics.json", "metrics.csv", "per-node.csv"):
        assert (run / name).is_file()
    assert not (run / "plan.txt").exists()

    resolved = read_kv_file(run / "config.resolved")
    assert resolved["epochs"] == "1" and resolved["synth"] == "tiny"
    log = json.loads((run / "metrics.json").read_text())
    assert len(log["history"]) == 1 and log["test"] is not None
    assert (run / "metrics.csv").read_text().splitlines()[-1].startswith(",test,")


def test_rerun_is_byte_identical(tmp_path, capsys):
    args = TRAIN + ["--output-dir", str(tmp_path), "--run-name", "same", "--focal", "gmu"]
    assert main(args) == 0
    run = tmp_path / "same"
    first = {p.name: p.read_bytes() for p in run.iterdir()}
    assert main(args) == 0
    assert {p.name: p.read_bytes() for p in run.iterdir()} == first


def test_default_run_name_uses_config_hash(output_dir, capsys):
    assert main(TRAIN) == 0
    run = _last_line(capsys)
    assert run.startswith(str(output_dir.resolve() / "run-"))


def test_resampled_run_writes_plan(tmp_path, capsys):
    assert main(TRAIN + ["--output-dir", str(tmp_path), "--run-name", "rs", "--resample", "lpros", "--pct", "1.0"]) == 0
    assert (tmp_path / "rs" / "plan.txt").is_file()


def test_eval_writes_next_to_checkpoint(tmp_path, capsys):
    main(TRAIN + ["--output-dir", str(tmp_path), "--run-name", "r"])
    run = tmp_path / "r"
    assert main(["eval", "--checkpoint", str(run / "model.hmlc"), "--synth", "tiny", "--split", "valid"]) == 0
    report = json.loads((run / "eval-valid.json").read_text())
    assert set(report) >= {"macro", "micro", "ap", "bin_ap", "per_node"}
    assert (run / "eval-valid-per-node.csv").is_file() and (run / "eval-valid.csv").is_file()


def test_eval_reproduces_train_time_test_metrics(tmp_path, capsys):
    main(TRAIN + ["--output-dir", str(tmp_path), "--run-name", "r", "--focal", "gmu"])
    run = tmp_path / "r"
    assert main(["eval", "--checkpoint", str(run / "model.hmlc"), "--synth", "tiny", "--split", "test"]) == 0
    recorded = json.loads((run / "metrics.json").read_text())["test"]
    assert json.loads((run / "eval-test.json").read_text()) == recorded


def test_eval_ignores_row_order(tmp_path, capsys):
    main(TRAIN + ["--output-dir", str(tmp_path), "--run-name", "r"])
    checkpoint = str(tmp_path / "r" / "model.hmlc")
    test_set = synth(SYNTH_SPECS["tiny"]).test
    order = np.random.default_rng(4).permutation(test_set.n_rows)
    write_dataset(tmp_path / "test.hmld", test_set)
    write_dataset(tmp_path / "shuffled.hmld", test_set.take(order))

    reports = []
    for name in ("test", "shuffled"):
        out = tmp_path / f"eval-{name}"
        assert main(["eval", "--checkpoint", checkpoint, "--test", str(tmp_path / f"{name}.hmld"),
                     "--output-dir", str(out)]) == 0
        reports.append(json.loads((out / "eval-test.json").read_text()))
    plain, shuffled = reports
    assert shuffled["per_node"] == plain["per_node"]
    for key in ("macro", "micro"):
        assert shuffled[key] == pytest.approx(plain[key], abs=1e-12)
    for key in ("ap", "bin_ap"):
        assert shuffled[key] == pytest.approx(plain[key], abs=1e-12)


def test_eval_rejects_other_hierarchy(tmp_path, capsys):
    main(TRAIN + ["--output-dir", str(tmp_path), "--run-name", "r"])
    code = main(["eval", "--checkpoint", str(tmp_path / "r" / "model.hmlc"), "--synth", "dag"])
    assert code == 2


def test_synth_then_train_from_files(tmp_path, capsys):
    out = tmp_path / "data"
    assert main(["synth", "--spec", "tiny", "--format", "arff", "--output-dir", str(out)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("depth_frequency_spearman = ") and lines[-1] == str(out)
    for name in ("spec.resolved", "train.arff", "valid.arff", "test.arff", "hierarchy.tsv", "frequency.csv"):
        assert (out / name).is_file()

    files = ["--train", str(out / "train.arff"), "--valid", str(out / "valid.arff"),
             "--test", str(out / "test.arff"), "--sidecar", str(out / "hierarchy.tsv")]
    code = main(["train", "--epochs", "1", "--ensemble-size", "1", "--hidden-dim", "4",
                 "--output-dir", str(tmp_path), "--run-name", "files"] + files)
    assert code == 0
    assert main(["eval", "--checkpoint", str(tmp_path / "files" / "model.hmlc")] + files) == 0


def test_synth_native_format(tmp_path, capsys):
    out = tmp_path / "native"
    assert main(["synth", "--spec", "tiny", "--seed", "3", "--output-dir", str(out)]) == 0
    assert read_kv_file(out / "spec.resolved")["seed"] == "3"
    assert {p.name for p in out.glob("*.hmld")} == {"train.hmld", "valid.hmld", "test.hmld"}


def test_resample(tmp_path, capsys):
    out = tmp_path / "plan"
    assert main(["resample", "--synth", "tiny", "--method", "hros-pd", "--output-dir", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "rows_before = 28" in printed and "labelset_mad_after = " in printed
    assert (out / "plan.txt").is_file() and (out / "frequencies.csv").is_file()
    rows = (out / "plan.txt").read_text().split()
    assert rows[:28] == [str(i) for i in range(28)]


def test_inspect_weights(tmp_path, capsys):
    assert main(["inspect-weights", "--synth", "tiny"]) == 0
    table = capsys.readouterr().out.splitlines()
    assert table[0] == "node_id,n_i,f_i,w_i,w_tilde"
    assert len(table) == 8
    assert main(["inspect-weights", "--synth", "tiny", "--output", str(tmp_path / "w.csv")]) == 0
    assert (tmp_path / "w.csv").read_text().splitlines() == table


def test_experiment_smoke(tmp_path, capsys):
    code = main(["experiment", "--spec", "tiny", "--seeds", "1", "--arms", "unweighted,imbalance",
                 "--epochs", "1", "--ensemble-size", "1", "--hidden-dim", "4",
                 "--output-dir", str(tmp_path), "--run-name", "exp"])
    assert code == 0
    out = capsys.readouterr().out
    assert "rare_recall_gain = " in out and "focal_no_regression = n/a" in out
    assert (tmp_path / "exp" / "experiment.json").is_file()
    assert len((tmp_path / "exp" / "experiment.csv").read_text().splitlines()) == 3


@pytest.mark.parametrize("argv", [
    TRAIN + ["--lr", "-1"],
    TRAIN + ["--config", "/nonexistent/run.conf"],
    TRAIN + ["--preset", "nope"],
    TRAIN + ["--focal", "ep-kl", "--ensemble-size", "1"],
    ["train", "--epochs", "1"],
    ["inspect-weights", "--synth", "tiny", "--w0", "-0.5"],
    ["experiment", "--spec", "tiny", "--arms", "bogus"],
    ["synth", "--spec", "no-such-spec"],
])
def test_configuration_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "hmlweight: error:" in capsys.readouterr().err


def test_runtime_errors_exit_1(tmp_path, capsys):
    assert main(["eval", "--checkpoint", str(tmp_path / "missing.hmlc"), "--synth", "tiny"]) == 1
    (tmp_path / "bad.hmlc").write_bytes(b"garbage")
    assert main(["eval", "--checkpoint", str(tmp_path / "bad.hmlc"), "--synth", "tiny"]) == 1
