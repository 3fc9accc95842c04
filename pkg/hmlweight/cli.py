"""
Command-line entry point.

    python -m hmlweight train --synth default --w0 0.25 --focal gmu --ensemble-size 10
    python -m hmlweight eval --checkpoint runs/<run>/model.hmlc --synth default
    python -m hmlweight synth --spec default --output-dir data/
    python -m hmlweight resample --synth default --method lpros --pct 0.25
    python -m hmlweight inspect-weights --train data/train.arff --w0 0.25
    python -m hmlweight experiment --seeds 5
    python -m hmlweight serve --checkpoint runs/<run>/model.hmlc

Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error.
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from pydantic import ValidationError

from .config import (
    RunConfig,
    UncertaintyInput,
    UncertaintySource,
    format_kv,
    get_output_dir,
    resolve_config,
    write_kv_file,
)
from .data import (
    Dataset,
    DatasetSplits,
    Split,
    load_arff_splits,
    load_dag_sidecar,
    load_dataset,
    parse_arff_bytes,
    write_arff,
    write_dag_sidecar,
    write_dataset,
)
from .ensemble import EnsembleMode, load_checkpoint, save_checkpoint
from .errors import ConfigError, DimensionMismatch, HmlError, NotDefined
from .experiment import ARMS, experiment_csv, fraction_csv, run_directional, run_fraction_sweep
from .hierarchy import node_frequencies
from .imbalance import DEFAULT_W0, NClassesMode, SchedulerKind, imbalance_weights, weight_table, weight_table_csv
from .metrics import per_node_csv, summary_csv, summary_row
from .resample import ResampleMethod, hros_pd, labelset_mad, lpros, weights_after_resample, write_plan
from .synth import SYNTH_SPECS, depth_frequency_correlation, load_synth_spec, synth
from .trainer import evaluate_ensemble, train
from .uncertainty import FocalKind

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _values(enum_cls) -> list[str]:
    return [member.value for member in enum_cls]


# Argument groups

def _add_data_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("data")
    group.add_argument("--synth", help=f"Synthetic spec: {', '.join(SYNTH_SPECS)} or a key=value file")
    group.add_argument("--train", dest="train_file", type=Path, help="Training split (.arff or .hmld)")
    group.add_argument("--valid", dest="valid_file", type=Path, help="Validation split")
    group.add_argument("--test", dest="test_file", type=Path, help="Test split")
    group.add_argument("--sidecar", type=Path, help="DAG sidecar (child<TAB>parent) for ARFF inputs")


def _add_train_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("training")
    group.add_argument("--config", type=Path, help="key = value config file")
    group.add_argument("--preset", help="Dataset preset, e.g. cellcycle_fun")
    group.add_argument("--lr", type=float)
    group.add_argument("--epochs", type=int)
    group.add_argument("--batch-size", type=int)
    group.add_argument("--weight-decay", type=float)
    group.add_argument("--hidden-dim", type=int)
    group.add_argument("--dropout", type=float)
    group.add_argument("--ensemble-size", type=int)
    group.add_argument("--ensemble-mode", choices=_values(EnsembleMode))
    group.add_argument("--trunk-frozen", action="store_const", const=True)
    group.add_argument("--no-imbalance", dest="imbalance", action="store_const", const=False,
                       help="Disable node-wise imbalance weights")
    group.add_argument("--w0", type=float, help=f"Information gate (default {DEFAULT_W0})")
    group.add_argument("--n-classes-mode", choices=_values(NClassesMode))
    group.add_argument("--scheduler", choices=_values(SchedulerKind))
    group.add_argument("--scheduler-k", type=float)
    group.add_argument("--lambda", dest="mix_lambda", type=float, help="Weighted share of the mixed objective")
    group.add_argument("--focal", choices=_values(FocalKind))
    group.add_argument("--u0", type=float)
    group.add_argument("--focal-k", type=float)
    group.add_argument("--uncertainty-source", choices=_values(UncertaintySource))
    group.add_argument("--uncertainty-input", choices=_values(UncertaintyInput))
    group.add_argument("--threshold", type=float)
    group.add_argument("--resample", choices=_values(ResampleMethod))
    group.add_argument("--pct", dest="resample_pct", type=float, help="LPROS budget fraction")
    group.add_argument("--train-fraction", type=float)
    group.add_argument("--seed", type=int)
    group.add_argument("--output-dir", type=Path, help="Parent directory of the run (default $HMLW_OUTPUT_DIR)")
    group.add_argument("--run-name", help="Run directory name (default derived from the config hash)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hmlweight", description="Weighted hierarchical multi-label training")
    parser.add_argument("--log-level", default=os.environ.get("HMLW_LOG_LEVEL", "INFO"),
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="Train an ensemble and write checkpoint + metric files")
    _add_data_args(p)
    _add_train_args(p)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="Recompute metrics for a checkpoint on one split")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--split", choices=_values(Split), default=Split.TEST.value)
    p.add_argument("--threshold", type=float, help="Default: the checkpoint's threshold")
    p.add_argument("--output-dir", type=Path, help="Default: the checkpoint's directory")
    _add_data_args(p)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("synth", help="Generate a synthetic long-tailed dataset")
    p.add_argument("--spec", default="default", help=f"{', '.join(SYNTH_SPECS)} or a key=value file")
    p.add_argument("--seed", type=int)
    p.add_argument("--format", choices=["hmld", "arff"], default="hmld")
    p.add_argument("--output-dir", type=Path)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("resample", help="Build an oversampling plan for the training split")
    _add_data_args(p)
    p.add_argument("--method", choices=[ResampleMethod.LPROS.value, ResampleMethod.HROS_PD.value], required=True)
    p.add_argument("--pct", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output-dir", type=Path)
    p.set_defaults(handler=cmd_resample)

    p = sub.add_parser("inspect-weights", help="Print the per-node imbalance weight table")
    _add_data_args(p)
    p.add_argument("--w0", type=float, default=DEFAULT_W0)
    p.add_argument("--n-classes-mode", choices=_values(NClassesMode), default=NClassesMode.NODE_COUNT.value)
    p.add_argument("--output", type=Path, help="Write the CSV here instead of stdout")
    p.set_defaults(handler=cmd_inspect_weights)

    p = sub.add_parser("experiment", help="Directional rare-node experiment on synthetic data")
    p.add_argument("--spec", default="directional")
    p.add_argument("--seeds", type=int, default=5, help="Number of seeds (0 .. n-1)")
    p.add_argument("--arms", help=f"Comma-separated subset of {','.join(ARMS)}")
    p.add_argument("--fractions", help="Comma-separated training fractions; runs the fraction sweep instead")
    _add_train_args(p)
    p.set_defaults(handler=cmd_experiment)

    p = sub.add_parser("serve", help="Run the HTTP service")
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--output-dir", type=Path)
    p.add_argument("--host", default="0.0.0.0")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(handler=cmd_serve)
    return parser


# Data loading

def _run_config(args: argparse.Namespace) -> RunConfig:
    values = {name: getattr(args, name) for name in RunConfig.model_fields if hasattr(args, name)}
    return resolve_config(RunConfig, values, getattr(args, "config", None))


def load_splits(synth_name: Optional[str], train_file, valid_file, test_file, sidecar) -> DatasetSplits:
    if synth_name:
        return synth(load_synth_spec(synth_name))
    if not (train_file and valid_file and test_file):
        raise ConfigError("Give --synth or all of --train, --valid and --test")
    paths = (Path(train_file), Path(valid_file), Path(test_file))
    if all(p.suffix != ".hmld" for p in paths):
        return load_arff_splits(*paths, sidecar_path=sidecar)
    if any(p.suffix != ".hmld" for p in paths):
        raise ConfigError("Do not mix .hmld and ARFF splits")
    return DatasetSplits(*(load_dataset(p) for p in paths))


def load_train_split(args: argparse.Namespace) -> Dataset:
    if args.synth:
        return synth(load_synth_spec(args.synth)).train
    if not args.train_file:
        raise ConfigError("Give --synth or --train")
    dataset = load_dataset(args.train_file)
    if args.sidecar and args.train_file.suffix != ".hmld":
        dataset = dataset.with_hierarchy(load_dag_sidecar(args.sidecar, dataset.hierarchy))
    return dataset


def load_eval_split(args: argparse.Namespace) -> Dataset:
    split = Split(args.split)
    if args.synth:
        return synth(load_synth_spec(args.synth))[list(Split).index(split)]
    path = {Split.TRAIN: args.train_file, Split.VALID: args.valid_file, Split.TEST: args.test_file}[split]
    if path is None:
        raise ConfigError(f"Give --synth or --{split.value} for --split {split.value}")
    means = None
    if args.train_file and path.suffix != ".hmld":
        # impute with the training-split means, as training did
        means = parse_arff_bytes(args.train_file.read_bytes()).column_means()
    dataset = load_dataset(path, split, means)
    if args.sidecar and path.suffix != ".hmld":
        dataset = dataset.with_hierarchy(load_dag_sidecar(args.sidecar, dataset.hierarchy))
    return dataset


def _output_dir(path: Optional[Path], default_name: str) -> Path:
    out = Path(path) if path else get_output_dir() / default_name
    out.mkdir(parents=True, exist_ok=True)
    return out


# Commands

def cmd_train(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    splits = load_splits(cfg.synth, cfg.train_file, cfg.valid_file, cfg.test_file, cfg.sidecar)
    result = train(splits, cfg)

    base = Path(cfg.output_dir) if cfg.output_dir else get_output_dir()
    run_dir = base / (cfg.run_name or f"run-{cfg.hash()[:12]}")
    run_dir.mkdir(parents=True, exist_ok=True)

    h = result.train_set.hierarchy
    write_kv_file(run_dir / "config.resolved", cfg.model_dump(mode="json"))
    save_checkpoint(run_dir / "model.hmlc", result.ensemble, cfg.train_fields(), h.node_ids, h.edge_list())
    (run_dir / "metrics.json").write_text(result.log.model_dump_json(indent=2) + "\n", encoding="utf-8")

    rows = [summary_row(r.epoch, Split.VALID.value, r.mean_loss, r.valid) for r in result.log.history if r.valid]
    if result.log.test is not None:
        rows.append(summary_row(None, Split.TEST.value, None, result.log.test))
        (run_dir / "per-node.csv").write_text(per_node_csv(result.log.test, h.depth), encoding="utf-8")
    (run_dir / "metrics.csv").write_text(summary_csv(rows), encoding="utf-8")
    if result.plan.n_added:
        write_plan(run_dir / "plan.txt", result.plan)

    logger.info("Wrote run to %s", run_dir)
    print(run_dir)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    dataset = load_eval_split(args)
    if dataset.hierarchy.node_ids != checkpoint.node_ids:
        raise DimensionMismatch("Dataset hierarchy does not match the checkpoint's node ids")
    threshold = args.threshold if args.threshold is not None else float(checkpoint.config.get("threshold", 0.5))
    report = evaluate_ensemble(checkpoint.ensemble, dataset, threshold)

    out = Path(args.output_dir) if args.output_dir else Path(args.checkpoint).parent
    out.mkdir(parents=True, exist_ok=True)
    split = Split(args.split).value
    (out / f"eval-{split}.json").write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    (out / f"eval-{split}-per-node.csv").write_text(per_node_csv(report, dataset.hierarchy.depth), encoding="utf-8")
    (out / f"eval-{split}.csv").write_text(summary_csv([summary_row(None, split, None, report)]), encoding="utf-8")
    logger.info("%s: macro F1 %.4f, micro F1 %.4f", split, report.macro.f1, report.micro.f1)
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    spec = load_synth_spec(args.spec, {"seed": args.seed})
    splits = synth(spec)
    name = args.spec if args.spec in SYNTH_SPECS else Path(args.spec).stem
    out = _output_dir(args.output_dir, f"synth-{name}-{spec.seed}")

    write_kv_file(out / "spec.resolved", spec.model_dump())
    for dataset in splits:
        if args.format == "arff":
            write_arff(out / f"{dataset.split.value}.arff", dataset)
        else:
            write_dataset(out / f"{dataset.split.value}.hmld", dataset)
    if args.format == "arff":
        write_dag_sidecar(out / "hierarchy.tsv", splits.train.hierarchy)

    train_set = splits.train
    freqs = node_frequencies(train_set.labels)
    lines = ["node_id,depth,count,freq\n"] + [
        f"{node_id},{depth},{int(count)},{float(f)!r}\n"
        for node_id, depth, count, f in zip(train_set.hierarchy.node_ids, train_set.hierarchy.depth, freqs.counts, freqs.freq)
    ]
    (out / "frequency.csv").write_text("".join(lines), encoding="utf-8")
    try:
        print(f"depth_frequency_spearman = {depth_frequency_correlation(train_set)!r}")
    except NotDefined as e:
        logger.warning("%s", e)
    print(out)
    return 0


def cmd_resample(args: argparse.Namespace) -> int:
    dataset = load_train_split(args)
    method = ResampleMethod(args.method)
    if method is ResampleMethod.LPROS:
        plan = lpros(dataset.labels, args.pct, rng_seed=args.seed)
    else:
        plan = hros_pd(dataset.labels, dataset.hierarchy, rng_seed=args.seed)

    out = _output_dir(args.output_dir, f"resample-{method.value}-{args.seed}")
    write_kv_file(out / "config.resolved", {
        "method": method.value, "pct": args.pct, "seed": args.seed,
        "synth": args.synth, "train_file": args.train_file, "sidecar": args.sidecar,
    })
    write_plan(out / "plan.txt", plan)

    before = node_frequencies(dataset.labels)
    after = weights_after_resample(plan, dataset.labels)
    lines = ["node_id,depth,count_before,count_after,freq_before,freq_after\n"] + [
        f"{node_id},{depth},{int(cb)},{int(ca)},{float(fb)!r},{float(fa)!r}\n"
        for node_id, depth, cb, ca, fb, fa in zip(
            dataset.hierarchy.node_ids, dataset.hierarchy.depth, before.counts, after.counts, before.freq, after.freq
        )
    ]
    (out / "frequencies.csv").write_text("".join(lines), encoding="utf-8")
    resampled = dataset.labels[plan.indices]
    print(f"rows_before = {plan.n_source}\nrows_after = {len(plan.indices)}")
    print(f"labelset_mad_before = {labelset_mad(dataset.labels)!r}\nlabelset_mad_after = {labelset_mad(resampled)!r}")
    return 0


def cmd_inspect_weights(args: argparse.Namespace) -> int:
    if args.w0 < 0:
        raise ConfigError(f"--w0 must be non-negative, got {args.w0}")
    dataset = load_train_split(args)
    freqs = node_frequencies(dataset.labels)
    weights = imbalance_weights(freqs, args.w0, NClassesMode(args.n_classes_mode))
    table = weight_table_csv(weight_table(dataset.hierarchy.node_ids, freqs, weights))
    if args.output:
        Path(args.output).write_text(table, encoding="utf-8")
    else:
        sys.stdout.write(table)
    return 0


def _csv_list(text: Optional[str], cast) -> Optional[list]:
    if text is None:
        return None
    try:
        return [cast(item.strip()) for item in text.split(",") if item.strip()]
    except ValueError as e:
        raise ConfigError(f"Bad list {text!r}: {e}") from None


def cmd_experiment(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    spec = load_synth_spec(args.spec)
    arm_names = _csv_list(args.arms, str) or list(ARMS)
    unknown = [a for a in arm_names if a not in ARMS]
    if unknown:
        raise ConfigError(f"Unknown arms {unknown}; choose from {list(ARMS)}")
    if args.seeds < 1:
        raise ConfigError("--seeds must be at least 1")

    base = Path(cfg.output_dir) if cfg.output_dir else get_output_dir()
    out = base / (cfg.run_name or f"experiment-{cfg.hash()[:12]}")
    out.mkdir(parents=True, exist_ok=True)
    write_kv_file(out / "config.resolved", cfg.model_dump(mode="json"))
    write_kv_file(out / "experiment.resolved", {
        "spec": args.spec, "seeds": args.seeds, "arms": ",".join(arm_names), "fractions": args.fractions,
    })

    fractions = _csv_list(args.fractions, float)
    if fractions:
        points = run_fraction_sweep(synth(spec.model_copy(update={"seed": cfg.seed})), cfg, fractions)
        (out / "fractions.csv").write_text(fraction_csv(points), encoding="utf-8")
    else:
        report = run_directional(spec, cfg, range(args.seeds), {a: ARMS[a] for a in arm_names})
        (out / "experiment.json").write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
        (out / "experiment.csv").write_text(experiment_csv(report), encoding="utf-8")
        sys.stdout.write(format_kv({k: ("n/a" if v is None else v) for k, v in report.criteria.items()}))
    print(out)
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    if args.checkpoint:
        os.environ["HMLW_CHECKPOINT"] = str(Path(args.checkpoint).resolve())
    if args.output_dir:
        os.environ["HMLW_OUTPUT_DIR"] = str(Path(args.output_dir).resolve())
    from .server import app

    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format=LOG_FORMAT, stream=sys.stderr)

    try:
        return args.handler(args)
    except (ConfigError, ValidationError, DimensionMismatch) as e:
        print(f"hmlweight: error: {e}", file=sys.stderr)
        return 2
    except (HmlError, OSError) as e:
        print(f"hmlweight: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    except ValueError as e:
        print(f"hmlweight: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
