"""
Centralized configuration: output paths, training configuration and presets.

The output directory can be set via the HMLW_OUTPUT_DIR environment variable.
If not set, defaults to a 'runs' folder in the repository root. The HTTP
service loads the checkpoint named by HMLW_CHECKPOINT.

Config files are UTF-8 `key = value` lines with `#` comments. Values are
resolved in the order built-in defaults < preset < config file < CLI flags.
"""

import os
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .ensemble import EnsembleMode, config_hash
from .errors import ConfigError
from .imbalance import DEFAULT_SCHEDULER_K, DEFAULT_W0, NClassesMode, SchedulerKind
from .resample import ResampleMethod
from .uncertainty import DEFAULT_FOCAL_K, DEFAULT_U0, FocalKind

_REPO_ROOT = Path(__file__).parent.parent


def get_output_dir() -> Path:
    """Return the configured output directory, creating it if needed."""
    env = os.environ.get("HMLW_OUTPUT_DIR")
    if env:
        output_dir = Path(env).resolve()
    else:
        output_dir = _REPO_ROOT / "runs"
    output_dir.mkdir(parents=True, exist_ok=True)
    return output_dir


def get_checkpoint_path() -> Optional[Path]:
    """Checkpoint served by the HTTP service, or None when unset."""
    env = os.environ.get("HMLW_CHECKPOINT")
    return Path(env).resolve() if env else None


class UncertaintySource(str, Enum):
    ENSEMBLE = "ensemble"
    DROPOUT = "dropout"


class UncertaintyInput(str, Enum):
    RAW = "raw"
    CONSTRAINED = "constrained"


class TrainConfig(BaseModel):
    """Everything that determines a training run. The seed fixes every random draw."""
    model_config = ConfigDict(extra="forbid")

    # Optimization
    lr: float = Field(1e-4, gt=0, description="Adam learning rate")
    epochs: int = Field(20, ge=1, description="Passes over the training split")
    batch_size: int = Field(4, ge=1, description="Rows per optimizer step")
    weight_decay: float = Field(0.0, ge=0, description="L2 coefficient added to the gradient")

    # Network and ensemble
    hidden_dim: int = Field(64, ge=1, description="Width of both hidden layers")
    dropout: float = Field(0.7, ge=0, lt=1, description="Dropout rate after each hidden layer")
    ensemble_size: int = Field(10, ge=1, description="Members, or MC-dropout passes when uncertainty_source=dropout")
    ensemble_mode: EnsembleMode = Field(EnsembleMode.INDEPENDENT, description="Independent models or shared-trunk heads")
    trunk_frozen: bool = Field(False, description="Keep the shared trunk at its initialization")

    # Imbalance weighting
    imbalance: bool = Field(True, description="Apply node-wise imbalance weights")
    w0: float = Field(DEFAULT_W0, ge=0, description="Information gate: minimum rescaled weight")
    n_classes_mode: NClassesMode = Field(NClassesMode.NODE_COUNT, description="N_classes = node count or 2")
    scheduler: SchedulerKind = Field(SchedulerKind.NONE, description="Per-batch weight scheduler")
    scheduler_k: float = Field(DEFAULT_SCHEDULER_K, gt=0, description="Exponent of the exp scheduler")
    mix_lambda: float = Field(0.5, ge=0, le=1, description="Weighted share of the mixed objective")

    # Focal weighting
    focal: FocalKind = Field(FocalKind.NONE, description="Uncertainty measure for focal weighting")
    u0: float = Field(DEFAULT_U0, ge=0, description="Focal floor added to U^k")
    focal_k: float = Field(DEFAULT_FOCAL_K, gt=0, description="Focal exponent")
    uncertainty_source: UncertaintySource = Field(UncertaintySource.ENSEMBLE, description="Ensemble members or MC-dropout passes")
    uncertainty_input: UncertaintyInput = Field(UncertaintyInput.RAW, description="Feed raw or constrained member outputs")

    # Evaluation and data
    threshold: float = Field(0.5, gt=0, lt=1, description="Decision threshold on the constrained mean")
    resample: ResampleMethod = Field(ResampleMethod.NONE, description="Oversampling applied to the training split")
    resample_pct: float = Field(0.25, ge=0, description="LPROS budget as a fraction of the training rows")
    train_fraction: float = Field(1.0, gt=0, le=1, description="Seeded share of training rows kept")
    seed: int = Field(0, ge=0, description="Seed for initialization, shuffling, dropout and resampling")

    @model_validator(mode="after")
    def _check_epistemic(self) -> "TrainConfig":
        if self.focal in (FocalKind.EPISTEMIC_KL, FocalKind.EPISTEMIC_JS) and self.ensemble_size < 2:
            raise ValueError(f"focal={self.focal.value} needs ensemble_size >= 2")
        if self.uncertainty_source is UncertaintySource.DROPOUT and self.dropout == 0:
            raise ValueError("uncertainty_source=dropout needs a positive dropout rate")
        return self

    def train_fields(self) -> dict[str, Any]:
        """JSON-compatible dump of the TrainConfig fields only."""
        return self.model_dump(mode="json", include=set(TrainConfig.model_fields))

    def hash(self) -> str:
        return config_hash(self.train_fields())


class RunConfig(TrainConfig):
    """TrainConfig plus the data sources and output location of one CLI run."""
    preset: Optional[str] = Field(None, description="Dataset preset name, e.g. cellcycle_fun")
    synth: Optional[str] = Field(None, description="Synthetic spec name or key=value spec file")
    train_file: Optional[Path] = Field(None, description="Training split (.arff or .hmld)")
    valid_file: Optional[Path] = Field(None, description="Validation split")
    test_file: Optional[Path] = Field(None, description="Test split")
    sidecar: Optional[Path] = Field(None, description="DAG sidecar for ARFF inputs")
    output_dir: Optional[Path] = Field(None, description="Parent of the run directory")
    run_name: Optional[str] = Field(None, description="Run directory name; derived from the config hash when unset")


# Published gene-product hyperparameters: (hidden FUN, hidden GO, epochs FUN, epochs GO)
_GENE_PRODUCT_TABLE = {
    "cellcycle": (500, 1000, 106, 62),
    "derisi": (500, 500, 67, 91),
    "eisen": (500, 500, 110, 123),
    "expr": (1250, 4000, 20, 70),
    "gasch1": (1000, 500, 42, 122),
    "gasch2": (500, 500, 123, 177),
    "seq": (2000, 9000, 13, 45),
    "spo": (250, 500, 115, 103),
}

PRESETS: dict[str, dict[str, Any]] = {}
for _name, (_hidden_fun, _hidden_go, _epochs_fun, _epochs_go) in _GENE_PRODUCT_TABLE.items():
    PRESETS[f"{_name}_fun"] = {"hidden_dim": _hidden_fun, "lr": 1e-4, "epochs": _epochs_fun, "batch_size": 4}
    PRESETS[f"{_name}_go"] = {"hidden_dim": _hidden_go, "lr": 1e-4, "epochs": _epochs_go, "batch_size": 4}


def preset(name: str) -> dict[str, Any]:
    try:
        return dict(PRESETS[name])
    except KeyError:
        raise ConfigError(f"Unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}") from None


def parse_kv_text(text: str) -> dict[str, str]:
    values = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {line_no}: expected key = value")
        if key in values:
            raise ConfigError(f"line {line_no}: duplicate key {key!r}")
        values[key] = value.strip()
    return values


def read_kv_file(path: Path) -> dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e}") from None
    return parse_kv_text(text)


def _format_value(value: Any) -> str:
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_kv(values: Mapping[str, Any]) -> str:
    """Sorted `key = value` lines; None values are omitted."""
    return "".join(f"{key} = {_format_value(values[key])}\n" for key in sorted(values) if values[key] is not None)


def write_kv_file(path: Path, values: Mapping[str, Any]) -> None:
    Path(path).write_text(format_kv(values), encoding="utf-8")


def resolve_config(
    model: type[BaseModel],
    cli_values: Mapping[str, Any],
    config_file: Optional[Path] = None,
) -> BaseModel:
    """
    Merge defaults < preset < config file < CLI values into `model`.

    The preset name itself may come from the config file or the CLI.

    Raises:
        ConfigError: unreadable file or unknown preset
        pydantic.ValidationError: unknown keys or out-of-range values
    """
    file_values = read_kv_file(config_file) if config_file is not None else {}
    cli_values = {k: v for k, v in cli_values.items() if v is not None}
    preset_name = cli_values.get("preset", file_values.get("preset"))
    merged: dict[str, Any] = preset(preset_name) if preset_name else {}
    merged.update(file_values)
    merged.update(cli_values)
    return model.model_validate(merged)
