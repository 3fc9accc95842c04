"""
Ensemble containers and the checkpoint file format.

Two layouts share one interface:

- independent: M full parameter vectors, one Mlp each.
- shared_trunk_heads: one trunk [W1, b1, W2, b2] plus M heads [W3, b3].

Checkpoint layout (.hmlc), all integers little-endian:

    8 bytes   magic b"HMLCKPT\\0"
    u32       format version (1)
    u32       header length L
    L bytes   UTF-8 JSON header, sorted keys
    float64   trunk vector (shared_trunk_heads only)
    float64   member vectors, one after another

Header keys: config, config_hash, mode, trunk_frozen, dims [F, H, N], dropout,
n_members, node_ids, edges, sizes {trunk, member}.
"""

import hashlib
import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .constraint import f_cm
from .errors import DimensionMismatch, ParseError, ShapeError
from .framing import read_frame, write_frame
from .network import Mlp

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"HMLCKPT\0"
CHECKPOINT_VERSION = 1

# rows per forward call at evaluation time
EVAL_CHUNK = 512


class EnsembleMode(str, Enum):
    INDEPENDENT = "independent"
    SHARED_TRUNK_HEADS = "shared_trunk_heads"


def member_seeds(seed: int, n: int, stream: int) -> list[np.random.SeedSequence]:
    """Independent child seeds per member; `stream` separates init from training draws."""
    return np.random.SeedSequence([seed, stream]).spawn(n)


@dataclass
class Ensemble:
    """
    M members over one network shape.

    For independent ensembles `members` holds full parameter vectors and
    `trunk` is None; for shared_trunk_heads `members` holds heads only.
    """
    model: Mlp
    mode: EnsembleMode
    members: list[np.ndarray]
    trunk: np.ndarray | None = None
    trunk_frozen: bool = False

    def __post_init__(self):
        self.mode = EnsembleMode(self.mode)
        if not self.members:
            raise ValueError("An ensemble needs at least one member")
        expected = self.model.n_params if self.mode is EnsembleMode.INDEPENDENT else self.model.head_size
        for m, params in enumerate(self.members):
            if params.shape != (expected,):
                raise ShapeError(f"Member {m} has shape {params.shape}, expected ({expected},)")
        if self.mode is EnsembleMode.SHARED_TRUNK_HEADS:
            if self.trunk is None or self.trunk.shape != (self.model.trunk_size,):
                raise ShapeError(f"Shared ensembles need a trunk of size {self.model.trunk_size}")
        elif self.trunk is not None:
            raise ShapeError("Independent ensembles carry no shared trunk")

    @classmethod
    def initialize(
        cls,
        model: Mlp,
        n_members: int,
        mode: EnsembleMode = EnsembleMode.INDEPENDENT,
        seed: int = 0,
        trunk_frozen: bool = False,
    ) -> "Ensemble":
        """Seeded parameters; member m always draws from the same child stream."""
        if n_members < 1:
            raise ValueError(f"n_members must be at least 1, got {n_members}")
        mode = EnsembleMode(mode)
        trunk_seed, *seeds = member_seeds(seed, n_members + 1, stream=0)
        rngs = [np.random.default_rng(s) for s in seeds]
        if mode is EnsembleMode.INDEPENDENT:
            return cls(model=model, mode=mode, members=[model.init_params(rng) for rng in rngs])
        trunk = model.init_params(np.random.default_rng(trunk_seed))[:model.trunk_size]
        return cls(
            model=model,
            mode=mode,
            members=[model.init_head(rng) for rng in rngs],
            trunk=trunk,
            trunk_frozen=trunk_frozen,
        )

    @property
    def size(self) -> int:
        return len(self.members)

    def member_params(self, m: int) -> np.ndarray:
        """Full parameter vector of member m."""
        if self.mode is EnsembleMode.INDEPENDENT:
            return self.members[m]
        return np.concatenate([self.trunk, self.members[m]])

    def member_probs(self, x: np.ndarray) -> np.ndarray:
        """M x B x N raw member outputs with dropout off, evaluated in row chunks."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.model.input_dim:
            raise DimensionMismatch(f"Expected B x {self.model.input_dim} features, got {x.shape}")
        out = np.empty((self.size, x.shape[0], self.model.output_dim))
        for start in range(0, x.shape[0], EVAL_CHUNK):
            block = x[start:start + EVAL_CHUNK]
            for m in range(self.size):
                out[m, start:start + EVAL_CHUNK] = self.model.forward(self.member_params(m), block)
        return out

    def mean_probs(self, x: np.ndarray) -> np.ndarray:
        return self.member_probs(x).mean(axis=0)

    def predict_proba(self, x: np.ndarray, A: np.ndarray) -> np.ndarray:
        """Constrained ensemble mean f_cm(mean_m p_m)."""
        return f_cm(self.mean_probs(x), A)


@dataclass(frozen=True)
class Checkpoint:
    ensemble: Ensemble
    config: dict[str, Any]
    config_hash: str
    node_ids: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]


def config_hash(config: dict[str, Any]) -> str:
    """sha256 of the canonical (sorted, compact) JSON form of a config mapping."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def save_checkpoint(
    path: Path,
    ensemble: Ensemble,
    config: dict[str, Any],
    node_ids: Sequence[str],
    edges: Sequence[tuple[str, str]],
) -> str:
    """Write a .hmlc file; returns the config hash stored in it."""
    model = ensemble.model
    digest = config_hash(config)
    trunk_size = model.trunk_size if ensemble.mode is EnsembleMode.SHARED_TRUNK_HEADS else 0
    header = {
        "config": config,
        "config_hash": digest,
        "mode": ensemble.mode.value,
        "trunk_frozen": ensemble.trunk_frozen,
        "dims": [model.input_dim, model.hidden_dim, model.output_dim],
        "dropout": model.dropout_rate,
        "n_members": ensemble.size,
        "node_ids": list(node_ids),
        "edges": [list(e) for e in edges],
        "sizes": {"trunk": trunk_size, "member": int(ensemble.members[0].size)},
    }
    vectors = ([ensemble.trunk] if trunk_size else []) + list(ensemble.members)
    payload = b"".join(np.asarray(v, dtype="<f8").tobytes() for v in vectors)
    Path(path).write_bytes(write_frame(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, header, payload))
    logger.info("Saved %d-member %s ensemble to %s", ensemble.size, ensemble.mode.value, path)
    return digest


def load_checkpoint(path: Path) -> Checkpoint:
    """
    Read a .hmlc file written by save_checkpoint.

    Raises:
        ParseError: wrong magic / version, malformed header or payload size
    """
    header, payload = read_frame(Path(path).read_bytes(), CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
    try:
        input_dim, hidden_dim, output_dim = (int(d) for d in header["dims"])
        mode = EnsembleMode(header["mode"])
        n_members = int(header["n_members"])
        trunk_size = int(header["sizes"]["trunk"])
        member_size = int(header["sizes"]["member"])
        model = Mlp(input_dim, hidden_dim, output_dim, float(header["dropout"]))
        node_ids = tuple(str(n) for n in header["node_ids"])
        edges = tuple((str(p), str(c)) for p, c in header["edges"])
        config = dict(header["config"])
        digest = str(header["config_hash"])
        trunk_frozen = bool(header["trunk_frozen"])
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"invalid checkpoint header: {e}") from None

    expected = 8 * (trunk_size + n_members * member_size)
    if len(payload) != expected:
        raise ParseError(f"payload has {len(payload)} bytes, expected {expected}")
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    trunk = values[:trunk_size].copy() if trunk_size else None
    members = [
        values[trunk_size + m * member_size: trunk_size + (m + 1) * member_size].copy()
        for m in range(n_members)
    ]
    try:
        ensemble = Ensemble(model=model, mode=mode, members=members, trunk=trunk, trunk_frozen=trunk_frozen)
    except (ShapeError, ValueError) as e:
        raise ParseError(f"checkpoint vectors do not match the header: {e}") from None
    if config_hash(config) != digest:
        logger.warning("Checkpoint %s: stored config hash does not match its config", path)
    return Checkpoint(ensemble=ensemble, config=config, config_hash=digest, node_ids=node_ids, edges=edges)
