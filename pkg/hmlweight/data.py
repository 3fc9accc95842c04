"""
Datasets and their file formats.

ARFF subset
-----------
    % comment
    @RELATION <name>
    @ATTRIBUTE <name> numeric|real|integer
    @ATTRIBUTE <name> hierarchical <class>,<class>,...
    @DATA
    <v1>,<v2>,...,<label field>

Classes are tree paths (`a/b/c`); the parent of `a/b/c` is `a/b`, which must
be declared too. The label field joins classes with `@`; an empty field means
no labels. `?` marks a missing numeric value, imputed with the training-split
column mean. Extra DAG parents come from a sidecar file holding one
`child<TAB>parent` pair per line.

Native format (.hmld), integers little-endian:

    8 bytes   magic b"HMLDSET\\0"
    u32       format version (1)
    u32       header length L
    L bytes   UTF-8 JSON header, sorted keys:
              split, n_rows, n_features, node_ids, edges
    float64   features, row-major
    uint8     labels, row-major
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import HierarchyError, ParseError, ShapeError, UnknownClassToken, UnknownNode
from .framing import read_frame, write_frame
from .hierarchy import Hierarchy, add_edges, build_hierarchy, close_labels

logger = logging.getLogger(__name__)

DATASET_MAGIC = b"HMLDSET\0"
DATASET_VERSION = 1

NUMERIC_TYPES = {"numeric", "real", "integer"}
LABEL_SEPARATOR = "@"
PATH_SEPARATOR = "/"


class Split(str, Enum):
    TRAIN = "train"
    VALID = "valid"
    TEST = "test"


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Features, ancestor-closed labels and the hierarchy they live on.

    Labels are closed on construction, so every Dataset satisfies the
    closure invariant regardless of how it was built.
    """
    features: np.ndarray
    labels: np.ndarray
    hierarchy: Hierarchy
    split: Split = Split.TRAIN

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64)
        labels = np.asarray(self.labels)
        if features.ndim != 2:
            raise ShapeError(f"Features must be 2-D, got shape {features.shape}")
        if labels.ndim != 2 or labels.shape[0] != features.shape[0]:
            raise ShapeError(f"Labels {labels.shape} do not match {features.shape[0]} feature rows")
        if not np.all(np.isfinite(features)):
            raise ValueError("Features contain NaN or infinite values")
        labels = close_labels(labels, self.hierarchy)
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "split", Split(self.split))

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def take(self, indices: Sequence[int] | np.ndarray) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[indices], self.labels[indices], self.hierarchy, self.split)

    def with_hierarchy(self, h: Hierarchy) -> "Dataset":
        """Same rows on a hierarchy with the same node ids; labels are re-closed."""
        if h.node_ids != self.hierarchy.node_ids:
            raise HierarchyError("Replacement hierarchy declares different node ids")
        return Dataset(self.features, self.labels, h, self.split)


class DatasetSplits(NamedTuple):
    train: Dataset
    valid: Dataset
    test: Dataset


# ARFF parsing

@dataclass
class _Header:
    n_numeric: int
    class_column: int
    class_ids: list[str]


def _parse_class_list(spec: str, line_no: int) -> list[str]:
    class_ids = [token.strip() for token in spec.split(",")]
    if not class_ids or any(not token for token in class_ids):
        raise ParseError("empty class in hierarchical class list", line_no)
    for token in class_ids:
        if any(ch.isspace() for ch in token) or LABEL_SEPARATOR in token:
            raise ParseError(f"invalid class name {token!r}", line_no)
    return class_ids


def _tree_hierarchy(class_ids: list[str], line_no: int) -> Hierarchy:
    declared = set(class_ids)
    edges = []
    for token in class_ids:
        if PATH_SEPARATOR not in token:
            continue
        parent = token.rsplit(PATH_SEPARATOR, 1)[0]
        if parent not in declared:
            raise ParseError(f"class {token!r} has undeclared parent {parent!r}", line_no)
        edges.append((parent, token))
    try:
        return build_hierarchy(class_ids, edges)
    except HierarchyError as e:
        raise ParseError(str(e), line_no) from None


def _parse_header(lines: list[str]) -> tuple[_Header, int, int]:
    """Returns the header, the index of the first data line and the class-list line number."""
    n_columns = 0
    class_column = None
    class_ids: list[str] = []
    class_line = 0
    for i, raw in enumerate(lines):
        line_no = i + 1
        line = raw.strip()
        if not line or line.startswith("%"):
            continue
        keyword = line.split(None, 1)[0].lower()
        if keyword == "@relation":
            continue
        if keyword == "@attribute":
            parts = line.split(None, 2)
            if len(parts) < 3:
                raise ParseError("@ATTRIBUTE needs a name and a type", line_no)
            kind = parts[2].split(None, 1)
            if kind[0].lower() in NUMERIC_TYPES and len(kind) == 1:
                n_columns += 1
            elif kind[0].lower() == "hierarchical" and len(kind) == 2:
                if class_column is not None:
                    raise ParseError("more than one hierarchical attribute", line_no)
                class_column = n_columns
                class_ids = _parse_class_list(kind[1], line_no)
                class_line = line_no
                n_columns += 1
            else:
                raise ParseError(f"unsupported attribute type {parts[2]!r}", line_no)
            continue
        if keyword == "@data":
            if class_column is None:
                raise ParseError("no hierarchical class attribute before @DATA", line_no)
            return _Header(n_columns - 1, class_column, class_ids), i + 1, class_line
        raise ParseError(f"unexpected header line {line[:40]!r}", line_no)
    raise ParseError("missing @DATA section", len(lines))


def _parse_value(token: str, line_no: int) -> float:
    token = token.strip()
    if token == "?":
        return math.nan
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"not a number: {token[:40]!r}", line_no) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite value {token!r}", line_no)
    return value


@dataclass(frozen=True, eq=False)
class ParsedArff:
    """Raw parse result before imputation: features may contain NaN."""
    features: np.ndarray
    labels: np.ndarray
    hierarchy: Hierarchy

    def column_means(self) -> np.ndarray:
        """Per-column mean over present values; 0 for a column with none."""
        present = ~np.isnan(self.features)
        sums = np.where(present, self.features, 0.0).sum(axis=0)
        counts = present.sum(axis=0)
        return np.divide(sums, counts, out=np.zeros(self.features.shape[1]), where=counts > 0)

    def impute(self, means: np.ndarray, split: Split) -> Dataset:
        if means.shape != (self.features.shape[1],):
            raise ShapeError(f"{means.shape[0]} column means for {self.features.shape[1]} columns")
        features = np.where(np.isnan(self.features), means[None, :], self.features)
        return Dataset(features, self.labels, self.hierarchy, split)


def parse_arff_text(text: str) -> ParsedArff:
    """
    Parse ARFF text. Every failure is a ParseError carrying a line number;
    an undeclared label raises UnknownClassToken (a ParseError).
    """
    lines = text.splitlines()
    header, first_data, class_line = _parse_header(lines)
    h = _tree_hierarchy(header.class_ids, class_line)

    rows: list[list[float]] = []
    label_rows: list[list[int]] = []
    expected_fields = header.n_numeric + 1
    for i in range(first_data, len(lines)):
        line_no = i + 1
        line = lines[i].strip()
        if not line or line.startswith("%"):
            continue
        fields = line.split(",")
        if len(fields) != expected_fields:
            raise ParseError(f"expected {expected_fields} fields, got {len(fields)}", line_no)
        label_field = fields.pop(header.class_column).strip()
        rows.append([_parse_value(token, line_no) for token in fields])
        positives = []
        if label_field:
            for token in label_field.split(LABEL_SEPARATOR):
                token = token.strip()
                try:
                    positives.append(h.index(token))
                except UnknownNode:
                    raise UnknownClassToken(token, line_no) from None
        label_rows.append(positives)

    features = np.array(rows, dtype=np.float64).reshape(len(rows), header.n_numeric)
    labels = np.zeros((len(rows), h.n_nodes), dtype=np.uint8)
    for b, positives in enumerate(label_rows):
        labels[b, positives] = 1
    return ParsedArff(features=features, labels=labels, hierarchy=h)


def parse_arff_bytes(data: bytes) -> ParsedArff:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as e:
        raise ParseError(f"input is not UTF-8: {e.reason}") from None
    return parse_arff_text(text)


def parse_arff(path: Path, split: Split = Split.TRAIN, means: np.ndarray | None = None) -> Dataset:
    """Parse one ARFF file, imputing `?` with `means` or with its own column means."""
    parsed = parse_arff_bytes(Path(path).read_bytes())
    if means is None:
        means = parsed.column_means()
    return parsed.impute(means, split)


def load_arff_splits(
    train_path: Path,
    valid_path: Path,
    test_path: Path,
    sidecar_path: Path | None = None,
) -> DatasetSplits:
    """
    Parse train / valid / test files sharing one class list. Missing values in
    every split are imputed with the training column means; the optional DAG
    sidecar is applied to all three.
    """
    parsed = {split: parse_arff_bytes(Path(p).read_bytes())
              for split, p in ((Split.TRAIN, train_path), (Split.VALID, valid_path), (Split.TEST, test_path))}
    train = parsed[Split.TRAIN]
    for split, p in parsed.items():
        if p.hierarchy.node_ids != train.hierarchy.node_ids:
            raise ParseError(f"{split.value} split declares a different class list than train")
        if p.features.shape[1] != train.features.shape[1]:
            raise ParseError(f"{split.value} split has {p.features.shape[1]} attributes, train has {train.features.shape[1]}")

    means = train.column_means()
    datasets = [parsed[s].impute(means, s) for s in Split]
    if sidecar_path is not None:
        h = load_dag_sidecar(sidecar_path, train.hierarchy)
        datasets = [d.with_hierarchy(h) for d in datasets]
    return DatasetSplits(*datasets)


# DAG sidecar

def parse_sidecar_text(text: str) -> list[tuple[str, str]]:
    """(parent, child) pairs from `child<TAB>parent` lines."""
    edges = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not all(p.strip() for p in parts):
            raise ParseError("expected child<TAB>parent", line_no)
        child, parent = (p.strip() for p in parts)
        edges.append((parent, child))
    return edges


def load_dag_sidecar(path: Path, h: Hierarchy) -> Hierarchy:
    """Add sidecar edges to `h`; raises UnknownNode or CyclicHierarchy on bad edges."""
    edges = parse_sidecar_text(Path(path).read_text(encoding="utf-8"))
    if not edges:
        return h
    logger.info("Adding %d DAG edges from %s", len(edges), path)
    return add_edges(h, edges)


def _tree_parent(node_id: str) -> str | None:
    return node_id.rsplit(PATH_SEPARATOR, 1)[0] if PATH_SEPARATOR in node_id else None


def sidecar_edges(h: Hierarchy) -> list[tuple[str, str]]:
    """Edges not implied by the path grammar of the node ids."""
    return [(p, c) for p, c in h.edge_list() if _tree_parent(c) != p]


def write_dag_sidecar(path: Path, h: Hierarchy) -> None:
    lines = ["# child\tparent\n"] + [f"{c}\t{p}\n" for p, c in sidecar_edges(h)]
    Path(path).write_text("".join(lines), encoding="utf-8")


# ARFF writing

def _check_writable(h: Hierarchy) -> None:
    declared = set(h.node_ids)
    for node_id in h.node_ids:
        if not node_id or "," in node_id or LABEL_SEPARATOR in node_id or any(ch.isspace() for ch in node_id):
            raise ValueError(f"Node id {node_id!r} cannot be written as an ARFF class")
        parent = _tree_parent(node_id)
        if parent is not None and (parent not in declared or (h.index(parent), h.index(node_id)) not in h.edges):
            raise ValueError(f"Node id {node_id!r} implies a parent the hierarchy does not have")


def write_arff(path: Path, dataset: Dataset, relation: str = "hmlweight") -> None:
    """
    Write `dataset` in the ARFF subset read by parse_arff. Each row lists its
    deepest positive nodes; non-path edges belong in write_dag_sidecar.
    """
    h = dataset.hierarchy
    _check_writable(h)
    labels = dataset.labels.astype(np.int64)
    deepest = (labels == 1) & ((labels @ h.matrix.T.astype(np.int64)) == 1)

    out = [f"@RELATION {relation}\n\n"]
    out += [f"@ATTRIBUTE f{j} numeric\n" for j in range(dataset.n_features)]
    out.append(f"@ATTRIBUTE class hierarchical {','.join(h.node_ids)}\n\n@DATA\n")
    for row, mask in zip(dataset.features, deepest):
        values = ",".join(repr(float(v)) for v in row)
        field = LABEL_SEPARATOR.join(h.node_ids[i] for i in np.flatnonzero(mask))
        out.append(f"{values},{field}\n" if values else f"{field}\n")
    Path(path).write_text("".join(out), encoding="utf-8")


# Native format

def dataset_to_bytes(dataset: Dataset) -> bytes:
    header = {
        "split": dataset.split.value,
        "n_rows": dataset.n_rows,
        "n_features": dataset.n_features,
        "node_ids": list(dataset.hierarchy.node_ids),
        "edges": [list(e) for e in dataset.hierarchy.edge_list()],
    }
    return write_frame(
        DATASET_MAGIC, DATASET_VERSION, header,
        np.ascontiguousarray(dataset.features, dtype="<f8").tobytes(),
        np.ascontiguousarray(dataset.labels, dtype=np.uint8).tobytes(),
    )


def dataset_from_bytes(data: bytes) -> Dataset:
    header, payload = read_frame(data, DATASET_MAGIC, DATASET_VERSION)
    try:
        n_rows, n_features = int(header["n_rows"]), int(header["n_features"])
        node_ids = [str(n) for n in header["node_ids"]]
        edges = [(str(p), str(c)) for p, c in header["edges"]]
        split = Split(header["split"])
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"invalid dataset header: {e}") from None
    if n_rows < 0 or n_features < 0:
        raise ParseError("negative dimensions in dataset header")

    n_feature_bytes = 8 * n_rows * n_features
    expected = n_feature_bytes + n_rows * len(node_ids)
    if len(payload) != expected:
        raise ParseError(f"payload has {len(payload)} bytes, expected {expected}")
    try:
        h = build_hierarchy(node_ids, edges)
    except HierarchyError as e:
        raise ParseError(f"invalid hierarchy in dataset header: {e}") from None
    features = np.frombuffer(payload[:n_feature_bytes], dtype="<f8").reshape(n_rows, n_features)
    labels = np.frombuffer(payload[n_feature_bytes:], dtype=np.uint8).reshape(n_rows, len(node_ids))
    try:
        return Dataset(features.astype(np.float64), labels.copy(), h, split)
    except ValueError as e:
        raise ParseError(str(e)) from None


def write_dataset(path: Path, dataset: Dataset) -> None:
    Path(path).write_bytes(dataset_to_bytes(dataset))


def read_dataset(path: Path) -> Dataset:
    return dataset_from_bytes(Path(path).read_bytes())


def load_dataset(path: Path, split: Split = Split.TRAIN, means: np.ndarray | None = None) -> Dataset:
    """Read `.hmld` natively; anything else is parsed as ARFF."""
    path = Path(path)
    if path.suffix == ".hmld":
        return read_dataset(path)
    return parse_arff(path, split, means)


def subsample_train(dataset: Dataset, fraction: float, seed: int) -> Dataset:
    """Seeded subset of round(fraction * rows) rows (at least one), in original order."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    if fraction == 1.0 or dataset.n_rows == 0:
        return dataset
    n_keep = max(1, int(round(fraction * dataset.n_rows)))
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    return dataset.take(np.sort(rng.choice(dataset.n_rows, n_keep, replace=False)))
