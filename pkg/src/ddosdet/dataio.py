"""Labeled flow datasets: loading, balancing, splitting, scaling, encoding.

The binary target is Attack vs Benign (class indices 1 and 0); the original
attack-type string rides along on every sample for per-type reporting and
for the unseen-attack holdout protocol. Attack-type "Benign" and the Benign
label imply each other.

Two CSV shapes load here: this package's own flow CSV (19 feature columns
plus ``label`` and ``attack_type``) and wide flow exports that carry a
``Label`` column (benign rows spelled "BENIGN" in any case). For wide files
with non-numeric columns, pass ``selection`` to name the feature columns.
"""

import csv
import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateSplitError,
    EmptyDatasetError,
    HoldoutViolationError,
    SchemaError,
    VersionMismatchError,
    CorruptFileError,
)

TRAIN_FRACTION_DEFAULT = 0.8344

BENIGN_TAG = "Benign"

SCALER_HEADER = "ddosdet-scaler v1"


class Label(enum.IntEnum):
    BENIGN = 0
    ATTACK = 1


@dataclass(frozen=True)
class LabeledSample:
    features: np.ndarray
    label: Label
    attack_type: str


@dataclass(frozen=True)
class Dataset:
    """Immutable feature matrix with labels, attack-type tags, and a schema."""

    features: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int64, Label values
    attack_types: tuple
    schema: tuple
    provenance: str = ""

    def __post_init__(self):
        n, d = self.features.shape
        if len(self.labels) != n or len(self.attack_types) != n:
            raise ValueError("features, labels, and attack_types lengths disagree")
        if len(self.schema) != d:
            raise ValueError(f"schema width {len(self.schema)} != feature width {d}")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("non-finite feature values")
        benign = np.asarray([t == BENIGN_TAG for t in self.attack_types])
        if not np.array_equal(benign, self.labels == Label.BENIGN):
            raise ValueError("attack_type 'Benign' and Benign label must coincide")

    def __len__(self) -> int:
        return self.features.shape[0]

    def sample(self, i: int) -> LabeledSample:
        return LabeledSample(self.features[i], Label(int(self.labels[i])), self.attack_types[i])

    def type_counts(self) -> dict:
        counts = {}
        for t in self.attack_types:
            counts[t] = counts.get(t, 0) + 1
        return counts

    def take(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            features=self.features[idx],
            labels=self.labels[idx],
            attack_types=tuple(self.attack_types[i] for i in idx),
            schema=self.schema,
            provenance=self.provenance,
        )


def dataset_from_types(features, attack_types, schema, provenance="") -> Dataset:
    """Build a Dataset deriving labels from attack-type tags."""
    tags = tuple(attack_types)
    labels = np.asarray([Label.BENIGN if t == BENIGN_TAG else Label.ATTACK for t in tags], dtype=np.int64)
    return Dataset(
        features=np.ascontiguousarray(features, dtype=np.float64),
        labels=labels,
        attack_types=tags,
        schema=tuple(schema),
        provenance=provenance,
    )


# --- CSV loading ----------------------------------------------------------


def _normalize_tag(raw: str) -> str:
    return BENIGN_TAG if raw.strip().lower() == "benign" else raw.strip()


def load_flow_csv(path, selection=None):
    """Load a labeled flow CSV.

    Returns (Dataset, rejected) where rejected is a list of
    (line number, reason) pairs for rows dropped due to unparsable or
    non-finite feature cells. The label column ("label", any case) is
    required; benign rows are those whose label reads "benign"
    case-insensitively. An "attack_type" column, when present, supplies the
    type tag; otherwise the label string itself is the tag.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: empty file, no header")
        names = [h.strip() for h in header]
        lowered = [h.lower() for h in names]
        if "label" not in lowered:
            raise SchemaError(f"{path}: no label column in header")
        label_idx = lowered.index("label")
        type_idx = lowered.index("attack_type") if "attack_type" in lowered else None
        if selection is not None:
            missing = [c for c in selection if c not in names]
            if missing:
                raise SchemaError(f"{path}: selected columns not found: {missing}")
            feat_idx = [names.index(c) for c in selection]
        else:
            skip = {label_idx, type_idx} if type_idx is not None else {label_idx}
            feat_idx = [i for i in range(len(names)) if i not in skip]
        feat_names = tuple(names[i] for i in feat_idx)

        rows = []
        tags = []
        rejected = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(names):
                rejected.append((line_no, f"expected {len(names)} fields, got {len(row)}"))
                continue
            try:
                values = [float(row[i]) for i in feat_idx]
            except ValueError as exc:
                rejected.append((line_no, str(exc)))
                continue
            if not all(np.isfinite(values)):
                rejected.append((line_no, "non-finite feature value"))
                continue
            raw_label = row[label_idx]
            benign = raw_label.strip().lower() == "benign"
            if type_idx is not None:
                tag = _normalize_tag(row[type_idx])
                if (tag == BENIGN_TAG) != benign:
                    rejected.append((line_no, f"label {raw_label!r} conflicts with attack_type {tag!r}"))
                    continue
            else:
                tag = _normalize_tag(raw_label)
            rows.append(values)
            tags.append(tag)
    if not rows:
        raise EmptyDatasetError(f"{path}: no usable rows ({len(rejected)} rejected)")
    features = np.asarray(rows, dtype=np.float64)
    ds = dataset_from_types(features, tags, feat_names, provenance=str(path))
    return ds, rejected


def read_feature_matrix(path, selection=None):
    """Read feature columns from a flow CSV that may lack labels.

    Returns (matrix, schema, passthrough_rows) where passthrough_rows are
    the raw CSV rows (header first) for rewriting with extra columns.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: empty file, no header")
        names = [h.strip() for h in header]
        lowered = [h.lower() for h in names]
        if selection is not None:
            missing = [c for c in selection if c not in names]
            if missing:
                raise SchemaError(f"{path}: selected columns not found: {missing}")
            feat_idx = [names.index(c) for c in selection]
        else:
            feat_idx = [i for i in range(len(names)) if lowered[i] not in ("label", "attack_type")]
        feat_names = tuple(names[i] for i in feat_idx)
        rows = []
        raw = [names]
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(names):
                raise SchemaError(f"{path}:{line_no}: expected {len(names)} fields, got {len(row)}")
            try:
                rows.append([float(row[i]) for i in feat_idx])
            except ValueError as exc:
                raise SchemaError(f"{path}:{line_no}: {exc}") from exc
            raw.append(row)
    if not rows:
        raise EmptyDatasetError(f"{path}: no data rows")
    return np.asarray(rows, dtype=np.float64), feat_names, raw


def write_dataset_csv(ds: Dataset, path) -> None:
    label_names = {Label.BENIGN: "Benign", Label.ATTACK: "Attack"}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(ds.schema) + ["label", "attack_type"])
        for i in range(len(ds)):
            row = [repr(v) for v in ds.features[i]]
            row.append(label_names[Label(int(ds.labels[i]))])
            row.append(ds.attack_types[i])
            writer.writerow(row)


def concat_datasets(datasets) -> Dataset:
    """Stack datasets sharing one schema, preserving order."""
    datasets = list(datasets)
    if not datasets:
        raise EmptyDatasetError("nothing to concatenate")
    schema = datasets[0].schema
    for ds in datasets[1:]:
        if ds.schema != schema:
            raise SchemaError(f"schema mismatch: {ds.schema} vs {schema}")
    return Dataset(
        features=np.ascontiguousarray(np.concatenate([ds.features for ds in datasets])),
        labels=np.concatenate([ds.labels for ds in datasets]),
        attack_types=tuple(t for ds in datasets for t in ds.attack_types),
        schema=schema,
        provenance="+".join(ds.provenance for ds in datasets),
    )


# --- sampling protocol ------------------------------------------------------


def balance_by_type(ds: Dataset, per_type: int, seed: int) -> Dataset:
    """Uniformly sample up to per_type records of each attack type, without replacement.

    Selected records keep their original relative order; the draw is
    deterministic for a given seed.
    """
    if per_type < 1:
        raise ValueError(f"per_type must be >= 1, got {per_type}")
    rng = np.random.default_rng(seed)
    by_type = {}
    for i, t in enumerate(ds.attack_types):
        by_type.setdefault(t, []).append(i)
    chosen = []
    for t in sorted(by_type):
        idx = np.asarray(by_type[t], dtype=np.int64)
        k = min(per_type, len(idx))
        chosen.append(rng.choice(idx, size=k, replace=False))
    keep = np.sort(np.concatenate(chosen))
    return ds.take(keep)


def split(ds: Dataset, train_fraction: float = TRAIN_FRACTION_DEFAULT, seed: int = 0):
    """Seeded shuffle then cut; train size = round(train_fraction * n)."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n = len(ds)
    n_train = int(round(train_fraction * n))
    if n_train < 1 or n_train >= n:
        raise DegenerateSplitError(
            f"split of {n} rows at fraction {train_fraction} leaves an empty side"
        )
    perm = np.random.default_rng(seed).permutation(n)
    return ds.take(perm[:n_train]), ds.take(perm[n_train:])


def holdout_filter(ds: Dataset, excluded_types) -> Dataset:
    """Drop every sample whose attack type is in excluded_types."""
    excluded = set(excluded_types)
    if not excluded:
        return ds
    keep = [i for i, t in enumerate(ds.attack_types) if t not in excluded]
    return ds.take(keep)


def assert_holdout(ds: Dataset, excluded_types) -> None:
    """Raise HoldoutViolationError if any excluded type appears in ds."""
    excluded = set(excluded_types)
    present = sorted(excluded.intersection(ds.attack_types))
    if present:
        counts = ds.type_counts()
        detail = ", ".join(f"{t}={counts[t]}" for t in present)
        raise HoldoutViolationError(f"held-out attack types present in training set: {detail}")


# --- scaling and encoding ---------------------------------------------------


@dataclass(frozen=True)
class Scaler:
    """Per-feature min-max bounds learned from a training set."""

    schema: tuple
    mins: np.ndarray
    maxs: np.ndarray


def fit_scaler(train: Dataset) -> Scaler:
    if len(train) == 0:
        raise EmptyDatasetError("cannot fit a scaler on an empty dataset")
    return Scaler(
        schema=train.schema,
        mins=train.features.min(axis=0),
        maxs=train.features.max(axis=0),
    )


def apply_scaler(scaler: Scaler, ds: Dataset) -> Dataset:
    """Map features through (x - min) / (max - min); constant features go to 0.

    Values outside the fitted range are not clamped, so validation or test
    features may fall outside [0, 1].
    """
    scaled = scale_matrix(scaler, ds.features, ds.schema)
    return Dataset(
        features=np.ascontiguousarray(scaled),
        labels=ds.labels,
        attack_types=ds.attack_types,
        schema=ds.schema,
        provenance=ds.provenance,
    )


def scale_matrix(scaler: Scaler, matrix, schema) -> np.ndarray:
    """Apply a fitted scaler to a bare feature matrix with a matching schema."""
    if tuple(schema) != scaler.schema:
        raise SchemaError("scaler schema does not match feature columns")
    span = scaler.maxs - scaler.mins
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (np.asarray(matrix, dtype=np.float64) - scaler.mins) / safe, 0.0)


def save_scaler(scaler: Scaler, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(SCALER_HEADER + "\n")
        for name, lo, hi in zip(scaler.schema, scaler.mins, scaler.maxs):
            fh.write(f"{name} {lo:.17e} {hi:.17e}\n")
        fh.write("end\n")


def load_scaler(path) -> Scaler:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise CorruptFileError(f"{path}: empty scaler file")
    if not lines[0].startswith("ddosdet-scaler"):
        raise CorruptFileError(f"{path}: not a scaler file")
    if lines[0] != SCALER_HEADER:
        raise VersionMismatchError(f"{path}: unsupported scaler version {lines[0]!r}")
    if not lines or lines[-1] != "end":
        raise CorruptFileError(f"{path}: truncated scaler file")
    names, mins, maxs = [], [], []
    for line in lines[1:-1]:
        try:
            name, lo, hi = line.split()
            mins.append(float(lo))
            maxs.append(float(hi))
        except ValueError as exc:
            raise CorruptFileError(f"{path}: bad scaler line {line!r}") from exc
        names.append(name)
    return Scaler(schema=tuple(names), mins=np.asarray(mins), maxs=np.asarray(maxs))


def encode_labels(ds: Dataset) -> np.ndarray:
    """One-hot rows: Benign -> [1, 0], Attack -> [0, 1]."""
    return onehot(ds.labels)


def onehot(labels, n_classes: int = 2) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((len(labels), n_classes), dtype=np.float64)
    out[np.arange(len(labels)), labels] = 1.0
    return out
