"""On-disk formats and the stratified train/validation/test split.

All artifacts are text. Floats are written with ``repr`` so that a value read
back is bit-identical to the one written.
"""

from __future__ import annotations

import csv
import io
import json
import os
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from dropmat.errors import (
    ConcurrentWriteError,
    FormatError,
    InvalidDatasetError,
    SchemaError,
    VersionMismatchError,
)
from dropmat.features import FEATURE_NAMES, N_FEATURES
from dropmat.mlp import N_CLASSES, MlpModel
from dropmat.signal import AccelTrace

MANIFEST_VERSION = 1
MODEL_VERSION = 1
TRACE_HEADER = ("t", "ax", "ay", "az")
FEATURE_HEADER = ("trace_id", "label", *FEATURE_NAMES)
SPLITS = ("train", "val", "test")
# tenths of each class assigned to train, val, test
SPLIT_RATIO = (7, 1, 2)
MIN_PER_CLASS = 10


def _fmt(x: float) -> str:
    return repr(float(x))


@contextmanager
def exclusive_write(path: str | Path):
    """Write ``path`` atomically; a second writer racing on the same path fails.

    Yields a text stream. The data lands in ``path`` only if the block exits
    without error.
    """
    path = Path(path)
    lock = path.with_name(path.name + ".lock")
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConcurrentWriteError(f"{path} is being written by another writer") from None
    os.close(fd)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "w", newline="") as fh:
            yield fh
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()
        lock.unlink()


# -- traces ---------------------------------------------------------------


def write_trace_csv(trace: AccelTrace, path: str | Path) -> None:
    with exclusive_write(path) as fh:
        fh.write(",".join(TRACE_HEADER) + "\n")
        for t, (ax, ay, az) in zip(trace.times, trace.samples):
            fh.write(f"{_fmt(t)},{_fmt(ax)},{_fmt(ay)},{_fmt(az)}\n")


def read_trace_csv(path: str | Path) -> AccelTrace:
    """Load a ``t,ax,ay,az`` CSV; the time column must advance at a fixed step."""
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise FormatError(f"trace file not found: {path}") from None
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(c.strip() for c in rows[0]) != TRACE_HEADER:
        raise SchemaError(f"{path}: header must be {','.join(TRACE_HEADER)}")
    body = [r for r in rows[1:] if r]
    if len(body) < 2:
        raise FormatError(f"{path}: at least two samples are required")
    try:
        data = np.array([[float(v) for v in r] for r in body])
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric value ({exc})") from None
    if data.shape[1] != 4:
        raise FormatError(f"{path}: every row needs 4 columns")
    if not np.all(np.isfinite(data)):
        raise FormatError(f"{path}: non-finite values")
    t = data[:, 0]
    dt = np.diff(t)
    step = (t[-1] - t[0]) / (len(t) - 1)
    if step <= 0 or not np.allclose(dt, step, rtol=1e-6, atol=1e-9):
        raise FormatError(f"{path}: time column is not strictly increasing at a fixed step")
    rate = round(1.0 / step, 6)
    return AccelTrace(rate, data[:, 1:], start_time=float(t[0]))


# -- manifests ------------------------------------------------------------


@dataclass
class ManifestRecord:
    trace_id: str
    file: str
    label: int
    height_m: float | None = None
    pose: str | None = None
    seed: int | None = None
    ground_truth: dict | None = None
    split: str | None = None


@dataclass
class DatasetManifest:
    records: list[ManifestRecord] = field(default_factory=list)
    root: Path | None = None

    def __post_init__(self) -> None:
        ids = [r.trace_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise InvalidDatasetError("trace ids in a manifest must be unique")
        for r in self.records:
            if not 0 <= r.label < N_CLASSES:
                raise InvalidDatasetError(f"{r.trace_id}: label {r.label} outside 0..{N_CLASSES - 1}")
            if r.split is not None and r.split not in SPLITS:
                raise InvalidDatasetError(f"{r.trace_id}: unknown split tag {r.split!r}")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.records], dtype=np.int64)

    def path_of(self, record: ManifestRecord) -> Path:
        p = Path(record.file)
        return p if p.is_absolute() or self.root is None else self.root / p


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    records = sorted(manifest.records, key=lambda r: r.trace_id)
    doc = {"format_version": MANIFEST_VERSION, "records": [asdict(r) for r in records]}
    with exclusive_write(path) as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_manifest(path: str | Path, check_files: bool = True) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise FormatError(f"manifest not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict) or "records" not in doc:
        raise SchemaError(f"{path}: manifest needs a 'records' list")
    if doc.get("format_version") != MANIFEST_VERSION:
        raise VersionMismatchError(
            f"{path}: manifest version {doc.get('format_version')!r}, expected {MANIFEST_VERSION}"
        )
    try:
        records = [ManifestRecord(**r) for r in doc["records"]]
    except TypeError as exc:
        raise SchemaError(f"{path}: malformed record ({exc})") from None
    manifest = DatasetManifest(records, root=path.parent)
    if check_files:
        missing = [str(manifest.path_of(r)) for r in records if not manifest.path_of(r).is_file()]
        if missing:
            raise FormatError("manifest references missing trace files: " + ", ".join(missing))
    return manifest


def load_traces(manifest: DatasetManifest) -> dict[str, AccelTrace]:
    return {r.trace_id: read_trace_csv(manifest.path_of(r)) for r in manifest.records}


# -- feature tables -------------------------------------------------------


@dataclass(eq=False)
class FeatureTable:
    trace_ids: list[str]
    labels: np.ndarray
    features: np.ndarray

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        self.features = np.asarray(self.features, dtype=float).reshape(-1, N_FEATURES)
        if not (len(self.trace_ids) == self.labels.shape[0] == self.features.shape[0]):
            raise InvalidDatasetError("trace ids, labels and feature rows must align")

    def __len__(self) -> int:
        return len(self.trace_ids)

    def subset(self, mask) -> FeatureTable:
        idx = np.flatnonzero(mask) if np.asarray(mask).dtype == bool else np.asarray(mask)
        return FeatureTable([self.trace_ids[i] for i in idx], self.labels[idx], self.features[idx])


def save_features(table: FeatureTable, path: str | Path) -> None:
    order = sorted(range(len(table)), key=lambda i: table.trace_ids[i])
    with exclusive_write(path) as fh:
        fh.write(",".join(FEATURE_HEADER) + "\n")
        for i in order:
            vals = ",".join(_fmt(v) for v in table.features[i])
            fh.write(f"{table.trace_ids[i]},{int(table.labels[i])},{vals}\n")


def load_features(path: str | Path) -> FeatureTable:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise FormatError(f"feature table not found: {path}") from None
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise SchemaError(f"{path}: empty feature table")
    header = [c.strip() for c in rows[0]]
    missing = [c for c in FEATURE_HEADER if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
    extra = [c for c in header if c not in FEATURE_HEADER]
    if extra:
        raise SchemaError(f"{path}: unexpected column(s) {', '.join(extra)}")
    cols = [header.index(c) for c in FEATURE_HEADER]
    ids, labels, feats = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise FormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            ids.append(row[cols[0]])
            labels.append(int(row[cols[1]]))
            feats.append([float(row[c]) for c in cols[2:]])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
    table = FeatureTable(ids, np.array(labels, dtype=np.int64), np.array(feats).reshape(-1, N_FEATURES))
    if np.any((table.labels < 0) | (table.labels >= N_CLASSES)):
        raise InvalidDatasetError(f"{path}: labels must lie in 0..{N_CLASSES - 1}")
    if len(set(ids)) != len(ids):
        raise InvalidDatasetError(f"{path}: duplicate trace ids")
    return table


# -- models ---------------------------------------------------------------


def model_to_dict(model: MlpModel, metadata: dict | None = None) -> dict:
    doc = {
        "format_version": MODEL_VERSION,
        "layer_dims": list(model.layer_dims),
        "activation": model.activation,
        "norm_mean": model.norm_mean.tolist(),
        "norm_std": model.norm_std.tolist(),
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }
    if metadata:
        doc["metadata"] = metadata
    return doc


def save_model(model: MlpModel, path: str | Path, metadata: dict | None = None) -> None:
    with exclusive_write(path) as fh:
        json.dump(model_to_dict(model, metadata), fh)
        fh.write("\n")


def load_model_with_metadata(path: str | Path) -> tuple[MlpModel, dict]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise FormatError(f"model file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: model must be a JSON object")
    if doc.get("format_version") != MODEL_VERSION:
        raise VersionMismatchError(
            f"{path}: model version {doc.get('format_version')!r}, expected {MODEL_VERSION}"
        )
    required = ("layer_dims", "activation", "norm_mean", "norm_std", "weights", "biases")
    missing = [k for k in required if k not in doc]
    if missing:
        raise SchemaError(f"{path}: model is missing {', '.join(missing)}")
    try:
        model = MlpModel(
            doc["layer_dims"],
            [np.array(w, dtype=float) for w in doc["weights"]],
            [np.array(b, dtype=float) for b in doc["biases"]],
            np.array(doc["norm_mean"], dtype=float),
            np.array(doc["norm_std"], dtype=float),
            doc["activation"],
        )
    except (ValueError, TypeError) as exc:
        raise FormatError(f"{path}: invalid model parameters ({exc})") from None
    return model, doc.get("metadata", {})


def load_model(path: str | Path) -> MlpModel:
    return load_model_with_metadata(path)[0]


# -- splitting ------------------------------------------------------------


def _apportion(total: int, weights: np.ndarray) -> np.ndarray:
    """Integer shares of ``total`` proportional to ``weights`` (largest remainder, ties to lower index)."""
    exact = total * weights / weights.sum()
    base = np.floor(exact).astype(np.int64)
    short = total - int(base.sum())
    order = sorted(range(len(weights)), key=lambda i: (-(exact[i] - base[i]), i))
    for i in order[:short]:
        base[i] += 1
    return base


def split_labels(labels, seed: int, counts: tuple[int, int, int] | None = None) -> np.ndarray:
    """Assign each record a split tag, stratified by label.

    Without ``counts`` each class is split 70/10/20 with validation and test
    sizes rounded down, so rounding remainders go to training. With explicit
    ``(train, val, test)`` counts, which must sum to the number of records,
    each split's total is shared among classes in proportion to class size.
    """
    labels = np.asarray(labels, dtype=np.int64)
    classes, sizes = np.unique(labels, return_counts=True)
    if classes.size == 0:
        raise InvalidDatasetError("cannot split an empty dataset")
    small = [int(c) for c, s in zip(classes, sizes) if s < MIN_PER_CLASS]
    if small:
        raise InvalidDatasetError(
            f"classes {small} have fewer than {MIN_PER_CLASS} records; cannot split 7:1:2"
        )
    if counts is None:
        per_class = []
        for s in sizes:
            n_val = int(s) * SPLIT_RATIO[1] // 10
            n_test = int(s) * SPLIT_RATIO[2] // 10
            per_class.append((s - n_val - n_test, n_val, n_test))
        per_class = np.array(per_class, dtype=np.int64)
    else:
        counts = tuple(int(c) for c in counts)
        if len(counts) != 3 or any(c < 0 for c in counts):
            raise InvalidDatasetError("counts must be three non-negative integers")
        if sum(counts) != labels.size:
            raise InvalidDatasetError(
                f"counts {counts} sum to {sum(counts)} but the dataset has {labels.size} records"
            )
        val = _apportion(counts[1], sizes.astype(float))
        test = _apportion(counts[2], sizes.astype(float))
        train = sizes - val - test
        if np.any(train < 0):
            raise InvalidDatasetError(f"counts {counts} cannot be met within every class")
        per_class = np.stack([train, val, test], axis=1)

    tags = np.empty(labels.size, dtype=object)
    for k, c in enumerate(classes):
        rng = np.random.default_rng([int(seed), int(c)])
        idx = rng.permutation(np.flatnonzero(labels == c))
        n_tr, n_va, _ = per_class[k]
        tags[idx[:n_tr]] = "train"
        tags[idx[n_tr : n_tr + n_va]] = "val"
        tags[idx[n_tr + n_va :]] = "test"
    return tags


def split(
    manifest: DatasetManifest, seed: int, counts: tuple[int, int, int] | None = None
) -> DatasetManifest:
    """Return a copy of ``manifest`` with every record tagged train, val or test."""
    tags = split_labels(manifest.labels, seed, counts)
    records = [replace(r, split=str(t)) for r, t in zip(manifest.records, tags)]
    return DatasetManifest(records, root=manifest.root)
