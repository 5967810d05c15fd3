"""Tabular data ingestion: CSV loading, encoding, splitting, standardization.

Group convention: the sensitive column is mapped to a single binary column,
``1`` for the privileged group and ``0`` for everyone else. The target is
mapped to ``1`` for the favorable outcome and ``0`` otherwise.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Sequence

import numpy as np

from .errors import ConfigError, DataError

logger = logging.getLogger(__name__)

MISSING_MARKERS = frozenset({"", "?", "na", "n/a", "nan", "null"})


def _readonly(arr):
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DatasetConfig:
    """How to turn one CSV file into a binary-classification dataset.

    ``privileged_value`` names the raw sensitive value mapped to 1. For a
    numeric sensitive attribute such as age, ``privileged_threshold`` may be
    given instead: values strictly greater than it are privileged.
    ``keep_columns``, when set, restricts the table to those columns before
    ``drop_columns`` is applied.
    """

    csv_path: str
    target_column: str
    favorable_label: Any
    sensitive_column: str
    privileged_value: Any = None
    privileged_threshold: float | None = None
    categorical_columns: tuple[str, ...] = ()
    drop_columns: tuple[str, ...] = ()
    keep_columns: tuple[str, ...] | None = None
    split_fraction: float = 0.8
    seed: int = 42

    def __post_init__(self):
        for name in ("categorical_columns", "drop_columns"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.keep_columns is not None:
            object.__setattr__(self, "keep_columns", tuple(self.keep_columns))
        self.validate()

    def validate(self):
        if self.target_column == self.sensitive_column:
            raise ConfigError("target_column and sensitive_column must differ")
        for col in (self.target_column, self.sensitive_column):
            if col in self.drop_columns:
                raise ConfigError(f"drop_columns may not include {col!r}")
            if self.keep_columns is not None and col not in self.keep_columns:
                raise ConfigError(f"keep_columns must include {col!r}")
        if (self.privileged_value is None) == (self.privileged_threshold is None):
            raise ConfigError(
                "exactly one of privileged_value and privileged_threshold must be set"
            )
        if not 0.0 < float(self.split_fraction) < 1.0:
            raise ConfigError(f"split_fraction must lie in (0, 1), got {self.split_fraction}")
        if int(self.seed) < 0:
            raise ConfigError("seed must be a non-negative integer")

    @classmethod
    def from_dict(cls, doc: dict, base_dir: str | None = None) -> "DatasetConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown dataset config keys: {sorted(unknown)}")
        try:
            cfg = dict(doc)
            path = cfg["csv_path"]
            if base_dir is not None and not os.path.isabs(path):
                cfg["csv_path"] = os.path.normpath(os.path.join(base_dir, path))
            return cls(**cfg)
        except KeyError as exc:
            raise ConfigError(f"dataset config is missing {exc.args[0]!r}") from None
        except TypeError as exc:
            raise ConfigError(f"bad dataset config: {exc}") from None

    @classmethod
    def from_json(cls, path: str) -> "DatasetConfig":
        """Read a config file. A relative ``csv_path`` resolves against the file's directory."""
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"config {path} must be a JSON object")
        return cls.from_dict(doc, base_dir=os.path.dirname(os.path.abspath(path)))

    def to_dict(self) -> dict:
        doc = asdict(self)
        for key in ("categorical_columns", "drop_columns", "keep_columns"):
            if doc[key] is not None:
                doc[key] = list(doc[key])
        return doc


@dataclass(frozen=True)
class RawTable:
    """Parsed CSV cells (strings) after column selection and missing-row removal."""

    header: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]
    dropped_missing: int = 0

    def column(self, name: str) -> list[str]:
        j = self.header.index(name)
        return [row[j] for row in self.rows]


@dataclass(frozen=True)
class Encoding:
    """What is needed to map encoded values back to raw ones."""

    target_labels: tuple[str, str]  # (unfavorable, favorable)
    sensitive_labels: tuple[str, str]  # (unprivileged, privileged)
    categorical_levels: dict = field(default_factory=dict)
    columns: tuple[str, ...] = ()  # original column order, target included


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    feature_names: tuple[str, ...]
    target: np.ndarray
    sensitive: np.ndarray
    weights: np.ndarray
    sensitive_index: int
    encoding: Encoding | None = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        n, m = X.shape
        y = np.asarray(self.target).astype(np.int64)
        a = np.asarray(self.sensitive).astype(np.int64)
        w = np.asarray(self.weights, dtype=float)
        names = tuple(self.feature_names)
        if len(names) != m:
            raise DataError(f"{len(names)} feature names for {m} columns")
        if len(set(names)) != m:
            raise DataError("duplicate feature names")
        if y.shape != (n,) or a.shape != (n,) or w.shape != (n,):
            raise DataError("target, sensitive and weights must have one entry per row")
        if not set(np.unique(y)) <= {0, 1} or not set(np.unique(a)) <= {0, 1}:
            raise DataError("target and sensitive must be binary {0,1}")
        if n and not np.all(w > 0):
            raise DataError("weights must be strictly positive")
        if not 0 <= self.sensitive_index < m:
            raise DataError("sensitive_index out of range")
        object.__setattr__(self, "features", _readonly(X))
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "target", _readonly(y))
        object.__setattr__(self, "sensitive", _readonly(a))
        object.__setattr__(self, "weights", _readonly(w))

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def sensitive_name(self) -> str:
        return self.feature_names[self.sensitive_index]

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return replace(
            self,
            features=self.features[idx],
            target=self.target[idx],
            sensitive=self.sensitive[idx],
            weights=self.weights[idx],
        )

    def with_features(self, features) -> "Dataset":
        features = np.asarray(features, dtype=float)
        if features.shape != self.features.shape:
            raise DataError("replacement features must keep the matrix shape")
        return replace(self, features=features)

    def with_weights(self, weights) -> "Dataset":
        return replace(self, weights=np.asarray(weights, dtype=float))

    def group_counts(self) -> dict[str, int]:
        """Row counts per (sensitive, target) cell, keyed ``"a=<a>,y=<y>"``."""
        return {
            f"a={a},y={y}": int(np.sum((self.sensitive == a) & (self.target == y)))
            for a in (0, 1)
            for y in (0, 1)
        }


def _matches(raw: str, wanted) -> bool:
    raw = raw.strip()
    if raw == str(wanted).strip():
        return True
    try:
        return float(raw) == float(wanted)
    except (TypeError, ValueError):
        return False


def load_dataset(config: DatasetConfig) -> RawTable:
    """Read the configured CSV, apply column selection and drop incomplete rows."""
    path = config.csv_path
    if not os.path.isfile(path):
        raise DataError(f"data file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty; a header row is required") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}:{lineno}: expected {len(header)} cells, found {len(row)}"
                )
            rows.append(row)

    configured = {config.target_column, config.sensitive_column, *config.categorical_columns}
    configured |= set(config.drop_columns)
    if config.keep_columns is not None:
        configured |= set(config.keep_columns)
    missing = sorted(configured - set(header))
    if missing:
        raise DataError(f"columns not in CSV header: {missing}")
    if len(set(header)) != len(header):
        raise DataError(f"duplicate column names in {path}")

    keep = [
        j
        for j, name in enumerate(header)
        if (config.keep_columns is None or name in config.keep_columns)
        and name not in config.drop_columns
    ]
    out_header = tuple(header[j] for j in keep)
    kept_rows = []
    dropped = 0
    for row in rows:
        cells = tuple(row[j].strip() for j in keep)
        if any(c.lower() in MISSING_MARKERS for c in cells):
            dropped += 1
            continue
        kept_rows.append(cells)
    if dropped:
        logger.info("dropped %d rows with missing values from %s", dropped, path)
    return RawTable(out_header, tuple(kept_rows), dropped)


def encode(table: RawTable, config: DatasetConfig) -> Dataset:
    """One-hot encode categoricals and map target/sensitive to {0,1}."""
    if not table.rows:
        raise DataError("no rows left to encode")
    missing = [
        c
        for c in (config.target_column, config.sensitive_column, *config.categorical_columns)
        if c not in table.header and c not in config.drop_columns
    ]
    if missing:
        raise DataError(f"columns not in table: {missing}")

    raw_target = table.column(config.target_column)
    levels = sorted(set(raw_target))
    if len(levels) > 2:
        raise DataError(
            f"target {config.target_column!r} has {len(levels)} distinct values; only binary targets are supported"
        )
    target = np.array([1 if _matches(v, config.favorable_label) else 0 for v in raw_target])
    if not target.any():
        raise DataError(
            f"favorable_label {config.favorable_label!r} never occurs in {config.target_column!r}"
        )
    unfavorable = next((v for v in levels if not _matches(v, config.favorable_label)), "0")
    favorable = next(v for v in levels if _matches(v, config.favorable_label))

    raw_sens = table.column(config.sensitive_column)
    if config.privileged_threshold is not None:
        try:
            sensitive = np.array(
                [1 if float(v) > config.privileged_threshold else 0 for v in raw_sens]
            )
        except ValueError:
            raise DataError(
                f"sensitive column {config.sensitive_column!r} must be numeric with privileged_threshold"
            ) from None
        sens_labels = (
            f"<={config.privileged_threshold:g}",
            f">{config.privileged_threshold:g}",
        )
    else:
        sensitive = np.array([1 if _matches(v, config.privileged_value) else 0 for v in raw_sens])
        if not sensitive.any():
            raise DataError(
                f"privileged_value {config.privileged_value!r} never occurs in {config.sensitive_column!r}"
            )
        others = sorted({v for v, s in zip(raw_sens, sensitive) if not s})
        unpriv = others[0] if len(others) == 1 else f"not {config.privileged_value}"
        sens_labels = (unpriv, str(config.privileged_value))

    categorical = set(config.categorical_columns) - {config.sensitive_column}
    names: list[str] = []
    blocks: list[np.ndarray] = []
    cat_levels = {}
    sensitive_index = -1
    for name in table.header:
        if name == config.target_column:
            continue
        if name == config.sensitive_column:
            sensitive_index = len(names)
            names.append(name)
            blocks.append(sensitive[:, None].astype(float))
            continue
        values = table.column(name)
        if name in categorical:
            cats = sorted(set(values))
            cat_levels[name] = tuple(cats)
            lookup = {c: i for i, c in enumerate(cats)}
            onehot = np.zeros((len(values), len(cats)))
            onehot[np.arange(len(values)), [lookup[v] for v in values]] = 1.0
            names.extend(f"{name}={c}" for c in cats)
            blocks.append(onehot)
        else:
            try:
                col = np.array([float(v) for v in values])
            except ValueError as exc:
                raise DataError(
                    f"non-numeric value in column {name!r} ({exc}); list it in categorical_columns"
                ) from None
            if not np.all(np.isfinite(col)):
                raise DataError(f"non-finite value in column {name!r}")
            names.append(name)
            blocks.append(col[:, None])

    features = np.hstack(blocks)
    return Dataset(
        features=features,
        feature_names=tuple(names),
        target=target,
        sensitive=sensitive,
        weights=np.ones(len(target)),
        sensitive_index=sensitive_index,
        encoding=Encoding(
            target_labels=(unfavorable, favorable),
            sensitive_labels=sens_labels,
            categorical_levels=cat_levels,
            columns=table.header,
        ),
    )


def decode(dataset: Dataset, config: DatasetConfig) -> RawTable:
    """Map an encoded dataset back to raw-looking cells.

    Categoricals are recovered from their one-hot block, numerics are
    printed with ``repr``. Target and sensitive cells come back as their
    group labels; a sensitive attribute with several unprivileged raw values
    (or a threshold rule) decodes to a descriptive label instead.
    """
    enc = dataset.encoding
    if enc is None:
        raise DataError("dataset carries no encoding information")
    index = {name: j for j, name in enumerate(dataset.feature_names)}
    columns = []
    for name in enc.columns:
        if name == config.target_column:
            columns.append([enc.target_labels[int(v)] for v in dataset.target])
        elif name == config.sensitive_column:
            columns.append([enc.sensitive_labels[int(v)] for v in dataset.sensitive])
        elif name in enc.categorical_levels:
            cats = enc.categorical_levels[name]
            block = dataset.features[:, [index[f"{name}={c}"] for c in cats]]
            columns.append([cats[i] for i in np.argmax(block, axis=1)])
        else:
            columns.append([repr(float(v)) for v in dataset.features[:, index[name]]])
    rows = tuple(zip(*columns)) if columns else ()
    return RawTable(tuple(enc.columns), tuple(tuple(r) for r in rows))


def split(dataset: Dataset, split_fraction: float = 0.8, seed: int = 42) -> tuple[Dataset, Dataset]:
    """Uniform random train/test split; ``|train| = round(split_fraction * N)``."""
    if not 0.0 < split_fraction < 1.0:
        raise DataError(f"split_fraction must lie in (0, 1), got {split_fraction}")
    n = dataset.n_rows
    n_train = int(math.floor(split_fraction * n + 0.5))
    if n < 2 or n_train == 0 or n_train == n:
        raise DataError(f"{n} rows cannot be split {split_fraction:g}/{1 - split_fraction:g}")
    perm = np.random.default_rng(seed).permutation(n)
    return dataset.take(np.sort(perm[:n_train])), dataset.take(np.sort(perm[n_train:]))


@dataclass(frozen=True, eq=False)
class StandardizationParams:
    means: np.ndarray
    std_devs: np.ndarray

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "std_devs": self.std_devs.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "StandardizationParams":
        return cls(np.asarray(doc["means"], float), np.asarray(doc["std_devs"], float))


def fit_standardizer(train: Dataset | np.ndarray) -> StandardizationParams:
    """Column means and population standard deviations; zero spread becomes 1."""
    X = train.features if isinstance(train, Dataset) else np.asarray(train, dtype=float)
    if X.shape[0] == 0:
        raise DataError("cannot fit a standardizer on zero rows")
    means = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return StandardizationParams(_readonly(means), _readonly(std))


def apply_standardizer(params: StandardizationParams, dataset: Dataset | np.ndarray):
    X = dataset.features if isinstance(dataset, Dataset) else np.asarray(dataset, dtype=float)
    if X.shape[1] != params.means.shape[0]:
        raise DataError(f"standardizer fitted on {params.means.shape[0]} columns, got {X.shape[1]}")
    Z = (X - params.means) / params.std_devs
    return dataset.with_features(Z) if isinstance(dataset, Dataset) else Z


def invert_standardizer(params: StandardizationParams, Z: np.ndarray) -> np.ndarray:
    return np.asarray(Z, dtype=float) * params.std_devs + params.means


def prepare(config: DatasetConfig) -> Dataset:
    """``load_dataset`` followed by ``encode``."""
    return encode(load_dataset(config), config)


def _column_index(names: Sequence[str], name: str) -> int:
    try:
        return list(names).index(name)
    except ValueError:
        raise DataError(f"unknown feature {name!r}") from None
