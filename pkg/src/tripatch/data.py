"""Dataset ingestion, manifest validation, and a synthetic benchmark generator.

Benchmark files are headerless CSV: one row per timestamp, one column per
feature; labels are a single 0/1 column aligned with the test rows. A JSON
manifest declares the expected shapes and every load is validated against it,
so silently truncated or mis-converted files fail loudly.

The synthetic generator plants two kinds of events on top of per-feature
sinusoids: confounders spike a strict subset of features and stay labeled
normal, anomalies spike every feature and are labeled 1. Detectors that judge
each feature in isolation fire on both; only cross-feature context separates
them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import (
    ConfigError,
    DataValidationError,
    ManifestViolationError,
    ParameterError,
)

_MANIFEST_KEYS = {
    "name",
    "train_path",
    "test_path",
    "label_path",
    "n_features",
    "train_rows",
    "test_rows",
    "anomaly_ratio_percent",
}


@dataclass
class DatasetManifest:
    name: str
    train_path: Path
    test_path: Path
    label_path: Path
    n_features: int
    train_rows: int
    test_rows: int
    anomaly_ratio_percent: float

    @classmethod
    def from_file(cls, path: str | Path) -> "DatasetManifest":
        path = Path(path)
        try:
            payload = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"manifest {path} is not valid JSON: {exc}") from None
        missing = _MANIFEST_KEYS - payload.keys()
        if missing:
            raise ConfigError(f"manifest {path} missing keys: {sorted(missing)}")
        unknown = payload.keys() - _MANIFEST_KEYS
        if unknown:
            raise ConfigError(f"manifest {path} has unknown keys: {sorted(unknown)}")
        base = path.parent
        return cls(
            name=str(payload["name"]),
            train_path=base / payload["train_path"],
            test_path=base / payload["test_path"],
            label_path=base / payload["label_path"],
            n_features=int(payload["n_features"]),
            train_rows=int(payload["train_rows"]),
            test_rows=int(payload["test_rows"]),
            anomaly_ratio_percent=float(payload["anomaly_ratio_percent"]),
        )


def _read_csv_matrix(path: Path, what: str) -> np.ndarray:
    if not path.exists():
        raise ManifestViolationError(f"{what} file not found: {path}")
    try:
        frame = pd.read_csv(path, header=None, dtype=np.float64)
    except (ValueError, pd.errors.ParserError) as exc:
        raise ManifestViolationError(f"{what} file {path} is not numeric CSV: {exc}") from None
    return frame.to_numpy(dtype=np.float64)


def load_dataset(manifest: DatasetManifest | str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Load and validate (train, test, labels) against the manifest."""
    if not isinstance(manifest, DatasetManifest):
        manifest = DatasetManifest.from_file(manifest)

    train = _read_csv_matrix(manifest.train_path, "train")
    test = _read_csv_matrix(manifest.test_path, "test")
    labels_raw = _read_csv_matrix(manifest.label_path, "label")

    checks = [
        ("train rows", manifest.train_rows, train.shape[0]),
        ("train features", manifest.n_features, train.shape[1]),
        ("test rows", manifest.test_rows, test.shape[0]),
        ("test features", manifest.n_features, test.shape[1]),
    ]
    for what, expected, found in checks:
        if expected != found:
            raise ManifestViolationError(
                f"{manifest.name}: {what} mismatch, expected {expected}, found {found}"
            )
    if labels_raw.ndim != 2 or labels_raw.shape[1] != 1:
        raise ManifestViolationError(
            f"{manifest.name}: label file must be a single column, found shape {labels_raw.shape}"
        )
    if labels_raw.shape[0] != manifest.test_rows:
        raise ManifestViolationError(
            f"{manifest.name}: label rows mismatch, expected {manifest.test_rows}, "
            f"found {labels_raw.shape[0]}"
        )
    labels_flat = labels_raw[:, 0]
    if not np.all(np.isin(labels_flat, (0.0, 1.0))):
        bad = np.unique(labels_flat[~np.isin(labels_flat, (0.0, 1.0))])
        raise ManifestViolationError(f"{manifest.name}: labels must be 0/1, found {bad[:5]}")
    if np.any(np.isnan(train)) or np.any(np.isnan(test)):
        raise DataValidationError(f"{manifest.name}: NaN values in series")
    return train, test, labels_flat.astype(bool)


def subsample_training(train: np.ndarray, fraction: float) -> np.ndarray:
    """Contiguous prefix of ceil(fraction * T) rows; preserves temporal structure."""
    if not 0.0 < fraction <= 1.0:
        raise ParameterError(f"fraction must be in (0, 1], got {fraction}")
    train = np.asarray(train)
    if fraction == 1.0:
        return train
    keep = math.ceil(fraction * train.shape[0])
    return train[:keep]


# -- synthetic benchmark ---------------------------------------------------------


@dataclass
class SyntheticSpec:
    """Recipe for a labeled series with confounder and anomaly spike events."""

    n_features: int = 6
    length: int = 20000
    periods: tuple[float, ...] | None = None
    confounder_rate: float = 0.02
    anomaly_rate: float = 0.01
    noise_std: float = 0.1
    spike_scale: float = 8.0
    event_len: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.n_features < 2:
            raise ParameterError("need at least 2 features for subset-vs-all events")
        if self.length < 2 * self.event_len:
            raise ParameterError(
                f"length {self.length} too short for event length {self.event_len}"
            )
        if self.event_len < 1:
            raise ParameterError("event length must be >= 1")
        for name, rate in (("confounder_rate", self.confounder_rate), ("anomaly_rate", self.anomaly_rate)):
            if rate < 0:
                raise ParameterError(f"{name} must be >= 0, got {rate}")
        if self.confounder_rate + self.anomaly_rate >= 1.0:
            raise ParameterError("event rates must sum to < 1")
        if self.noise_std < 0 or self.spike_scale <= 0:
            raise ParameterError("noise_std must be >= 0 and spike_scale > 0")
        if self.periods is None:
            # spread periods so features are correlated in family but not identical
            self.periods = tuple(24.0 + 13.0 * k for k in range(self.n_features))
        elif len(self.periods) != self.n_features:
            raise ParameterError(
                f"got {len(self.periods)} periods for {self.n_features} features"
            )


@dataclass
class LabeledSeries:
    values: np.ndarray  # (T, M)
    labels: np.ndarray  # (T,) bool
    confounder_starts: list[int] = field(default_factory=list)
    anomaly_starts: list[int] = field(default_factory=list)


def generate_synthetic(spec: SyntheticSpec) -> LabeledSeries:
    """Deterministic labeled series: sinusoids + noise + planted spike events.

    Events occupy whole non-overlapping blocks of ``event_len`` timestamps.
    Confounders lift one or two features upward; anomalies shift every
    feature with arbitrary per-feature sign, and only those blocks get
    label 1.
    """
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    t_axis = np.arange(spec.length, dtype=np.float64)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=spec.n_features)
    base = np.stack(
        [np.sin(2.0 * np.pi * t_axis / spec.periods[j] + phases[j]) for j in range(spec.n_features)],
        axis=1,
    )
    values = base + rng.normal(scale=spec.noise_std, size=base.shape)
    labels = np.zeros(spec.length, dtype=bool)

    n_blocks = spec.length // spec.event_len
    n_conf = int(round(spec.confounder_rate * spec.length / spec.event_len))
    n_anom = int(round(spec.anomaly_rate * spec.length / spec.event_len))
    if n_conf + n_anom > n_blocks:
        raise ParameterError("event rates leave no room for non-overlapping events")

    chosen = rng.choice(n_blocks, size=n_conf + n_anom, replace=False)
    conf_blocks, anom_blocks = chosen[:n_conf], chosen[n_conf:]

    conf_starts: list[int] = []
    for block in sorted(int(b) for b in conf_blocks):
        start = block * spec.event_len
        # confounders spike one or two features: they read as local events,
        # not series-wide ones, which is what makes them decoys
        subset_size = int(rng.integers(1, max(2, spec.n_features // 3 + 1)))
        subset = rng.choice(spec.n_features, size=subset_size, replace=False)
        lift = spec.spike_scale * (0.8 + 0.4 * rng.random())
        values[start : start + spec.event_len, subset] += lift
        conf_starts.append(start)

    anom_starts: list[int] = []
    for block in sorted(int(b) for b in anom_blocks):
        start = block * spec.event_len
        lift = spec.spike_scale * (0.8 + 0.4 * rng.random())
        # anomalies deviate jointly but with arbitrary per-feature direction,
        # unlike the recurring upward confounder pattern
        signs = rng.choice(np.array([-1.0, 1.0]), size=spec.n_features)
        values[start : start + spec.event_len, :] += signs * lift
        labels[start : start + spec.event_len] = True
        anom_starts.append(start)

    return LabeledSeries(
        values=values,
        labels=labels,
        confounder_starts=conf_starts,
        anomaly_starts=anom_starts,
    )
