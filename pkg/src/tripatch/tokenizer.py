"""Window normalization, patch tokenization, and the skip reordering.

A window of T timestamps over M features is cut into P = T / L non-overlapping
patches per feature. Two orderings of the resulting P*M patches matter:

* feature-major ``S``: all patches of feature 1, then feature 2, ... so the
  patch of feature j at temporal index i sits at position (j-1)*P + (i-1);
* time-major ``E``: all features' patches for temporal index 1, then index 2,
  ... so the same patch sits at (i-1)*M + (j-1).

``skip_reorder`` and ``inverse_reorder`` convert between the two by pure
permutation: the Patch objects themselves are shared, never copied.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DataValidationError, ShapeError, WindowSizeError


class Order(enum.Enum):
    FEATURE_MAJOR = "feature_major"
    TIME_MAJOR = "time_major"


@dataclass(frozen=True)
class Patch:
    """One patch: L consecutive normalized values of a single feature.

    ``feature`` and ``index`` are 1-based, matching the position algebra
    (j-1)*P + (i-1) and (i-1)*M + (j-1) used by the orderings.
    """

    feature: int
    index: int
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.values.ndim != 1:
            raise ShapeError(f"patch values must be 1-D, got shape {self.values.shape}")
        if self.feature < 1 or self.index < 1:
            raise ContractError("patch feature and index are 1-based")


@dataclass
class TokenSeries:
    patches: list[Patch]
    order: Order
    n_features: int
    patches_per_feature: int

    def __post_init__(self):
        if len(self.patches) != self.n_features * self.patches_per_feature:
            raise ShapeError(
                f"token series needs M*P = {self.n_features * self.patches_per_feature} "
                f"patches, got {len(self.patches)}"
            )

    def __len__(self) -> int:
        return len(self.patches)


@dataclass
class FeatureStats:
    """Per-feature mean/std computed on the training split."""

    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray = field(default=None)  # bool mask of zero-variance features

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ShapeError("stats mean/std must be matching 1-D vectors")
        if self.constant is None:
            self.constant = self.std == 0.0
        else:
            self.constant = np.asarray(self.constant, dtype=bool)
        if np.any(self.std < 0):
            raise DataValidationError("negative std in feature stats")

    @classmethod
    def fit(cls, values: np.ndarray) -> "FeatureStats":
        """Compute stats from a (T, M) training array."""
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise ShapeError(f"training values must be (T, M), got {values.shape}")
        return cls(mean=values.mean(axis=0), std=values.std(axis=0))

    @property
    def effective_std(self) -> np.ndarray:
        """Std with zero-variance features replaced by 1 (keeps deviations visible)."""
        return np.where(self.constant, 1.0, self.std)


@dataclass
class SeriesWindow:
    """Normalized (T, M) window plus its offset into the parent series."""

    values: np.ndarray
    start_time: int
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ShapeError(f"window values must be (T, M), got {self.values.shape}")
        if np.any(np.isnan(self.values)):
            raise DataValidationError("window contains NaN after normalization")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=bool)
            if self.labels.shape != (self.values.shape[0],):
                raise ShapeError("labels must have one entry per timestamp")


def normalize_window(
    raw: np.ndarray,
    stats: FeatureStats,
    patch_len: int,
    start_time: int = 0,
    labels: np.ndarray | None = None,
) -> SeriesWindow:
    """Z-score a raw (T, M) window by training-split stats.

    Constant training features are centered but divided by 1, so a test-time
    departure from the constant still shows up instead of dividing by zero.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2:
        raise ShapeError(f"raw window must be (T, M), got {raw.shape}")
    t_len, m = raw.shape
    if m != stats.mean.shape[0]:
        raise ShapeError(f"window has {m} features but stats describe {stats.mean.shape[0]}")
    if patch_len < 1:
        raise WindowSizeError(f"patch length must be >= 1, got {patch_len}")
    if t_len % patch_len != 0:
        raise WindowSizeError(
            f"window length {t_len} is not a multiple of patch length {patch_len}"
        )
    if np.any(np.isnan(raw)):
        raise DataValidationError("raw window contains NaN")
    normalized = (raw - stats.mean) / stats.effective_std
    return SeriesWindow(values=normalized, start_time=start_time, labels=labels)


def denormalize(values: np.ndarray, stats: FeatureStats) -> np.ndarray:
    """Algebraic inverse of :func:`normalize_window` on a (T, M) array."""
    return np.asarray(values, dtype=np.float64) * stats.effective_std + stats.mean


def patchify(window: SeriesWindow, patch_len: int) -> TokenSeries:
    """Cut a window into the feature-major token series S."""
    t_len, m = window.values.shape
    if patch_len < 1 or t_len % patch_len != 0:
        raise WindowSizeError(
            f"window length {t_len} is not a multiple of patch length {patch_len}"
        )
    p = t_len // patch_len
    patches = [
        Patch(
            feature=j,
            index=i,
            values=window.values[(i - 1) * patch_len : i * patch_len, j - 1],
        )
        for j in range(1, m + 1)
        for i in range(1, p + 1)
    ]
    return TokenSeries(patches=patches, order=Order.FEATURE_MAJOR, n_features=m, patches_per_feature=p)


def skip_reorder(series: TokenSeries) -> TokenSeries:
    """Permute feature-major S into time-major E (patches shared, not copied)."""
    if series.order is not Order.FEATURE_MAJOR:
        raise ContractError("skip_reorder expects a feature-major token series")
    m, p = series.n_features, series.patches_per_feature
    reordered = [
        series.patches[(j - 1) * p + (i - 1)]
        for i in range(1, p + 1)
        for j in range(1, m + 1)
    ]
    return TokenSeries(patches=reordered, order=Order.TIME_MAJOR, n_features=m, patches_per_feature=p)


def inverse_reorder(series: TokenSeries) -> TokenSeries:
    """Exact inverse of :func:`skip_reorder`."""
    if series.order is not Order.TIME_MAJOR:
        raise ContractError("inverse_reorder expects a time-major token series")
    m, p = series.n_features, series.patches_per_feature
    restored = [
        series.patches[(i - 1) * m + (j - 1)]
        for j in range(1, m + 1)
        for i in range(1, p + 1)
    ]
    return TokenSeries(patches=restored, order=Order.FEATURE_MAJOR, n_features=m, patches_per_feature=p)


def reassemble(series: TokenSeries) -> np.ndarray:
    """Rebuild the (T, M) window from a token series in either order."""
    ordered = series if series.order is Order.FEATURE_MAJOR else inverse_reorder(series)
    m, p = ordered.n_features, ordered.patches_per_feature
    patch_len = ordered.patches[0].values.shape[0]
    out = np.empty((p * patch_len, m), dtype=np.float64)
    for pos, patch in enumerate(ordered.patches):
        j, i = divmod(pos, p)
        if patch.feature != j + 1 or patch.index != i + 1:
            raise ContractError(
                f"patch at position {pos} claims (feature={patch.feature}, index={patch.index})"
            )
        out[i * patch_len : (i + 1) * patch_len, j] = patch.values
    return out


def feature_major_position(feature: int, index: int, patches_per_feature: int) -> int:
    """0-based position of patch (feature j, index i) in the series S."""
    return (feature - 1) * patches_per_feature + (index - 1)


def time_major_position(feature: int, index: int, n_features: int) -> int:
    """0-based position of patch (feature j, index i) in the series E."""
    return (index - 1) * n_features + (feature - 1)
