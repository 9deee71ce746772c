"""Whole-series summary statistics over encoded univariate time series.

After the encoder squeezes each user's activity to one length-T latent
series, every statistic in the catalog collapses that series to a scalar,
giving a tabular N x G matrix that hierarchical clustering handles well.
Degenerate inputs (constant series where a statistic would divide by
zero) map to 0 rather than raising.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


def _mean(x):
    return float(np.mean(x))


def _std(x):
    return float(np.std(x))


def _variance(x):
    return float(np.var(x))


def _skewness(x):
    mu = np.mean(x)
    sigma = np.std(x)
    if sigma == 0.0:
        return 0.0
    return float(np.mean((x - mu) ** 3) / sigma**3)


def _kurtosis(x):
    """Excess kurtosis (population moments), 0 for constant series."""
    mu = np.mean(x)
    sigma = np.std(x)
    if sigma == 0.0:
        return 0.0
    return float(np.mean((x - mu) ** 4) / sigma**4 - 3.0)


def _minimum(x):
    return float(np.min(x))


def _maximum(x):
    return float(np.max(x))


def _median(x):
    return float(np.median(x))


def _abs_energy(x):
    return float(np.sum(x * x))


def _mean_abs_change(x):
    return float(np.mean(np.abs(np.diff(x))))


def _mean_change(x):
    return float(np.mean(np.diff(x)))


def _count_above_mean(x):
    return float(np.sum(x > np.mean(x)))


def _count_below_mean(x):
    return float(np.sum(x < np.mean(x)))


def _mean_crossings(x):
    centered = x - np.mean(x)
    return float(np.sum(centered[:-1] * centered[1:] < 0.0))


def _longest_strike(mask: np.ndarray) -> float:
    best = run = 0
    for hit in mask:
        run = run + 1 if hit else 0
        best = max(best, run)
    return float(best)


def _longest_strike_above_mean(x):
    return _longest_strike(x > np.mean(x))


def _longest_strike_below_mean(x):
    return _longest_strike(x < np.mean(x))


def _autocorrelation(x, lag):
    t = len(x)
    if lag >= t:
        return 0.0
    mu = np.mean(x)
    var = np.var(x)
    if var == 0.0:
        return 0.0
    return float(np.sum((x[: t - lag] - mu) * (x[lag:] - mu)) / ((t - lag) * var))


_CATALOG = {
    "mean": _mean,
    "std": _std,
    "variance": _variance,
    "skewness": _skewness,
    "kurtosis": _kurtosis,
    "min": _minimum,
    "max": _maximum,
    "median": _median,
    "abs_energy": _abs_energy,
    "mean_abs_change": _mean_abs_change,
    "mean_change": _mean_change,
    "count_above_mean": _count_above_mean,
    "count_below_mean": _count_below_mean,
    "mean_crossings": _mean_crossings,
    "longest_strike_above_mean": _longest_strike_above_mean,
    "longest_strike_below_mean": _longest_strike_below_mean,
    "autocorr_lag1": lambda x: _autocorrelation(x, 1),
    "autocorr_lag7": lambda x: _autocorrelation(x, 7),
    "autocorr_lag30": lambda x: _autocorrelation(x, 30),
}

DEFAULT_CATALOG = tuple(_CATALOG)


@dataclass
class GlobalFeatureVector:
    """Per-user summary matrix (N, len(column_names)) plus naming."""

    values: np.ndarray
    user_ids: tuple[str, ...]
    column_names: tuple[str, ...]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"values must be 2-D, got shape {self.values.shape}")
        if self.values.shape != (len(self.user_ids), len(self.column_names)):
            raise ValueError(
                f"values shape {self.values.shape} != "
                f"({len(self.user_ids)}, {len(self.column_names)})"
            )

    @property
    def n_users(self) -> int:
        return self.values.shape[0]


def extract_global_features(
    latent: np.ndarray,
    user_ids: tuple[str, ...] | None = None,
    catalog: tuple[str, ...] = DEFAULT_CATALOG,
) -> GlobalFeatureVector:
    """Apply every catalog statistic to each user's latent series.

    latent is the width-1 encoder output, shaped (N, T, 1) or (N, T).
    Needs T >= 2 so changes and autocorrelations are defined. Columns
    follow catalog order.
    """
    series = np.asarray(latent, dtype=np.float64)
    if series.ndim == 3:
        if series.shape[2] != 1:
            raise ValueError(
                f"expected a width-1 latent series, got depth {series.shape[2]}"
            )
        series = series[:, :, 0]
    if series.ndim != 2:
        raise ValueError(f"latent must be (N, T) or (N, T, 1), got shape {latent.shape}")
    n, t = series.shape
    if t < 2:
        raise ValueError(f"global features need at least 2 time steps, got {t}")
    if not catalog:
        raise ValueError("catalog must not be empty")
    unknown = [name for name in catalog if name not in _CATALOG]
    if unknown:
        raise ValueError(f"unknown statistics: {unknown}")
    if user_ids is None:
        user_ids = tuple(str(i) for i in range(n))
    if len(user_ids) != n:
        raise ValueError(f"user_ids length {len(user_ids)} != {n} rows")
    funcs = [_CATALOG[name] for name in catalog]
    out = np.empty((n, len(funcs)))
    for u in range(n):
        row = series[u]
        for col, fn in enumerate(funcs):
            out[u, col] = fn(row)
    return GlobalFeatureVector(values=out, user_ids=tuple(user_ids), column_names=tuple(catalog))


def zscore_standardize(features: GlobalFeatureVector) -> GlobalFeatureVector:
    """Column-wise (x - mean) / std with population std; constant columns
    become all zero instead of dividing by zero."""
    vals = features.values
    mu = vals.mean(axis=0)
    sigma = vals.std(axis=0)
    out = np.zeros_like(vals)
    nonconst = sigma > 0.0
    out[:, nonconst] = (vals[:, nonconst] - mu[nonconst]) / sigma[nonconst]
    return GlobalFeatureVector(
        values=out, user_ids=features.user_ids, column_names=features.column_names
    )


def concat_features(globals_: GlobalFeatureVector, vec_latent: np.ndarray,
                    latent_prefix: str = "latent") -> GlobalFeatureVector:
    """Column-concatenate global statistics with a latent matrix (N, L),
    statistics first. Row counts must agree."""
    vec_latent = np.asarray(vec_latent, dtype=np.float64)
    if vec_latent.ndim != 2:
        raise ValueError(f"vec latent must be 2-D (N, L), got shape {vec_latent.shape}")
    if vec_latent.shape[0] != globals_.n_users:
        raise ValueError(
            f"row mismatch: {globals_.n_users} users vs {vec_latent.shape[0]} latent rows"
        )
    names = globals_.column_names + tuple(
        f"{latent_prefix}.{j}" for j in range(vec_latent.shape[1])
    )
    return GlobalFeatureVector(
        values=np.hstack([globals_.values, vec_latent]),
        user_ids=globals_.user_ids,
        column_names=names,
    )


def save_features_csv(features: GlobalFeatureVector, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("user_id",) + features.column_names)
        for uid, row in zip(features.user_ids, features.values):
            writer.writerow([uid] + [repr(float(v)) for v in row])


def load_features_csv(path) -> GlobalFeatureVector:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "user_id":
            raise ValueError(f"{path}: expected a user_id-first header")
        columns = tuple(header[1:])
        user_ids = []
        rows = []
        for rec in reader:
            user_ids.append(rec[0])
            rows.append([float(v) for v in rec[1:]])
    return GlobalFeatureVector(
        values=np.asarray(rows, dtype=np.float64).reshape(len(user_ids), len(columns)),
        user_ids=tuple(user_ids),
        column_names=columns,
    )
