"""Daily multivariate time-series tensor: extraction, scaling, persistence.

The tensor is N x T x D. A day with no tweets is marked by the sentinel
value -1 across all D features, which keeps inactivity distinguishable
from an active day whose counts happen to be zero. Sentinels are excluded
from min-max statistics and pass through normalization unchanged.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from datetime import date
from pathlib import Path

import numpy as np

from .ingest import FEATURE_NAMES, DatasetManifest, UserTimeline

SENTINEL = -1.0

_MAGIC = b"BCTENS01"


@dataclass
class MtsTensor:
    values: np.ndarray          # (N, T, D) float64
    user_ids: list[str]
    feature_names: tuple[str, ...]
    day_min: date
    normalized: bool = False
    kind: str = "mts"           # mts | latent_uts | latent_vec

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise ValueError(f"tensor must be 3-D, got shape {self.values.shape}")
        if self.values.shape[0] != len(self.user_ids):
            raise ValueError("user_ids length does not match tensor rows")
        if self.values.shape[2] != len(self.feature_names):
            raise ValueError("feature_names length does not match tensor depth")

    @property
    def n_users(self) -> int:
        return self.values.shape[0]

    @property
    def n_days(self) -> int:
        return self.values.shape[1]

    @property
    def n_features(self) -> int:
        return self.values.shape[2]

    def sentinel_mask(self) -> np.ndarray:
        """Boolean (N, T) mask of inactive days (all features == -1)."""
        return np.all(self.values == SENTINEL, axis=2)

    def select_users(self, indices) -> "MtsTensor":
        idx = list(indices)
        return MtsTensor(
            values=self.values[idx].copy(),
            user_ids=[self.user_ids[i] for i in idx],
            feature_names=self.feature_names,
            day_min=self.day_min,
            normalized=self.normalized,
            kind=self.kind,
        )

    def select_features(self, names: tuple[str, ...]) -> "MtsTensor":
        """Column subset preserving sentinel semantics (mask is per day)."""
        missing = [n for n in names if n not in self.feature_names]
        if missing:
            raise ValueError(f"unknown features {missing}")
        cols = [self.feature_names.index(n) for n in names]
        return MtsTensor(
            values=self.values[:, :, cols].copy(),
            user_ids=list(self.user_ids),
            feature_names=tuple(names),
            day_min=self.day_min,
            normalized=self.normalized,
            kind=self.kind,
        )


@dataclass
class NormalizationParams:
    """Per-feature min/max over the non-sentinel entries of a raw tensor."""

    feature_names: tuple[str, ...]
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        self.mins = np.asarray(self.mins, dtype=np.float64)
        self.maxs = np.asarray(self.maxs, dtype=np.float64)
        if self.mins.shape != self.maxs.shape or self.mins.ndim != 1:
            raise ValueError("mins/maxs must be 1-D arrays of equal length")
        if len(self.feature_names) != self.mins.shape[0]:
            raise ValueError("feature_names length does not match statistics")
        if np.any(self.mins > self.maxs):
            raise ValueError("per-feature min exceeds max")

    def fingerprint(self) -> str:
        import hashlib

        payload = json.dumps(
            {
                "features": list(self.feature_names),
                "mins": [repr(x) for x in self.mins.tolist()],
                "maxs": [repr(x) for x in self.maxs.tolist()],
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "mins": self.mins.tolist(),
            "maxs": self.maxs.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationParams":
        return cls(
            feature_names=tuple(d["feature_names"]),
            mins=np.array(d["mins"], dtype=np.float64),
            maxs=np.array(d["maxs"], dtype=np.float64),
        )


def extract_mts(
    timelines: list[UserTimeline],
    manifest: DatasetManifest,
    features: tuple[str, ...] = FEATURE_NAMES,
) -> MtsTensor:
    """Aggregate per-tweet counts into the daily N x T x D tensor.

    For each user and day, the tensor holds the sum of the chosen counts
    over that day's tweets; days without tweets get the -1 sentinel in
    every feature. Rows follow the manifest's user order.
    """
    if not features:
        raise ValueError("features must be a non-empty subset of the six count features")
    bad = [f for f in features if f not in FEATURE_NAMES]
    if bad:
        raise ValueError(f"unknown features {bad}; valid: {list(FEATURE_NAMES)}")
    by_user = {tl.user_id: tl for tl in timelines}
    missing = [u for u in manifest.user_ids if u not in by_user]
    if missing:
        raise ValueError(f"manifest users without timelines: {missing[:5]}")
    n, t, d = len(manifest.user_ids), manifest.num_days, len(features)
    values = np.full((n, t, d), SENTINEL, dtype=np.float64)
    col = {name: j for j, name in enumerate(features)}
    for i, uid in enumerate(manifest.user_ids):
        for rec in by_user[uid].tweets:
            day_idx = (rec.day() - manifest.day_min).days
            if day_idx < 0 or day_idx >= t:
                raise ValueError(
                    f"tweet of user {uid} on {rec.day()} outside manifest range "
                    f"[{manifest.day_min}, {manifest.day_max}]"
                )
            row = values[i, day_idx]
            if row[0] == SENTINEL and np.all(row == SENTINEL):
                row[:] = 0.0
            for name, count in zip(FEATURE_NAMES, rec.counts()):
                if name in col:
                    row[col[name]] += count
    return MtsTensor(
        values=values,
        user_ids=list(manifest.user_ids),
        feature_names=tuple(features),
        day_min=manifest.day_min,
    )


def minmax_normalize(mts: MtsTensor) -> tuple[MtsTensor, NormalizationParams]:
    """Min-max scale each feature to [0, 1] over its non-sentinel entries.

    Sentinel rows pass through unchanged; constant features map to 0. A
    feature that is sentinel everywhere gets min = max = 0 (it has no
    values to map).
    """
    if mts.normalized:
        raise ValueError("tensor is already normalized")
    active = ~mts.sentinel_mask()
    d = mts.n_features
    mins = np.zeros(d)
    maxs = np.zeros(d)
    for j in range(d):
        col = mts.values[:, :, j][active]
        if col.size:
            mins[j] = col.min()
            maxs[j] = col.max()
    params = NormalizationParams(feature_names=mts.feature_names, mins=mins, maxs=maxs)
    return apply_normalization(mts, params), params


def apply_normalization(mts: MtsTensor, params: NormalizationParams) -> MtsTensor:
    """Scale a raw tensor with externally supplied statistics.

    Values outside the fitted range map outside [0, 1]; no clamping. This
    is how a held-out class gets encoded with training-set statistics.
    """
    if mts.normalized:
        raise ValueError("tensor is already normalized")
    if params.feature_names != mts.feature_names:
        raise ValueError(
            f"feature mismatch: tensor has {mts.feature_names}, params have {params.feature_names}"
        )
    active = ~mts.sentinel_mask()
    out = mts.values.copy()
    span = params.maxs - params.mins
    for j in range(mts.n_features):
        col = out[:, :, j]
        if span[j] == 0.0:
            col[active] = 0.0
        else:
            col[active] = (col[active] - params.mins[j]) / span[j]
    return MtsTensor(
        values=out,
        user_ids=list(mts.user_ids),
        feature_names=mts.feature_names,
        day_min=mts.day_min,
        normalized=True,
        kind=mts.kind,
    )


def save_tensor(mts: MtsTensor, path: str | Path) -> None:
    """Write the flat binary container: magic, JSON header, float64 body."""
    header = json.dumps(
        {
            "kind": mts.kind,
            "n": mts.n_users,
            "t": mts.n_days,
            "d": mts.n_features,
            "feature_names": list(mts.feature_names),
            "user_ids": mts.user_ids,
            "day_min": mts.day_min.isoformat(),
            "normalized": mts.normalized,
        },
        sort_keys=True,
    ).encode("utf-8")
    body = np.ascontiguousarray(mts.values, dtype="<f8").tobytes()
    with open(Path(path), "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(body)


def load_tensor(path: str | Path) -> MtsTensor:
    with open(Path(path), "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a tensor file (bad magic {magic!r})")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        n, t, d = header["n"], header["t"], header["d"]
        body = fh.read(n * t * d * 8)
    values = np.frombuffer(body, dtype="<f8").reshape(n, t, d).copy()
    return MtsTensor(
        values=values,
        user_ids=list(header["user_ids"]),
        feature_names=tuple(header["feature_names"]),
        day_min=date.fromisoformat(header["day_min"]),
        normalized=header["normalized"],
        kind=header["kind"],
    )


def save_normalization(params: NormalizationParams, path: str | Path) -> None:
    with open(Path(path), "w", encoding="utf-8") as fh:
        json.dump(params.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_normalization(path: str | Path) -> NormalizationParams:
    with open(Path(path), "r", encoding="utf-8") as fh:
        return NormalizationParams.from_dict(json.load(fh))
