"""End-to-end composition: tweets -> tensor -> latent -> clusters -> scores.

Representations
  uts       encode to one univariate series per user, cluster the series
  vec       encode to one length-L vector per user
  glob      summary statistics of the uts series (z-scored)
  glob_vec  those statistics concatenated with the vec encoding

The five named presets pair a representation with a clustering method;
everything else (features, epochs, seeds, eps) comes from PipelineConfig.
The leave-one-botnet-out harness retrains on a reduced population and
scores the full one, which is the generalization question that matters
for detecting botnets that were never seen during training.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .autoencoder import (
    AutoencoderConfig,
    AutoencoderModel,
    TrainReport,
    encode,
    train,
)
from .clustering import (
    ClusterAssignment,
    Dendrogram,
    cut_dendrogram,
    dbscan,
    distance_matrix,
    kdist_knee_eps,
    ward_agglomerative,
)
from .globalfeats import (
    DEFAULT_CATALOG,
    concat_features,
    extract_global_features,
    zscore_standardize,
)
from .ingest import GENUINE_CLASS, LabelTable, TweetRecord, build_timelines
from .labeling import (
    MetricsReport,
    assign_labels_binary,
    assign_labels_multiclass,
    prf_metrics,
)
from .mts import MtsTensor, NormalizationParams, apply_normalization, extract_mts, minmax_normalize

REPRESENTATIONS = ("uts", "vec", "glob", "glob_vec")
CLUSTER_METHODS = ("dbscan", "ward")
TASKS = ("binary", "multiclass")

PRESETS: dict[str, dict[str, str]] = {
    "UTS_DBSCAN": {"representation": "uts", "cluster_method": "dbscan"},
    "UTS_Hier": {"representation": "uts", "cluster_method": "ward"},
    "Vec_Hier": {"representation": "vec", "cluster_method": "ward"},
    "Glob_Hier": {"representation": "glob", "cluster_method": "ward"},
    "Glob_Vec_Hier": {"representation": "glob_vec", "cluster_method": "ward"},
}


@dataclass
class PipelineConfig:
    representation: str = "uts"
    cluster_method: str = "ward"
    task: str = "binary"
    features: Optional[tuple[str, ...]] = None   # None -> all tensor features
    stats_catalog: tuple[str, ...] = DEFAULT_CATALOG
    epochs: int = 250
    learning_rate: Optional[float] = None        # None -> per-variant default
    latent_dim: int = 300
    holdout_fraction: float = 0.2
    clip_norm: float = 5.0
    min_pts: int = 4
    eps: Optional[float] = None                  # None -> k-distance knee
    n_clusters: Optional[int] = None             # ward cut; None -> task default
    genuine_cluster: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.representation not in REPRESENTATIONS:
            raise ValueError(f"representation must be one of {REPRESENTATIONS}")
        if self.cluster_method not in CLUSTER_METHODS:
            raise ValueError(f"cluster_method must be one of {CLUSTER_METHODS}")
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        if self.min_pts < 2:
            raise ValueError(f"min_pts must be >= 2 so the knee heuristic has k >= 1")
        if self.features is not None:
            self.features = tuple(self.features)
        self.stats_catalog = tuple(self.stats_catalog)

    def to_dict(self) -> dict:
        return {
            "representation": self.representation,
            "cluster_method": self.cluster_method,
            "task": self.task,
            "features": list(self.features) if self.features else None,
            "stats_catalog": list(self.stats_catalog),
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "latent_dim": self.latent_dim,
            "holdout_fraction": self.holdout_fraction,
            "clip_norm": self.clip_norm,
            "min_pts": self.min_pts,
            "eps": self.eps,
            "n_clusters": self.n_clusters,
            "genuine_cluster": self.genuine_cluster,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        if d.get("features"):
            d["features"] = tuple(d["features"])
        if d.get("stats_catalog"):
            d["stats_catalog"] = tuple(d["stats_catalog"])
        return cls(**d)


def apply_preset(config: PipelineConfig, preset: str) -> PipelineConfig:
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    return replace(config, **PRESETS[preset])


def config_hash(config: PipelineConfig) -> str:
    payload = json.dumps(config.to_dict(), sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def derive_seed(seed: int, stream: int) -> int:
    """Stable child seed for an auxiliary random stream (second encoder,
    per-leg reruns) that will not collide with nearby base seeds."""
    return int(np.random.SeedSequence([seed, stream]).generate_state(1)[0])


@dataclass
class PipelineResult:
    config: PipelineConfig
    user_ids: tuple[str, ...]
    true_labels: np.ndarray
    pred_labels: np.ndarray
    assignment: ClusterAssignment
    metrics: MetricsReport
    models: dict[str, AutoencoderModel] = field(default_factory=dict)
    train_reports: dict[str, TrainReport] = field(default_factory=dict)
    latents: dict[str, np.ndarray] = field(default_factory=dict)
    points: Optional[np.ndarray] = None
    eps_used: Optional[float] = None
    dendrogram: Optional[Dendrogram] = None
    norm_params: Optional[NormalizationParams] = None


def _ae_config(config: PipelineConfig, variant: str, seed: int) -> AutoencoderConfig:
    return AutoencoderConfig(
        variant=variant,
        latent_dim=config.latent_dim,
        learning_rate=config.learning_rate,
        epochs=config.epochs,
        holdout_fraction=config.holdout_fraction,
        seed=seed,
        clip_norm=config.clip_norm,
    )


def _train_models(
    config: PipelineConfig,
    norm_tensor: MtsTensor,
    norm_params: NormalizationParams,
    seed: int,
) -> tuple[dict[str, AutoencoderModel], dict[str, TrainReport]]:
    """Train the encoder(s) a representation needs. The combined route
    trains the vec encoder from a derived seed so both models are pinned
    by the one pipeline seed."""
    models: dict[str, AutoencoderModel] = {}
    reports: dict[str, TrainReport] = {}
    if config.representation in ("uts", "glob", "glob_vec"):
        models["uts"], reports["uts"] = train(
            _ae_config(config, "uts", seed), norm_tensor, norm_params
        )
    if config.representation in ("vec", "glob_vec"):
        vec_seed = seed if config.representation == "vec" else derive_seed(seed, 1)
        models["vec"], reports["vec"] = train(
            _ae_config(config, "vec", vec_seed), norm_tensor, norm_params
        )
    return models, reports


def _make_points(
    config: PipelineConfig,
    models: dict[str, AutoencoderModel],
    norm_tensor: MtsTensor,
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Encode a normalized tensor and compose the clustering matrix."""
    latents: dict[str, np.ndarray] = {}
    n = norm_tensor.n_users
    if "uts" in models:
        latents["uts"] = encode(models["uts"], norm_tensor)
    if "vec" in models:
        latents["vec"] = encode(models["vec"], norm_tensor)
    rep = config.representation
    if rep == "uts":
        points = latents["uts"].reshape(n, -1)
    elif rep == "vec":
        points = latents["vec"]
    else:
        stats = extract_global_features(
            latents["uts"], user_ids=tuple(norm_tensor.user_ids), catalog=config.stats_catalog
        )
        stats = zscore_standardize(stats)
        if rep == "glob":
            points = stats.values
        else:
            points = concat_features(stats, latents["vec"]).values
    return points, latents


def _cluster(
    config: PipelineConfig,
    points: np.ndarray,
    user_ids: tuple[str, ...],
    n_classes: int,
) -> tuple[np.ndarray, ClusterAssignment, Optional[float], Optional[Dendrogram]]:
    dist = distance_matrix(points)
    if config.cluster_method == "dbscan":
        eps = config.eps
        if eps is None:
            eps, _curve = kdist_knee_eps(dist, config.min_pts - 1)
        assignment = dbscan(dist, eps, config.min_pts, user_ids=user_ids)
        return dist, assignment, eps, None
    dendro = ward_agglomerative(dist)
    k = config.n_clusters
    if k is None:
        k = 2 if config.task == "binary" else max(n_classes, 1)
    assignment = cut_dendrogram(dendro, k, user_ids=user_ids)
    return dist, assignment, None, dendro


def _label_and_score(
    config: PipelineConfig,
    assignment: ClusterAssignment,
    dist: np.ndarray,
    true_labels: np.ndarray,
    n_classes: int,
) -> tuple[np.ndarray, MetricsReport]:
    if config.task == "binary":
        truth = (true_labels != GENUINE_CLASS).astype(np.int64)
        pred = assign_labels_binary(
            assignment,
            dist=dist,
            genuine_cluster=config.genuine_cluster,
            polarity=config.cluster_method == "ward",
        )
        return pred, prf_metrics(truth, pred, 2)
    pred = assign_labels_multiclass(assignment, true_labels)
    return pred, prf_metrics(true_labels, pred, n_classes)


def run_pipeline_from_mts(
    mts_raw: MtsTensor,
    true_labels: np.ndarray,
    n_classes: int,
    config: PipelineConfig,
) -> PipelineResult:
    """Run detection and scoring on an already-extracted raw tensor."""
    true_labels = np.asarray(true_labels, dtype=np.int64)
    if true_labels.shape != (mts_raw.n_users,):
        raise ValueError(
            f"true labels shape {true_labels.shape} != ({mts_raw.n_users},)"
        )
    sub = mts_raw
    if config.features is not None and config.features != mts_raw.feature_names:
        sub = mts_raw.select_features(config.features)
    norm, params = minmax_normalize(sub)
    models, reports = _train_models(config, norm, params, config.seed)
    points, latents = _make_points(config, models, norm)
    user_ids = tuple(mts_raw.user_ids)
    dist, assignment, eps_used, dendro = _cluster(config, points, user_ids, n_classes)
    pred, metrics = _label_and_score(config, assignment, dist, true_labels, n_classes)
    return PipelineResult(
        config=config,
        user_ids=user_ids,
        true_labels=true_labels,
        pred_labels=pred,
        assignment=assignment,
        metrics=metrics,
        models=models,
        train_reports=reports,
        latents=latents,
        points=points,
        eps_used=eps_used,
        dendrogram=dendro,
        norm_params=params,
    )


def run_pipeline(
    records: list[TweetRecord],
    labels: LabelTable,
    config: PipelineConfig,
) -> PipelineResult:
    """Full run from raw tweet records plus ground-truth labels."""
    timelines, manifest = build_timelines(records)
    missing = [u for u in manifest.user_ids if u not in labels.labels]
    if missing:
        raise ValueError(f"{len(missing)} users lack labels, first: {missing[0]!r}")
    mts_raw = extract_mts(timelines, manifest)
    true = np.asarray([labels.labels[u] for u in manifest.user_ids], dtype=np.int64)
    return run_pipeline_from_mts(mts_raw, true, labels.num_classes, config)


@dataclass
class LoboReport:
    """Scores from retraining without one bot class at a time."""

    base_f1: float
    task: str
    entries: dict[int, dict[str, float]]  # class id -> weighted_f1, pct_change

    def to_dict(self) -> dict:
        return {
            "base_weighted_f1": self.base_f1,
            "task": self.task,
            "excluded": {
                str(cid): {
                    "weighted_f1": vals["weighted_f1"],
                    "pct_change": vals["pct_change"],
                }
                for cid, vals in sorted(self.entries.items())
            },
        }


def lobo_run(
    records: list[TweetRecord],
    labels: LabelTable,
    config: PipelineConfig,
    bot_classes: Optional[list[int]] = None,
) -> LoboReport:
    """Leave-one-botnet-out: for each bot class, retrain the encoder(s)
    without it (normalization statistics from the reduced set too), then
    encode, cluster, label and score the FULL population.

    Each leg runs from a seed derived per excluded class. Excluding a
    class with no members degenerates to the base run by construction,
    so it is reported as exactly 0 change without retraining.
    """
    if bot_classes is None:
        bot_classes = sorted(c for c in labels.supports() if c != GENUINE_CLASS)
    if len(bot_classes) < 2:
        raise ValueError(f"need at least 2 bot classes, got {bot_classes}")
    if any(c == GENUINE_CLASS for c in bot_classes):
        raise ValueError("cannot exclude the genuine class")

    timelines, manifest = build_timelines(records)
    missing = [u for u in manifest.user_ids if u not in labels.labels]
    if missing:
        raise ValueError(f"{len(missing)} users lack labels, first: {missing[0]!r}")
    mts_raw = extract_mts(timelines, manifest)
    if config.features is not None and config.features != mts_raw.feature_names:
        mts_raw = mts_raw.select_features(config.features)
    true = np.asarray([labels.labels[u] for u in manifest.user_ids], dtype=np.int64)
    n_classes = labels.num_classes

    base = run_pipeline_from_mts(mts_raw, true, n_classes, config)
    base_f1 = base.metrics.weighted_f1
    if base_f1 == 0.0:
        raise ValueError("base weighted F1 is 0; percentage changes are undefined")

    entries: dict[int, dict[str, float]] = {}
    for cid in bot_classes:
        keep = np.flatnonzero(true != cid)
        if keep.size == mts_raw.n_users:
            entries[cid] = {"weighted_f1": base_f1, "pct_change": 0.0}
            continue
        if keep.size < 2:
            raise ValueError(f"excluding class {cid} leaves fewer than 2 users")
        leg_seed = derive_seed(config.seed, cid)
        reduced = mts_raw.select_users(keep)
        norm_reduced, params_reduced = minmax_normalize(reduced)
        models, _reports = _train_models(config, norm_reduced, params_reduced, leg_seed)
        norm_full = apply_normalization(mts_raw, params_reduced)
        points, _latents = _make_points(config, models, norm_full)
        leg_config = replace(config, seed=leg_seed)
        dist, assignment, _eps, _dendro = _cluster(
            leg_config, points, tuple(mts_raw.user_ids), n_classes
        )
        _pred, metrics = _label_and_score(leg_config, assignment, dist, true, n_classes)
        f1 = metrics.weighted_f1
        entries[cid] = {
            "weighted_f1": f1,
            "pct_change": 100.0 * (f1 - base_f1) / base_f1,
        }
    return LoboReport(base_f1=base_f1, task=config.task, entries=entries)
