"""Command-line orchestration of the detection pipeline.

Every stage is a subcommand writing its artifact into --outdir, so a run
can be driven stepwise (extract, train, encode, features, cluster,
evaluate) or in one shot (run-all). Settings merge with precedence
flag > config file > default; --variant-preset expands to a
representation plus clustering method before explicit flags apply.

Exit codes: 0 success, 2 usage or configuration error, 3 missing
upstream artifact, 4 invalid data, 1 unexpected failure. Logs go to
stderr; each subcommand prints a one-line summary to stdout.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .autoencoder import encode, load_model, save_model, train
from .clustering import (
    cut_dendrogram,
    dbscan,
    distance_matrix,
    kdist_knee_eps,
    load_assignment_csv,
    save_assignment_csv,
    save_dendrogram_json,
    ward_agglomerative,
)
from .globalfeats import (
    concat_features,
    extract_global_features,
    load_features_csv,
    save_features_csv,
    zscore_standardize,
)
from .ingest import (
    FEATURE_NAMES,
    GENUINE_CLASS,
    LabelTable,
    ParseError,
    build_timelines,
    load_labels,
    parse_tweets,
    write_tweets_jsonl,
)
from .labeling import (
    assign_labels_binary,
    assign_labels_multiclass,
    feature_importance,
    prf_metrics,
)
from .mts import MtsTensor, apply_normalization, extract_mts, load_tensor, minmax_normalize, save_tensor
from .pipeline import (
    PRESETS,
    PipelineConfig,
    _ae_config,
    config_hash,
    lobo_run,
    run_pipeline_from_mts,
)
from .synth import SynthConfig, generate_dataset

log = logging.getLogger("botclust")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_DATA = 4

A_MTS = "mts_raw.tensor"
A_FEATS = "global_features.csv"
A_FEATS_RAW = "global_features_raw.csv"
A_CLUSTERS = "clusters.csv"
A_DENDRO = "dendrogram.json"
A_CLUSTER_REP = "cluster_report.json"
A_METRICS = "metrics_report.json"
A_CONFUSION = "confusion.csv"
A_IMPORTANCE = "importance_report.json"
A_LOBO = "lobo_report.json"
A_TWEETS = "tweets.jsonl"
A_LABELS = "labels.csv"


def _model_name(variant: str) -> str:
    return f"model_{variant}.ckpt"


def _latent_name(variant: str) -> str:
    return f"latent_{variant}.tensor"


class ConfigError(ValueError):
    pass


class MissingArtifactError(RuntimeError):
    def __init__(self, path: Path, producer: str):
        super().__init__(
            f"missing artifact {path}; run `botclust {producer}` first"
        )
        self.path = path
        self.producer = producer


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(path, producer)
    return path


_PATH_KEYS = ("tweets", "labels", "format", "outdir")
_PIPELINE_KEYS = tuple(PipelineConfig().to_dict())


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    allowed = set(_PATH_KEYS) | set(_PIPELINE_KEYS) | {"variant_preset"}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown config keys {unknown}; allowed: {sorted(allowed)}")
    return data


def _merged(args: argparse.Namespace) -> tuple[dict, PipelineConfig]:
    """Resolve paths and pipeline settings with flag > config > default."""
    file_cfg = _load_config_file(getattr(args, "config", None))
    merged = PipelineConfig().to_dict()
    if file_cfg.get("variant_preset"):
        preset = file_cfg["variant_preset"]
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        merged.update(PRESETS[preset])
    for key in _PIPELINE_KEYS:
        if key in file_cfg:
            merged[key] = file_cfg[key]
    flag_preset = getattr(args, "variant_preset", None)
    if flag_preset:
        if flag_preset not in PRESETS:
            raise ConfigError(f"unknown preset {flag_preset!r}; choose from {sorted(PRESETS)}")
        merged.update(PRESETS[flag_preset])
    for key in _PIPELINE_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    if isinstance(merged.get("features"), str):
        merged["features"] = [f.strip() for f in merged["features"].split(",") if f.strip()]
    try:
        config = PipelineConfig.from_dict(merged)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc))
    paths = {}
    for key in _PATH_KEYS:
        paths[key] = getattr(args, key, None) or file_cfg.get(key)
    paths["outdir"] = Path(paths["outdir"] or "out")
    paths["format"] = paths["format"] or "jsonl"
    return paths, config


def _outdir(paths: dict) -> Path:
    out = paths["outdir"]
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_report(path: Path, payload: dict, config: PipelineConfig | None,
                  timing: dict | None = None) -> None:
    doc = dict(payload)
    if config is not None:
        doc["config"] = config.to_dict()
        doc["config_hash"] = config_hash(config)
        doc["seed"] = config.seed
    if timing:
        doc["timing"] = timing
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _read_inputs(paths: dict) -> tuple[list, LabelTable]:
    if not paths["tweets"]:
        raise ConfigError("no tweets file given (flag --tweets or config key 'tweets')")
    if not paths["labels"]:
        raise ConfigError("no labels file given (flag --labels or config key 'labels')")
    records = parse_tweets(paths["tweets"], format=paths["format"])
    labels = load_labels(paths["labels"])
    return records, labels


def _true_vector(labels: LabelTable, user_ids) -> np.ndarray:
    missing = [u for u in user_ids if u not in labels.labels]
    if missing:
        raise ValueError(f"{len(missing)} users lack labels, first: {missing[0]!r}")
    return np.asarray([labels.labels[u] for u in user_ids], dtype=np.int64)


def _wrap_latent(latent: np.ndarray, source: MtsTensor, variant: str) -> MtsTensor:
    if variant == "uts":
        return MtsTensor(
            values=latent,
            user_ids=list(source.user_ids),
            feature_names=("latent",),
            day_min=source.day_min,
            normalized=False,
            kind="latent_uts",
        )
    return MtsTensor(
        values=latent[:, np.newaxis, :],
        user_ids=list(source.user_ids),
        feature_names=tuple(f"latent.{j}" for j in range(latent.shape[1])),
        day_min=source.day_min,
        normalized=False,
        kind="latent_vec",
    )


def _load_points(path: Path) -> tuple[np.ndarray, tuple[str, ...]]:
    if path.suffix == ".tensor":
        tensor = load_tensor(path)
        return tensor.values.reshape(tensor.n_users, -1), tuple(tensor.user_ids)
    feats = load_features_csv(path)
    return feats.values, feats.user_ids


def _points_source(config: PipelineConfig, out: Path) -> tuple[Path, str]:
    """Default clustering input for the configured representation."""
    if config.representation == "uts":
        return out / _latent_name("uts"), "encode"
    if config.representation == "vec":
        return out / _latent_name("vec"), "encode"
    return out / A_FEATS, "features"


def cmd_extract(args) -> int:
    paths, config = _merged(args)
    out = _outdir(paths)
    if not paths["tweets"]:
        raise ConfigError("no tweets file given (flag --tweets or config key 'tweets')")
    records = parse_tweets(paths["tweets"], format=paths["format"])
    timelines, manifest = build_timelines(records)
    features = config.features or FEATURE_NAMES
    mts = extract_mts(timelines, manifest, features=features)
    save_tensor(mts, out / A_MTS)
    print(
        f"extract: wrote {out / A_MTS} "
        f"(N={mts.n_users}, T={mts.n_days}, D={mts.n_features})"
    )
    return EXIT_OK


def cmd_train(args) -> int:
    paths, config = _merged(args)
    out = _outdir(paths)
    variant = args.variant or ("vec" if config.representation == "vec" else "uts")
    mts = load_tensor(_require(out / A_MTS, "extract"))
    norm, params = minmax_normalize(mts)
    model, report = train(_ae_config(config, variant, config.seed), norm, params)
    save_model(model, out / _model_name(variant))
    doc = report.to_dict()
    timing = doc.pop("timing")
    _write_report(out / f"train_report_{variant}.json", {"train": doc}, config, timing)
    print(
        f"train: {variant} autoencoder, final train MSE "
        f"{report.train_mse[-1]:.6f} -> {out / _model_name(variant)}"
    )
    return EXIT_OK


def cmd_encode(args) -> int:
    paths, config = _merged(args)
    out = _outdir(paths)
    variant = args.variant or ("vec" if config.representation == "vec" else "uts")
    model = load_model(_require(out / _model_name(variant), "train"))
    mts = load_tensor(_require(out / A_MTS, "extract"))
    if model.norm_params is None:
        raise ValueError("checkpoint lacks normalization statistics")
    norm = apply_normalization(mts, model.norm_params)
    latent = encode(model, norm)
    tensor = _wrap_latent(latent, mts, variant)
    save_tensor(tensor, out / _latent_name(variant))
    print(f"encode: latent shape {latent.shape} -> {out / _latent_name(variant)}")
    return EXIT_OK


def cmd_features(args) -> int:
    paths, config = _merged(args)
    out = _outdir(paths)
    latent = load_tensor(_require(out / _latent_name("uts"), "encode"))
    stats = extract_global_features(
        latent.values, user_ids=tuple(latent.user_ids), catalog=config.stats_catalog
    )
    save_features_csv(stats, out / A_FEATS_RAW)
    standardized = zscore_standardize(stats)
    with_vec = args.with_vec
    if with_vec is None:
        with_vec = config.representation == "glob_vec"
    if with_vec:
        vec = load_tensor(_require(out / _latent_name("vec"), "encode"))
        combined = concat_features(standardized, vec.values.reshape(vec.n_users, -1))
    else:
        combined = standardized
    save_features_csv(combined, out / A_FEATS)
    print(
        f"features: {combined.values.shape[1]} columns for "
        f"{combined.n_users} users -> {out / A_FEATS}"
    )
    return EXIT_OK


def cmd_cluster(args) -> int:
    paths, config = _merged(args)
    out = _outdir(paths)
    if args.points:
        source = Path(args.points)
        if not source.exists():
            raise MissingArtifactError(source, "encode or features")
    else:
        default, producer = _points_source(config, out)
        source = _require(default, producer)
    points, user_ids = _load_points(source)
    dist = distance_matrix(points)
    payload: dict = {"method": config.cluster_method, "points_file": source.name}
    if config.cluster_method == "dbscan":
        eps = config.eps
        if eps is None:
            eps, _ = kdist_knee_eps(dist, config.min_pts - 1)
        assignment = dbscan(dist, eps, config.min_pts, user_ids=user_ids)
        payload.update({"eps": eps, "min_pts": config.min_pts})
    else:
        dendro = ward_agglomerative(dist)
        save_dendrogram_json(dendro, out / A_DENDRO)
        k = config.n_clusters or (2 if config.task == "binary" else None)
        if k is None:
            raise ConfigError(
                "ward multiclass clustering needs n_clusters (flag --n-clusters)"
            )
        assignment = cut_dendrogram(dendro, k, user_ids=user_ids)
        payload["cut_k"] = k
    save_assignment_csv(assignment, out / A_CLUSTERS)
    n_noise = int(np.sum(assignment.labels == 0))
    payload.update({"n_clusters": assignment.n_clusters, "n_noise": n_noise})
    _write_report(out / A_CLUSTER_REP, payload, config)
    print(
        f"cluster: {assignment.n_clusters} clusters, {n_noise} noise "
        f"-> {out / A_CLUSTERS}"
    )
    return EXIT_OK


def _write_confusion_csv(cm: np.ndarray, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        k = cm.shape[0]
        writer.writerow(["true\\pred"] + [str(j) for j in range(k)])
        for i in range(k):
            writer.writerow([str(i)] + [int(v) for v in cm[i]])


def cmd_evaluate(args) -> int:
    paths, config = _merged(args)
    out = _outdir(paths)
    if not paths["labels"]:
        raise ConfigError("no labels file given (flag --labels or config key 'labels')")
    assignment = load_assignment_csv(
        _require(out / A_CLUSTERS, "cluster"), method=config.cluster_method
    )
    labels = load_labels(paths["labels"])
    true = _true_vector(labels, assignment.user_ids)
    if config.task == "binary":
        truth = (true != GENUINE_CLASS).astype(np.int64)
        dist = None
        if config.cluster_method == "ward" and config.genuine_cluster is None:
            source, producer = _points_source(config, out)
            points, point_users = _load_points(_require(source, producer))
            if point_users != assignment.user_ids:
                raise ValueError("points artifact and clusters disagree on users")
            dist = distance_matrix(points)
        pred = assign_labels_binary(
            assignment,
            dist=dist,
            genuine_cluster=config.genuine_cluster,
            polarity=config.cluster_method == "ward",
        )
        metrics = prf_metrics(truth, pred, 2)
    else:
        pred = assign_labels_multiclass(assignment, true)
        metrics = prf_metrics(true, pred, labels.num_classes)
    _write_report(out / A_METRICS, {"task": config.task, "metrics": metrics.to_dict()}, config)
    _write_confusion_csv(metrics.confusion, out / A_CONFUSION)
    print(
        f"evaluate: task={config.task} weighted_f1={metrics.weighted_f1:.4f} "
        f"accuracy={metrics.accuracy:.4f} mcc={metrics.mcc:.4f} -> {out / A_METRICS}"
    )
    return EXIT_OK


def cmd_importance(args) -> int:
    paths, config = _merged(args)
    out = _outdir(paths)
    records, labels = _read_inputs(paths)
    timelines, manifest = build_timelines(records)
    base_features = config.features or FEATURE_NAMES
    mts = extract_mts(timelines, manifest, features=base_features)
    true = _true_vector(labels, manifest.user_ids)
    started = time.perf_counter()

    from dataclasses import replace

    def runner(feats: tuple[str, ...]) -> float:
        result = run_pipeline_from_mts(
            mts, true, labels.num_classes, replace(config, features=tuple(feats))
        )
        return result.metrics.weighted_f1

    report = feature_importance(runner, tuple(base_features))
    _write_report(
        out / A_IMPORTANCE,
        report.to_dict(),
        config,
        timing={"wall_time_s": time.perf_counter() - started},
    )
    ranked = sorted(
        zip(report.feature_names, report.importance), key=lambda p: -p[1]
    )
    print(
        f"importance: top {ranked[0][0]} ({ranked[0][1]:.3f}) -> {out / A_IMPORTANCE}"
    )
    return EXIT_OK


def cmd_lobo(args) -> int:
    paths, config = _merged(args)
    out = _outdir(paths)
    records, labels = _read_inputs(paths)
    bot_classes = None
    if args.bot_classes:
        bot_classes = [int(c) for c in args.bot_classes.split(",")]
    started = time.perf_counter()
    report = lobo_run(records, labels, config, bot_classes=bot_classes)
    _write_report(
        out / A_LOBO,
        report.to_dict(),
        config,
        timing={"wall_time_s": time.perf_counter() - started},
    )
    worst = max(abs(v["pct_change"]) for v in report.entries.values())
    print(
        f"lobo: base weighted_f1 {report.base_f1:.4f}, "
        f"max |change| {worst:.2f}% -> {out / A_LOBO}"
    )
    return EXIT_OK


def cmd_synth(args) -> int:
    paths, _config = _merged(args)
    out = _outdir(paths)
    kwargs = {}
    if args.n_days is not None:
        kwargs["n_days"] = args.n_days
    if args.n_genuine is not None:
        kwargs["n_genuine"] = args.n_genuine
    if args.seed is not None:
        kwargs["seed"] = args.seed
    cfg = SynthConfig(**kwargs)
    records, labels = generate_dataset(cfg)
    write_tweets_jsonl(records, out / A_TWEETS)
    with open(out / A_LABELS, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("user_id", "class_id"))
        for uid, cid in labels.labels.items():
            writer.writerow((uid, cid))
    supports = labels.supports()
    print(
        f"synth: {len(labels.labels)} users {supports}, "
        f"{len(records)} tweets -> {out / A_TWEETS}, {out / A_LABELS}"
    )
    return EXIT_OK


def cmd_run_all(args) -> int:
    paths, config = _merged(args)
    out = _outdir(paths)
    records, labels = _read_inputs(paths)
    started = time.perf_counter()
    timelines, manifest = build_timelines(records)
    features = config.features or FEATURE_NAMES
    mts = extract_mts(timelines, manifest, features=features)
    save_tensor(mts, out / A_MTS)
    true = _true_vector(labels, manifest.user_ids)
    result = run_pipeline_from_mts(mts, true, labels.num_classes, config)

    for variant, model in result.models.items():
        save_model(model, out / _model_name(variant))
        doc = result.train_reports[variant].to_dict()
        timing = doc.pop("timing")
        _write_report(out / f"train_report_{variant}.json", {"train": doc}, config, timing)
        save_tensor(
            _wrap_latent(result.latents[variant], mts, variant),
            out / _latent_name(variant),
        )
    if config.representation in ("glob", "glob_vec"):
        stats = extract_global_features(
            result.latents["uts"], user_ids=tuple(mts.user_ids), catalog=config.stats_catalog
        )
        save_features_csv(stats, out / A_FEATS_RAW)
        standardized = zscore_standardize(stats)
        if config.representation == "glob_vec":
            standardized = concat_features(standardized, result.latents["vec"])
        save_features_csv(standardized, out / A_FEATS)
    save_assignment_csv(result.assignment, out / A_CLUSTERS)
    if result.dendrogram is not None:
        save_dendrogram_json(result.dendrogram, out / A_DENDRO)
    cluster_payload: dict = {
        "method": config.cluster_method,
        "n_clusters": result.assignment.n_clusters,
        "n_noise": int(np.sum(result.assignment.labels == 0)),
    }
    if result.eps_used is not None:
        cluster_payload["eps"] = result.eps_used
    _write_report(out / A_CLUSTER_REP, cluster_payload, config)
    metrics = result.metrics
    _write_report(
        out / A_METRICS,
        {"task": config.task, "metrics": metrics.to_dict()},
        config,
        timing={"wall_time_s": time.perf_counter() - started},
    )
    _write_confusion_csv(metrics.confusion, out / A_CONFUSION)
    print(
        f"run-all: task={config.task} rep={config.representation} "
        f"method={config.cluster_method} weighted_f1={metrics.weighted_f1:.4f} "
        f"accuracy={metrics.accuracy:.4f} mcc={metrics.mcc:.4f} -> {out / A_METRICS}"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="botclust",
        description="Unsupervised bot detection via time-series clustering.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (flags override it)")
    common.add_argument("--outdir", help="artifact directory (default: out)")

    pipe = argparse.ArgumentParser(add_help=False)
    pipe.add_argument("--variant-preset", choices=sorted(PRESETS),
                      help="named representation+clustering pairing")
    pipe.add_argument("--representation", choices=("uts", "vec", "glob", "glob_vec"))
    pipe.add_argument("--cluster-method", choices=("dbscan", "ward"))
    pipe.add_argument("--task", choices=("binary", "multiclass"))
    pipe.add_argument("--features", help="comma-separated tweet feature subset")
    pipe.add_argument("--epochs", type=int)
    pipe.add_argument("--learning-rate", type=float)
    pipe.add_argument("--latent-dim", type=int)
    pipe.add_argument("--holdout-fraction", type=float)
    pipe.add_argument("--clip-norm", type=float)
    pipe.add_argument("--min-pts", type=int)
    pipe.add_argument("--eps", type=float, help="DBSCAN radius (default: knee heuristic)")
    pipe.add_argument("--n-clusters", type=int, help="ward cut size")
    pipe.add_argument("--genuine-cluster", type=int,
                      help="which ward cluster is genuine (overrides the spread rule)")
    pipe.add_argument("--seed", type=int)

    io = argparse.ArgumentParser(add_help=False)
    io.add_argument("--tweets", help="tweet file (jsonl or csv)")
    io.add_argument("--labels", help="ground-truth labels csv")
    io.add_argument("--format", choices=("jsonl", "csv"), help="tweet file format")

    p = sub.add_parser("extract", parents=[common, pipe, io],
                       help="tweets -> daily feature tensor")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", parents=[common, pipe],
                       help="train an autoencoder on the extracted tensor")
    p.add_argument("--variant", choices=("uts", "vec"))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", parents=[common, pipe],
                       help="encode the tensor with a trained model")
    p.add_argument("--variant", choices=("uts", "vec"))
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("features", parents=[common, pipe],
                       help="summary statistics of the encoded series")
    p.add_argument("--with-vec", action="store_true", default=None,
                   help="concatenate the vec encoding onto the statistics")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("cluster", parents=[common, pipe],
                       help="cluster an encoded representation")
    p.add_argument("--points", help="points artifact (.tensor or .csv); "
                                    "default depends on representation")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("evaluate", parents=[common, pipe, io],
                       help="score a clustering against ground truth")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("importance", parents=[common, pipe, io],
                       help="leave-one-feature-out importance")
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("lobo", parents=[common, pipe, io],
                       help="leave-one-botnet-out generalization test")
    p.add_argument("--bot-classes", help="comma-separated class ids (default: all)")
    p.set_defaults(func=cmd_lobo)

    p = sub.add_parser("synth", parents=[common],
                       help="generate a labeled synthetic dataset")
    p.add_argument("--n-days", type=int)
    p.add_argument("--n-genuine", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run-all", parents=[common, pipe, io],
                       help="extract, train, encode, cluster, evaluate")
    p.set_defaults(func=cmd_run_all)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MissingArtifactError as exc:
        log.error("%s", exc)
        return EXIT_MISSING
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_USAGE
    except ParseError as exc:
        log.error("input error: %s", exc)
        return EXIT_DATA
    except FileNotFoundError as exc:
        log.error("file not found: %s", exc)
        return EXIT_DATA
    except (ValueError, FloatingPointError) as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except Exception:
        log.exception("unexpected failure")
        return 1


if __name__ == "__main__":
    sys.exit(main())
