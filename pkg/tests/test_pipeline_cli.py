import json
from dataclasses import replace

import numpy as np
import pytest

from botclust.cli import main
from botclust.ingest import build_timelines
from botclust.mts import extract_mts
from botclust.pipeline import (
    PRESETS,
    PipelineConfig,
    apply_preset,
    config_hash,
    derive_seed,
    lobo_run,
    run_pipeline,
    run_pipeline_from_mts,
)
from botclust.synth import BotTemplate, SynthConfig, generate_dataset

FAST = dict(epochs=8, latent_dim=12)

SMALL_TEMPLATES = (
    BotTemplate(class_id=1, n_users=8, period=2,
                feature_means=(5.0, 2.0, 1.0, 4.0, 2.0, 5.0),
                tweets_per_active_day=2, flip_prob=0.04, count_noise=0.5),
    BotTemplate(class_id=2, n_users=8, period=3,
                feature_means=(4.0, 10.0, 6.0, 2.0, 8.0, 4.0),
                tweets_per_active_day=1, flip_prob=0.04, count_noise=0.5),
)


@pytest.fixture(scope="module")
def small_dataset():
    cfg = SynthConfig(n_days=24, n_genuine=16, templates=SMALL_TEMPLATES)
    return generate_dataset(cfg)


def test_presets_cover_reference_table():
    assert set(PRESETS) == {"UTS_DBSCAN", "UTS_Hier", "Vec_Hier", "Glob_Hier", "Glob_Vec_Hier"}
    cfg = apply_preset(PipelineConfig(), "Glob_Vec_Hier")
    assert cfg.representation == "glob_vec"
    assert cfg.cluster_method == "ward"
    cfg = apply_preset(PipelineConfig(), "UTS_DBSCAN")
    assert cfg.representation == "uts"
    assert cfg.cluster_method == "dbscan"
    with pytest.raises(ValueError):
        apply_preset(PipelineConfig(), "NoSuchPreset")


def test_config_hash_stable_and_sensitive():
    a = PipelineConfig(seed=1)
    b = PipelineConfig(seed=1)
    c = PipelineConfig(seed=2)
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(c)
    assert len(config_hash(a)) == 16


def test_derive_seed_is_stable():
    assert derive_seed(42, 1) == derive_seed(42, 1)
    assert derive_seed(42, 1) != derive_seed(42, 2)
    assert derive_seed(43, 1) != derive_seed(42, 1)


def test_run_pipeline_binary_ward(small_dataset):
    records, labels = small_dataset
    cfg = apply_preset(PipelineConfig(task="binary", seed=0, **FAST), "Glob_Hier")
    res = run_pipeline(records, labels, cfg)
    assert res.pred_labels.shape == res.true_labels.shape
    assert set(np.unique(res.pred_labels)) <= {0, 1}
    assert res.assignment.n_clusters == 2
    assert res.metrics.confusion.shape == (2, 2)
    assert res.dendrogram is not None
    assert "uts" in res.models


def test_run_pipeline_multiclass_dbscan(small_dataset):
    records, labels = small_dataset
    cfg = apply_preset(PipelineConfig(task="multiclass", seed=0, **FAST), "UTS_DBSCAN")
    res = run_pipeline(records, labels, cfg)
    assert res.eps_used is not None and res.eps_used > 0
    assert res.metrics.confusion.shape == (3, 3)
    assert set(np.unique(res.pred_labels)) <= {0, 1, 2}


def test_run_pipeline_vec_and_glob_vec(small_dataset):
    records, labels = small_dataset
    cfg = apply_preset(PipelineConfig(task="binary", seed=0, **FAST), "Vec_Hier")
    res = run_pipeline(records, labels, cfg)
    assert res.latents["vec"].shape == (32, FAST["latent_dim"])

    cfg2 = apply_preset(PipelineConfig(task="binary", seed=0, **FAST), "Glob_Vec_Hier")
    res2 = run_pipeline(records, labels, cfg2)
    # z-scored stats (19) concatenated with the vector latent
    assert res2.points.shape == (32, 19 + FAST["latent_dim"])
    assert "uts" in res2.models and "vec" in res2.models


def test_pipeline_deterministic_per_seed(small_dataset):
    records, labels = small_dataset
    cfg = apply_preset(PipelineConfig(task="binary", seed=5, **FAST), "Glob_Hier")
    r1 = run_pipeline(records, labels, cfg)
    r2 = run_pipeline(records, labels, cfg)
    assert np.array_equal(r1.pred_labels, r2.pred_labels)
    assert np.array_equal(r1.points, r2.points)
    assert r1.metrics.weighted_f1 == r2.metrics.weighted_f1


def test_run_pipeline_from_mts_feature_subset(small_dataset):
    records, labels = small_dataset
    timelines, manifest = build_timelines(records)
    mts = extract_mts(timelines, manifest)
    true = np.array([labels.labels[u] for u in manifest.user_ids])
    cfg = replace(
        apply_preset(PipelineConfig(task="binary", seed=0, **FAST), "Glob_Hier"),
        features=("num_urls", "retweet_count"),
    )
    res = run_pipeline_from_mts(mts, true, 2, cfg)
    assert res.metrics is not None
    assert res.latents["uts"].shape[0] == 32


def test_lobo_run_small(small_dataset):
    records, labels = small_dataset
    cfg = apply_preset(PipelineConfig(task="binary", seed=0, **FAST), "Glob_Hier")
    rep = lobo_run(records, labels, cfg)
    assert set(rep.entries) == {1, 2}
    for entry in rep.entries.values():
        assert "weighted_f1" in entry and "pct_change" in entry
    d = rep.to_dict()
    assert set(d["excluded"]) == {"1", "2"}


def test_lobo_guards(small_dataset):
    records, labels = small_dataset
    cfg = apply_preset(PipelineConfig(task="binary", seed=0, **FAST), "Glob_Hier")
    with pytest.raises(ValueError):
        lobo_run(records, labels, cfg, bot_classes=[1])
    with pytest.raises(ValueError):
        lobo_run(records, labels, cfg, bot_classes=[0, 1])


# ----------------------------------------------------------------- CLI


def _cli(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def cli_workspace(tmp_path_factory, small_dataset):
    """A synth dataset written once for the whole CLI flow."""
    from botclust.ingest import write_tweets_jsonl

    records, labels = small_dataset
    root = tmp_path_factory.mktemp("cli")
    tweets = root / "tweets.jsonl"
    labels_csv = root / "labels.csv"
    write_tweets_jsonl(records, tweets)
    with open(labels_csv, "w") as fh:
        fh.write("user_id,class_id\n")
        for uid, cid in sorted(labels.labels.items()):
            fh.write(f"{uid},{cid}\n")
    return root, tweets, labels_csv


def test_cli_synth_writes_dataset(tmp_path):
    out = tmp_path / "synthout"
    rc = _cli("synth", "--outdir", out, "--n-days", 10, "--n-genuine", 4, "--seed", 7)
    assert rc == 0
    assert (out / "tweets.jsonl").exists()
    assert (out / "labels.csv").exists()


def test_cli_step_flow_and_exit_codes(cli_workspace, tmp_path):
    root, tweets, labels_csv = cli_workspace
    out = tmp_path / "flow"

    # evaluate before anything exists: missing artifact, exit 3
    rc = _cli("evaluate", "--outdir", out, "--labels", labels_csv)
    assert rc == 3

    assert _cli("extract", "--outdir", out, "--tweets", tweets) == 0
    assert (out / "mts_raw.tensor").exists()

    assert _cli(
        "train", "--outdir", out, "--variant", "uts", "--epochs", 6, "--seed", 1
    ) == 0
    assert (out / "model_uts.ckpt").exists()
    assert (out / "train_report_uts.json").exists()

    assert _cli("encode", "--outdir", out, "--variant", "uts") == 0
    assert (out / "latent_uts.tensor").exists()

    assert _cli("features", "--outdir", out) == 0
    assert (out / "global_features.csv").exists()
    assert (out / "global_features_raw.csv").exists()

    assert _cli(
        "cluster", "--outdir", out, "--representation", "glob",
        "--cluster-method", "ward", "--n-clusters", 2,
    ) == 0
    assert (out / "clusters.csv").exists()
    assert (out / "dendrogram.json").exists()

    assert _cli(
        "evaluate", "--outdir", out, "--labels", labels_csv, "--task", "binary",
        "--representation", "glob", "--cluster-method", "ward",
    ) == 0
    report = json.loads((out / "metrics_report.json").read_text())
    assert "weighted_f1" in report["metrics"]
    assert "config_hash" in report
    assert (out / "confusion.csv").exists()


def test_cli_missing_artifact_names_producer(cli_workspace, tmp_path, capsys):
    root, tweets, labels_csv = cli_workspace
    out = tmp_path / "missing"
    rc = _cli("train", "--outdir", out, "--epochs", 2)
    assert rc == 3


def test_cli_unknown_config_key_is_usage_error(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"not_a_key": 1}))
    rc = _cli("synth", "--config", cfg, "--outdir", tmp_path / "o")
    assert rc == 2


def test_cli_config_file_with_flag_override(cli_workspace, tmp_path):
    root, tweets, labels_csv = cli_workspace
    out = tmp_path / "cfgflow"
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({
        "tweets": str(tweets),
        "labels": str(labels_csv),
        "variant_preset": "Glob_Hier",
        "task": "binary",
        "epochs": 6,
        "latent_dim": 8,
        "seed": 3,
    }))
    rc = _cli("run-all", "--config", cfg, "--outdir", out, "--epochs", 5)
    assert rc == 0
    report = json.loads((out / "metrics_report.json").read_text())
    assert report["config"]["epochs"] == 5  # flag beats file
    assert report["config"]["representation"] == "glob"
    assert (out / "cluster_report.json").exists()
    assert (out / "metrics_report.json").exists()
    assert "timing" in report


def test_cli_run_all_deterministic_reports(cli_workspace, tmp_path):
    root, tweets, labels_csv = cli_workspace
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    for out in (out_a, out_b):
        rc = _cli(
            "run-all", "--outdir", out, "--tweets", tweets, "--labels", labels_csv,
            "--variant-preset", "UTS_Hier", "--task", "binary",
            "--epochs", 6, "--seed", 11,
        )
        assert rc == 0
    for name in ("metrics_report.json", "cluster_report.json"):
        ra = json.loads((out_a / name).read_text())
        rb = json.loads((out_b / name).read_text())
        ra.pop("timing", None)
        rb.pop("timing", None)
        assert ra == rb, name


def test_cli_ward_multiclass_needs_explicit_k(cli_workspace, tmp_path):
    root, tweets, labels_csv = cli_workspace
    out = tmp_path / "wardk"
    assert _cli("extract", "--outdir", out, "--tweets", tweets) == 0
    assert _cli("train", "--outdir", out, "--variant", "uts", "--epochs", 4) == 0
    assert _cli("encode", "--outdir", out, "--variant", "uts") == 0
    rc = _cli(
        "cluster", "--outdir", out, "--representation", "uts",
        "--cluster-method", "ward", "--task", "multiclass",
    )
    assert rc == 2


def test_cli_unreadable_tweets_is_data_error(tmp_path):
    rc = _cli("extract", "--outdir", tmp_path / "o", "--tweets", tmp_path / "nope.jsonl")
    assert rc == 4
