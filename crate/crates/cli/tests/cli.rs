use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pragsim::dataset::{load_manifest, write_manifest};
use pragsim::features::FeatureVector;
use pragsim::models::TrainedModel;
use pragsim::synth::{generate_corpus, SynthConfig};

fn pragsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pragsim")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn corpus(dir: &Path, n_pairs: usize, per_track: usize) -> PathBuf {
    let cfg = SynthConfig {
        n_pairs,
        utterances_per_track: per_track,
        ..SynthConfig::default()
    };
    generate_corpus(&dir.join("corpus"), &cfg).unwrap();
    dir.join("corpus/manifest.csv")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_small_config(dir: &Path, manifest: &Path, out: &Path) -> PathBuf {
    let cfg = serde_json::json!({
        "manifest_path": manifest,
        "output_dir": out,
        "split": {"kind": "k_fold", "k": 4},
        "split_seed": 3,
        "models": {"knn_k": 5, "forest": {"n_trees": 8, "rng_seed": 11}}
    });
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

#[test]
fn extract_two_pairs_then_rerun_is_a_no_op() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path(), 2, 2);
    let out = dir.path().join("out");
    let o = pragsim(&["extract", "--manifest", s(&manifest), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("vectors.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[0].split(',').count(), 101);
    assert!(lines[1].starts_with("p0000:reen,"));

    let before = std::fs::metadata(out.join("vectors.csv")).unwrap().modified().unwrap();
    let cache_before: Vec<_> = std::fs::read_dir(out.join("cache"))
        .unwrap()
        .map(|e| e.unwrap().metadata().unwrap().modified().unwrap())
        .collect();
    let o = pragsim(&["extract", "--manifest", s(&manifest), "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("0 tracks computed, 2 cached"));
    assert_eq!(std::fs::metadata(out.join("vectors.csv")).unwrap().modified().unwrap(), before);
    let cache_after: Vec<_> = std::fs::read_dir(out.join("cache"))
        .unwrap()
        .map(|e| e.unwrap().metadata().unwrap().modified().unwrap())
        .collect();
    assert_eq!(cache_before, cache_after);
}

#[test]
fn missing_wav_is_a_partial_failure() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path(), 4, 2);
    let mut records = load_manifest(&manifest).unwrap();
    records[3].reenactment.track_path = dir.path().join("corpus/absent.wav");
    write_manifest(&manifest, &records).unwrap();
    let out = dir.path().join("out");
    let o = pragsim(&["extract", "--manifest", s(&manifest), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("p0003"));
    let text = std::fs::read_to_string(out.join("vectors.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 6);
}

#[test]
fn experiment_is_deterministic_and_self_describing() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path(), 24, 6);
    let out_a = dir.path().join("a");
    let cfg = write_small_config(dir.path(), &manifest, &out_a);
    let o = pragsim(&["experiment", "--config", s(&cfg)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("random_forest_regression"));

    // Same config into a second directory, then again from the metadata.
    let out_b = dir.path().join("b");
    let o = pragsim(&["experiment", "--config", s(&cfg), "--out", s(&out_b)]);
    assert_eq!(code(&o), 0);
    let out_c = dir.path().join("c");
    let o = pragsim(&["experiment", "--config", s(&out_a.join("run_metadata.json")), "--out", s(&out_c)]);
    assert_eq!(code(&o), 0);
    for f in [
        "model_scores.csv",
        "type_importance.csv",
        "dimension_correlations.csv",
        "position_analysis.csv",
        "fig_correlation_by_position.svg",
        "fig_importance_by_position.svg",
        "vectors.csv",
    ] {
        let a = std::fs::read(out_a.join(f)).unwrap();
        assert_eq!(a, std::fs::read(out_b.join(f)).unwrap(), "{f}");
        assert_eq!(a, std::fs::read(out_c.join(f)).unwrap(), "{f}");
    }
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_a.join("run_metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["split_plan"]["folds"].as_array().unwrap().len(), 4);
    assert_eq!(meta["config"]["models"]["forest"]["n_trees"], 8);
}

#[test]
fn score_identical_audio_and_version_refusal() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path(), 24, 6);
    let out = dir.path().join("out");
    let cfg = write_small_config(dir.path(), &manifest, &out);
    assert_eq!(code(&pragsim(&["experiment", "--config", s(&cfg)])), 0);
    let records = load_manifest(&manifest).unwrap();
    let wav = records[0].seed.track_path.clone();
    let span = format!("{}:{}", records[0].seed.start_s, records[0].seed.end_s);

    for kind in ["euclidean", "linear", "knn", "forest"] {
        let model_path = out.join(format!("models/{kind}.json"));
        let model = TrainedModel::load(&model_path).unwrap();
        let want = model.predict(&FeatureVector::zeros());
        let o = pragsim(&[
            "score", "--model", s(&model_path), "--seed", s(&wav), "--seed-span", &span, "--reen", s(&wav),
            "--reen-span", &span,
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let label = if kind == "euclidean" { "distance" } else { "similarity" };
        assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), format!("{kind} {label} {want:.4}"));
    }

    let mut stale = TrainedModel::load(out.join("models/linear.json")).unwrap();
    stale.extractor_version = "pragsim-features/0".into();
    let stale_path = dir.path().join("stale.json");
    stale.save(&stale_path).unwrap();
    let o = pragsim(&["score", "--model", s(&stale_path), "--seed", s(&wav), "--reen", s(&wav)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("retrain"));
}

#[test]
fn split_plan_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path(), 20, 5);
    let o = pragsim(&["split", "--manifest", s(&manifest), "--k", "10"]);
    assert_eq!(code(&o), 0);
    let plan: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(plan["folds"].as_array().unwrap().len(), 10);
    let o = pragsim(&["split", "--manifest", s(&manifest), "--split", "session"]);
    assert_eq!(code(&o), 0);

    assert_eq!(code(&pragsim(&["frobnicate"])), 1);
    assert_eq!(code(&pragsim(&["score", "--model", "m.json", "--seed", "a.wav", "--seed-span", "3:1", "--reen", "b.wav"])), 1);
    assert_eq!(code(&pragsim(&["--help"])), 0);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"split": {"kind": "k_fold", "k": 1}}"#).unwrap();
    assert_eq!(code(&pragsim(&["experiment", "--config", s(&bad)])), 1);
    std::fs::write(&bad, "not json").unwrap();
    assert_eq!(code(&pragsim(&["experiment", "--config", s(&bad)])), 1);
    let o = pragsim(&["experiment", "--manifest", s(&manifest), "--out", s(&dir.path().join("o")), "--only", "nonsense"]);
    assert_eq!(code(&o), 1);
}
