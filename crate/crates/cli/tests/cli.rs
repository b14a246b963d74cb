//! End-to-end tests of the rfidlab binary: exit codes, file outputs,
//! determinism of re-runs, and the documented source grammar.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_rfidlab")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env("RFIDLAB_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_dir_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_path_buf();
                files.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn assert_identical_trees(a: &Path, b: &Path) {
    let (fa, fb) = (read_dir_bytes(a), read_dir_bytes(b));
    assert_eq!(
        fa.iter().map(|(p, _)| p).collect::<Vec<_>>(),
        fb.iter().map(|(p, _)| p).collect::<Vec<_>>(),
        "file sets differ"
    );
    for ((pa, ba), (_, bb)) in fa.iter().zip(&fb) {
        assert_eq!(ba, bb, "bytes differ for {}", pa.display());
    }
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        Fixture { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    /// Train tiny nominal + generator checkpoints once per fixture.
    fn train_tiny(&self) -> (String, String) {
        run_ok(&[
            "train", "--kind", "nominal", "--preset", "tiny", "--seed", "3", "--out", &self.arg("models"),
        ]);
        run_ok(&[
            "train", "--kind", "generator", "--preset", "tiny", "--seed", "3", "--out", &self.arg("models"),
        ]);
        (
            self.path("models/nominal.ckpt").to_string_lossy().into_owned(),
            self.path("models/generator.ckpt").to_string_lossy().into_owned(),
        )
    }
}

#[test]
fn missing_required_flag_is_usage_error() {
    let out = run(&["train", "--kind", "nominal"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let out = run(&["calibrate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_preset_is_usage_error() {
    let f = Fixture::new();
    let out = run(&["train", "--kind", "nominal", "--preset", "galactic", "--out", &f.arg("m")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_config_json_is_config_error_with_location() {
    let f = Fixture::new();
    let cfg = f.path("bad.json");
    std::fs::write(&cfg, "{\n  \"epochs\": 1,\n  \"unknown_field\": true\n}").unwrap();
    let out = run(&[
        "train", "--kind", "nominal", "--preset", "tiny",
        "--config", cfg.to_str().unwrap(), "--out", &f.arg("m"),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line"), "diagnostics missing location: {stderr}");
}

#[test]
fn bad_threads_env_is_config_error() {
    let out = Command::new(bin())
        .args(["report", "--out", "/tmp/x"])
        .env("RFIDLAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn train_produces_checkpoint_with_provenance() {
    let f = Fixture::new();
    run_ok(&[
        "train", "--kind", "robust", "--kappa-preset", "k128", "--preset", "tiny",
        "--seed", "5", "--out", &f.arg("m"),
    ]);
    let ckpt = rfidlab_core::models::ModelCheckpoint::load(&f.path("m/robust_k128.ckpt")).unwrap();
    assert!(ckpt.provenance.is_robust());
    assert!(ckpt.provenance.kappa > 0.0);
    let log = std::fs::read_to_string(f.path("m/robust_k128.train.json")).unwrap();
    assert!(log.contains("config_digest"));
}

#[test]
fn metric_fid_of_identical_files_is_zero() {
    let f = Fixture::new();
    let (embedder, _) = f.train_tiny();

    // export a small image set through the library, then score file vs file
    let images = rfidlab_core::data::random_noise_images(24, 9);
    std::fs::create_dir_all(f.path("data")).unwrap();
    rfidlab_core::data::write_image_batch(&f.path("data"), "set", &images).unwrap();
    let src = format!("images:{}", f.path("data/set.images.tnsr").display());

    let out = run_ok(&[
        "metric", "--metric", "fid", "--embedder", &embedder,
        "--real", &src, "--gen", &src, "--out", &f.arg("fid"),
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let report: serde_json::Value = serde_json::from_str(stdout.trim()).unwrap();
    assert_eq!(report["metric"], "FID");
    let value = report["value"].as_f64().unwrap();
    assert!(value.abs() <= 1e-6, "FID {value}");
}

#[test]
fn metric_is_on_uniform_posterior_model_is_one() {
    let f = Fixture::new();
    // a zero-weight embedder gives uniform posteriors
    let zero = rfidlab_core::models::MiniEmbedder::zeros();
    std::fs::create_dir_all(f.path("m")).unwrap();
    rfidlab_core::models::ModelCheckpoint::from_embedder(&zero)
        .save(&f.path("m/zero.ckpt"))
        .unwrap();

    let out = run_ok(&[
        "metric", "--metric", "is", "--embedder", &f.arg("m/zero.ckpt"),
        "--gen", "dataset:eval", "--n", "40",
        "--n-train-per-class", "2", "--n-eval-per-class", "4",
        "--splits", "1", "--out", &f.arg("is"),
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let report: serde_json::Value = serde_json::from_str(stdout.trim()).unwrap();
    let value = report["value"].as_f64().unwrap();
    assert!((value - 1.0).abs() <= 1e-6, "IS {value}");
}

#[test]
fn metric_report_matches_documented_schema() {
    let f = Fixture::new();
    let (embedder, _) = f.train_tiny();
    run_ok(&[
        "metric", "--metric", "is", "--embedder", &embedder,
        "--gen", "dataset:eval", "--n", "20", "--splits", "2",
        "--n-train-per-class", "2", "--n-eval-per-class", "2",
        "--out", &f.arg("is"),
    ]);
    let line = std::fs::read_to_string(f.path("is/metric.json")).unwrap();
    let report: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    for key in ["metric", "value", "std", "n_real", "n_gen", "splits", "clamped", "embedder", "config_digest", "seed"] {
        assert!(report.get(key).is_some(), "missing key {key} in {line}");
    }
    assert!(report["embedder"].get("training").is_some());
    assert!(report["embedder"].get("kappa").is_some());
}

#[test]
fn attack_sweep_zero_epsilon_row_is_baseline() {
    let f = Fixture::new();
    let (embedder, _) = f.train_tiny();
    run_ok(&[
        "attack", "--kind", "max-fid", "--embedder", &embedder,
        "--real", "dataset:eval", "--eps-list", "0,0.05",
        "--steps", "3", "--n", "6",
        "--n-train-per-class", "2", "--n-eval-per-class", "2",
        "--seed", "2", "--out", &f.arg("atk"),
    ]);
    let csv = std::fs::read_to_string(f.path("atk/sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| l.starts_with("max-fid")).collect();
    assert_eq!(rows.len(), 2, "csv:\n{csv}");
    let zero_row: Vec<&str> = rows[0].split(',').collect();
    // columns: kind,param,metric,value_before,value_after,...
    assert_eq!(zero_row[1], "0");
    let before: f64 = zero_row[3].parse().unwrap();
    let after: f64 = zero_row[4].parse().unwrap();
    assert!((before - after).abs() <= 1e-9, "ε=0 row changed: {before} vs {after}");
}

#[test]
fn attack_rows_write_payload_tensors() {
    let f = Fixture::new();
    let (embedder, generator) = f.train_tiny();
    run_ok(&[
        "attack", "--kind", "latent-w", "--embedder", &embedder, "--generator", &generator,
        "--real", "dataset:eval", "--alpha-list", "1", "--steps", "2", "--n", "4",
        "--n-train-per-class", "2", "--n-eval-per-class", "2",
        "--seed", "7", "--out", &f.arg("atk"),
    ]);
    assert!(f.path("atk/row_1/adv.images.tnsr").exists());
    assert!(f.path("atk/row_1/latents_clean.tnsr").exists());
    assert!(f.path("atk/row_1/latents_adv.tnsr").exists());
    let summary = std::fs::read_to_string(f.path("atk/row_1/attack.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(v["steps_taken"], 2);
    assert!(v["magnitude"]["wasserstein_1d"].as_f64().is_some());
}

#[test]
fn latent_attack_without_generator_is_usage_error() {
    let f = Fixture::new();
    let (embedder, _) = f.train_tiny();
    let out = run(&[
        "attack", "--kind", "latent-z", "--embedder", &embedder,
        "--real", "dataset:eval", "--n", "2",
        "--n-train-per-class", "2", "--n-eval-per-class", "2",
        "--out", &f.arg("atk"),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn report_merges_and_flags_conflicting_digests() {
    let f = Fixture::new();
    let (embedder, _) = f.train_tiny();
    for (seed, name) in [("1", "a"), ("2", "b")] {
        run_ok(&[
            "attack", "--kind", "max-fid", "--embedder", &embedder,
            "--real", "dataset:eval", "--eps-list", "0.05",
            "--steps", "2", "--n", "4",
            "--n-train-per-class", "2", "--n-eval-per-class", "2",
            "--seed", seed, "--out", &f.arg(name),
        ]);
    }
    run_ok(&[
        "report", "--out", &f.arg("merged"),
        &f.arg("a/sweep.json"), &f.arg("b/sweep.json"),
    ]);
    let text = std::fs::read_to_string(f.path("merged/merged.txt")).unwrap();
    assert!(text.contains("WARNING"), "conflict not flagged:\n{text}");
    let csv = std::fs::read_to_string(f.path("merged/merged.csv")).unwrap();
    let data_rows = csv.lines().filter(|l| l.starts_with("max-fid")).count();
    assert_eq!(data_rows, 2, "rows lost in merge:\n{csv}");
}

#[test]
fn report_without_inputs_is_usage_error() {
    let out = run(&["report", "--out", "/tmp/never"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn report_schema_mismatch_is_an_error() {
    let f = Fixture::new();
    let (embedder, _) = f.train_tiny();
    run_ok(&[
        "attack", "--kind", "max-fid", "--embedder", &embedder,
        "--real", "dataset:eval", "--eps-list", "0.05",
        "--steps", "2", "--n", "4",
        "--n-train-per-class", "2", "--n-eval-per-class", "2",
        "--seed", "1", "--out", &f.arg("a"),
    ]);
    run_ok(&[
        "degradation-study", "--embedder", &embedder, "--real", "dataset:eval",
        "--sigma-noise", "0.1", "--sigma-blur", "1", "--n", "8",
        "--n-train-per-class", "2", "--n-eval-per-class", "2",
        "--seed", "1", "--out", &f.arg("d"),
    ]);
    let out = run(&[
        "report", "--out", &f.arg("m"),
        &f.arg("a/sweep.json"), &f.arg("d/degradation.json"),
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn reruns_are_byte_identical() {
    let f = Fixture::new();
    let (embedder, generator) = f.train_tiny();

    // train
    for out in ["t1", "t2"] {
        run_ok(&[
            "train", "--kind", "nominal", "--preset", "tiny", "--seed", "9", "--out", &f.arg(out),
        ]);
    }
    assert_identical_trees(&f.path("t1"), &f.path("t2"));

    // metric
    for out in ["m1", "m2"] {
        run_ok(&[
            "metric", "--metric", "is", "--embedder", &embedder,
            "--gen", &format!("generator:{generator}"), "--alpha", "1.0",
            "--n", "16", "--splits", "2", "--seed", "4", "--out", &f.arg(out),
        ]);
    }
    assert_identical_trees(&f.path("m1"), &f.path("m2"));

    // attack (bounded, with payloads)
    for out in ["a1", "a2"] {
        run_ok(&[
            "attack", "--kind", "min-is", "--embedder", &embedder,
            "--real", "dataset:eval", "--eps-list", "0.03", "--steps", "3", "--n", "5",
            "--n-train-per-class", "2", "--n-eval-per-class", "2",
            "--seed", "6", "--out", &f.arg(out),
        ]);
    }
    assert_identical_trees(&f.path("a1"), &f.path("a2"));

    // truncation study
    for out in ["tr1", "tr2"] {
        run_ok(&[
            "truncation-study", "--embedder", &embedder, "--generator", &generator,
            "--real", "dataset:eval", "--alphas", "0.7,1.0", "--n", "12",
            "--n-train-per-class", "2", "--n-eval-per-class", "2",
            "--seed", "8", "--out", &f.arg(out),
        ]);
    }
    assert_identical_trees(&f.path("tr1"), &f.path("tr2"));

    // degradation study
    for out in ["d1", "d2"] {
        run_ok(&[
            "degradation-study", "--embedder", &embedder, "--real", "dataset:eval",
            "--sigma-noise", "0.1,0.2", "--sigma-blur", "1", "--n", "12",
            "--n-train-per-class", "2", "--n-eval-per-class", "2",
            "--seed", "8", "--out", &f.arg(out),
        ]);
    }
    assert_identical_trees(&f.path("d1"), &f.path("d2"));

    // report
    for out in ["r1", "r2"] {
        run_ok(&["report", "--out", &f.arg(out), &f.arg("a1/sweep.json"), &f.arg("a2/sweep.json")]);
    }
    assert_identical_trees(&f.path("r1"), &f.path("r2"));
}

#[test]
fn generator_checkpoint_round_trips_through_source_grammar() {
    let f = Fixture::new();
    let (embedder, generator) = f.train_tiny();
    run_ok(&[
        "metric", "--metric", "fid", "--embedder", &embedder,
        "--real", "dataset:eval", "--gen", &format!("generator:{generator}"),
        "--alpha", "0.7", "--n", "16",
        "--n-train-per-class", "2", "--n-eval-per-class", "2",
        "--out", &f.arg("gfid"),
    ]);
    let line = std::fs::read_to_string(f.path("gfid/metric.json")).unwrap();
    let report: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    assert!(report["value"].as_f64().unwrap().is_finite());
}
