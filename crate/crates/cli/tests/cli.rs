//! Drives the `vfdetect` binary end to end on synthetic data and the WFDB
//! fixtures shipped with the core crate.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use vfdetect_cli::artifact::{read_episodes, read_features, read_model};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_vfdetect"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(dir: &Path, args: &[&str], code: i32) -> String {
    let out = run(dir, args);
    assert_eq!(
        out.status.code(),
        Some(code),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stderr).unwrap()
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data")
}

/// synth -> features -> rank -> train, with the default config.
fn chain(n_per_class: usize) -> TempDir {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let n = n_per_class.to_string();
    ok(
        d,
        &[
            "synth",
            "--n-vf",
            &n,
            "--n-not-vf",
            &n,
            "--seed",
            "7",
            "--out",
            "ep.bin",
        ],
    );
    ok(d, &["features", "ep.bin", "--out", "f.bin"]);
    ok(d, &["rank", "f.bin", "--out", "mask.txt"]);
    ok(d, &["train", "f.bin", "--mask", "mask.txt", "--out", "model.bin"]);
    tmp
}

fn value<'a>(kv: &'a str, key: &str) -> &'a str {
    kv.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("missing {key}"))
}

#[test]
fn synthetic_chain_evaluates_and_predicts() {
    let tmp = chain(150);
    let d = tmp.path();

    ok(
        d,
        &[
            "evaluate",
            "f.bin",
            "--mask",
            "mask.txt",
            "--key-values",
            "--out",
            "report.txt",
        ],
    );
    let kv = fs::read_to_string(d.join("report.txt")).unwrap();
    assert_eq!(value(&kv, "folds"), "10");
    let g: f64 = value(&kv, "summary.test.g_mean.mean").parse().unwrap();
    assert!(g >= 0.99, "test G-Mean {g}");

    // episodes seen in training come back with their training label
    let pred = ok(d, &["predict", "ep.bin", "--model", "model.bin"]);
    let lines: Vec<&str> = pred.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(lines.len(), 300);
    for line in lines {
        let f: Vec<&str> = line.split_whitespace().collect();
        let want = if f[0] == "synth_vf" { "VF" } else { "NOT_VF" };
        assert_eq!(f[2], want, "{line}");
    }

    // the feature cache works as predict input as well
    let from_features = ok(d, &["predict", "f.bin", "--model", "model.bin"]);
    assert_eq!(from_features, pred);

    let table = ok(d, &["evaluate", "f.bin", "--mask", "mask.txt"]);
    assert!(table.contains("population std"));
}

#[test]
fn default_model_records_default_hyperparameters() {
    let tmp = chain(40);
    let m = read_model(&tmp.path().join("model.bin")).unwrap();
    assert_eq!(m.model.c, 100.0);
    assert_eq!(m.model.gamma, 45.0);
    assert_eq!(m.mask.fraction, 0.24);
    assert_eq!(m.mask.dim, 2500);
    assert_eq!(m.mask.len(), 600);
    assert_eq!(m.model.dim(), 600);
    let f = read_features(&tmp.path().join("f.bin")).unwrap();
    assert_eq!(m.features_hash, f.hash);

    let imp = fs::read_to_string(tmp.path().join("mask.txt.importances")).unwrap();
    assert_eq!(imp.lines().filter(|l| !l.starts_with('#')).count(), 2500);
}

#[test]
fn feature_cache_is_byte_identical_across_runs_and_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--n-vf", "12", "--n-not-vf", "12", "--out", "ep.bin"]);
    ok(d, &["features", "ep.bin", "--out", "a.bin", "--jobs", "1"]);
    ok(d, &["features", "ep.bin", "--out", "b.bin", "--jobs", "3"]);
    ok(d, &["features", "ep.bin", "--out", "c.bin"]);
    let a = fs::read(d.join("a.bin")).unwrap();
    assert_eq!(a, fs::read(d.join("b.bin")).unwrap());
    assert_eq!(a, fs::read(d.join("c.bin")).unwrap());
    let f = read_features(&d.join("a.bin")).unwrap();
    assert_eq!((f.dim, f.rows.len()), (2500, 24));

    ok(d, &["features", "ep.bin", "--format", "csv", "--out", "f.csv"]);
    let csv = fs::read_to_string(d.join("f.csv")).unwrap();
    assert_eq!(csv.lines().count(), 25);
    assert_eq!(csv.lines().nth(1).unwrap().split(',').count(), 2503);
}

#[test]
fn corrupt_cache_reports_byte_offset() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--n-vf", "2", "--n-not-vf", "2", "--out", "ep.bin"]);
    let bytes = fs::read(d.join("ep.bin")).unwrap();
    fs::write(d.join("cut.bin"), &bytes[..bytes.len() - 100]).unwrap();
    let err = fails(d, &["features", "cut.bin", "--out", "f.bin"], 2);
    assert!(err.contains("byte offset"), "{err}");
    assert!(!d.join("f.bin").exists());

    fs::write(d.join("junk.bin"), b"not a cache at all").unwrap();
    let err = fails(d, &["features", "junk.bin", "--out", "f.bin"], 2);
    assert!(err.contains("bad magic at byte offset 0"), "{err}");
}

#[test]
fn stage_hash_mismatches_are_refused() {
    let tmp = chain(20);
    let d = tmp.path();
    fs::write(d.join("alpha.toml"), "emd_alpha = 0.06\n").unwrap();
    fs::write(d.join("svm.toml"), "svm_c = 10.0\n").unwrap();

    // a feature setting changed after the features were computed
    let err = fails(
        d,
        &[
            "train",
            "f.bin",
            "--mask",
            "mask.txt",
            "--out",
            "m.bin",
            "--config",
            "alpha.toml",
        ],
        2,
    );
    assert!(err.contains("config hash mismatch"), "{err}");
    let err = fails(
        d,
        &["predict", "ep.bin", "--model", "model.bin", "--config", "alpha.toml"],
        2,
    );
    assert!(err.contains("config hash mismatch"), "{err}");
    let err = fails(d, &["features", "ep.bin", "--out", "g.bin", "--episode-length", "4"], 2);
    assert!(err.contains("config hash mismatch"), "{err}");

    // a ranking setting changed after the mask was written
    let err = fails(
        d,
        &["train", "f.bin", "--mask", "mask.txt", "--out", "m.bin", "--seed", "1"],
        2,
    );
    assert!(err.contains("ranking settings"), "{err}");

    // model-stage settings only affect the model itself
    ok(
        d,
        &[
            "train", "f.bin", "--mask", "mask.txt", "--out", "m10.bin", "--config", "svm.toml",
        ],
    );
    assert_eq!(read_model(&d.join("m10.bin")).unwrap().model.c, 10.0);
}

#[test]
fn input_errors_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let err = fails(d, &["ingest", "--out", "ep.bin"], 2);
    assert!(err.contains("no inputs"), "{err}");
    fs::write(d.join("bad.toml"), "no_such_key = 1\n").unwrap();
    let err = fails(d, &["synth", "--config", "bad.toml", "--out", "ep.bin"], 2);
    assert!(err.contains("no_such_key"), "{err}");
    fails(d, &["features", "missing.bin", "--out", "f.bin"], 2);
    fails(d, &["synth", "--n-vf", "1"], 2);
    fails(d, &["no-such-command"], 2);
}

#[test]
fn ingest_mixes_wfdb_and_csv_and_skips_bad_files() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(
        d,
        &[
            "synth",
            "--n-vf",
            "1",
            "--n-not-vf",
            "1",
            "--format",
            "csv",
            "--out",
            "csv",
        ],
    );
    assert!(d.join("csv/synth_vf_0.csv").is_file() && d.join("csv/synth_vf_0.meta").is_file());
    fs::write(d.join("notes.txt"), "hello").unwrap();

    let record = fixtures().join("fx212");
    let out = run(
        d,
        &[
            "ingest",
            record.to_str().unwrap(),
            "csv",
            "notes.txt",
            "--out",
            "ep.bin",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cache = read_episodes(&d.join("ep.bin")).unwrap();
    // ten windows from the annotated record, then the two CSV episodes
    assert_eq!(cache.episodes.len(), 12);
    let vf = cache.episodes.iter().filter(|e| e.label.as_str() == "VF").count();
    assert_eq!(vf, 6 + 1);
    assert_eq!(cache.episodes[0].source.record, "fx212");
    assert_eq!(cache.episodes[10].source.record, "synth_qrs");
    assert_eq!(cache.episodes[11].source.record, "synth_vf");

    ok(d, &["features", "ep.bin", "--out", "f.bin"]);
    assert_eq!(read_features(&d.join("f.bin")).unwrap().rows.len(), 12);
}

#[test]
fn synth_single_signals() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let tone = ok(
        d,
        &[
            "synth", "--kind", "tone", "--freq", "10", "--fs", "100", "--length", "1",
        ],
    );
    let v: Vec<f64> = tone.lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(v.len(), 100);
    assert!((v[25] - (2.0 * std::f64::consts::PI * 2.5).sin()).abs() < 1e-12);

    let mix = ok(
        d,
        &[
            "synth",
            "--kind",
            "mixture",
            "--tones",
            "2:1,5:0.5:1",
            "--fs",
            "100",
            "--length",
            "0.5",
        ],
    );
    assert_eq!(mix.lines().count(), 50);
    let qrs = ok(d, &["synth", "--kind", "qrs", "--rate-bpm", "60", "--length", "4"]);
    assert_eq!(qrs.lines().count(), 1000);
    let noise = ok(d, &["synth", "--kind", "noise", "--noise-sd", "0", "--length", "1"]);
    assert!(noise.lines().all(|l| l == "0"));
    fails(d, &["synth", "--kind", "mixture"], 2);
}

#[test]
fn grid_search_reports_every_point() {
    let tmp = chain(40);
    let d = tmp.path();
    fs::write(
        d.join("grid.toml"),
        "grid_train_vf = 25\ngrid_train_not_vf = 25\ngrid_c_values = [1.0, 100.0]\ngrid_gamma_values = [15.0, 45.0]\n",
    )
    .unwrap();
    let out = ok(
        d,
        &["grid-search", "f.bin", "--mask", "mask.txt", "--config", "grid.toml"],
    );
    let points: Vec<&str> = out
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("best"))
        .collect();
    assert_eq!(points.len(), 4);
    assert!(out.contains("best c=1 gamma=15"), "{out}");

    // default holdout sizes exceed this corpus
    let err = fails(d, &["grid-search", "f.bin", "--mask", "mask.txt"], 2);
    assert!(err.contains("insufficient data"), "{err}");
}
