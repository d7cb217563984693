//! Black-box tests of the `mlstm` binary: exit codes, diagnostics, file
//! outputs, and byte-level determinism of repeated invocations.

use std::path::Path;
use std::process::{Command, Output};

fn mlstm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlstm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_code(output: &Output, expected: i32) {
    assert_eq!(
        output.status.code(),
        Some(expected),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn path_str(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

fn synth_into(dir: &Path, users: usize, seed: u64) {
    let out = mlstm(&[
        "synth",
        "--users",
        &users.to_string(),
        "--mean-edits",
        "5",
        "--separability",
        "1.0",
        "--seed",
        &seed.to_string(),
        "--out",
        &path_str(dir),
    ]);
    assert_code(&out, 0);
}

#[test]
fn version_exits_zero() {
    let out = mlstm(&["--version"]);
    assert_code(&out, 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("mlstm"));
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let out = mlstm(&["frobnicate"]);
    assert_code(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn missing_required_option_is_distinct() {
    let out = mlstm(&["train", "--edits", "somewhere.jsonl"]);
    assert_code(&out, 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--labels"));
}

#[test]
fn unreadable_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = mlstm(&[
        "train",
        "--edits",
        "/nonexistent/edits.jsonl",
        "--labels",
        "/nonexistent/labels.tsv",
        "--vectors",
        "/nonexistent/vectors.txt",
        "--out",
        &path_str(&dir.path().join("m.ckpt")),
    ]);
    assert_code(&out, 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent"));
}

#[test]
fn malformed_edit_log_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    synth_into(dir.path(), 10, 1);
    let edits = dir.path().join("edits.jsonl");
    let mut text = std::fs::read_to_string(&edits).unwrap();
    text.push_str("{\"user_id\":\"u\"}\n");
    let bad_line = text.lines().count();
    std::fs::write(&edits, text).unwrap();
    let out = mlstm(&[
        "train",
        "--edits",
        &path_str(&edits),
        "--labels",
        &path_str(&dir.path().join("labels.tsv")),
        "--vectors",
        &path_str(&dir.path().join("vectors.txt")),
        "--out",
        &path_str(&dir.path().join("m.ckpt")),
    ]);
    assert_code(&out, 5);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains(&format!("line {bad_line}")), "{stderr}");
}

#[test]
fn bad_tau_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    synth_into(dir.path(), 10, 2);
    train_quick(dir.path(), 2);
    let out = mlstm(&[
        "eval",
        "--ckpt",
        &path_str(&dir.path().join("model.ckpt")),
        "--edits",
        &path_str(&dir.path().join("test/edits.jsonl")),
        "--labels",
        &path_str(&dir.path().join("test/labels.tsv")),
        "--vectors",
        &path_str(&dir.path().join("vectors.txt")),
        "--tau",
        "1.5",
    ]);
    assert_code(&out, 5);
}

fn train_quick(dir: &Path, epochs: usize) {
    let out = mlstm(&[
        "train",
        "--edits",
        &path_str(&dir.join("train/edits.jsonl")),
        "--labels",
        &path_str(&dir.join("train/labels.tsv")),
        "--vectors",
        &path_str(&dir.join("vectors.txt")),
        "--epochs",
        &epochs.to_string(),
        "--hidden",
        "3",
        "--seed",
        "5",
        "--out",
        &path_str(&dir.join("model.ckpt")),
        "--history",
        &path_str(&dir.join("history.tsv")),
    ]);
    assert_code(&out, 0);
}

#[test]
fn pipeline_runs_and_is_byte_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        synth_into(dir, 30, 9);
        train_quick(dir, 3);
        let eval = mlstm(&[
            "eval",
            "--ckpt",
            &path_str(&dir.join("model.ckpt")),
            "--edits",
            &path_str(&dir.join("test/edits.jsonl")),
            "--labels",
            &path_str(&dir.join("test/labels.tsv")),
            "--vectors",
            &path_str(&dir.join("vectors.txt")),
            "--tau",
            "0.5,0.8",
            "--report",
            &path_str(&dir.join("eval.tsv")),
        ]);
        assert_code(&eval, 0);
        let stream = mlstm(&[
            "stream",
            "--ckpt",
            &path_str(&dir.join("model.ckpt")),
            "--edits",
            &path_str(&dir.join("test/edits.jsonl")),
            "--labels",
            &path_str(&dir.join("test/labels.tsv")),
            "--vectors",
            &path_str(&dir.join("vectors.txt")),
            "--tau",
            "0.8",
            "--report",
            &path_str(&dir.join("stream.tsv")),
            "--summary",
            &path_str(&dir.join("summary.tsv")),
        ]);
        assert_code(&stream, 0);
        let export = mlstm(&[
            "export",
            "--ckpt",
            &path_str(&dir.join("model.ckpt")),
            "--edits",
            &path_str(&dir.join("test/edits.jsonl")),
            "--labels",
            &path_str(&dir.join("test/labels.tsv")),
            "--vectors",
            &path_str(&dir.join("vectors.txt")),
            "--out",
            &path_str(&dir.join("emb.tsv")),
        ]);
        assert_code(&export, 0);
        let cluster = mlstm(&[
            "cluster",
            "--embeddings",
            &path_str(&dir.join("emb.tsv")),
            "--eps",
            "0.05",
            "--min-pts",
            "3",
            "--out",
            &path_str(&dir.join("clusters.tsv")),
        ]);
        assert_code(&cluster, 0);
    }
    for file in [
        "edits.jsonl",
        "labels.tsv",
        "vectors.txt",
        "model.ckpt",
        "history.tsv",
        "eval.tsv",
        "stream.tsv",
        "summary.tsv",
        "emb.tsv",
        "clusters.tsv",
    ] {
        let left = std::fs::read(a.path().join(file)).unwrap();
        let right = std::fs::read(b.path().join(file)).unwrap();
        assert_eq!(left, right, "{file} differs between identical runs");
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    synth_into(dir.path(), 12, 11);
    std::fs::write(dir.path().join("cfg.json"), r#"{"epochs": 4, "hidden": 3}"#).unwrap();
    // Config supplies epochs=4; the flag overrides to 2.
    let out = mlstm(&[
        "train",
        "--edits",
        &path_str(&dir.path().join("train/edits.jsonl")),
        "--labels",
        &path_str(&dir.path().join("train/labels.tsv")),
        "--vectors",
        &path_str(&dir.path().join("vectors.txt")),
        "--config",
        &path_str(&dir.path().join("cfg.json")),
        "--epochs",
        "2",
        "--out",
        &path_str(&dir.path().join("m.ckpt")),
        "--history",
        &path_str(&dir.path().join("h.tsv")),
    ]);
    assert_code(&out, 0);
    let history = std::fs::read_to_string(dir.path().join("h.tsv")).unwrap();
    assert_eq!(history.lines().count(), 1 + 2, "flag epochs=2 wins over config epochs=4");

    // Without the flag the config value applies.
    let out = mlstm(&[
        "train",
        "--edits",
        &path_str(&dir.path().join("train/edits.jsonl")),
        "--labels",
        &path_str(&dir.path().join("train/labels.tsv")),
        "--vectors",
        &path_str(&dir.path().join("vectors.txt")),
        "--config",
        &path_str(&dir.path().join("cfg.json")),
        "--out",
        &path_str(&dir.path().join("m2.ckpt")),
        "--history",
        &path_str(&dir.path().join("h2.tsv")),
    ]);
    assert_code(&out, 0);
    let history = std::fs::read_to_string(dir.path().join("h2.tsv")).unwrap();
    assert_eq!(history.lines().count(), 1 + 4);

    // Unknown config keys are rejected.
    std::fs::write(dir.path().join("bad.json"), r#"{"epocs": 4}"#).unwrap();
    let out = mlstm(&[
        "train",
        "--edits",
        &path_str(&dir.path().join("train/edits.jsonl")),
        "--labels",
        &path_str(&dir.path().join("train/labels.tsv")),
        "--vectors",
        &path_str(&dir.path().join("vectors.txt")),
        "--config",
        &path_str(&dir.path().join("bad.json")),
        "--out",
        &path_str(&dir.path().join("m3.ckpt")),
    ]);
    assert_code(&out, 5);
}

#[test]
fn eval_rejects_checkpoint_with_mismatched_vectors() {
    let dir = tempfile::tempdir().unwrap();
    synth_into(dir.path(), 10, 3);
    train_quick(dir.path(), 2);
    // A vectors file with the wrong dimension cannot serve this checkpoint.
    std::fs::write(dir.path().join("narrow.txt"), "galaxy 0.1 0.2\n").unwrap();
    let out = mlstm(&[
        "eval",
        "--ckpt",
        &path_str(&dir.path().join("model.ckpt")),
        "--edits",
        &path_str(&dir.path().join("test/edits.jsonl")),
        "--labels",
        &path_str(&dir.path().join("test/labels.tsv")),
        "--vectors",
        &path_str(&dir.path().join("narrow.txt")),
        "--tau",
        "0.5",
    ]);
    assert_code(&out, 5);
}
