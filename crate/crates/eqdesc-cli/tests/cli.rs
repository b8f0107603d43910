//! End-to-end checks of the binary: exit codes, output shapes, and a small
//! generate/train/describe/eval pass through a real process.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_eqdesc"))
}

fn tmpdir(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("eqdesc-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn help_exits_zero() {
    let out = bin().arg("--help").output().unwrap();
    assert!(out.status.success());
    assert!(stdout(&out).contains("gen-data"));
}

#[test]
fn missing_subcommand_is_usage_error() {
    let out = bin().output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_suite_is_usage_error() {
    let out = bin().args(["check", "--suite", "bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("unknown suite"));
}

#[test]
fn metrics_suite_passes_with_pass_lines() {
    let out = bin().args(["check", "--suite", "metrics"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.lines().all(|l| l.starts_with("PASS")), "{text}");
}

#[test]
fn describe_malformed_image_exits_two_with_message() {
    let dir = tmpdir("badimg");
    let img = dir.join("bad.pgm");
    std::fs::write(&img, b"garbage").unwrap();
    let out = bin()
        .args([
            "describe",
            "--image",
            img.to_str().unwrap(),
            "--checkpoint",
            dir.join("none.ckpt").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!stderr(&out).is_empty());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn bad_thread_env_is_usage_error() {
    let out = bin()
        .env("EQDESC_THREADS", "lots")
        .args(["check", "--suite", "metrics"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_train_describe_eval_end_to_end() {
    let data = tmpdir("e2e-data");
    let run = tmpdir("e2e-run");
    let small: &[&str] = &[
        "--set",
        "train_count=10",
        "--set",
        "val_count=3",
        "--set",
        "test_count=3",
        "--set",
        "img_height=32",
        "--set",
        "img_width=128",
        "--set",
        "enc_channels=6,12",
        "--set",
        "feature_dim=16",
        "--set",
        "embed_dim=16",
        "--set",
        "hidden_dim=24",
        "--set",
        "attn_dim=16",
        "--set",
        "batch_size=5",
        "--set",
        "epochs=1",
        "--set",
        "min_count=1",
    ];

    let out = bin()
        .args(["gen-data", "--out", data.to_str().unwrap()])
        .args(small)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("generated 16 records"));

    let out = bin()
        .args([
            "train",
            "--data",
            data.to_str().unwrap(),
            "--out",
            run.to_str().unwrap(),
        ])
        .args(small)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(run.join("best.ckpt").exists());

    // describe is deterministic across invocations
    let img = data.join("images/00000.pgm");
    let ckpt = run.join("best.ckpt");
    let d1 = bin()
        .args([
            "describe",
            "--image",
            img.to_str().unwrap(),
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--beam",
            "2",
        ])
        .output()
        .unwrap();
    assert_eq!(d1.status.code(), Some(0), "{}", stderr(&d1));
    let d2 = bin()
        .args([
            "describe",
            "--image",
            img.to_str().unwrap(),
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--beam",
            "2",
        ])
        .output()
        .unwrap();
    assert_eq!(stdout(&d1), stdout(&d2));

    let report = run.join("report.jsonl");
    let out = bin()
        .args([
            "eval",
            "--data",
            data.to_str().unwrap(),
            "--split",
            "test",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--beam",
            "2",
            "--out",
            report.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("bleu-4"));
    let lines = std::fs::read_to_string(&report).unwrap();
    assert_eq!(lines.lines().count(), 1 + 3, "summary plus one line per example");

    std::fs::remove_dir_all(&data).unwrap();
    std::fs::remove_dir_all(&run).unwrap();
}
