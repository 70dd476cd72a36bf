//! End-to-end runs of the binary and configuration layering.

mod common;

use std::path::PathBuf;

use clarify::cli::RunConfig;

#[test]
fn pipeline_outputs_are_byte_identical_across_runs() {
    common::criterion_9().unwrap();
}

#[test]
fn later_layers_override_earlier_ones() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.json");
    std::fs::write(&file, r#"{"hidden": 16, "alpha": 0.25, "seed": 4, "log_dir": "from-file"}"#).unwrap();
    let env = vec![
        ("CLARIFY_ALPHA".to_string(), "0.75".to_string()),
        ("CLARIFY_SEED".to_string(), "9".to_string()),
        ("UNRELATED".to_string(), "x".to_string()),
    ];
    let cli = vec![("seed".to_string(), "12".to_string())];
    let cfg = RunConfig::resolve(Some(&file), env, &cli).unwrap();
    assert_eq!(cfg.hidden, 16, "file beats default");
    assert_eq!(cfg.alpha, 0.75, "environment beats file");
    assert_eq!(cfg.seed, 12, "command line beats environment");
    assert_eq!(cfg.log_dir, PathBuf::from("from-file"));
    assert_eq!(cfg.group_size, RunConfig::default().group_size);
}

#[test]
fn unknown_keys_are_rejected_with_exit_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = common::clarify_bin()
        .args(["gen", "--set", "colour=3", "--out"])
        .arg(dir.path().join("p.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn missing_checkpoint_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let pack = dir.path().join("p.json");
    let st = common::clarify_bin().args(["gen", "--simple", "1", "--medium", "0", "--difficult", "0", "--out"]).arg(&pack).status().unwrap();
    assert!(st.success());
    let out = common::clarify_bin()
        .args(["eval", "--checkpoint"])
        .arg(dir.path().join("none.json"))
        .arg("--pack")
        .arg(&pack)
        .arg("--out")
        .arg(dir.path().join("eval"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn play_refuses_a_non_interactive_stdin() {
    let out = common::clarify_bin()
        .args(["play", "--checkpoint", "x.json", "--pack", "p.json"])
        .stdin(std::process::Stdio::null())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
