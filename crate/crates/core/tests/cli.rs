use std::path::Path;
use std::process::{Command, Output};

fn dpcn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpcn")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn toy(dir: &Path) -> String {
    let data = dir.join("data");
    let o = dpcn(&["toygen", "--classes", "2", "--per-class", "12", "--side", "32", "--seed", "3", "--out", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    data.to_str().unwrap().to_owned()
}

#[test]
fn epsilon_out_of_range_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(dir.path());
    let out = dir.path().join("out");
    let o = dpcn(&["build", "--data", &data, "--epsilon", "1.5", "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("epsilon out of range"), "{}", stderr(&o));
    assert!(!out.join("arch.json").exists());
}

#[test]
fn help_lists_subcommands_and_flags() {
    let o = dpcn(&["--help"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    for cmd in ["toygen", "represent", "build", "tune", "train", "eval", "gradcam", "pipeline"] {
        assert!(text.contains(cmd), "missing {cmd}");
    }
    let o = dpcn(&["build", "--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    for flag in ["--data", "--scenario", "--epsilon", "--seed", "--threads", "--out"] {
        assert!(text.contains(flag), "missing {flag}");
    }
}

#[test]
fn unknown_flag_fails() {
    let o = dpcn(&["build", "--bogus"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--bogus"));
}

#[test]
fn missing_dataset_reports_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let o = dpcn(&["represent", "--data", missing.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error["), "{}", stderr(&o));
}

#[test]
fn missing_checkpoint_fails() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(dir.path());
    let ckpt = dir.path().join("absent.dpcn");
    let o = dpcn(&["eval", "--data", &data, "--checkpoint", ckpt.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("absent.dpcn"), "{}", stderr(&o));
}

#[test]
fn represent_then_build_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(dir.path());
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    let o = dpcn(&["represent", "--data", &data, "--seed", "2", "--out", out_s]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("representatives.json")).unwrap()).unwrap();
    let entries = manifest.as_array().unwrap();
    assert_eq!(entries.len(), 2);
    for (k, e) in entries.iter().enumerate() {
        assert_eq!(e["class"].as_u64(), Some(k as u64));
        assert!(!e["ids"].as_array().unwrap().is_empty());
    }
    let o = dpcn(&["build", "--data", &data, "--seed", "2", "--out", out_s]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["arch.json", "model_init.dpcn"] {
        assert!(out.join(f).exists(), "{f}");
    }
}
