use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use semimatch::data::read_container;

fn semimatch(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semimatch")).args(args).current_dir(cwd).output().unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = semimatch(args, cwd);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str], cwd: &Path) -> i32 {
    semimatch(args, cwd).status.code().unwrap()
}

const QUICK: &str = "
[data.shapes]
n_per_class = 40

[train]
epochs = 2
tmi_onset = 1
";

fn quick_config(dir: &Path) -> String {
    let p = dir.join("quick.toml");
    fs::write(&p, QUICK).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn train_writes_reports_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    let args = |out| vec!["train", "-c", &cfg, "--data", "shapes", "--labels-per-class", "4", "--seed", "1", "--out", out];
    let stdout = ok(&args("a"), dir.path());
    assert!(stdout.contains("final accuracy: 0."), "{stdout}");
    for f in ["report.csv", "report.json", "checkpoint.ckpt", "config.toml"] {
        assert!(dir.path().join("a").join(f).exists(), "{f} missing");
    }
    ok(&args("b"), dir.path());
    let read = |d: &str| fs::read(dir.path().join(d).join("report.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_eq!(String::from_utf8(read("a")).unwrap().lines().count(), 3);
}

#[test]
fn alpha_zero_without_guesser_is_the_supervised_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    ok(&["train", "-c", &cfg, "--alpha", "0", "--guesser", "none", "--out", "base"], dir.path());
    let csv = fs::read_to_string(dir.path().join("base/report.csv")).unwrap();
    for row in csv.lines().skip(1) {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!((cols[2], cols[3]), ("0.0", "0.0"), "{row}");
        assert_eq!(cols[1], cols[4], "total differs from labeled CE: {row}");
    }
}

#[test]
fn resumed_training_matches_an_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    ok(&["train", "-c", &cfg, "--epochs", "3", "--out", "straight"], dir.path());
    ok(&["train", "-c", &cfg, "--epochs", "1", "--out", "split"], dir.path());
    ok(&["train", "-c", &cfg, "--epochs", "3", "--out", "split", "--resume", "split/checkpoint.ckpt"], dir.path());
    let read = |d: &str| fs::read(dir.path().join(d).join("report.csv")).unwrap();
    assert_eq!(read("straight"), read("split"));
}

#[test]
fn eval_reproduces_the_final_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    let train = ok(&["train", "-c", &cfg, "--out", "r"], dir.path());
    let eval = ok(&["eval", "--checkpoint", "r/checkpoint.ckpt"], dir.path());
    let acc = |s: &str, key: &str| s.lines().find_map(|l| l.strip_prefix(key)).unwrap()[..6].to_string();
    assert_eq!(acc(&train, "final accuracy: "), acc(&eval, "test accuracy: "));
}

#[test]
fn compare_guessers_emits_paired_curves() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    ok(&["compare-guessers", "-c", &cfg, "--out", "g"], dir.path());
    let csv = fs::read_to_string(dir.path().join("g/guessers.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "epoch,guesser,coverage,precision_all,precision_valid,test_acc");
    let guessers: BTreeSet<&str> = lines.map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(guessers, BTreeSet::from(["confidence", "dtm"]));
    let hash = |leg: &str| {
        let v: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("g").join(leg).join("report.json")).unwrap()).unwrap();
        v["batch_hash"].as_str().unwrap().to_string()
    };
    assert_eq!(hash("dtm"), hash("confidence"));
}

#[test]
fn compare_mi_emits_both_objectives_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out| vec!["compare-mi", "--data", "blobs", "--epochs", "3", "--labels-per-class", "5", "--out", out];
    ok(&args("m1"), dir.path());
    ok(&args("m2"), dir.path());
    let read = |d: &str| fs::read_to_string(dir.path().join(d).join("mi.csv")).unwrap();
    let csv = read("m1");
    assert_eq!(csv.lines().next().unwrap(), "epoch,objective,loss,aligned_acc");
    assert_eq!(csv.lines().filter(|l| l.contains(",triplet,")).count(), 3);
    assert_eq!(csv.lines().filter(|l| l.contains(",single-pair,")).count(), 3);
    assert_eq!(csv, read("m2"));
}

#[test]
fn gen_data_writes_reproducible_containers() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["gen-data", "--kind", "shapes", "--n-per-class", "4", "--out", "s.smds"], dir.path());
    let shapes = read_container(fs::File::open(dir.path().join("s.smds")).unwrap()).unwrap();
    assert_eq!(shapes.len(), 12);

    ok(&["gen-data", "--kind", "blobs", "--classes", "5", "--seed", "3", "--out", "b1.smds"], dir.path());
    ok(&["gen-data", "--kind", "blobs", "--classes", "5", "--seed", "3", "--out", "b2.smds"], dir.path());
    let blobs = read_container(fs::File::open(dir.path().join("b1.smds")).unwrap()).unwrap();
    let labels: BTreeSet<usize> = blobs.samples.iter().map(|s| s.label).collect();
    assert_eq!(labels.len(), 5);
    assert_eq!(fs::read(dir.path().join("b1.smds")).unwrap(), fs::read(dir.path().join("b2.smds")).unwrap());
}

#[test]
fn usage_and_configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("typo.toml"), "[train]\nalhpa = 0.2\n").unwrap();
    assert_eq!(code(&["train", "-c", "typo.toml"], dir.path()), 2);
    assert_eq!(code(&["train", "-c", "missing.toml"], dir.path()), 2);
    assert_eq!(code(&["train", "--tau", "1.5"], dir.path()), 2);
    assert_eq!(code(&["train", "--alpha", "-1"], dir.path()), 2);
    assert_eq!(code(&["gen-data", "--kind", "shapes", "--size", "8", "--out", "x"], dir.path()), 2);
    assert_eq!(code(&["frobnicate"], dir.path()), 2);
    assert_eq!(code(&["train", "--labels-per-class", "1000", "--epochs", "1"], dir.path()), 2);
}

#[test]
fn runtime_failures_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("garbage.ckpt"), b"not a checkpoint").unwrap();
    let cfg = quick_config(dir.path());
    ok(&["train", "-c", &cfg, "--epochs", "1", "--out", "r"], dir.path());
    assert_eq!(code(&["eval", "--checkpoint", "garbage.ckpt", "-c", "r/config.toml"], dir.path()), 1);
}
