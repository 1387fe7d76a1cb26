use std::path::Path;
use std::process::Command;

use gesturespot::signal::LabeledStream;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gesturespot"))
}

fn generate(out: &Path, seed: &str, duration: &str) -> std::process::Output {
    bin()
        .args(["generate", "--scenario", "GoStraight,TurnLeft,GoStraight", "--duration", duration, "--seed", seed, "--out"])
        .arg(out)
        .output()
        .unwrap()
}

#[test]
fn generate_writes_requested_frames() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.stream");
    let out = generate(&path, "3", "20");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = LabeledStream::load(&path).unwrap();
    assert_eq!(s.len(), 1000);
    assert_eq!(s.truth.as_ref().unwrap().len(), 1000);
    let report: toml::Value = toml::from_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(report["files"][0]["frames"].as_integer(), Some(1000));
    assert_eq!(report["files"][0]["windows"].as_integer(), Some(975));
}

#[test]
fn generate_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for (p, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        assert!(generate(p, seed, "4").status.success());
    }
    let read = |p: &Path| std::fs::read(p).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn zero_duration_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = generate(&dir.path().join("z"), "1", "0");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad scenario"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // unknown flag and missing required setting are usage errors
    assert_eq!(bin().args(["eval", "--bogus"]).status().unwrap().code(), Some(1));
    assert_eq!(bin().args(["eval", "--suite"]).status().unwrap().code(), Some(1));
    assert_eq!(bin().args(["generate", "--scenario", "GoStraight", "--duration", "2", "--noise", "-1"]).arg("--out").arg(dir.path().join("x")).status().unwrap().code(), Some(1));
    // a model directory without a model is a data error
    assert_eq!(bin().args(["eval", "--suite", "--model-dir"]).arg(dir.path()).status().unwrap().code(), Some(2));
    assert_eq!(bin().arg("--help").status().unwrap().code(), Some(0));
}

#[test]
fn config_file_supplies_settings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 9\nrate = 25.0\n").unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let run = |out: &Path, extra: &[&str]| {
        let status = bin().args(["generate", "--scenario", "GoStraight", "--duration", "2", "--config"]).arg(&cfg).args(extra).arg("--out").arg(out).status().unwrap();
        assert!(status.success());
        LabeledStream::load(out).unwrap()
    };
    let from_file = run(&a, &[]);
    assert_eq!(from_file.len(), 50);
    let overridden = run(&b, &["--seed", "10"]);
    assert_eq!(overridden.len(), 50);
    assert_ne!(from_file, overridden);

    std::fs::write(&cfg, "sed = 9\n").unwrap();
    let status = bin().args(["generate", "--scenario", "GoStraight", "--duration", "2", "--config"]).arg(&cfg).arg("--out").arg(&a).status().unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn train_eval_bench_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let model = dir.path().join("model");
    let ok = |c: &mut Command| {
        let out = c.output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    };
    ok(bin().args(["generate", "--training-set", "--duration", "6", "--out"]).arg(&data));
    assert_eq!(std::fs::read_dir(&data).unwrap().count(), 9);
    let train = ok(bin().args(["train", "--data"]).arg(&data).arg("--model-dir").arg(&model));
    let train: toml::Value = toml::from_str(&train).unwrap();
    assert_eq!(train["training"]["transitions"].as_array().unwrap().len(), 4);
    assert!(dir.path().join("model.training.toml").exists());

    let eval = ok(bin().args(["eval", "--scenario", "GoStraight,TurnRight,GoStraight", "--duration", "10", "--model-dir"]).arg(&model));
    let eval: toml::Value = toml::from_str(&eval).unwrap();
    assert_eq!(eval["summary"]["windows"].as_integer(), Some(475));
    assert_eq!(eval["summary"]["raw_errors_outside_band"].as_integer(), Some(0));

    let bench = ok(bin().args(["bench", "--duration", "4", "--with-src", "--model-dir"]).arg(&model));
    let bench: toml::Value = toml::from_str(&bench).unwrap();
    let entries = bench["bench"]["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 2);
    assert_eq!(entries[0]["classifier"].as_str(), Some("crc"));
}
