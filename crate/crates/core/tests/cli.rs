mod common;

use std::path::Path;
use std::process::Command;

use modclass::dataset::{write_shard, DatasetManifest, MANIFEST_FILE};
use modclass::signal::{IqFrame, ModulationMode};

use common::files::snapshot;

const BIN: &str = env!("CARGO_BIN_EXE_modclass");

struct Output {
    code: i32,
    stdout: String,
    stderr: String,
}

fn modclass(args: &[&str]) -> Output {
    let out = Command::new(BIN)
        .args(args)
        .env_remove("MODCLASS_SEED")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs");
    Output {
        code: out.status.code().expect("exited"),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn ok(args: &[&str]) -> Output {
    let out = modclass(args);
    assert_eq!(out.code, 0, "{args:?}\n{}", out.stderr);
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(out: &Path) {
    ok(&[
        "--threads", "1", "synth", "--modes", "BPSK,QPSK,FM", "--snr-min", "0", "--snr-max", "10",
        "--snr-step", "10", "--frames-per-cell", "10", "--seed", "3", "--out", s(out),
    ]);
}

const TINY: [&str; 12] = [
    "--kernel-size", "3", "--blocks", "1", "--repetition", "1", "--base-filters", "4", "--epochs", "2",
    "--batch-size", "16",
];

fn train(data: &Path, out: &Path, seed: &str) {
    let mut args = vec!["--threads", "1", "train", "--data", s(data), "--seed", seed, "--out", s(out)];
    args.extend(TINY);
    ok(&args);
}

#[test]
fn help_lists_hyperparameters() {
    let out = ok(&["train", "--help"]);
    for flag in [
        "--data", "--kernel-size", "--blocks", "--reduction", "--repetition", "--epochs", "--batch-size", "--lr",
        "--seed", "--out", "--grid", "--no-se",
    ] {
        assert!(out.stdout.contains(flag), "missing {flag}");
    }
    for cmd in ["synth", "train", "eval", "ensemble", "report"] {
        assert!(ok(&["--help"]).stdout.contains(cmd));
    }
}

#[test]
fn default_synth_grid_has_nine_modes_by_26_snrs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    ok(&["synth", "--frames-per-cell", "1", "--out", s(&data)]);
    let manifest = DatasetManifest::load(&data.join(MANIFEST_FILE)).unwrap();
    assert_eq!(manifest.total_frames, 9 * 26);
    let text = std::fs::read_to_string(data.join("run_manifest.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let grid = v["config"]["snr_grid"].as_array().unwrap();
    assert_eq!((grid.first().unwrap(), grid.last().unwrap()), (&(-20).into(), &30.into()));
}

#[test]
fn default_model_is_the_published_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    ok(&[
        "synth", "--modes", "BPSK,FM", "--snr-min", "10", "--snr-max", "10", "--frames-per-cell", "5", "--out",
        s(&data),
    ]);
    let out = dir.path().join("t");
    ok(&["train", "--data", s(&data), "--epochs", "1", "--batch-size", "8", "--out", s(&out)]);
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("run_manifest.json")).unwrap()).unwrap();
    let m = &v["config"]["model"];
    assert_eq!(
        (&m["blocks"], &m["reduction_ratio"], &m["repetition"], &m["kernel_size"]),
        (&4.into(), &1.into(), &2.into(), &9.into())
    );
    assert_eq!(v["config"]["train"]["lr"], 0.001);
}

#[test]
fn pipeline_is_byte_reproducible_with_one_thread() {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| {
        let root = dir.path().join(tag);
        let (data, model, eval) = (root.join("data"), root.join("model"), root.join("eval"));
        synth(&data);
        train(&data, &model, "4");
        ok(&[
            "--threads", "1", "eval", "--data", s(&data), "--checkpoint", s(&model.join("model.ckpt")), "--out",
            s(&eval),
        ]);
        (snapshot(&data), snapshot(&model), snapshot(&eval))
    };
    let a = run("a");
    let b = run("b");
    assert!(a.0.keys().any(|p| p.extension().is_some_and(|e| e == "iqs")));
    assert!(a.1.contains_key(Path::new("model.ckpt")));
    assert!(a.2.contains_key(Path::new("accuracy_by_snr.csv")));
    assert_eq!(a, b);
}

#[test]
fn eval_report_and_ensemble_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data);
    let (m1, m2) = (dir.path().join("m1"), dir.path().join("m2"));
    train(&data, &m1, "1");
    train(&data, &m2, "2");

    let eval = dir.path().join("eval");
    ok(&["eval", "--data", s(&data), "--checkpoint", s(&m1.join("model.ckpt")), "--confusion-snr", "10", "--out", s(&eval)]);
    let summary = std::fs::read(eval.join("summary.json")).unwrap();
    let printed = ok(&["report", "--dir", s(&eval)]).stdout;
    assert_eq!(std::fs::read(eval.join("summary.json")).unwrap(), summary);
    assert_eq!(printed.trim(), String::from_utf8(summary).unwrap().trim());

    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"members": ["m1/model.ckpt", "m2/model.ckpt", "m1/model.ckpt"]}"#).unwrap();
    let ens = dir.path().join("ens");
    ok(&["ensemble", "--spec", s(&spec), "--data", s(&data), "--out", s(&ens)]);
    let members = std::fs::read_to_string(ens.join("members.csv")).unwrap();
    assert_eq!(members.lines().count(), 1 + 3 + 1);
    assert!(members.lines().last().unwrap().starts_with("ensemble,"));
    assert!(ens.join("confusion.csv").exists());

    std::fs::write(&spec, r#"{"members": ["m1/model.ckpt"]}"#).unwrap();
    let single = modclass(&["ensemble", "--spec", s(&spec), "--data", s(&data), "--out", s(&ens)]);
    assert_eq!(single.code, 1);
    assert!(single.stderr.contains("at least 2"), "{}", single.stderr);
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let out = dir.path().join("o");
    assert_eq!(modclass(&["train", "--data", s(&missing), "--out", s(&out)]).code, 1);
    assert_eq!(modclass(&["bogus"]).code, 1);
    assert_eq!(modclass(&["synth", "--snr-min", "10", "--snr-max", "0", "--out", s(&out)]).code, 1);
    assert_eq!(modclass(&["synth", "--modes", "128QAM", "--out", s(&out)]).code, 1);
    let data = dir.path().join("data");
    synth(&data);
    let bad_kernel = modclass(&["train", "--data", s(&data), "--kernel-size", "1", "--epochs", "1", "--out", s(&out)]);
    assert_eq!(bad_kernel.code, 1);
    assert!(bad_kernel.stderr.contains("kernel size"), "{}", bad_kernel.stderr);
}

#[test]
fn non_finite_training_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir(&data).unwrap();
    let modes = [ModulationMode::Bpsk, ModulationMode::Fm];
    let frames: Vec<IqFrame> = (0..40)
        .map(|i| IqFrame {
            i_samples: vec![if i == 3 { f32::NAN } else { (i % 7) as f32 * 0.1 }; 64],
            q_samples: vec![0.5; 64],
            label: modes[i % 2],
            snr_db: 10,
        })
        .collect();
    write_shard(&frames, &modes, &data.join("part-000.iqs")).unwrap();
    let out = dir.path().join("o");
    let mut args = vec!["train", "--data", s(&data), "--out", s(&out)];
    args.extend(TINY);
    let r = modclass(&args);
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert!(r.stderr.contains("non-finite") || r.stderr.contains("NaN") || r.stderr.contains("finite"), "{}", r.stderr);
}
