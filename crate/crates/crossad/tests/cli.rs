//! End-to-end exercises of the command-line binary: the synth -> train ->
//! score -> eval pipeline, determinism of repeated runs, and error
//! surfacing with proper exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::json;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_crossad"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn crossad");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_json(path: &Path, value: &serde_json::Value) {
    fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
}

fn tiny_synth_spec() -> serde_json::Value {
    json!({
        "length": 768,
        "dims": 3,
        "window_size": 16,
        "anomaly_rate": 0.1,
        "source": {"amplitude": 1.0, "frequency": 1.0, "noise": 0.1,
                   "classes": ["global", "trend"]},
        "target": {"amplitude": 1.5, "frequency": 1.3, "noise": 0.1,
                   "classes": ["seasonal", "shapelet"]},
        "seed": 5
    })
}

fn tiny_run_config(data: &Path, out: &Path) -> serde_json::Value {
    json!({
        "source_dataset": data.join("source"),
        "target_dataset": data.join("target"),
        "output_dir": out,
        "train": {
            "model": {
                "encoder": {"input_dims": 3, "window_size": 16,
                            "channels": [4, 6], "kernel_size": 2,
                            "dilations": [1, 2], "repr_dim": 8},
                "head_hidden": 6, "embed_dim": 4, "disc_hidden": 5,
                "grl_scale": 1.0, "init_seed": 7
            },
            "stride": 4,
            "epochs": 1,
            "batch_size": 8,
            "steps_per_epoch": 4,
            "seed": 7
        }
    })
}

/// synth -> train -> score -> eval with no manual file edits in between.
#[test]
fn pipeline_composes_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = dir.path().join("run");

    let spec_path = dir.path().join("synth.json");
    write_json(&spec_path, &tiny_synth_spec());
    run_ok(bin().args(["synth", "--spec"]).arg(&spec_path).arg("--out").arg(&data));
    assert!(data.join("source/train/src.csv").is_file());
    assert!(data.join("target/test/trg.labels.csv").is_file());
    assert!(data.join("synth_spec.json").is_file());

    let config_path = dir.path().join("run.json");
    write_json(&config_path, &tiny_run_config(&data, &out));
    run_ok(bin().args(["train", "--config"]).arg(&config_path));
    assert!(out.join("model.ckpt").is_file());
    assert!(out.join("model.ckpt.json").is_file());
    assert!(out.join("train_log.csv").is_file());
    assert!(out.join("config.json").is_file());

    let scores_dir = out.join("scores");
    run_ok(
        bin()
            .args(["score", "--checkpoint"])
            .arg(out.join("model.ckpt"))
            .arg("--dataset")
            .arg(data.join("target"))
            .arg("--out")
            .arg(&scores_dir)
            .args(["--stride", "2"]),
    );
    assert!(scores_dir.join("trg.scores.csv").is_file());

    let eval_out = bin()
        .args(["eval", "--scores"])
        .arg(&scores_dir)
        .arg("--dataset")
        .arg(data.join("target"))
        .arg("--out")
        .arg(out.join("report.json"))
        .output()
        .unwrap();
    assert!(eval_out.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let f1 = report["f1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&f1), "f1 {f1} outside [0, 1]");
    let stdout: serde_json::Value =
        serde_json::from_slice(&eval_out.stdout).expect("stdout carries the report JSON");
    assert_eq!(stdout["f1"], report["f1"]);

    let embed_path = out.join("embeddings.csv");
    run_ok(
        bin()
            .args(["export-embeddings", "--checkpoint"])
            .arg(out.join("model.ckpt"))
            .arg("--dataset")
            .arg(data.join("target"))
            .arg("--out")
            .arg(&embed_path)
            .args(["--stride", "8"]),
    );
    let header = fs::read_to_string(&embed_path).unwrap();
    assert!(header.starts_with("entity_id,start,label,provenance,e0"));
}

#[test]
fn repeated_runs_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let spec_path = dir.path().join("synth.json");
    write_json(&spec_path, &tiny_synth_spec());
    run_ok(bin().args(["synth", "--spec"]).arg(&spec_path).arg("--out").arg(&data));

    let mut artifacts: Vec<(Vec<u8>, Vec<u8>, Vec<u8>)> = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let config_path = dir.path().join(format!("run_{run}.json"));
        write_json(&config_path, &tiny_run_config(&data, &out));
        run_ok(
            bin()
                .args(["train", "--config"])
                .arg(&config_path)
                .args(["--seed", "7"]),
        );
        let scores_dir = out.join("scores");
        run_ok(
            bin()
                .args(["score", "--checkpoint"])
                .arg(out.join("model.ckpt"))
                .arg("--dataset")
                .arg(data.join("target"))
                .arg("--out")
                .arg(&scores_dir)
                .args(["--stride", "2"]),
        );
        artifacts.push((
            fs::read(out.join("model.ckpt")).unwrap(),
            fs::read(out.join("train_log.csv")).unwrap(),
            fs::read(scores_dir.join("trg.scores.csv")).unwrap(),
        ));
    }
    assert_eq!(artifacts[0].0, artifacts[1].0, "checkpoints differ");
    assert_eq!(artifacts[0].1, artifacts[1].1, "training logs differ");
    assert_eq!(artifacts[0].2, artifacts[1].2, "score files differ");
}

#[test]
fn missing_entity_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let spec_path = dir.path().join("synth.json");
    write_json(&spec_path, &tiny_synth_spec());
    run_ok(bin().args(["synth", "--spec"]).arg(&spec_path).arg("--out").arg(&data));

    let mut config = tiny_run_config(&data, &dir.path().join("run"));
    config["source_entity"] = json!("nope");
    let config_path = dir.path().join("run.json");
    write_json(&config_path, &config);

    let out = bin()
        .args(["train", "--config"])
        .arg(&config_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("not found"), "stderr: {stderr}");
}

#[test]
fn inject_rejects_short_input_for_segment_types() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("short.csv");
    fs::write(&input, "1.0,2.0\n1.1,2.1\n1.2,2.2\n1.3,2.3\n1.4,2.4\n").unwrap();
    let out = bin()
        .args(["inject", "--input"])
        .arg(&input)
        .args(["--type", "seasonal", "--out"])
        .arg(dir.path().join("out.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("short"), "stderr: {stderr}");
}

#[test]
fn inject_transforms_a_valid_window() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("window.csv");
    let mut text = String::new();
    for t in 0..32 {
        text.push_str(&format!("{},{}\n", (t as f64 * 0.3).sin(), (t as f64 * 0.2).cos()));
    }
    fs::write(&input, &text).unwrap();
    let out_path = dir.path().join("out.csv");
    run_ok(
        bin()
            .args(["inject", "--input"])
            .arg(&input)
            .args(["--type", "global", "--seed", "3", "--out"])
            .arg(&out_path),
    );
    let written = fs::read_to_string(&out_path).unwrap();
    assert_eq!(written.lines().count(), 32);
    assert_ne!(written, text);
}

#[test]
fn eval_reports_perfect_f1_on_label_scores() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let spec_path = dir.path().join("synth.json");
    write_json(&spec_path, &tiny_synth_spec());
    run_ok(bin().args(["synth", "--spec"]).arg(&spec_path).arg("--out").arg(&data));

    let labels: Vec<u8> = fs::read_to_string(data.join("target/test/trg.labels.csv"))
        .unwrap()
        .lines()
        .map(|l| l.trim().parse().unwrap())
        .collect();
    let scores_dir = dir.path().join("scores");
    fs::create_dir_all(&scores_dir).unwrap();
    let mut csv = String::new();
    for (t, l) in labels.iter().enumerate() {
        csv.push_str(&format!("{t},{l}\n"));
    }
    fs::write(scores_dir.join("trg.scores.csv"), csv).unwrap();
    fs::write(
        scores_dir.join("trg.scores.meta.json"),
        serde_json::to_string(&json!({"entity": "trg"})).unwrap(),
    )
    .unwrap();

    let out = run_ok(
        bin()
            .args(["eval", "--scores"])
            .arg(&scores_dir)
            .arg("--dataset")
            .arg(data.join("target")),
    );
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["f1"].as_f64().unwrap(), 1.0);
    assert_eq!(report["auroc_mean"].as_f64().unwrap(), 1.0);
}

#[test]
fn json_errors_flag_emits_machine_readable_errors() {
    let out = bin()
        .args(["train", "--config", "/nonexistent/run.json", "--json-errors"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let payload: serde_json::Value = serde_json::from_str(stderr.trim()).expect("JSON stderr");
    assert!(payload["error"].as_str().unwrap().contains("run.json"));
    assert_eq!(payload["exit_code"], 1);
}
