use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use bitdnn::data::{write_cube, HsiCube, LabelMap};

fn bitdnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bitdnn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const SYNTHETIC: &str = r#"{
    "dataset": {"kind": "synthetic", "height": 8, "width": 9, "bands": 16},
    "output_dir": "run",
    "seed": 4,
    "patch_size": 5,
    "stage2": {"conv3_filters": 6, "capsules": 4, "capsule_dim": 4, "decoder_hidden": 16},
    "train": {"epochs": 2}
}"#;

#[test]
fn usage_errors_exit_1() {
    assert_eq!(bitdnn(&["bogus"]).status.code(), Some(1));
    assert_eq!(bitdnn(&["train"]).status.code(), Some(1));
    assert_eq!(bitdnn(&["train", "--config", "x.json", "--variant", "model9"]).status.code(), Some(1));
    assert_eq!(bitdnn(&["--help"]).status.code(), Some(0));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"dataset": {"kind": "synthetic"}, "epochz": 3}"#);
    let out = bitdnn(&["train", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epochz"));
}

#[test]
fn missing_cube_exits_2_without_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"dataset": {"kind": "files", "cube": "nope.json", "labels": "nope.csv"}, "output_dir": "run"}"#,
    );
    let out = bitdnn(&["train", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("run").join("model.ckpt").exists());
    assert!(!dir.path().join("run").join("model.ckpt.partial").exists());
}

#[test]
fn train_evaluate_predict_interpret() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SYNTHETIC);
    let run = dir.path().join("run");
    let out = bitdnn(&["train", "--config", &cfg, "--variant", "model2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["model.ckpt", "history.csv", "resolved_config.json", "split.json"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let history = fs::read_to_string(run.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);
    let resolved = fs::read_to_string(run.join("resolved_config.json")).unwrap();
    assert!(resolved.contains("\"segmentation\": true") && resolved.contains("\"enhancement\": false"));

    let ckpt = run.join("model.ckpt");
    let ckpt = ckpt.to_str().unwrap();
    let out = bitdnn(&["predict", "--config", &cfg, "--checkpoint", ckpt]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let map = LabelMap::read_csv(run.join("map.csv")).unwrap();
    assert_eq!((map.height(), map.width()), (8, 9));
    let pgm = fs::read(run.join("map.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n9 8\n255\n"));
    assert_eq!(pgm.len(), "P5\n9 8\n255\n".len() + 72);

    let map_path = run.join("map.csv");
    let split = run.join("split.json");
    let out = bitdnn(&[
        "evaluate",
        "--config",
        &cfg,
        "--checkpoint",
        ckpt,
        "--split",
        split.to_str().unwrap(),
        "--subset",
        "all",
        "--compare",
        map_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["metrics"]["pixels"], 72);
    assert_eq!(metrics["comparison"]["note"], "no discordant pairs");

    let out = bitdnn(&["interpret", "--config", &cfg, "--checkpoint", ckpt]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["interpret.json", "stage1_features.csv", "class_lengths.csv", "conv3_weights.csv"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let features = fs::read_to_string(run.join("stage1_features.csv")).unwrap();
    assert!(features.starts_with("row,col,label,b1_1"));
    assert_eq!(features.lines().count(), 73);
}

#[test]
fn checkpoint_from_another_sensor_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SYNTHETIC);
    assert!(bitdnn(&["train", "--config", &cfg]).status.success());
    let other = write_config(dir.path(), &SYNTHETIC.replace("\"bands\": 16", "\"bands\": 12"));
    let ckpt = dir.path().join("run").join("model.ckpt");
    let out = bitdnn(&["predict", "--config", &other, "--checkpoint", ckpt.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn files_dataset_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let wl: Vec<f64> = (0..10).map(|i| 450.0 + 50.0 * i as f64).collect();
    let (h, w) = (6, 6);
    let data: Vec<f32> = (0..h * w * 10).map(|i| ((i * 7) % 13) as f32 / 13.0).collect();
    write_cube(&HsiCube::new(h, w, wl, data).unwrap(), dir.path().join("cube.json")).unwrap();
    let labels: Vec<u32> = (0..h * w).map(|i| (i % 3) as u32).collect();
    fs::write(
        dir.path().join("labels.csv"),
        LabelMap::new(h, w, labels).unwrap().to_csv_string(),
    )
    .unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{
            "dataset": {"kind": "files", "cube": "cube.json", "labels": "labels.csv"},
            "patch_size": 5,
            "stage2": {"conv3_filters": 4, "capsules": 2, "capsule_dim": 2, "decoder_hidden": 8},
            "train": {"epochs": 1}
        }"#,
    );
    let out = bitdnn(&["train", "--config", &cfg, "--out", dir.path().join("elsewhere").to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("elsewhere").join("model.ckpt").exists());
}

#[test]
fn gradcheck_exit_codes() {
    let out = bitdnn(&["gradcheck"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gc.json");
    fs::write(&path, r#"{"samples": 10, "corrupt_gradient": true}"#).unwrap();
    let out = bitdnn(&["gradcheck", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}
