use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use wits::cascade::cascade_classify;
use wits::cli::{hash_tree, RunManifest, MANIFEST_FILE};
use wits::dataset::{load_annotations, LoadOptions};

fn wits(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wits")).current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = wits(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Hashes of every artifact except the manifest, which records timings.
fn artifacts(dir: &Path) -> BTreeMap<String, String> {
    let mut h = BTreeMap::new();
    hash_tree(dir, dir, &mut h).unwrap();
    h.remove(MANIFEST_FILE);
    h
}

const QUICK: &str = r#"{
  "protocol": {
    "classifier": { "network": "tiny", "train": { "iterations": 20, "batch_size": 16, "init": { "kind": "he" } } },
    "split": { "train_per_class": 40, "test_per_class": 10, "validation_total": 40 }
  }
}"#;

#[test]
fn synth_is_reproducible_and_labels_follow_the_cascade() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["--seed", "7", "--workers", "1", "--out", "a", "synth", "--subjects", "3", "--frames", "30", "--crop-size", "32"]);
    ok(d, &["--seed", "7", "--workers", "3", "--out", "b", "synth", "--subjects", "3", "--frames", "30", "--crop-size", "32"]);
    assert_eq!(artifacts(&d.join("a")), artifacts(&d.join("b")));
    ok(d, &["--seed", "8", "--out", "c", "synth", "--subjects", "3", "--frames", "30", "--crop-size", "32"]);
    assert_ne!(artifacts(&d.join("a")), artifacts(&d.join("c")));

    let manifest: RunManifest = serde_json::from_slice(&std::fs::read(d.join("a").join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(manifest.command, "synth");
    assert_eq!(manifest.config.synth.subjects, 3);
    assert_eq!(manifest.outputs.len(), artifacts(&d.join("a")).len());

    ok(d, &["--out", "l", "label", "a/annotations.jsonl"]);
    let records = load_annotations(&d.join("a/annotations.jsonl"), &LoadOptions::default()).unwrap();
    let labels = std::fs::read_to_string(d.join("l/labels.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = labels.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), records.len());
    for (r, line) in records.iter().zip(&lines) {
        let expected = cascade_classify(&r.actions, r.posture, r.head);
        assert_eq!(line["label"], serde_json::to_value(expected).unwrap());
    }
    let stats: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("l/label_stats.json")).unwrap()).unwrap();
    let by_rule: u64 = stats["by_rule"].as_array().unwrap().iter().map(|p| p[1].as_u64().unwrap()).sum();
    assert_eq!(by_rule, records.len() as u64);
    assert_eq!(stats["total"].as_u64().unwrap(), records.len() as u64);
}

#[test]
fn label_edge_files() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("empty.jsonl"), "").unwrap();
    ok(d, &["--out", "e", "label", "empty.jsonl"]);
    assert_eq!(std::fs::read_to_string(d.join("e/labels.jsonl")).unwrap(), "");
    let stats: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("e/label_stats.json")).unwrap()).unwrap();
    assert_eq!(stats["total"], 0);

    ok(d, &["--seed", "1", "--out", "s", "synth", "--subjects", "2", "--frames", "20", "--crop-size", "32"]);
    let writing: String = std::fs::read_to_string(d.join("s/annotations.jsonl"))
        .unwrap()
        .lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            v["actions"]["writing"] = true.into();
            format!("{v}\n")
        })
        .collect();
    std::fs::write(d.join("writing.jsonl"), writing).unwrap();
    ok(d, &["--out", "w", "label", "writing.jsonl"]);
    let stats: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("w/label_stats.json")).unwrap()).unwrap();
    assert_eq!(stats["interested"], 40);
    assert_eq!(stats["not_interested"], 0);
}

#[test]
fn usage_errors_exit_one_and_leave_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = wits(d, &["--out", "x", "synth", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
    assert_eq!(wits(d, &["--out", "x", "train", "knn", "--data", "."]).status.code(), Some(1));
    assert_eq!(wits(d, &["--out", "x", "synth", "--overlap", "2"]).status.code(), Some(1));

    std::fs::create_dir(d.join("broken")).unwrap();
    std::fs::write(d.join("broken/annotations.jsonl"), "{not json\n").unwrap();
    assert_eq!(wits(d, &["--out", "x", "train", "svm", "--data", "broken"]).status.code(), Some(2));
    let left: Vec<_> = std::fs::read_dir(d).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(left, vec![std::ffi::OsString::from("broken")]);
}

#[test]
fn eval_sequence_length_has_three_rows_and_reruns_from_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("quick.json"), QUICK).unwrap();
    ok(d, &["--seed", "2", "--out", "data", "synth", "--subjects", "3", "--frames", "80", "--crop-size", "32"]);
    let text = ok(d, &["--config", "quick.json", "--out", "ev", "eval", "--data", "data", "--protocol", "sequence_length"]);
    let rows: Vec<&str> = text.lines().skip(2).take(3).collect();
    assert!(rows[0].trim_start().starts_with("1 ") && rows[1].trim_start().starts_with("2 ") && rows[2].trim_start().starts_with("4 "));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("ev/report.json")).unwrap()).unwrap();
    assert_eq!(report["runs"].as_array().unwrap().len(), 3);
    assert!(ok(d, &["report", "ev/report.json"]).contains("sequence_length"));

    ok(d, &["--config", "ev/run_manifest.json", "--out", "again", "eval", "--data", "data", "--protocol", "sequence_length"]);
    assert_eq!(artifacts(&d.join("ev")), artifacts(&d.join("again")));
}

#[test]
fn render_without_scores_is_transparent() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("scores.jsonl"), "[]\n[]\n").unwrap();
    ok(d, &["--out", "r", "render", "--scores", "scores.jsonl", "--width", "64", "--height", "48"]);
    for i in 0..2 {
        let img = image::open(d.join(format!("r/frames/frame_{i:05}.png"))).unwrap().to_rgba8();
        assert_eq!(img.dimensions(), (64, 48));
        assert!(img.pixels().all(|p| p.0[3] == 0));
    }
}

#[test]
fn train_then_render_from_model() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("quick.json"), QUICK).unwrap();
    ok(d, &["--seed", "5", "--out", "data", "synth", "--subjects", "3", "--frames", "40", "--crop-size", "32"]);
    ok(d, &["--config", "quick.json", "--out", "m", "train", "svm", "--data", "data"]);
    let text = ok(d, &["--out", "e", "eval", "--data", "data", "--model", "m/model.wsvm"]);
    assert!(text.contains("120 samples"));
    ok(d, &["--out", "r", "render", "--model", "m/model.wsvm", "--data", "data", "--limit", "4"]);
    let sidecar = std::fs::read_to_string(d.join("r/scores.jsonl")).unwrap();
    assert_eq!(sidecar.lines().count(), 4);
    let first: serde_json::Value = serde_json::from_str(sidecar.lines().next().unwrap()).unwrap();
    assert_eq!(first["scores"].as_array().unwrap().len(), 3);
}
