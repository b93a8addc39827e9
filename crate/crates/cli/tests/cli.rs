use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rescue_mind::agents::{generate_dataset, DatasetConfig, Scenario};
use rescue_mind::neural::{train_transformer, Checkpoint, TrainConfig, TransformerArch, TransformerModel};
use rescue_mind::trajectory::{deserialize, serialize, to_area_sequence, EventKind};
use rescue_mind::world::World;
use serde_json::Value;
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rescue-mind"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path, count: usize, seed: u64) {
    ok(&[
        "gen-data",
        "--out",
        s(dir),
        "--count",
        &count.to_string(),
        "--seed",
        &seed.to_string(),
    ]);
}

fn listing(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn gen_data_is_reproducible_and_counted() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    gen(&a, 10, 42);
    gen(&b, 10, 42);
    let files = listing(&a);
    assert_eq!(files, listing(&b));
    assert_eq!(files.len(), 11);
    assert!(files.iter().any(|(n, _)| n == "manifest.json"));
    let trajs: Vec<_> = files
        .iter()
        .filter(|(n, _)| n.starts_with("traj_") && n.ends_with(".jsonl"))
        .map(|(_, bytes)| deserialize(std::str::from_utf8(bytes).unwrap()).unwrap())
        .collect();
    assert_eq!(trajs.len(), 10);

    let manifest: Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    let summary = &manifest["summary"];
    let starts = |label: &str| {
        trajs
            .iter()
            .filter(|t| t.labels.as_ref().unwrap()[0].as_str() == label)
            .count() as u64
    };
    assert_eq!(summary["count"], 10);
    assert_eq!(summary["selective_starts"], starts("selective"));
    assert_eq!(summary["opportunistic_starts"], starts("opportunistic"));
    let observations: usize = trajs.iter().map(|t| t.observations.len()).sum();
    let selective = summary["selective_observations"].as_u64().unwrap();
    let opportunistic = summary["opportunistic_observations"].as_u64().unwrap();
    assert_eq!((selective + opportunistic) as usize, observations);
    for (entry, t) in manifest["files"].as_array().unwrap().iter().zip(&trajs) {
        assert_eq!(entry["content_hash"], t.content_hash());
    }
}

#[test]
fn trained_checkpoint_matches_the_library() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    gen(&data, 20, 5);
    let ck = tmp.path().join("models/transformer.ck");
    let stdout = ok(&[
        "train",
        "--model",
        "transformer",
        "--data",
        s(&data),
        "--out",
        s(&ck),
        "--epochs",
        "10",
        "--seed",
        "9",
    ]);
    assert!(stdout.contains("8102 parameters"), "{stdout}");
    let log = fs::read_to_string(tmp.path().join("models/transformer.ck.loss.log")).unwrap();
    assert_eq!(log.lines().count(), 10);
    assert!(log.lines().all(|l| l.split('\t').nth(1).unwrap().parse::<f64>().unwrap().is_finite()));

    let bytes = fs::read(&ck).unwrap();
    let loaded = Checkpoint::load(&ck).unwrap();
    assert_eq!(loaded.to_bytes(), bytes);

    let sc = Scenario::new(World::default_map(), "none").unwrap();
    let cfg = DatasetConfig {
        count: 20,
        seed: 5,
        ..DatasetConfig::default()
    };
    let seqs: Vec<Vec<usize>> = generate_dataset(&sc, &cfg).unwrap().0.iter().map(to_area_sequence).collect();
    let train = TrainConfig {
        epochs: 10,
        seed: 9,
        ..TrainConfig::default()
    };
    let mut model = TransformerModel::new(TransformerArch::default(), 9);
    train_transformer(&mut model, &seqs, &train).unwrap();
    assert_eq!(loaded.model.params().tensors, rescue_mind::neural::SavedModel::Transformer(model).params().tensors);
}

#[test]
fn failures_map_to_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nowhere");
    let out = run(&["train", "--model", "time2vec", "--data", s(&missing), "--out", s(&tmp.path().join("m"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    let out = run(&["evaluate", "--data", s(&missing), "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());

    let data = tmp.path().join("data");
    gen(&data, 5, 1);
    let cfg = tmp.path().join("hot.json");
    fs::write(&cfg, r#"{"train":{"learning_rate":1e12}}"#).unwrap();
    let out = run(&[
        "train",
        "--model",
        "transformer",
        "--data",
        s(&data),
        "--out",
        s(&tmp.path().join("hot.ck")),
        "--epochs",
        "2",
        "--config",
        s(&cfg),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverge"));

    fs::write(&cfg, r#"{"train":{"learning_rate":-1}}"#).unwrap();
    let out = run(&["train", "--model", "decay", "--data", s(&data), "--out", s(&tmp.path().join("x.ck")), "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn evaluate_report_agrees_with_stdout() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    gen(&data, 8, 3);
    let csv_path = tmp.path().join("report.csv");
    let stdout = ok(&["evaluate", "--data", s(&data), "--methods", "evidence", "--out", s(&csv_path)]);
    let csv = fs::read_to_string(&csv_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("table,method,task,correct,total,accuracy"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(r[1], "Evidence accumulation");
        let (correct, total): (f64, f64) = (r[3].parse().unwrap(), r[4].parse().unwrap());
        assert_eq!(r[5], format!("{:.2}%", 100.0 * correct / total));
        assert!(stdout.contains(r[5]), "{} missing from\n{stdout}", r[5]);
    }
    let table_rows = stdout.lines().filter(|l| l.starts_with("Evidence accumulation")).count();
    assert_eq!(table_rows, 1);

    let json: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json["tables"].as_array().unwrap().len(), 1);
    assert_eq!(json["trajectories"], 8);
}

fn predictions(args: &[&str]) -> Vec<Value> {
    ok(args).lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn sums_to_one(v: &Value) -> bool {
    let total: f64 = v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
    (total - 1.0).abs() < 1e-9
}

#[test]
fn predict_emits_one_record_per_decision_point() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    gen(&data, 3, 8);
    let traj = data.join("traj_00001.jsonl");
    let inspect = ok(&["inspect", "--trajectory", s(&traj)]);
    let points: usize = inspect
        .lines()
        .find_map(|l| l.strip_prefix("decision points (")?.strip_suffix("):")?.parse().ok())
        .unwrap();
    assert!(points > 0);

    let triage = predictions(&["predict", "--method", "evidence", "--trajectory", s(&traj)]);
    assert_eq!(triage.len(), points);
    assert!(triage.iter().all(|r| sums_to_one(&r["belief"])));

    let location = predictions(&["predict", "--method", "evidence", "--task", "location", "--trajectory", s(&traj)]);
    assert_eq!(location.len(), points);
    assert!(location.iter().all(|r| r["belief"].is_null() || sums_to_one(&r["belief"])));

    let ck = tmp.path().join("t2v.ck");
    ok(&["train", "--model", "time2vec", "--data", s(&data), "--out", s(&ck), "--epochs", "1"]);
    let neural = predictions(&["predict", "--method", "neural", "--checkpoint", s(&ck), "--trajectory", s(&traj)]);
    assert_eq!(neural.len(), points);
    assert!(neural.iter().all(|r| sums_to_one(&r["probabilities"])));

    let out = run(&["predict", "--method", "guesswork", "--trajectory", s(&traj)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn predict_without_evidence_stays_uniform() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    gen(&data, 1, 12);
    let mut t = deserialize(&fs::read_to_string(data.join("traj_00000.jsonl")).unwrap()).unwrap();
    t.events.retain(|e| matches!(e.kind, EventKind::AreaEnter(_) | EventKind::AreaExit(_)));
    t.observations.iter_mut().for_each(|o| o.fov_victims.clear());
    let path: PathBuf = tmp.path().join("quiet.jsonl");
    fs::write(&path, serialize(&t)).unwrap();

    let records = predictions(&["predict", "--method", "evidence", "--trajectory", s(&path)]);
    assert!(!records.is_empty());
    for r in &records {
        assert_eq!(r["belief"], serde_json::json!([0.5, 0.5]));
        assert_eq!(r["predicted"], "selective");
    }
}
