use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

use dialogq_annotation::{AnnotationService, QuestionnaireDraft, Store};
use dialogq_core::dataset::read_labeled;
use dialogq_core::dialog::Dialog;

fn dialogq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dialogq")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = dialogq(args);
    assert!(
        out.status.success(),
        "dialogq {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn event(user: &str, ts: i64, turn: &str, text: &str) -> String {
    json!({
        "user_id": user,
        "timestamp": ts,
        "user_text": text,
        "system_text": "ok",
        "turn_id": turn,
        "use_case": "weather",
    })
    .to_string()
}

fn write_lines(path: &Path, lines: &[String]) {
    fs::write(path, lines.join("\n") + "\n").unwrap();
}

fn jsonl(text: &str) -> Vec<Value> {
    text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn segment_splits_on_gaps_longer_than_180() {
    let dir = TempDir::new().unwrap();
    let log = dir.path().join("log.jsonl");
    write_lines(
        &log,
        &[
            event("u2", 50, "b1", "play jazz"),
            event("u1", 0, "a1", "weather"),
            event("u1", 180, "a2", "tomorrow"),
            event("u1", 361, "a3", "rain?"),
        ],
    );
    let dialogs = jsonl(&ok(&["segment", p(&log)]));
    let ids: Vec<&str> = dialogs.iter().map(|d| d["dialog_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["u1-0", "u1-361", "u2-50"]);
    assert_eq!(dialogs[0]["turns"].as_array().unwrap().len(), 2);
}

#[test]
fn score_reproduces_the_worked_example() {
    let dir = TempDir::new().unwrap();
    let log = dir.path().join("log.jsonl");
    write_lines(
        &log,
        &[
            event("u1", 0, "t1", "add milk"),
            event("u1", 10, "t2", "add milk please"),
            event("u1", 20, "t3", "thanks"),
        ],
    );
    let dialogs = dir.path().join("dialogs.jsonl");
    ok(&["segment", p(&log), "-o", p(&dialogs)]);
    let scores = dir.path().join("scores.jsonl");
    write_lines(
        &scores,
        &[
            json!({"turn_id": "t1", "score": 0.05}).to_string(),
            json!({"turn_id": "t2", "score": 0.75}).to_string(),
            json!({"turn_id": "t3", "score": 0.01}).to_string(),
        ],
    );
    let rows = jsonl(&ok(&["score", "--dialogs", p(&dialogs), "--scores", p(&scores)]));
    let got: Vec<(String, f64)> = rows
        .iter()
        .map(|r| (r["method"].as_str().unwrap().to_string(), r["score"].as_f64().unwrap()))
        .collect();
    let find = |m: &str| got.iter().find(|(n, _)| n == m).unwrap().1;
    assert!((find("mean") - 0.27).abs() < 0.005);
    assert!((find("last_turn") - 0.01).abs() < 0.005);
    assert!((find("union") - 0.27).abs() < 0.005);
    assert!(rows.iter().all(|r| r["predicted_defect"] == false));

    let table = ok(&["score", "--dialogs", p(&dialogs), "--scores", p(&scores), "--table", "--method", "union"]);
    assert!(table.contains("u1-0"), "{table}");
    assert!(table.contains("0.2700"), "{table}");
}

#[test]
fn exit_codes_distinguish_usage_validation_and_io() {
    let dir = TempDir::new().unwrap();
    assert_eq!(dialogq(&["--help"]).status.code(), Some(0));
    assert_eq!(dialogq(&["segment"]).status.code(), Some(1));
    assert_eq!(dialogq(&["frobnicate"]).status.code(), Some(1));

    let missing = dir.path().join("missing.jsonl");
    assert_eq!(dialogq(&["segment", p(&missing)]).status.code(), Some(2));

    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{\"user_id\": \"u1\"}\n").unwrap();
    let out = dialogq(&["segment", p(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));

    let corpus = dir.path().join("c.jsonl");
    let scores = dir.path().join("s.jsonl");
    let out = dialogq(&["synth", "--n", "8", "--mix", "clean=0.5", "--dialogs", p(&corpus), "--scores", p(&scores)]);
    assert_eq!(out.status.code(), Some(1));
    let no_model = dir.path().join("nowhere");
    let out = dialogq(&["predict", "--model", p(&no_model), "--dialogs", p(&bad), "--scores", p(&bad)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_is_deterministic_per_seed() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str, seed: &str| -> (Vec<u8>, Vec<u8>) {
        let d = dir.path().join(format!("{name}-d.jsonl"));
        let s = dir.path().join(format!("{name}-s.jsonl"));
        ok(&["synth", "--n", "60", "--seed", seed, "--dialogs", p(&d), "--scores", p(&s)]);
        (fs::read(d).unwrap(), fs::read(s).unwrap())
    };
    let a = run("a", "3");
    assert_eq!(a, run("b", "3"));
    assert_ne!(a, run("c", "4"));
    let rows = read_labeled(a.0.as_slice()).unwrap();
    assert_eq!(rows.len(), 60);
    assert_eq!(rows.iter().filter(|r| r.defect).count(), 30);
}

fn synth_pair(dir: &Path, n: usize, seed: u64) -> (PathBuf, PathBuf) {
    let d = dir.join(format!("synth-{seed}.jsonl"));
    let s = dir.join(format!("scores-{seed}.jsonl"));
    ok(&["synth", "--n", &n.to_string(), "--seed", &seed.to_string(), "--dialogs", p(&d), "--scores", p(&s)]);
    (d, s)
}

fn small_grid(dir: &Path) -> PathBuf {
    let grid = dir.join("grid.json");
    fs::write(&grid, r#"{"n_trees": [15], "max_depth": [8], "min_samples_leaf": [1, 3]}"#).unwrap();
    grid
}

#[test]
fn train_predict_evaluate_round_trip() {
    let dir = TempDir::new().unwrap();
    let (train, train_scores) = synth_pair(dir.path(), 160, 1);
    let (test, test_scores) = synth_pair(dir.path(), 40, 2);
    let grid = small_grid(dir.path());
    let train_into = |out: &Path| {
        ok(&[
            "train", "--train", p(&train), "--scores", p(&train_scores), "--grid", p(&grid), "--folds", "3", "--text-dim",
            "64", "--out", p(out),
        ]);
    };
    let a = dir.path().join("model-a");
    let b = dir.path().join("model-b");
    train_into(&a);
    train_into(&b);
    for file in ["manifest.json", "forest.json", "tfidf.json", "params.json", "encoder.json"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file} differs");
    }
    let manifest: Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["n_training_rows"], 160);
    assert!(manifest["selected"].is_object());

    let preds = jsonl(&ok(&["predict", "--model", p(&a), "--dialogs", p(&test), "--scores", p(&test_scores)]));
    assert_eq!(preds.len(), 40);
    assert!(preds.iter().all(|r| r["method"] == "dqm"));

    let report_path = dir.path().join("report.json");
    let table = ok(&[
        "evaluate", "--test", p(&test), "--scores", p(&test_scores), "--model", p(&a), "--json", p(&report_path),
    ]);
    assert!(table.contains("DQM"), "{table}");
    let report: Value = serde_json::from_slice(&fs::read(&report_path).unwrap()).unwrap();
    assert_eq!(report["format"], "eval-report v1");
    assert_eq!(report["n_test"], 40);
    assert_eq!(report["methods"].as_array().unwrap().len(), 5);

    fs::write(a.join("forest.json"), b"{}").unwrap();
    let out = dialogq(&["predict", "--model", p(&a), "--dialogs", p(&test), "--scores", p(&test_scores)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn evaluate_refuses_overlapping_train_and_test() {
    let dir = TempDir::new().unwrap();
    let (train, scores) = synth_pair(dir.path(), 40, 5);
    let grid = small_grid(dir.path());
    let out = dialogq(&[
        "evaluate", "--train", p(&train), "--test", p(&train), "--scores", p(&scores), "--grid", p(&grid), "--folds", "2",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("both train and test"));
}

fn annotated_store(path: &Path) {
    let service = AnnotationService::new(Store::open(path).unwrap());
    let dialogs: Vec<Dialog> = ["shopping", "weather"]
        .iter()
        .flat_map(|uc| {
            (0..5).map(move |i| {
                let user = format!("{uc}-{i}");
                let events = vec![serde_json::from_value(json!({
                    "user_id": user,
                    "timestamp": 10,
                    "user_text": "hello",
                    "system_text": "hi",
                    "turn_id": format!("{user}-t1"),
                    "use_case": uc,
                }))
                .unwrap()];
                Dialog::from_events(format!("{user}-10"), events).unwrap()
            })
        })
        .collect();
    service.create_batch(dialogs, 0.0, 1).unwrap();
    let mut n = 0;
    while let Some(task) = service.claim_next_task("ann").unwrap() {
        let draft: QuestionnaireDraft = serde_json::from_value(json!({
            "turn_ratings": [3],
            "user_satisfaction": if n % 2 == 0 { 2 } else { 5 },
            "goal_count": "one",
            "goal_progression": "full_progress",
            "goal_completion": "all_completed",
            "goal_friction": "no_friction",
            "coherence": "all_made_sense",
            "sentiment": "neutral",
        }))
        .unwrap();
        service.submit_annotation(&task.task_id, draft).unwrap();
        n += 1;
    }
    assert_eq!(n, 10);
}

#[test]
fn export_splits_store_by_use_case() {
    let dir = TempDir::new().unwrap();
    let store = dir.path().join("store.jsonl");
    annotated_store(&store);
    let train = dir.path().join("train.jsonl");
    let test = dir.path().join("test.jsonl");
    ok(&[
        "export", "--store", p(&store), "-o", p(&train), "--test-fraction", "0.4", "--test-output", p(&test),
    ]);
    let train = read_labeled(fs::read(train).unwrap().as_slice()).unwrap();
    let test = read_labeled(fs::read(test).unwrap().as_slice()).unwrap();
    assert_eq!(train.len() + test.len(), 10);
    for uc in ["shopping", "weather"] {
        assert_eq!(test.iter().filter(|r| r.dialog.use_case == uc).count(), 2);
    }
    assert!(train.iter().chain(&test).all(|r| r.defect == (r.rating.unwrap() <= 3)));

    let out = dialogq(&["agreement", "--store", p(&store)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dual"));
    let table = ok(&["correlate", "--store", p(&store)]);
    assert!(table.contains("completion") || table.contains("Completion"), "{table}");

    let missing = dir.path().join("none.jsonl");
    assert_eq!(dialogq(&["export", "--store", p(&missing), "-o", p(&missing)]).status.code(), Some(2));
}
