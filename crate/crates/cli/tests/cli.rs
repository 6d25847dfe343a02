use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qjudge"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str]) -> (i32, String) {
    let out = run(args);
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const QUICK: [&str; 4] = ["--epochs", "20", "--batch-size", "16"];

fn train(dir: &Path, name: &str, dataset: &str, kind: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let d = data(dataset);
    let mut args = vec!["train", "--data", s(&d), "--kind", kind, "--out", s(&out)];
    args.extend(QUICK);
    args.extend(extra);
    ok(&args);
    out
}

#[test]
fn train_auto_records_cv_choice_and_writes_side_files() {
    let dir = tempfile::tempdir().unwrap();
    let model = train(dir.path(), "ls.json", "absolute.jsonl", "ls", &["--gamma", "auto", "--folds", "5"]);
    let m = json(&model);
    let cv = &m["metadata"]["cv"];
    let grid: Vec<f64> = cv["grid"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(grid, vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0]);
    let chosen = cv["chosen_gamma"].as_f64().unwrap();
    assert!(grid.contains(&chosen));
    assert_eq!(m["gamma"].as_f64().unwrap(), chosen);
    assert_eq!(cv["fold_losses"].as_array().unwrap().len(), 7);

    let cfg = json(&dir.path().join("ls.config.json"));
    assert_eq!(cfg["command"], "train");
    assert_eq!(cfg["args"]["gamma"], "auto");
    assert_eq!(cfg["args"]["folds"], 5);
    assert_eq!(cfg["args"]["lr"], 0.01);
    let summary = std::fs::read_to_string(dir.path().join("ls.summary.txt")).unwrap();
    assert!(summary.contains("5-fold cross-validation"), "{summary}");
}

#[test]
fn mn_without_base_probs_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(data("categorical.jsonl")).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut rec: Value = serde_json::from_str(&lines[2]).unwrap();
    rec.as_object_mut().unwrap().remove("base_probs");
    lines[2] = rec.to_string();
    let input = dir.path().join("no_probs.jsonl");
    std::fs::write(&input, lines.join("\n") + "\n").unwrap();

    let out = dir.path().join("m.json");
    let (status, err) = code(&["train", "--data", s(&input), "--kind", "mn", "--out", s(&out)]);
    assert_eq!(status, 2);
    assert!(err.contains("missing field `base_probs`"), "{err}");
    assert!(err.contains("line 3"), "{err}");
    // LS needs only the base score
    ok(&["train", "--data", s(&input), "--kind", "ls", "--gamma", "0", "--epochs", "2", "--out", s(&out)]);
}

#[test]
fn btl2_on_rankings_needs_and_uses_pair_expansion() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b.json");
    let d = data("ranking.jsonl");
    let (status, err) = code(&["train", "--data", s(&d), "--kind", "btl2", "--out", s(&out)]);
    assert_eq!(status, 2, "{err}");
    assert!(err.contains("--expand-pairs"), "{err}");

    let model = train(dir.path(), "b.json", "ranking.jsonl", "btl2", &["--expand-pairs", "--gamma", "0.1"]);
    // 30 rankings of 4 items: 6 pairs each
    assert_eq!(json(&model)["metadata"]["training_size"], 180);
}

#[test]
fn evaluate_reports_the_metrics_of_each_kind() {
    let dir = tempfile::tempdir().unwrap();
    let ls = train(dir.path(), "ls.json", "categorical.jsonl", "ls", &["--gamma", "0.01"]);
    let test = data("categorical.jsonl");
    let report_path = dir.path().join("ls_report.json");
    ok(&["evaluate", "--model", s(&ls), "--test-data", s(&test), "--out", s(&report_path)]);
    let r = json(&report_path);
    for key in ["mse", "mae", "accuracy", "pearson_r", "spearman_rho", "kendall_tau"] {
        assert!(r[key].is_f64(), "LS report lacks {key}: {r}");
    }
    assert!(r["confusion"].is_object());
    assert!(dir.path().join("ls_report.config.json").exists());

    let btl2 = train(dir.path(), "b2.json", "two_headed.jsonl", "btl2", &["--gamma", "0.01"]);
    let test = data("two_headed.jsonl");
    let out = ok(&["evaluate", "--model", s(&btl2), "--test-data", s(&test), "--per-example"]);
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["accuracy", "precision", "recall", "f1", "pearson_r", "spearman_rho", "kendall_tau"] {
        assert!(r[key].is_f64(), "BTL2 report lacks {key}: {r}");
    }
    assert_eq!(r["per_example"].as_array().unwrap().len(), 60);

    let mn = train(dir.path(), "mn.json", "categorical.jsonl", "mn", &["--gamma", "1"]);
    let test = data("categorical.jsonl");
    let out = ok(&["evaluate", "--model", s(&mn), "--test-data", s(&test)]);
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(r["accuracy"].is_f64() && r["confusion"].is_object());

    let pl = train(dir.path(), "pl.json", "ranking.jsonl", "pl", &["--gamma", "1"]);
    let test = data("ranking.jsonl");
    let out = ok(&["evaluate", "--model", s(&pl), "--test-data", s(&test)]);
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(r["accuracy"].is_f64());
}

#[test]
fn dimension_and_kind_mismatches_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let model = train(dir.path(), "ls.json", "absolute.jsonl", "ls", &["--gamma", "0"]);
    let narrow = dir.path().join("narrow.jsonl");
    std::fs::write(
        &narrow,
        "{\"dimension\":3,\"task\":\"absolute\",\"source\":\"\"}\n{\"id\":\"a\",\"embedding\":[1.0,2.0,3.0],\"base_score\":2.0,\"human_score\":2.0}\n",
    )
    .unwrap();
    let (status, err) = code(&["evaluate", "--model", s(&model), "--test-data", s(&narrow)]);
    assert_eq!(status, 2);
    assert!(err.contains("dimension mismatch"), "{err}");

    let pairs = data("relative.jsonl");
    let (status, err) = code(&["evaluate", "--model", s(&model), "--test-data", s(&pairs)]);
    assert_eq!(status, 2);
    assert!(err.contains("incompatible"), "{err}");
}

#[test]
fn predict_writes_one_record_per_input_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = data("unlabeled.jsonl");
    let ls = train(dir.path(), "ls.json", "categorical.jsonl", "ls", &["--gamma", "0.01"]);
    let out = ok(&["predict", "--model", s(&ls), "--data", s(&inputs)]);
    let lines: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let ids: Vec<&str> = lines.iter().map(|v| v["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["u1", "u2", "u3"]);
    assert!(lines.iter().all(|v| v["score"].is_f64()));

    let mn = train(dir.path(), "mn.json", "categorical.jsonl", "mn", &["--gamma", "1"]);
    let path = dir.path().join("mn_pred.jsonl");
    ok(&["predict", "--model", s(&mn), "--data", s(&inputs), "--out", s(&path)]);
    for line in std::fs::read_to_string(&path).unwrap().lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        let total: f64 = v["distribution"].as_object().unwrap().values().map(|p| p.as_f64().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(v["label"].is_f64());
    }
    assert!(dir.path().join("mn_pred.config.json").exists());
}

#[test]
fn identity_btl2_on_a_tied_pair_prefers_the_second() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("id.json");
    std::fs::write(&model, r#"{"kind":"btl2","dimension":2,"gamma":0,"theta":[0,0,1],"bias":0}"#).unwrap();
    let pair = dir.path().join("pair.jsonl");
    std::fs::write(
        &pair,
        "{\"dimension\":2,\"task\":\"pairwise\",\"source\":\"\"}\n{\"id\":\"t\",\"form\":\"two_headed\",\"embedding_a\":[0.3,1.0],\"embedding_b\":[0.3,1.0],\"base_score_a\":4.0,\"base_score_b\":4.0}\n",
    )
    .unwrap();
    let out = ok(&["predict", "--model", s(&model), "--data", s(&pair)]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["probability"], 0.5);
    assert_eq!(v["preferred"], "second");
}

fn csv_rows(bytes: &[u8]) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_reader(bytes);
    r.records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect()
}

#[test]
fn ablate_size_defaults_give_seventy_rows_plus_means() {
    let train_set = data("absolute.jsonl");
    let out = ok(&[
        "ablate-size", "--data", s(&train_set), "--kind", "ls", "--gamma", "0.1", "--epochs", "5",
    ]);
    let rows = csv_rows(&out.stdout);
    let (runs, means): (Vec<_>, Vec<_>) = rows.iter().partition(|r| r[1] != "mean");
    assert_eq!(runs.len(), 70);
    assert_eq!(means.len(), 7);
    // the held-out 20% leaves 48 training examples; fraction 1.0 uses all of them
    let full: Vec<_> = runs.iter().filter(|r| r[0] == "1").collect();
    assert_eq!(full.len(), 10);
    assert!(full.iter().all(|r| r[3] == "48"));
    assert!(runs.iter().filter(|r| r[0] == "0.01").all(|r| r[3] == "1"));
}

#[test]
fn ablate_gamma_gives_one_row_per_grid_point() {
    let train_set = data("relative.jsonl");
    let out = ok(&[
        "ablate-gamma", "--data", s(&train_set), "--test-data", s(&train_set), "--kind", "btl",
        "--grid", "1e-4,1e-3,1e-2,1e-1,1,10,1e6", "--epochs", "10",
    ]);
    let rows = csv_rows(&out.stdout);
    assert_eq!(rows.len(), 7);
    let last = rows.last().unwrap();
    assert_eq!(last[0], "1000000");
    assert!(last[7].parse::<f64>().unwrap() < 1e-2, "{last:?}");
}

#[test]
fn ablate_features_default_grid() {
    let train_set = data("absolute.jsonl");
    let out = ok(&[
        "ablate-features", "--data", s(&train_set), "--kind", "ls", "--gamma", "0.1", "--n-seeds",
        "2", "--epochs", "5",
    ]);
    let rows = csv_rows(&out.stdout);
    let means: Vec<_> = rows.iter().filter(|r| r[1] == "mean").collect();
    let drops: Vec<&str> = means.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(drops, ["0", "0.5", "0.75", "0.875"]);
    let dims: Vec<&str> = means.iter().map(|r| r[5].as_str()).collect();
    assert_eq!(dims, ["8", "4", "2", "1"]);
    assert_eq!(rows.len(), 12);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let train_set = data("categorical.jsonl");
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        ok(&[
            "ablate-size", "--data", s(&train_set), "--kind", "mn", "--fractions", "0.5,1",
            "--n-seeds", "3", "--epochs", "5", "--seed", "7", "--out", s(out),
        ]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let cfg_a = std::fs::read_to_string(dir.path().join("a.config.json")).unwrap();
    let cfg_b = std::fs::read_to_string(dir.path().join("b.config.json")).unwrap();
    assert_eq!(cfg_a.replace("a.csv", "b.csv"), cfg_b);

    let m1 = train(dir.path(), "m1.json", "relative.jsonl", "btl", &["--seed", "3"]);
    let m2 = train(dir.path(), "m2.json", "relative.jsonl", "btl", &["--seed", "3"]);
    assert_eq!(std::fs::read(m1).unwrap(), std::fs::read(m2).unwrap());
}

#[test]
fn exit_codes_follow_the_failure_class() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.json");
    let d = data("absolute.jsonl");
    let p = s(&d);
    let o = s(&out);
    assert_eq!(code(&["train", "--data", p, "--kind", "ls", "--gamma", "often", "--out", o]).0, 2);
    assert_eq!(code(&["train", "--data", p, "--kind", "xl", "--out", o]).0, 2);
    assert_eq!(code(&["train", "--data", p, "--kind", "ls", "--gamma", "0.1", "--grid", "1,2", "--out", o]).0, 2);
    assert_eq!(code(&["train", "--data", p, "--kind", "ls", "--folds", "1", "--out", o]).0, 2);
    assert_eq!(code(&["train", "--data", "/no/such/file.jsonl", "--kind", "ls", "--out", o]).0, 2);
    assert_eq!(code(&["ablate-size", "--data", p, "--kind", "ls", "--fractions", "0,1"]).0, 2);
    // a step size this large overflows; that is a failure of the run, not the input
    let (status, err) = code(&[
        "train", "--data", p, "--kind", "ls", "--gamma", "0", "--lr", "50", "--lr-decay", "none",
        "--out", o,
    ]);
    assert_eq!(status, 1, "{err}");
    assert!(err.contains("smaller learning rate"), "{err}");
    let blocked = dir.path().join("missing-dir").join("m.json");
    assert_eq!(code(&["train", "--data", p, "--kind", "ls", "--gamma", "0", "--epochs", "1", "--out", s(&blocked)]).0, 1);
}
