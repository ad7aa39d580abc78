use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL_SUITE: &str = r#"
seed = 7
vocab_size = 40
min_len = 3
max_len = 8

[[tasks]]
id = "copy"
kind = "copy"
train = 120
test = 30

[[tasks]]
id = "reverse"
kind = "reverse"
train = 120
test = 30

[[tasks]]
id = "insert"
kind = "keyword-insertion"
train = 120
test = 30
"#;

const SMALL_RUN: &str = r#"
tasks = ["copy", "reverse"]
r = 0.1
cadence = 2

[hyper]
epochs = 2

[eval]
eval_cap = 20
"#;

fn rehearse(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rehearse"))
        .current_dir(root)
        .env("REHEARSE_OUT", root.join("out"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Writes the small suite and run config into a fresh directory.
fn workspace() -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("suite.toml"), SMALL_SUITE).unwrap();
    fs::write(dir.path().join("run.toml"), SMALL_RUN).unwrap();
    let o = rehearse(dir.path(), &["fixtures", "--config", "suite.toml"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir
}

fn sorted_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    names
}

#[test]
fn fixtures_writes_suite_and_is_deterministic() {
    let ws = workspace();
    let dir = ws.path().join("out/fixtures");
    let names = sorted_files(&dir);
    assert_eq!(names.len(), 9);
    assert_eq!(names.iter().filter(|n| n.ends_with(".task.json")).count(), 3);
    assert_eq!(names.iter().filter(|n| n.ends_with(".jsonl")).count(), 6);

    let again = ws.path().join("again");
    let o = rehearse(ws.path(), &["fixtures", "--config", "suite.toml", "--out", "again"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for n in &names {
        assert_eq!(fs::read(dir.join(n)).unwrap(), fs::read(again.join(n)).unwrap(), "{n}");
    }
}

#[test]
fn fixtures_refuses_nonempty_dir_without_force() {
    let ws = workspace();
    let o = rehearse(ws.path(), &["fixtures", "--config", "suite.toml"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("--force"));
    let o = rehearse(ws.path(), &["fixtures", "--config", "suite.toml", "--force"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn fixtures_rejects_unknown_kind() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("bad.toml"),
        "[[tasks]]\nid = \"x\"\nkind = \"nonsense\"\ntrain = 5\ntest = 5\n",
    )
    .unwrap();
    let o = rehearse(dir.path(), &["fixtures", "--config", "bad.toml"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn run_without_upper_bounds_is_a_usage_error() {
    let ws = workspace();
    let o = rehearse(ws.path(), &["run", "--config", "run.toml"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("rehearse ub"), "{}", stderr(&o));
}

#[test]
fn out_of_range_fraction_is_a_usage_error() {
    let ws = workspace();
    let o = rehearse(ws.path(), &["run", "--config", "run.toml", "--r", "1.5", "--with-ub"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("1.5"));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let ws = workspace();
    fs::write(ws.path().join("bad.toml"), "tasks = [\"copy\"]\nbogus = 3\n").unwrap();
    let o = rehearse(ws.path(), &["run", "--config", "bad.toml"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn run_rerun_plot_and_order_check() {
    let ws = workspace();
    let o = rehearse(ws.path(), &["ub", "--config", "run.toml"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(ws.path().join("out/ub.json").is_file());

    let o = rehearse(ws.path(), &["run", "--config", "run.toml", "--out", "fwd"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("final RG"));
    let fwd = ws.path().join("fwd");
    for f in ["manifest.json", "results.jsonl", "run.toml"] {
        assert!(fwd.join(f).is_file(), "{f}");
    }

    // a second run into the same directory needs --force
    let o = rehearse(ws.path(), &["run", "--config", "run.toml", "--out", "fwd"]);
    assert_eq!(code(&o), 2);

    let o = rehearse(ws.path(), &["rerun", "fwd"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("identical"));

    let o = rehearse(ws.path(), &["plot", "--results", "fwd/results.jsonl", "--out", "plots"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(ws.path().join("plots/rg.csv")).unwrap();
    assert!(csv.lines().count() > 1);
    assert!(fs::read_to_string(ws.path().join("plots/rg.svg")).unwrap().starts_with("<svg"));

    let o = rehearse(
        ws.path(),
        &["run", "--config", "run.toml", "--direction", "reversed", "--out", "rev"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = rehearse(
        ws.path(),
        &["order-check", "--forward", "fwd/results.jsonl", "--reversed", "rev/results.jsonl", "--tolerance", "1"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["pass"], true);
}

#[test]
fn mismatched_base_learner_is_rejected() {
    let ws = workspace();
    let o = rehearse(ws.path(), &["ub", "--config", "run.toml"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = rehearse(ws.path(), &["run", "--config", "run.toml", "--learner-seed", "99"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("base"));
}

fn write_identity_predictions(ws: &Path, dataset: &Path) -> std::path::PathBuf {
    let mut lines = String::new();
    for line in fs::read_to_string(dataset).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let p = serde_json::json!({ "id": v["id"], "prediction": v["target"] });
        lines.push_str(&p.to_string());
        lines.push('\n');
    }
    let path = ws.join("preds.jsonl");
    fs::write(&path, lines).unwrap();
    path
}

#[test]
fn score_identity_predictions() {
    let ws = workspace();
    let fx = ws.path().join("out/fixtures");
    let preds = write_identity_predictions(ws.path(), &fx.join("copy.test.jsonl"));
    let args = |metrics: &str| {
        vec![
            "score".to_string(),
            "--predictions".into(),
            preds.display().to_string(),
            "--dataset".into(),
            fx.join("copy.test.jsonl").display().to_string(),
            "--spec".into(),
            fx.join("copy.task.json").display().to_string(),
            "--metrics".into(),
            metrics.into(),
        ]
    };
    let a = args("rouge1,bleu4");
    let o = rehearse(ws.path(), &a.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["metrics"]["rouge1"]["value"], 1.0);
    assert!((report["metrics"]["bleu4"]["value"].as_f64().unwrap() - 1.0).abs() < 1e-6);

    let a = args("no_such_metric");
    let o = rehearse(ws.path(), &a.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("no_such_metric"));
}

#[test]
fn compose_sweeps_constraint_counts() {
    let ws = workspace();
    fs::write(
        ws.path().join("ins.toml"),
        "tasks = [\"insert\"]\ncadence = 1\n[hyper]\nepochs = 2\n[eval]\neval_cap = 10\n",
    )
    .unwrap();
    let o = rehearse(ws.path(), &["run", "--config", "ins.toml", "--with-ub", "--out", "ins"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let snap = ws.path().join("ins/snapshots/after_0_insert.snapshot");
    assert!(snap.is_file());
    let o = rehearse(
        ws.path(),
        &["compose", "--task", "insert", "--snapshot", snap.to_str().unwrap(), "--n", "1,2", "--eval-cap", "10"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 2);
}
