mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::*;

fn polyeval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polyeval"))
        .args(args)
        .env("POLYEVAL_LOG", "error")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Copy of the demo config writing under `root`, with absolute paths.
fn demo_copy(root: &Path, run_id: &str, fixtures: Option<&Path>) -> PathBuf {
    let text = std::fs::read_to_string(demo_dir().join("demo.toml")).unwrap();
    let mut doc: toml::Table = toml::from_str(&text).unwrap();
    doc.insert("run_id".into(), run_id.into());
    doc.insert(
        "suite_path".into(),
        crate_dir().join("data/reference_suite.toml").to_string_lossy().as_ref().into(),
    );
    doc.insert("output_dir".into(), root.join("runs").to_string_lossy().as_ref().into());
    for m in doc["models"].as_array_mut().unwrap() {
        let m = m.as_table_mut().unwrap();
        let id = m["model_id"].as_str().unwrap().to_string();
        let base = fixtures.map(Path::to_path_buf).unwrap_or_else(|| demo_dir().join("fixtures"));
        m.insert("fixture_dir".into(), base.join(id).to_string_lossy().as_ref().into());
    }
    let path = root.join(format!("{run_id}.toml"));
    std::fs::write(&path, toml::to_string(&doc).unwrap()).unwrap();
    path
}

#[test]
fn validate_accepts_the_demo_silently() {
    let o = polyeval(&["validate", demo_dir().join("demo.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    assert!(o.stderr.is_empty());
}

#[test]
fn validate_reports_violations() {
    let root = tempfile::tempdir().unwrap();
    let path = demo_copy(root.path(), "bad", None);
    let text = std::fs::read_to_string(&path).unwrap().replace("k_values = [1]", "k_values = [2]");
    std::fs::write(&path, text).unwrap();
    let o = polyeval(&["validate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("K_EXCEEDS_N"), "{}", stderr(&o));
}

#[test]
fn missing_config_names_the_path() {
    let o = polyeval(&["run", "/no/such/config.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/no/such/config.toml"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_2() {
    for args in [&["frobnicate"][..], &["report"], &["validate", "x", "--cache", "sometimes"], &["run", "x", "--nope"]] {
        let o = polyeval(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(stderr(&o).contains("Usage") || stderr(&o).contains("error"), "{}", stderr(&o));
        assert!(o.stdout.is_empty());
    }
}

#[test]
fn providers_lists_every_kind() {
    let o = polyeval(&["providers"]);
    assert_eq!(o.status.code(), Some(0));
    let kinds: Vec<String> = stdout(&o).lines().map(|l| l.split_whitespace().next().unwrap().to_string()).collect();
    assert_eq!(kinds, ["chat_completion", "cookie_session", "prediction_poll", "inference_endpoint", "mock"]);
}

#[test]
fn run_then_report_in_every_format() {
    let root = tempfile::tempdir().unwrap();
    let config = demo_copy(root.path(), "cli-demo", None);
    let o = polyeval(&["run", config.to_str().unwrap(), "--concurrency", "8"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("gpt35t-mock"));
    assert!(out.contains("★★★★☆"));

    let run_dir = root.path().join("runs/cli-demo");
    let dir = run_dir.to_str().unwrap();
    let csv = polyeval(&["report", dir, "--format", "csv"]);
    assert_eq!(csv.status.code(), Some(0));
    let csv = stdout(&csv);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("model,product,parameters,tasks,accurate,pass@1,quality"));
    assert_eq!(lines.next(), Some("gpt35t-mock,OpenAI,154 billion,10,7,0.7,4"));
    assert_eq!(csv.lines().count(), 8);

    let structured = polyeval(&["report", dir, "--format", "structured"]);
    assert_eq!(structured.stdout, std::fs::read(run_dir.join("results")).unwrap());

    let md_path = root.path().join("board.md");
    let md = polyeval(&["report", dir, "--format", "markdown", "--output", md_path.to_str().unwrap()]);
    assert_eq!(md.status.code(), Some(0));
    assert!(md.stdout.is_empty());
    let md = std::fs::read_to_string(&md_path).unwrap();
    assert!(md.starts_with("| Model | Product | Parameters | Tasks | Accurate | pass@1 | Quality |"));

    let table = polyeval(&["report", dir]);
    assert_eq!(stdout(&table).lines().count(), 9);

    // csv output is a pure function of the results file
    assert_eq!(stdout(&polyeval(&["report", dir, "--format", "csv"])), csv);

    let resumed = polyeval(&["resume", dir]);
    assert_eq!(resumed.status.code(), Some(0), "{}", stderr(&resumed));
}

#[test]
fn report_without_results_is_invalid_input() {
    let root = tempfile::tempdir().unwrap();
    let o = polyeval(&["report", root.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("report_missing"), "{}", stderr(&o));
}

#[test]
fn degraded_runs_exit_3() {
    let root = tempfile::tempdir().unwrap();
    let empty = root.path().join("no-fixtures");
    std::fs::create_dir_all(&empty).unwrap();
    let config = demo_copy(root.path(), "degraded", Some(&empty));
    let o = polyeval(&["run", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stdout(&o).contains("degraded"));
}

#[test]
fn resume_of_a_missing_run_is_invalid_input() {
    let root = tempfile::tempdir().unwrap();
    let o = polyeval(&["resume", root.path().join("nothing").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
