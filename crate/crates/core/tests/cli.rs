mod common;

use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_mcq-consensus");

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN).args(args).current_dir(cwd).env("RUST_LOG", "error").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn simulate(dir: &Path) {
    let o = run(&["simulate", "--questions", "6", "--records", "rec", "--out", "report.md", "--seed", "4", "--bootstrap", "300"], dir);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn simulate_then_analyze_and_validate() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    simulate(dir);
    let report = std::fs::read_to_string(dir.join("report.md")).unwrap();
    assert_eq!(report.matches("\n## Table ").count(), 5, "{report}");

    let o = run(&["validate", "--records", "rec"], dir);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("ok: 24 questions, 72 answers, 24 records"), "{}", stdout(&o));

    // the report from the study is reproduced by analyze with the same parameters
    let o = run(&["analyze", "--records", "rec", "--seed", "4", "--bootstrap", "300"], dir);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), report);

    let o = run(&["review", "--records", "rec", "--format", "csv"], dir);
    assert_eq!(o.status.code(), Some(0));
    let review = stdout(&o);
    assert_eq!(review.lines().filter(|l| l.contains("Scripted question on")).count(), 24, "{review}");
    assert!(review.contains("Scripted key note"));

    let o = run(&["analyze", "--records", "rec", "--format", "csv", "--out", "report.csv"], dir);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.join("report.csv")).unwrap();
    assert!(csv.contains("Model,N,Full (%),Partial (%),None (%)"), "{csv}");
}

#[test]
fn validate_names_orphan_answers() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    simulate(dir);
    let answers = dir.join("rec").join("answers.jsonl");
    let text = std::fs::read_to_string(&answers).unwrap();
    let first = text.lines().next().unwrap();
    let orphan = first.replacen("\"question_id\":\"", "\"question_id\":\"ghost-", 1);
    std::fs::write(&answers, format!("{text}{orphan}\n")).unwrap();
    for cmd in ["validate", "analyze"] {
        let o = run(&[cmd, "--records", "rec"], dir);
        assert_eq!(o.status.code(), Some(2), "{cmd}");
        assert!(stderr(&o).contains("orphan answer"), "{cmd}: {}", stderr(&o));
        assert!(stderr(&o).contains("ghost-"), "{cmd}: {}", stderr(&o));
    }
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(run(&["analyze"], dir).status.code(), Some(1));
    assert_eq!(run(&["analyze", "--records", "x", "--nope"], dir).status.code(), Some(1));
    assert_eq!(run(&["--help"], dir).status.code(), Some(0));

    std::fs::create_dir(dir.join("bad")).unwrap();
    std::fs::write(dir.join("bad").join("questions.jsonl"), "{\"id\": \n").unwrap();
    let o = run(&["analyze", "--records", "bad"], dir);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 1"), "{}", stderr(&o));

    // nothing listens on port 9; one attempt, no retries
    let config = r#"{
        // unreachable backend
        "models": [
            {"id": "a", "backend": {"kind": "http", "provider": "open_ai", "model": "m",
                "endpoint": "http://127.0.0.1:9/v1", "api_key_env": "MCQ_CLI_TEST_KEY", "max_retries": 0, "timeout_secs": 2}},
            {"id": "b", "backend": {"kind": "scripted", "seed": 1, "behavior": {"mode": "stochastic", "p_declared": 0.5}}},
            {"id": "c", "backend": {"kind": "scripted", "seed": 2, "behavior": {"mode": "stochastic", "p_declared": 0.5}}},
            {"id": "d", "backend": {"kind": "scripted", "seed": 3, "behavior": {"mode": "stochastic", "p_declared": 0.5}}}
        ],
        "questions_per_generator": 1,
        "records_dir": "live"
    }"#;
    std::fs::write(dir.join("study.json"), config).unwrap();
    let o = Command::new(BIN)
        .args(["run", "--config", "study.json"])
        .current_dir(dir)
        .env("MCQ_CLI_TEST_KEY", "k")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("backend a failed"), "{}", stderr(&o));

    let o = run(&["simulate", "--config", "study.json"], dir);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bundled_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for name in ["scripted.json", "live.json"] {
        let c = mcq_consensus::StudyConfig::load(&root.join(name)).unwrap();
        assert_eq!(c.models.len(), 4, "{name}");
    }
}
