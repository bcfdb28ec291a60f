use std::process::Command;

use serde_json::Value;

fn simulate(model: &std::path::Path, seed: &str) -> Value {
    let out = Command::new(env!("CARGO_BIN_EXE_colloquy"))
        .args(["simulate", "--bundled-fixtures", "--topic", "1", "--sessions", "50", "--seed", seed, "--model"])
        .arg(model)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn simulate_prints_a_reproducible_report() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    std::fs::write(
        &model,
        r#"{"seed": 1, "response_length": {"min": 20, "max": 200}, "response_delay": {"min": 3, "max": 40},
            "vocabulary_mix": {"filler": 2, "health": 1}, "question_rate": 0.05}"#,
    )
    .unwrap();
    let a = simulate(&model, "9");
    assert_eq!(a["sessions_run"], 50);
    assert_eq!(a, simulate(&model, "9"));
}

#[test]
fn simulate_rejects_an_unknown_category() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    std::fs::write(
        &model,
        r#"{"seed": 1, "response_length": {"min": 1, "max": 2}, "response_delay": {"min": 1, "max": 2},
            "vocabulary_mix": {"astrology": 1}, "question_rate": 0}"#,
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_colloquy"))
        .args(["simulate", "--bundled-fixtures", "--topic", "1", "--sessions", "5", "--model"])
        .arg(&model)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("vocabulary_mix.astrology"));
}
