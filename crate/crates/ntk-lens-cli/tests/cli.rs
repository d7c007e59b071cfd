//! End-to-end tests of the `ntk-lens` binary: each test spawns the real
//! executable and checks files, stdout, and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ntk-lens"))
}

fn run_ok(args: &[&str]) -> Output {
    let output = binary().args(args).output().expect("spawn binary");
    assert!(
        output.status.success(),
        "command {:?} failed\nstdout:\n{}\nstderr:\n{}",
        args,
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("config.toml");
    std::fs::write(
        &path,
        r#"
[dataset]
kind = "synthetic"
n_classes = 3
input_dim = 8
cluster_std = 0.1
train_size = 24
test_size = 24

[model]
hidden_widths = [8, 8]
activation = "relu"

[optimizer]
name = "adam"
lr = 0.01

[sweep]
axis = "widths"
values = [8, 16]

[ensemble]
count = 2
master_seed = 7

[run]
epochs = 6
ntk_every = 3
probe_size = 10
"#,
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

/// Record lines with timing zeroed, for run-to-run comparison.
fn record_payloads(records_path: &Path) -> Vec<serde_json::Value> {
    let text = std::fs::read_to_string(records_path).unwrap();
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|line| {
            let mut value: serde_json::Value = serde_json::from_str(line).unwrap();
            value["wall_clock_seconds"] = serde_json::json!(0.0);
            value
        })
        .collect()
}

#[test]
fn sweep_writes_records_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("out");
    run_ok(&["sweep", "--config", &config, "--out", out.to_str().unwrap(), "--jobs", "1"]);

    let records = std::fs::read_to_string(out.join("records.jsonl")).unwrap();
    let lines: Vec<&str> = records.lines().collect();
    assert_eq!(lines.len(), 5, "header + 2 widths x 2 members");
    assert!(lines[0].contains("\"kind\":\"header\""));
    for line in &lines[1..] {
        let value: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(value["failed"], serde_json::json!(false));
    }

    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let summary_lines: Vec<&str> = summary.lines().collect();
    assert!(summary_lines[0].starts_with("# config_hash="));
    assert!(summary_lines[1].starts_with("sweep_value,seed,min_test_loss"));
    assert_eq!(summary_lines.len(), 2 + 4);
}

#[test]
fn repeated_sweeps_are_byte_identical_up_to_timing() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let first = dir.path().join("a");
    let second = dir.path().join("b");
    for out in [&first, &second] {
        run_ok(&["sweep", "--config", &config, "--out", out.to_str().unwrap(), "--jobs", "1"]);
    }
    let a = record_payloads(&first.join("records.jsonl"));
    let b = record_payloads(&second.join("records.jsonl"));
    assert_eq!(a.len(), 4);
    assert_eq!(a, b);
}

#[test]
fn resume_executes_zero_jobs_and_preserves_records() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("out");
    run_ok(&["sweep", "--config", &config, "--out", out.to_str().unwrap(), "--jobs", "1"]);
    let before = std::fs::read_to_string(out.join("records.jsonl")).unwrap();

    let output = run_ok(&[
        "sweep", "--config", &config, "--out", out.to_str().unwrap(), "--jobs", "1", "--resume",
    ]);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("0 jobs to run"), "stdout:\n{stdout}");

    let after = std::fs::read_to_string(out.join("records.jsonl")).unwrap();
    assert_eq!(before, after, "resume must not rewrite completed records");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let output = binary().args(["sweep", "--bogus"]).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn missing_config_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let output = binary()
        .args(["sweep", "--config", dir.path().join("nope.toml").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn missing_dataset_reports_resolved_path_with_runtime_exit() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.toml");
    let data_dir = dir.path().join("no-such-data");
    std::fs::write(
        &config_path,
        format!(
            r#"
[dataset]
kind = "idx"
data_dir = "{}"
train_images = "train-images-idx3-ubyte"
train_labels = "train-labels-idx1-ubyte"
test_images = "t10k-images-idx3-ubyte"
test_labels = "t10k-labels-idx1-ubyte"
train_size = 16
test_size = 16

[model]
hidden_widths = [8]
activation = "relu"

[optimizer]
name = "adam"
lr = 0.01

[sweep]
axis = "widths"
values = [8, 16]

[run]
epochs = 3
"#,
            data_dir.display()
        ),
    )
    .unwrap();
    let out = dir.path().join("out");
    let output = binary()
        .args(["sweep", "--config", config_path.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("dataset not found"), "stderr:\n{stderr}");
    assert!(
        stderr.contains(data_dir.to_str().unwrap()),
        "stderr must include the resolved path:\n{stderr}"
    );
}

#[test]
fn verify_prints_toy_rank_line_and_passes() {
    let output = run_ok(&["verify"]);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(
        stdout.contains("Γ(diag(1/2,1/2)) = 2"),
        "stdout:\n{stdout}"
    );
    assert!(stdout.contains("[PASS]"));
    assert!(!stdout.contains("[FAIL]"));
}

#[test]
fn run_executes_single_member() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("out");
    let output = run_ok(&["run", "--config", &config, "--out", out.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("sweep value 8 member 0"), "stdout:\n{stdout}");
    let records = std::fs::read_to_string(out.join("records.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 2, "header + one record");
}

#[test]
fn export_plots_emits_headed_panels() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("out");
    run_ok(&["sweep", "--config", &config, "--out", out.to_str().unwrap(), "--jobs", "1"]);
    run_ok(&["export-plots", "--out", out.to_str().unwrap()]);

    let scaling = std::fs::read_to_string(out.join("scaling.tsv")).unwrap();
    assert!(scaling.starts_with("# config_hash="));
    // Header + column names + one row per sweep value.
    assert_eq!(scaling.lines().count(), 4);

    let dynamics = std::fs::read_to_string(out.join("dynamics_v8_m0.tsv")).unwrap();
    assert!(dynamics.starts_with("# config_hash="));
    let svg = std::fs::read_to_string(out.join("scaling.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn analyze_reports_points_without_failing_on_short_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("out");
    run_ok(&["sweep", "--config", &config, "--out", out.to_str().unwrap(), "--jobs", "1"]);
    let output = run_ok(&["analyze", "--config", &config, "--out", out.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("4 records"), "stdout:\n{stdout}");
    assert!(stdout.contains("point 8:"), "stdout:\n{stdout}");
    assert!(stdout.contains("point 16:"), "stdout:\n{stdout}");
}
