use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use serde_json::Value;

use semflow_cli::{cli_compile_nl, cli_run, CompileOutput, EXIT_CLARIFICATION, EXIT_RUNTIME, EXIT_VALIDATION};
use semflow_core::backend::SimulatedLlm;
use semflow_core::harness::{gen_stream, GenConfig};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn semflow(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semflow")).args(args).current_dir(cwd).output().unwrap()
}

fn write_stream(dir: &Path) -> PathBuf {
    let path = dir.join("docs.jsonl");
    std::fs::write(&path, gen_stream(7, &GenConfig::default()).unwrap().to_jsonl()).unwrap();
    path
}

#[test]
fn run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let docs = write_stream(dir.path());
    let out = semflow(
        &["run", "--pipeline", fixture("planted_pipeline.json").to_str().unwrap(), "--input", docs.to_str().unwrap(), "--report", "out/report.json"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let matches = std::fs::read_to_string(dir.path().join("out/matches.jsonl")).unwrap();
    assert_eq!(matches.lines().count(), 5);
    for f in ["events.jsonl", "outputs.jsonl", "transcript.jsonl"] {
        assert!(dir.path().join("out").join(f).is_file(), "{f}");
    }
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["run_id"], "cli");
}

#[test]
fn cyclic_spec_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let docs = write_stream(dir.path());
    let out = semflow(
        &["run", "--pipeline", fixture("cyclic_pipeline.json").to_str().unwrap(), "--input", docs.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("CycleError"));
}

#[test]
fn missing_input_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = semflow(
        &["run", "--pipeline", fixture("planted_pipeline.json").to_str().unwrap(), "--input", "absent.jsonl"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    let err = cli_run(
        &fixture("planted_pipeline.json"),
        &dir.path().join("absent.jsonl"),
        &dir.path().join("r.json"),
        Arc::new(SimulatedLlm),
    )
    .unwrap_err();
    assert_eq!((err.exit, err.code.as_str()), (EXIT_RUNTIME, "FileError"));
}

#[test]
fn malformed_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let bad_spec = dir.path().join("bad.json");
    std::fs::write(&bad_spec, "{ nope").unwrap();
    let docs = write_stream(dir.path());
    let err = cli_run(&bad_spec, &docs, &dir.path().join("r.json"), Arc::new(SimulatedLlm)).unwrap_err();
    assert_eq!((err.exit, err.code.as_str()), (EXIT_VALIDATION, "SpecParseError"));
    let bad_docs = dir.path().join("bad.jsonl");
    std::fs::write(&bad_docs, "{\"doc_id\": \"x\"}\n").unwrap();
    let err = cli_run(&fixture("planted_pipeline.json"), &bad_docs, &dir.path().join("r.json"), Arc::new(SimulatedLlm))
        .unwrap_err();
    assert_eq!((err.exit, err.code.as_str()), (EXIT_RUNTIME, "InvalidInput"));
}

#[test]
fn compile_nl_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = semflow(&["compile-nl", "--task", fixture("task.txt").to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let spec: Value = serde_json::from_slice(&out.stdout).unwrap();
    let ops = spec["operators"].as_array().unwrap();
    assert_eq!(ops.last().unwrap()["params"]["pattern"], "SEQ(Discharge, WITHIN(NOT(FollowUp), 30 days))");

    let out = semflow(&["compile-nl", "--task", fixture("ambiguous_task.txt").to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(i32::from(EXIT_CLARIFICATION)));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["clarification"].is_string());

    let empty = dir.path().join("empty.txt");
    std::fs::write(&empty, "\n").unwrap();
    let out = semflow(&["compile-nl", "--task", empty.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("UsageError"));
}

#[test]
fn compile_nl_matches_checked_in_fixture() {
    let task = std::fs::read_to_string(fixture("task.txt")).unwrap();
    let CompileOutput::Spec(spec) = cli_compile_nl(&task, &SimulatedLlm, 3).unwrap() else { panic!() };
    let fixture_spec: semflow_core::dataflow::PipelineSpec =
        serde_json::from_str(&std::fs::read_to_string(fixture("planted_pipeline.json")).unwrap()).unwrap();
    assert_eq!(spec, fixture_spec);
}

#[test]
fn bench_writes_suite_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = semflow(&["bench", "--suite", "oracle", "--cases", "50"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("suite_report.json")).unwrap()).unwrap();
    assert_eq!(v["suite"], "oracle");
    assert_eq!(v["agreed"], 50);
    let out = semflow(&["bench", "--suite", "nonsense"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_writes_stream_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    let out = semflow(&["gen", "--seed", "7", "--out", "d.jsonl", "--truth", "t.json"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("d.jsonl")).unwrap();
    assert_eq!(text, gen_stream(7, &GenConfig::default()).unwrap().to_jsonl());
    let truth: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("t.json")).unwrap()).unwrap();
    assert_eq!(truth["matches"].as_array().unwrap().len(), 5);
}
