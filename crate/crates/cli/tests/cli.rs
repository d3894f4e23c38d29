use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn frag(session: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_frag"))
        .arg("--session")
        .arg(session)
        .args(args)
        .output()
        .expect("frag runs")
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "frag failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

/// A session directory loaded with the fixture (or a faulty variant).
fn loaded(fault: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let wb = dir.path().join("in.json");
    let out = frag(
        dir.path(),
        &["corpus", "--fault", fault, "--seed", "3", "--out", wb.to_str().unwrap()],
    );
    json(&out);
    let out = frag(dir.path(), &["load", wb.to_str().unwrap()]);
    assert_eq!(json(&out)["formulas"], 52);
    dir
}

#[test]
fn load_writes_session_layout() {
    let dir = loaded("none");
    assert!(dir.path().join("workbook.json").is_file());
    assert!(dir.path().join("session.json").is_file());
    assert!(dir.path().join("tests").is_dir());
}

#[test]
fn commands_without_session_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = frag(dir.path(), &["classes"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("frag load"));
}

#[test]
fn classes_report_one_block_and_range_smell() {
    let dir = loaded("none");
    let v = json(&frag(dir.path(), &["classes"]));
    assert_eq!(v["blocks"].as_array().unwrap().len(), 1);
    assert_eq!(v["blocks"][0]["rows"], serde_json::json!([2, 13]));
    assert!(v["smells"].as_array().unwrap().is_empty());

    let faulty = loaded("range-off-by-one");
    let v = json(&frag(faulty.path(), &["classes"]));
    let smells = v["smells"].as_array().unwrap();
    assert_eq!(smells.len(), 1);
    assert_eq!(smells[0]["omitted"], serde_json::json!(["H13"]));
}

#[test]
fn graph_dot_lists_edges() {
    let dir = loaded("none");
    let out = frag(dir.path(), &["graph", "--dot"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("digraph"));
    assert!(text.contains("\"D17\" -> \"E17\""), "{text}");
    let v = json(&frag(dir.path(), &["graph"]));
    assert!(v["edges"].as_array().unwrap().contains(&serde_json::json!(["D17", "E17"])));
}

#[test]
fn fragments_default_and_filtered() {
    let dir = loaded("none");
    let v = json(&frag(dir.path(), &["fragments"]));
    let ids: Vec<&str> = v["fragments"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["id"].as_str().unwrap())
        .collect();
    assert_eq!(ids, ["s1-E2-H13-first", "s3-E17-d3-b16-c3"]);

    let v = json(&frag(
        dir.path(),
        &["fragments", "--strategy", "s2", "--k", "3", "--min-complexity", "1"],
    ));
    let f = &v["fragments"][0];
    assert_eq!(f["id"], "s2-B17-k3");
    assert_eq!(f["rewrites"]["B17"], "=SUM(H2:H4)");

    let v = json(&frag(
        dir.path(),
        &["fragments", "--strategy", "s3", "--cell", "D17", "--depth", "2"],
    ));
    assert_eq!(v["fragments"][0]["id"], "s3-D17-d2-b16-c3");
    assert_eq!(v["fragments"][0]["cells"], serde_json::json!(["B17", "C17", "D17"]));
}

#[test]
fn gen_run_label_diagnose_pipeline() {
    let dir = loaded("none");
    let frag_id = "s3-E17-d3-b16-c3";
    let v = json(&frag(dir.path(), &["gen-tests", "--fragment", frag_id, "--seed", "9", "--count", "3"]));
    assert_eq!(v["tests"].as_array().unwrap().len(), 3);
    assert!(dir.path().join(format!("tests/{frag_id}.json")).is_file());

    let out = frag(dir.path(), &["run-tests"]);
    let v = json(&out);
    assert_eq!(v["report"]["summary"]["pass"], 3);

    json(&frag(dir.path(), &["label", "--test", "t1", "--output", "E17", "--label", "faulty"]));
    let v = json(&frag(dir.path(), &["diagnose", "--kmax", "1"]));
    assert_eq!(v["diagnosis"]["conflicts"].as_array().unwrap().len(), 1);
    assert!(dir.path().join("diagnosis.json").is_file());
}

#[test]
fn run_tests_exits_one_on_failure() {
    let dir = loaded("none");
    let id = "s3-E17-d3-b16-c3";
    json(&frag(dir.path(), &["gen-tests", "--fragment", id, "--boundary"]));
    json(&frag(dir.path(), &["run-tests"]));
    // Swap the operator of an in-fragment formula behind the session's back.
    let wb = dir.path().join("workbook.json");
    let text = std::fs::read_to_string(&wb).unwrap();
    assert!(text.contains("=C17-B17"));
    std::fs::write(&wb, text.replace("=C17-B17", "=C17+B17")).unwrap();
    let out = frag(dir.path(), &["run-tests", "--fragment", id]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["report"]["summary"]["fail"].as_u64().unwrap() > 0);
}

#[test]
fn stale_tests_are_reported_and_fail_the_run() {
    let dir = loaded("none");
    let id = "s1-E2-H13-first";
    json(&frag(dir.path(), &["gen-tests", "--fragment", id, "--count", "2"]));
    // Overwriting F2 splits the copy block, so the fragment no longer resolves.
    json(&frag(dir.path(), &["set", "F2", "0"]));
    json(&frag(dir.path(), &["commit"]));
    let out = frag(dir.path(), &["run-tests"]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["report"]["stale"].as_array().unwrap().len(), 2);
}

#[test]
fn falsify_finds_negative_net_change() {
    let dir = loaded("none");
    let out = frag(
        dir.path(),
        &[
            "falsify",
            "--fragment",
            "s3-E17-d3-b16-c3",
            "--property",
            "E17 >= 0",
            "--range",
            "-1000:1000",
            "--seed",
            "1",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["outcome"]["result"], "counterexample");
}

#[test]
fn focus_makes_non_border_cells_read_only() {
    let dir = loaded("none");
    json(&frag(dir.path(), &["focus", "s3-E17-d3-b16-c3"]));
    let out = frag(dir.path(), &["set", "D17", "5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("read-only outside focused fragment"));
    json(&frag(dir.path(), &["set", "H2", "0"]));
    json(&frag(dir.path(), &["focus"]));
    json(&frag(dir.path(), &["set", "D17", "5"]));
}

#[test]
fn corpus_is_deterministic_and_records_truth() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["corpus", "--rows", "6", "--fault", "operator-swap", "--seed", "42"];
    let a = json(&frag(dir.path(), &args));
    let b = json(&frag(dir.path(), &args));
    assert_eq!(a, b);
    assert_eq!(a["groundTruth"]["kind"], "operator-swap");
    let none = json(&frag(dir.path(), &["corpus"]));
    assert!(none["groundTruth"].is_null());
    let out = frag(dir.path(), &["corpus", "--rows", "1"]);
    assert!(!out.status.success());
}
