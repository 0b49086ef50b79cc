//! End-to-end runs of the bvcalc binary: output shapes, exit codes, and
//! determinism across repeated invocations.

use std::io::Write as _;
use std::path::PathBuf;
use std::process::{Command, Output};

fn model_path(name: &str) -> String {
    let mut p = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    p.pop();
    p.pop();
    p.push("models");
    p.push(name);
    p.to_str().unwrap().to_string()
}

fn bvcalc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bvcalc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).expect("stdout is UTF-8")
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8(output.stderr.clone()).expect("stderr is UTF-8")
}

#[test]
fn expect_agrees_on_the_cubic_two_point() {
    let out = bvcalc(&[
        "expect",
        "--model",
        &model_path("cubic.bv"),
        "--observable",
        "x1^2",
        "--order",
        "2",
    ]);
    let text = stdout_of(&out);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.contains("<x1^2> = ħ + 5/4 ħ^2"), "{text}");
    assert!(text.contains("methods agree: reduce, diagrams, oracle"), "{text}");
}

#[test]
fn expect_runs_a_single_method() {
    let out = bvcalc(&[
        "expect",
        "--model",
        &model_path("free-1d.bv"),
        "--observable",
        "x1^4",
        "--method",
        "reduce",
        "--order",
        "3",
    ]);
    let text = stdout_of(&out);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.contains("<x1^4> = 3/4 ħ^2"), "{text}");
    assert!(text.contains("method: reduce"), "{text}");
}

#[test]
fn expect_handles_the_unit_observable() {
    let out = bvcalc(&[
        "expect",
        "--model",
        &model_path("cubic.bv"),
        "--observable",
        "1",
        "--order",
        "2",
    ]);
    let text = stdout_of(&out);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.contains("<1> = 1"), "{text}");
}

#[test]
fn expect_records_parse_as_json() {
    let out = bvcalc(&[
        "expect",
        "--model",
        &model_path("cubic.bv"),
        "--observable",
        "x1^2",
        "--order",
        "2",
        "--format",
        "records",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let lines: Vec<serde_json::Value> = stdout_of(&out)
        .lines()
        .map(|l| serde_json::from_str(l).expect("each line is JSON"))
        .collect();
    assert_eq!(lines.len(), 4);
    let methods: Vec<&str> = lines[..3]
        .iter()
        .map(|l| l["method"].as_str().unwrap())
        .collect();
    assert_eq!(methods, ["reduce", "diagrams", "oracle"]);
    for line in &lines[..3] {
        assert_eq!(line["order"], 2);
        assert_eq!(line["coeffs"], serde_json::json!(["0", "1", "5/4"]));
    }
    assert_eq!(lines[3]["agree"], true);
    assert!(lines[3]["first_mismatch"].is_null());
}

#[test]
fn record_observables_carry_tuple_order() {
    let out = bvcalc(&[
        "expect",
        "--model",
        &model_path("coupled-pair.bv"),
        "--observable",
        "1,2=1/2 2,1=1/2",
        "--order",
        "2",
    ]);
    let text = stdout_of(&out);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.contains("<x1 x2> = -ħ"), "{text}");
}

#[test]
fn list_diagrams_table_matches_the_known_classes() {
    let out = bvcalc(&[
        "list-diagrams",
        "--model",
        &model_path("cubic.bv"),
        "--observable",
        "x1^2",
        "--order",
        "2",
    ]);
    let text = stdout_of(&out);
    assert_eq!(out.status.code(), Some(0), "{text}");
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 6, "{text}");
    assert!(lines[0].contains("betti") && lines[0].contains("aut"), "{text}");
    assert_eq!(lines[5], "sum: ħ + 5/4 ħ^2", "{text}");
    let mut table: Vec<(u32, u64)> = lines[1..5]
        .iter()
        .map(|l| {
            let mut fields = l.split_whitespace();
            let betti = fields.next().unwrap().parse().unwrap();
            let aut = fields.next().unwrap().parse().unwrap();
            (betti, aut)
        })
        .collect();
    table.sort_unstable();
    assert_eq!(table, [(1, 1), (2, 2), (2, 2), (2, 4)]);
}

#[test]
fn list_diagrams_records_parse_as_json() {
    let out = bvcalc(&[
        "list-diagrams",
        "--model",
        &model_path("cubic.bv"),
        "--observable",
        "x1^2",
        "--order",
        "2",
        "--format",
        "records",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let lines: Vec<serde_json::Value> = stdout_of(&out)
        .lines()
        .map(|l| serde_json::from_str(l).expect("each line is JSON"))
        .collect();
    assert_eq!(lines.len(), 5);
    for line in &lines[..4] {
        assert!(line["half_edges"].is_u64());
        assert!(line["betti"].is_u64());
        assert!(line["aut"].is_u64());
        assert!(line["pairing"].is_array());
        assert!(line["kinds"][0] == "marked");
        assert_eq!(line["marked_legs"].as_array().unwrap().len(), 2);
    }
    assert_eq!(lines[4]["sum"], serde_json::json!(["0", "1", "5/4"]));
}

#[test]
fn the_one_point_function_starts_with_half() {
    let out = bvcalc(&[
        "list-diagrams",
        "--model",
        &model_path("cubic.bv"),
        "--observable",
        "x1",
        "--order",
        "1",
    ]);
    let text = stdout_of(&out);
    assert_eq!(out.status.code(), Some(0), "{text}");
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3, "{text}");
    let fields: Vec<&str> = lines[1].split_whitespace().collect();
    assert_eq!(fields, ["1", "2", "1", "1/2", "ħ"], "{text}");
    assert_eq!(lines[2], "sum: 1/2 ħ", "{text}");
}

#[test]
fn the_empty_diagram_carries_the_unit() {
    let out = bvcalc(&[
        "list-diagrams",
        "--model",
        &model_path("cubic.bv"),
        "--observable",
        "1",
        "--order",
        "0",
    ]);
    let text = stdout_of(&out);
    assert_eq!(out.status.code(), Some(0), "{text}");
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3, "{text}");
    let fields: Vec<&str> = lines[1].split_whitespace().collect();
    assert_eq!(fields, ["0", "1", "1", "1"], "{text}");
    assert_eq!(lines[2], "sum: 1", "{text}");
}

#[test]
fn check_passes_on_the_cubic_model() {
    let out = bvcalc(&["check", "--model", &model_path("cubic.bv"), "--order", "3"]);
    let text = stdout_of(&out);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.contains("check differential-squares-to-zero: pass"), "{text}");
    assert!(text.contains("check engine-agreement: pass"), "{text}");
    assert!(text.contains("check moment-recursion: pass"), "{text}");
    assert!(text.contains("check symmetry-factors: pass"), "{text}");
    assert!(text.ends_with("result: pass\n"), "{text}");
}

#[test]
fn check_prints_the_free_moment_table() {
    let out = bvcalc(&[
        "check",
        "--model",
        &model_path("free-1d.bv"),
        "--order",
        "3",
        "--nmax",
        "6",
    ]);
    let text = stdout_of(&out);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.contains("check moment-table: pass"), "{text}");
    assert!(text.contains("  <x1^6> = 15/8 ħ^3"), "{text}");
    assert!(text.ends_with("result: pass\n"), "{text}");
}

#[test]
fn check_covers_multivariate_models() {
    let out = bvcalc(&[
        "check",
        "--model",
        &model_path("pair-cubic.bv"),
        "--order",
        "2",
        "--nmax",
        "3",
    ]);
    let text = stdout_of(&out);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.contains("model pair-cubic: dimension 2, interactions [3]"), "{text}");
    assert!(text.ends_with("result: pass\n"), "{text}");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let args = [
        "check",
        "--model",
        &model_path("coupled-pair.bv"),
        "--order",
        "3",
        "--seed",
        "7",
    ];
    let first = bvcalc(&args);
    let second = bvcalc(&args);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);

    let args = [
        "list-diagrams",
        "--model",
        &model_path("quartic.bv"),
        "--observable",
        "x1^2",
        "--order",
        "2",
        "--format",
        "records",
    ];
    let first = bvcalc(&args);
    let second = bvcalc(&args);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn out_of_range_observables_are_hard_errors() {
    let out = bvcalc(&[
        "expect",
        "--model",
        &model_path("cubic.bv"),
        "--observable",
        "x3",
        "--order",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("outside 1..=1"), "{}", stderr_of(&out));
}

#[test]
fn duplicate_entries_fail_with_line_numbers() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    write!(file, "dim 1\na 1\nb 3 1 1 1 1\nb 3 1 1 1 1\n").unwrap();
    let out = bvcalc(&[
        "expect",
        "--model",
        file.path().to_str().unwrap(),
        "--observable",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_of(&out);
    assert!(err.contains(":4:"), "{err}");
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn asymmetric_forms_are_rejected() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    write!(file, "dim 2\na 1 2\na 3 1\n").unwrap();
    let out = bvcalc(&["check", "--model", file.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("not symmetric"), "{}", stderr_of(&out));
}

#[test]
fn missing_model_files_are_hard_errors() {
    let out = bvcalc(&["expect", "--model", "/nonexistent.bv", "--observable", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!stderr_of(&out).is_empty());
}
