//! End-to-end tests of the command-line surface: exit codes, file outputs,
//! determinism, and the cross-format consistency contracts.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mccal"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("failed to spawn mccal")
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mccal-cli-{tag}-{}", std::process::id()));
    if dir.exists() {
        std::fs::remove_dir_all(&dir).unwrap();
    }
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn path_str(path: &Path) -> String {
    path.to_str().unwrap().to_string()
}

/// demo -> fit -> evaluate on a tiny, fast configuration.
fn run_pipeline(dir: &Path, seed: u64) -> mccal::io::CalibrationReport {
    let out_dir = path_str(dir);
    let status = run(&[
        "demo",
        "--out-dir",
        &out_dir,
        "--seed",
        &seed.to_string(),
        "--val-n",
        "300",
        "--test-n",
        "400",
        "--epochs",
        "20",
    ]);
    assert!(status.status.success(), "demo failed: {status:?}");
    let temp_path = path_str(&dir.join("t.json"));
    let status = run(&[
        "fit",
        "--input",
        &path_str(&dir.join("val.jsonl")),
        "--output",
        &temp_path,
    ]);
    assert!(status.status.success(), "fit failed: {status:?}");
    let report_path = path_str(&dir.join("report.json"));
    let status = run(&[
        "evaluate",
        "--input",
        &path_str(&dir.join("test.jsonl")),
        "--temperature-file",
        &temp_path,
        "--output",
        &report_path,
    ]);
    assert!(status.status.success(), "evaluate failed: {status:?}");
    mccal::io::read_report(dir.join("report.json")).unwrap()
}

#[test]
fn unknown_flag_prints_usage_and_exits_one() {
    let out = run(&["demo", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("Usage") || stderr.contains("usage"),
        "stderr: {stderr}"
    );
}

#[test]
fn help_exits_zero() {
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn missing_input_file_exits_two() {
    let out = run(&[
        "fit",
        "--input",
        "/nonexistent/v.jsonl",
        "--output",
        "/tmp/t.json",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_dump_line_exits_one_with_line_number() {
    let dir = temp_dir("malformed");
    let dump = dir.join("bad.jsonl");
    std::fs::write(
        &dump,
        "{\"id\":\"a\",\"label\":0,\"logits\":[[0.0,1.0]]}\nnot json at all\n",
    )
    .unwrap();
    let out = run(&[
        "fit",
        "--input",
        &path_str(&dump),
        "--output",
        &path_str(&dir.join("t.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 2"), "stderr: {stderr}");
}

#[test]
fn ragged_record_exits_one_naming_the_record() {
    let dir = temp_dir("ragged");
    let dump = dir.join("ragged.jsonl");
    std::fs::write(
        &dump,
        "{\"id\":\"rec-7\",\"label\":0,\"logits\":[[0.0,1.0],[0.5]]}\n",
    )
    .unwrap();
    let out = run(&[
        "fit",
        "--input",
        &path_str(&dump),
        "--output",
        &path_str(&dir.join("t.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("rec-7"), "stderr: {stderr}");
}

#[test]
fn evaluate_rejects_nonpositive_temperature() {
    let dir = temp_dir("badtemp");
    let dump = dir.join("v.jsonl");
    std::fs::write(&dump, "{\"id\":\"a\",\"label\":0,\"logits\":[[0.0,1.0]]}\n").unwrap();
    let out = run(&[
        "evaluate",
        "--input",
        &path_str(&dump),
        "--output",
        &path_str(&dir.join("r.json")),
        "--temperature",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn evaluate_requires_exactly_one_temperature_source() {
    let out = run(&["evaluate", "--input", "x.jsonl", "--output", "r.json"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&[
        "evaluate",
        "--input",
        "x.jsonl",
        "--output",
        "r.json",
        "--temperature",
        "1.5",
        "--temperature-file",
        "t.json",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn demo_writes_parseable_dumps_and_checkpoint() {
    let dir = temp_dir("demo");
    let model = dir.join("model.json");
    let out = run(&[
        "demo",
        "--out-dir",
        &path_str(&dir),
        "--seed",
        "3",
        "--val-n",
        "50",
        "--test-n",
        "60",
        "--epochs",
        "5",
        "--model-out",
        &path_str(&model),
    ]);
    assert!(out.status.success());
    let val = mccal::io::read_logit_dump(dir.join("val.jsonl")).unwrap();
    let test = mccal::io::read_logit_dump(dir.join("test.jsonl")).unwrap();
    assert_eq!(val.len(), 50);
    assert_eq!(test.len(), 60);
    assert_eq!(val[0].passes(), 25);
    assert_eq!(val[0].classes(), 3);
    let net = mccal::io::read_checkpoint(&model).unwrap();
    assert_eq!(net.classes(), 3);
    assert_eq!(net.dropout_p(), 0.5);
}

#[test]
fn fitted_temperature_never_hurts_validation_nll() {
    // The evaluate example from the interface contract: scoring the same
    // dump that fit consumed, the report's calibrated NLL cannot exceed
    // the uncalibrated one.
    let dir = temp_dir("fitcontract");
    let out_dir = path_str(&dir);
    assert!(run(&[
        "demo",
        "--out-dir",
        &out_dir,
        "--seed",
        "11",
        "--val-n",
        "200",
        "--test-n",
        "50",
        "--epochs",
        "15",
    ])
    .status
    .success());
    let temp_path = path_str(&dir.join("t.json"));
    let val_path = path_str(&dir.join("val.jsonl"));
    assert!(run(&["fit", "--input", &val_path, "--output", &temp_path])
        .status
        .success());
    let report_path = path_str(&dir.join("r.json"));
    assert!(run(&[
        "evaluate",
        "--input",
        &val_path,
        "--temperature-file",
        &temp_path,
        "--output",
        &report_path,
    ])
    .status
    .success());
    let report = mccal::io::read_report(dir.join("r.json")).unwrap();
    assert!(report.nll_calibrated <= report.nll_uncalibrated);
}

#[test]
fn reliability_csv_has_fifteen_rows_per_table() {
    let dir = temp_dir("relcsv");
    run_pipeline(&dir, 5);
    let csv_path = dir.join("rel.csv");
    let out = run(&[
        "reliability",
        "--input",
        &path_str(&dir.join("test.jsonl")),
        "--axis",
        "uncertainty",
        "--temperature-file",
        &path_str(&dir.join("t.json")),
        "--output",
        &path_str(&csv_path),
        "--bins",
        "15",
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 2 * 15);
    assert_eq!(
        lines
            .iter()
            .filter(|l| l.starts_with("1,uncertainty,false"))
            .count(),
        15
    );
    assert_eq!(
        lines
            .iter()
            .filter(|l| l.starts_with("1,uncertainty,true"))
            .count(),
        15
    );
}

#[test]
fn reliability_csv_reparses_to_the_report_gaps() {
    let dir = temp_dir("relroundtrip");
    let report = run_pipeline(&dir, 7);
    for (axis, uncal_gap, cal_gap) in [
        (
            "uncertainty",
            report.uce_uncalibrated,
            report.uce_calibrated,
        ),
        ("confidence", report.ece_uncalibrated, report.ece_calibrated),
    ] {
        let csv_path = dir.join(format!("rel-{axis}.csv"));
        let out = run(&[
            "reliability",
            "--input",
            &path_str(&dir.join("test.jsonl")),
            "--axis",
            axis,
            "--temperature-file",
            &path_str(&dir.join("t.json")),
            "--output",
            &path_str(&csv_path),
        ]);
        assert!(out.status.success());
        let tables = mccal::io::read_reliability_csv(&csv_path).unwrap();
        assert_eq!(tables.len(), 2);
        let (uncal, cal) = (&tables[0].1, &tables[1].1);
        let (reparsed_uncal, reparsed_cal) = if axis == "confidence" {
            (uncal.ece, cal.ece)
        } else {
            (uncal.uce, cal.uce)
        };
        assert!((reparsed_uncal - uncal_gap).abs() < 1e-12);
        assert!((reparsed_cal - cal_gap).abs() < 1e-12);
    }
}

#[test]
fn reliability_json_format_parses() {
    let dir = temp_dir("reljson");
    run_pipeline(&dir, 9);
    let json_path = dir.join("rel.json");
    let out = run(&[
        "reliability",
        "--input",
        &path_str(&dir.join("test.jsonl")),
        "--axis",
        "confidence",
        "--temperature",
        "1.5",
        "--output",
        &path_str(&json_path),
        "--format",
        "json",
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&json_path).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(doc["format_version"], 1);
    assert_eq!(doc["axis"], "confidence");
    assert_eq!(doc["uncalibrated"]["bins"].as_array().unwrap().len(), 15);
}

#[test]
fn reject_csv_row_counts() {
    let dir = temp_dir("reject");
    run_pipeline(&dir, 13);
    let csv_path = dir.join("curve.csv");
    let test_path = path_str(&dir.join("test.jsonl"));
    let out = run(&[
        "reject",
        "--input",
        &test_path,
        "--output",
        &path_str(&csv_path),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(text.lines().count(), 1 + 101);

    let out = run(&[
        "reject",
        "--input",
        &test_path,
        "--output",
        &path_str(&csv_path),
        "--temperature-file",
        &path_str(&dir.join("t.json")),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(text.lines().count(), 1 + 202);
    // Descending thresholds, 1.0 first.
    assert!(text.lines().nth(1).unwrap().starts_with("1,false,1,"));
}

#[test]
fn identical_flags_and_seed_give_byte_identical_outputs() {
    let dir = temp_dir("det");
    run_pipeline(&dir, 21);
    let first: Vec<Vec<u8>> = ["val.jsonl", "test.jsonl", "t.json", "report.json"]
        .iter()
        .map(|name| std::fs::read(dir.join(name)).unwrap())
        .collect();
    run_pipeline(&dir, 21);
    for (name, before) in ["val.jsonl", "test.jsonl", "t.json", "report.json"]
        .iter()
        .zip(first)
    {
        let after = std::fs::read(dir.join(name)).unwrap();
        assert_eq!(before, after, "{name} differs between identical runs");
    }
}

#[test]
fn oracle_subcommand_passes() {
    let out = run(&["oracle", "--instances", "50", "--max-n", "100"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("all oracle checks passed"),
        "stdout: {stdout}"
    );
}

#[test]
fn default_seed_pipeline_improves_uce() {
    // The whole pipeline at stock settings: fitting the temperature on the
    // validation dump must lower UCE on the test dump.
    let dir = temp_dir("default-pipeline");
    let out_dir = path_str(&dir);
    assert!(run(&["demo", "--out-dir", &out_dir, "--seed", "0"])
        .status
        .success());
    let temp_path = path_str(&dir.join("t.json"));
    assert!(run(&[
        "fit",
        "--input",
        &path_str(&dir.join("val.jsonl")),
        "--output",
        &temp_path
    ])
    .status
    .success());
    assert!(run(&[
        "evaluate",
        "--input",
        &path_str(&dir.join("test.jsonl")),
        "--temperature-file",
        &temp_path,
        "--output",
        &path_str(&dir.join("report.json")),
    ])
    .status
    .success());
    let report = mccal::io::read_report(dir.join("report.json")).unwrap();
    assert!(report.uce_calibrated < report.uce_uncalibrated);
}
