use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: [&str; 14] = [
    "--dataset.builtin.nx",
    "128",
    "--dataset.builtin.nt",
    "51",
    "--noise_percent",
    "10",
    "--library.max_poly",
    "3",
    "--library.max_deriv",
    "3",
    "--screen.k",
    "30",
    "--select.repeats",
    "3",
];

fn pdesift(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdesift")).current_dir(dir).args(args).output().expect("binary runs")
}

fn with_small<'a>(args: &[&'a str]) -> Vec<&'a str> {
    args.iter().copied().chain(SMALL).chain(["--rfe.k", "30", "--record_timings", "false"]).collect()
}

#[test]
fn run_writes_report_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = pdesift(dir.path(), &with_small(&["run", "--out", "o"]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("u u_x") && stdout.contains("ePOWER 1.000"), "{stdout}");
    for f in ["report.json", "screen.json", "rfe.json", "decision_matrix.csv", "preference_curves.csv"] {
        assert!(dir.path().join("o").join(f).exists(), "missing {f}");
    }
    let again = pdesift(dir.path(), &with_small(&["run", "--out", "o2"]));
    assert!(again.status.success());
    let a = fs::read(dir.path().join("o/report.json")).unwrap();
    let b = fs::read(dir.path().join("o2/report.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn stages_chain_through_saved_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let step = |args: Vec<&str>| {
        let out = pdesift(dir.path(), &args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        out
    };
    step(with_small(&["simulate", "--out", "a"]));
    step(with_small(&["library", "--out", "a", "--fields", "a/field_0"]));
    step(with_small(&["screen", "--out", "a", "--library", "a/library"]));
    step(with_small(&["rfe", "--out", "a", "--library", "a/library", "--screen", "a/screen.json"]));
    step(with_small(&["select", "--out", "a", "--library", "a/library", "--rfe", "a/rfe.json"]));
    let selection: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("a/selection.json")).unwrap()).unwrap();
    assert_eq!(selection["winner"]["labels"], serde_json::json!(["u u_x", "u_xx"]));

    step(with_small(&["run", "--out", "r"]));
    let metrics = step(vec!["metrics", "--report", "r/report.json"]);
    let m: serde_json::Value = serde_json::from_slice(&metrics.stdout).unwrap();
    assert_eq!((m["efdr"].as_f64(), m["epower"].as_f64()), (Some(0.0), Some(1.0)));
}

#[test]
fn config_file_and_overrides_combine() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), r#"{"seed": 3, "dataset": {"builtin": {"equation": "kdv", "nx": 64, "nt": 21}}}"#).unwrap();
    let out = pdesift(dir.path(), &["simulate", "--config", "c.json", "--out", "s", "--dataset.builtin.equation", "burgers"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let side = fs::read_to_string(dir.path().join("s/field_0.json")).unwrap();
    assert!(side.contains("burgers") && side.contains("\"n\": 64"), "{side}");
}

#[test]
fn exit_codes_follow_error_classes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| pdesift(dir.path(), args).status.code();
    assert_eq!(code(&["run", "--screen.q_zero", "0.3"]), Some(2));
    assert_eq!(code(&["run", "--library.half_widths", "[]"]), Some(2));
    assert_eq!(code(&["frobnicate"]), Some(2));
    assert_eq!(code(&["metrics", "--report", "missing.json"]), Some(2));
    let empty = with_small(&["run", "--out", "e", "--noise_percent", "500", "--screen.q0", "0.05", "--screen.q_max", "0.05"]);
    assert_eq!(code(&empty), Some(4));

    fs::create_dir_all(dir.path().join("z")).unwrap();
    let zeros: Vec<u8> = std::iter::repeat_n(0u8, 8 * 64 * 21).collect();
    fs::write(dir.path().join("z/flat.bin"), zeros).unwrap();
    fs::write(
        dir.path().join("z/flat.json"),
        r#"{"name": "flat", "axes": [{"n": 64, "lo": -8.0, "hi": 8.0, "periodic": true}], "t": {"n": 21, "lo": 0.0, "hi": 10.0}, "order": "row-major, time fastest"}"#,
    )
    .unwrap();
    let flat =
        ["run", "--out", "z", "--dataset", r#"{"files": {"paths": ["z/flat"]}}"#, "--library.max_poly", "2", "--library.max_deriv", "2"];
    assert_eq!(code(&flat), Some(3));
}
