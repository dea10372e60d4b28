use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> &'static str {
    let p: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name);
    Box::leak(p.to_str().expect("utf-8 path").to_owned().into_boxed_str())
}

fn eoplab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eoplab"))
        .args(args)
        .current_dir(dir)
        .env_remove("EOPLAB_SEED")
        .output()
        .expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stderr)))
}

#[test]
fn eop_of_bell_state_is_one_bit() {
    let dir = tempfile::tempdir().unwrap();
    let out = eoplab(&["eop", "--state", data("bell2.json"), "--restarts", "8"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert!((r["result"]["value"].as_f64().unwrap() - 1.0).abs() < 1e-3);
    assert_eq!(r["seed"], 0);
}

#[test]
fn measurement_protocol_satisfies_lemma() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "lemma-verify",
        "--protocol",
        data("meas.json"),
        "--L",
        "2",
        "--ensemble",
        data("ens.json"),
    ];
    let out = eoplab(&args, dir.path());
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["result"]["holds"], true);
    assert!(r["result"]["lhs"].as_f64().unwrap().abs() < 1e-12);
}

#[test]
fn default_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("suite.csv");
    let out = eoplab(&["suite", "--seed", "7", "--format", "csv", "--out", out_path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&out_path).unwrap();
    assert_eq!(text.lines().count(), 11);
    assert!(text.lines().skip(1).all(|l| l.starts_with("suite,7,true")));
}

#[test]
fn parse_errors_exit_2_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"shape\": {\"labels\": [\"A\"], \"dims\": [2]},\n  \"re\": [[1, 0], [0, 0]\n}\n").unwrap();
    let out = eoplab(&["eop", "--state", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.json") && err.contains("line"), "{err}");

    let out = eoplab(&["eop", "--state", dir.path().join("missing.json").to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = eoplab(&["lemma-verify", "--L", "2"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oversized_states_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let big = dir.path().join("big.json");
    let d = 17;
    let mut re = vec![vec![0.0; d * d]; d * d];
    re[0][0] = 1.0;
    let im = vec![vec![0.0; d * d]; d * d];
    let state = serde_json::json!({"shape": {"labels": ["A", "B"], "dims": [d, d]}, "re": re, "im": im});
    std::fs::write(&big, state.to_string()).unwrap();
    let out = eoplab(&["eop", "--state", big.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn reports_replay_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first.json");
    let args = [
        "converse-check",
        "--protocol",
        data("meas.json"),
        "--ensemble",
        data("ens.json"),
        "--L",
        "2",
        "--seed",
        "11",
        "--restarts",
        "3",
        "--out",
        first.to_str().unwrap(),
    ];
    assert_eq!(eoplab(&args, dir.path()).status.code(), Some(0));
    let before = std::fs::read(&first).unwrap();
    let again = eoplab(&["--config", first.to_str().unwrap()], dir.path());
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(std::fs::read(&first).unwrap(), before);
    let r: Value = serde_json::from_slice(&before).unwrap();
    assert_eq!(r["seed"], 11);
    assert_eq!(r["config"]["optimizer"]["restarts"], 3);
}

#[test]
fn environment_variables_set_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_eoplab"))
        .args(["gen-error", "--protocol", data("meas.json")])
        .env("EOPLAB_L", "2")
        .env("EOPLAB_ENSEMBLE", data("ens.json"))
        .env("EOPLAB_SEED", "5")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert_eq!(r["seed"], 5);
    assert!(r["result"]["value"].as_f64().unwrap().abs() < 1e-12);
}

#[test]
fn passing_runs_write_no_replay_files() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["code-build", "--protocol", data("meas.json"), "--L", "2"];
    let out = eoplab(&args, dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&out)["result"]["size"], 4);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn csv_reports_have_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["hext", "--ensemble", data("ens.json"), "--format", "csv", "--restarts", "2"];
    let out = eoplab(&args, dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let header = rows.headers().unwrap().clone();
    let record = rows.records().next().unwrap().unwrap();
    let value: f64 = record[header.iter().position(|h| h == "value").unwrap()].parse().unwrap();
    assert!((value - 1.0).abs() < 1e-9);
}
