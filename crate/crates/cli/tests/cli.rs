use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/reference.json")
}

fn vecalc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vecalc")).args(args).output().expect("binary runs")
}

fn with_scenario<'a>(path: &'a str, args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend(["--scenario", path]);
    v
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Header and rows of a CSV document.
fn records(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn leaky_crr_reference() -> f64 {
    let (l1, l2, t) = (0.10_f64, 0.05_f64, 2.0_f64);
    let (a1, a2) = (0.4 * l1, 0.8 * l2);
    let vac = a1 / (a1 + a2) * (1.0 - (-(a1 + a2) * t).exp());
    let pla = l1 / (l1 + l2) * (1.0 - (-(l1 + l2) * t).exp());
    1.0 - vac / pla
}

#[test]
fn ve_csv_prints_the_crr() {
    let path = fixture();
    let p = path.to_str().unwrap();
    let o = vecalc(&with_scenario(p, &["ve", "--measure", "crr", "--variant", "1", "--vaccine", "m"]));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = records(&stdout(&o));
    assert_eq!(header, ["t", "ve", "kind", "comparison"]);
    let row = &rows[0];
    assert_eq!(row[0], "2");
    let ve: f64 = row[1].parse().unwrap();
    assert!((ve - leaky_crr_reference()).abs() < 1e-12);
    assert!((ve - 0.572145).abs() < 1e-6);
    assert_eq!(row[2], "crr");
}

#[test]
fn duplicate_times_exit_2() {
    let path = fixture();
    let p = path.to_str().unwrap();
    let o = vecalc(&with_scenario(
        p,
        &["curve", "--measure", "crr", "--variant", "1", "--vaccine", "m", "--times", "1,1"],
    ));
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
}

#[test]
fn missing_scenario_file_exit_2() {
    let o = vecalc(&["ve", "--measure", "crr", "--variant", "1", "--vaccine", "m", "--scenario", "/nonexistent.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_variant_exit_2() {
    let path = fixture();
    let p = path.to_str().unwrap();
    let o = vecalc(&with_scenario(p, &["ve", "--measure", "crr", "--variant", "9", "--vaccine", "m"]));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("comparison"));
}

#[test]
fn undefined_relative_ve_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc: Value = serde_json::from_slice(&std::fs::read(fixture()).unwrap()).unwrap();
    doc["vaccines"][1]["thetas"] = serde_json::json!([0.0, 0.7]);
    let path = dir.path().join("s.json");
    std::fs::write(&path, serde_json::to_vec(&doc).unwrap()).unwrap();
    let p = path.to_str().unwrap();
    let o = vecalc(&with_scenario(
        p,
        &["ve", "--measure", "crr", "--variant", "1", "--vaccine", "m", "--reference", "n"],
    ));
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn precision_is_reproducible() {
    let path = fixture();
    let p = path.to_str().unwrap();
    let args = with_scenario(p, &["precision", "--variant", "1", "--vaccine", "m", "--seed", "7", "--n-sim", "100"]);
    let a = vecalc(&args);
    let b = vecalc(&args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let (header, rows) = records(&stdout(&a));
    assert!(header.iter().any(|h| h == "estimate_mean") && header.iter().any(|h| h == "n_degenerate"));
    assert_eq!(rows.len(), 1);
}

#[test]
fn json_floats_round_trip_bitwise() {
    let path = fixture();
    let p = path.to_str().unwrap();
    let o = vecalc(&with_scenario(
        p,
        &["curve", "--measure", "or", "--variant", "2", "--vaccine", "n", "--start", "0.1", "--stop", "10", "--points", "7", "--spacing", "log", "--format", "json"],
    ));
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["scenario_hash"].as_str().unwrap().len(), 64);

    let csv = vecalc(&with_scenario(
        p,
        &["curve", "--measure", "or", "--variant", "2", "--vaccine", "n", "--start", "0.1", "--stop", "10", "--points", "7", "--spacing", "log"],
    ));
    let from_csv: Vec<f64> = records(&stdout(&csv)).1.iter().map(|r| r[1].parse().unwrap()).collect();
    let from_json: Vec<f64> = v["values"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(from_csv.len(), 7);
    for (a, b) in from_csv.iter().zip(&from_json) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn several_scenarios_add_a_column() {
    let path = fixture();
    let p = path.to_str().unwrap();
    let o = vecalc(&["limits", "--measure", "or", "--variant", "1", "--vaccine", "m", "--scenario", p, "--scenario", p]);
    assert!(o.status.success());
    let (header, rows) = records(&stdout(&o));
    assert_eq!(header, ["kind", "regime", "value", "status", "comparison", "scenario"]);
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[1][..4], ["or", "large_lambda_t", "1", "ok"]);
    assert_eq!(rows[3][5], p);
}

#[test]
fn tnd_reports_counts_and_ve() {
    let path = fixture();
    let p = path.to_str().unwrap();
    let o = vecalc(&with_scenario(p, &["tnd", "--format", "json"]));
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["tnd_ve"].as_array().unwrap().len(), 4);
    assert_eq!(v["tnd_ve"][0]["kind"], "crr");
    let ve = v["tnd_ve"][0]["value"].as_f64().unwrap();
    assert!((ve - leaky_crr_reference()).abs() < 1e-9);
}

#[test]
fn mdve_writes_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mdve.csv");
    let path = fixture();
    let o = vecalc(&with_scenario(
        path.to_str().unwrap(),
        &["mdve", "--variant", "1", "--vaccine", "m", "--out", out.to_str().unwrap()],
    ));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&out).unwrap();
    let (header, rows) = records(&text);
    assert_eq!(header, ["design", "kind", "comparison", "mdve", "achieved_power", "peak_ve", "peak_power"]);
    let row = &rows[0];
    assert_eq!(row[0], "cohort_crr");
    assert_eq!(row[2], "variant_specific(i=1,m=m)");
    let power: f64 = row[4].parse().unwrap();
    assert!((power - 0.8).abs() < 1e-6);
}
