use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_intervalcast"));
    c.env_remove("INTERVALCAST_JOBS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn write_series(dir: &Path, name: &str, values: &[f64]) -> String {
    let path = dir.join(name);
    let body: String = std::iter::once("value\n".to_string())
        .chain(values.iter().map(|v| format!("{v}\n")))
        .collect();
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).expect("json error line");
    serde_json::from_str(line).unwrap()
}

fn seasonal(n: usize) -> Vec<f64> {
    (0..n).map(|t| 20.0 + [1.0, 3.0, -2.0, 0.5][t % 4] + ((t * 37) % 11) as f64 * 0.1).collect()
}

#[test]
fn invalid_alpha_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_series(dir.path(), "s.csv", &seasonal(40));
    let out = run(&["forecast", "--input", &input, "--horizon", "4", "--alpha", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["schema_version"], 1);
    assert_eq!(err["error"]["kind"], "config");
}

#[test]
fn missing_input_is_an_io_error() {
    let out = run(&["forecast", "--input", "/nonexistent/series.csv", "--horizon", "2"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(stderr_json(&out)["error"]["exit_code"], 4);
}

#[test]
fn unknown_flag_is_a_config_error() {
    let out = run(&["forecast", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["kind"], "config");
}

#[test]
fn zero_jobs_from_the_environment_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().to_str().unwrap();
    let out = bin()
        .env("INTERVALCAST_JOBS", "0")
        .args(["evaluate", "--train", &format!("{p}/a.csv"), "--test", &format!("{p}/b.csv"), "--frequency", "yearly"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn constant_series_json_forecast() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_series(dir.path(), "c.csv", &[7.0; 30]);
    let out = run(&[
        "forecast", "--input", &input, "--horizon", "3", "--rule", "qr", "--format", "json",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["schema_version"], 1);
    let rows = doc["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    for (j, r) in rows.iter().enumerate() {
        assert_eq!(r["t"], 31 + j);
        let (lo, pt, up) = (r["lower"].as_f64().unwrap(), r["point"].as_f64().unwrap(), r["upper"].as_f64().unwrap());
        assert!((pt - 7.0).abs() < 1e-2);
        assert!(up - lo < 2e-2);
    }
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_series(dir.path(), "s.csv", &seasonal(40));
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, format!("input = \"{input}\"\nhorizon = 5\nrule = \"naive\"\nseasonal-period = 4\n")).unwrap();
    let from_file = run(&["--config", cfg.to_str().unwrap(), "forecast"]);
    assert_eq!(from_file.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&from_file.stdout).lines().count(), 6);
    let flagged = run(&["--config", cfg.to_str().unwrap(), "forecast", "--horizon", "2"]);
    assert_eq!(String::from_utf8_lossy(&flagged.stdout).lines().count(), 3);

    fs::write(&cfg, "horizon = 5\nnot_a_key = 1\n").unwrap();
    let bad = run(&["--config", cfg.to_str().unwrap(), "forecast", "--input", &input]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn plotdata_calibrated_band_contains_the_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let values = seasonal(48);
    let input = write_series(dir.path(), "s.csv", &values);
    let out = run(&[
        "plotdata", "--input", &input, "--horizon", "4", "--seasonal-period", "4", "--rule", "mqr",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_reader(out.stdout.as_slice());
    let rows: Vec<(usize, String, f64)> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].parse().unwrap(), r[1].to_string(), r[2].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 48 + 5 * 4);
    let role = |name: &str| -> Vec<f64> { rows.iter().filter(|r| r.1 == name).map(|r| r.2).collect() };
    let (le, ue, lc, uc) = (role("lower_estimation"), role("upper_estimation"), role("lower_calibrated"), role("upper_calibrated"));
    for j in 0..4 {
        assert!(lc[j] <= le[j] && uc[j] >= ue[j]);
    }
}

#[test]
fn synth_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    let synth = run(&["synth", "--kind", "yearly", "--count", "5", "--seed", "3", "--train", &p("tr.csv"), "--test", &p("te.csv")]);
    assert_eq!(synth.status.code(), Some(0));
    let eval = run(&[
        "--jobs", "2", "evaluate", "--train", &p("tr.csv"), "--test", &p("te.csv"), "--frequency", "yearly",
        "--rule", "naive", "--json", &p("r.json"),
    ]);
    assert_eq!(eval.status.code(), Some(0), "{}", String::from_utf8_lossy(&eval.stderr));
    let csv = String::from_utf8(eval.stdout).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5 + 1);
    assert!(csv.lines().last().unwrap().starts_with("__aggregate__"));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(p("r.json")).unwrap()).unwrap();
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["series"], 5);
}
