use std::path::Path;
use std::process::{Command, Output};

use pcrb::blocks::ExpectationEstimator;
use pcrb::models::MaTrackingModel;
use pcrb::recursion::run;

fn pcrb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcrb"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = pcrb(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn read_csv(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.unwrap().iter().map(|v| v.parse::<f64>().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn run_writes_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("e1.csv");
    ok(&["run", "--model", "example1", "--horizon", "40", "--out", out.to_str().unwrap()]);
    let (header, rows) = read_csv(&std::fs::read_to_string(&out).unwrap());
    assert_eq!(header[0], "k");
    assert_eq!(header.len(), 1 + 4 + 4 + 2);
    assert_eq!(header.last().unwrap(), "sqrt_bound_1");
    assert_eq!(rows.len(), 40);
}

#[test]
fn csv_round_trips_exactly() {
    let (header, rows) = read_csv(&ok(&["run", "--model", "example1", "--horizon", "25"]));
    let trace = run(&MaTrackingModel::example1(), &ExpectationEstimator::analytic(), 25).unwrap();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    for (row, e) in rows.iter().zip(&trace.entries) {
        assert_eq!(row[0] as usize, e.k);
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(row[col(&format!("J_{i}{j}"))], e.info[(i, j)]);
                assert_eq!(row[col(&format!("bound_{i}{j}"))], e.bound[(i, j)]);
            }
            assert_eq!(row[col(&format!("sqrt_bound_{i}"))], e.sqrt_bound(i));
        }
    }
}

#[test]
fn sampled_runs_are_reproducible_across_thread_counts() {
    let args = ["run", "--model", "example2", "--samples", "20000", "--seed", "7", "--horizon", "15"];
    let a = ok(&args);
    let b = ok(&args);
    assert_eq!(a, b);
    let mut single = vec!["--threads", "1"];
    single.extend(args);
    let mut four = vec!["--threads", "4"];
    four.extend(args);
    assert_eq!(ok(&single), a);
    assert_eq!(ok(&four), a);

    let other = ok(&["run", "--model", "example2", "--samples", "20000", "--seed", "8", "--horizon", "15"]);
    assert_ne!(other, a);
}

#[test]
fn malformed_configs_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(
        dir.path(),
        "unknown.json",
        r#"{"kind": "builtin_example1", "state_dim": 2, "meas_dim": 2,
            "lags": {"l1": 1, "l2": 1, "l3": 2, "l4": 1}, "colour": 3}"#,
    );
    let out = pcrb(&["run", "--config", &unknown]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));

    let wrong_dim = write(
        dir.path(),
        "dim.json",
        r#"{"kind": "builtin_example1", "state_dim": 3, "meas_dim": 2,
            "lags": {"l1": 1, "l2": 1, "l3": 2, "l4": 1}}"#,
    );
    let out = pcrb(&["run", "--config", &wrong_dim]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("state_dim"));

    let broken = write(dir.path(), "broken.json", "{ not json");
    assert_eq!(pcrb(&["run", "--config", &broken]).status.code(), Some(1));
    assert_eq!(pcrb(&["run", "--config", "/nonexistent/model.json"]).status.code(), Some(1));
    assert_eq!(pcrb(&["run"]).status.code(), Some(1));
    assert_eq!(pcrb(&["run", "--model", "example1", "--horizon", "0"]).status.code(), Some(1));
}

#[test]
fn compare_columns() {
    let (header, rows) = read_csv(&ok(&["compare", "--model", "example1", "--horizon", "40"]));
    assert_eq!(header, ["k", "pcrb_t", "pcrb_i", "pcrb_a", "pcrb_p"]);
    assert_eq!(rows.len(), 40);
    let (header, _) = read_csv(&ok(&["compare", "--model", "example1", "--baselines", "i"]));
    assert_eq!(header, ["k", "pcrb_t", "pcrb_i"]);
}

#[test]
fn compare_on_independent_noises_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "white.json",
        r#"{"kind": "linear_gaussian_ma", "state_dim": 2, "meas_dim": 2,
            "lags": {"l1": 0, "l2": 0, "l3": 0, "l4": 0},
            "f": [1, 2, 0, 1], "h": [1, 0, 0, 1],
            "q": [26.666666666666668, 20, 20, 20], "r": [400, 0, 0, 25],
            "ma_coeff": 0, "cross": false,
            "prior": {"mean": [0, 10], "cov": [100, 0, 0, 10]}}"#,
    );
    let (header, rows) = read_csv(&ok(&["compare", "--config", &cfg, "--horizon", "30"]));
    assert_eq!(header.len(), 5);
    for row in rows {
        for v in &row[2..] {
            assert!((v - row[1]).abs() <= 1e-12 * row[1], "{row:?}");
        }
    }
}

#[test]
fn compare_needs_the_tracking_family() {
    let out = pcrb(&["compare", "--model", "example2", "--samples", "100", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oracle_verify_exit_codes() {
    let out = pcrb(&["oracle-verify", "--model", "example1"]);
    assert_eq!(out.status.code(), Some(0));
    let (header, rows) = read_csv(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(header, ["k", "max_rel_dev"]);
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().all(|r| r[1] < 1e-8));

    let out = pcrb(&["oracle-verify", "--model", "example1", "--corrupt-d-assembly"]);
    assert_ne!(out.status.code(), Some(0));

    let out = pcrb(&["oracle-verify", "--model", "example1", "--horizon", "25"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sensors_reports_sweep_and_count() {
    let out = pcrb(&["sensors", "--model", "example1", "--max-m", "6", "--target", "30"]);
    assert!(out.status.success());
    let (header, rows) = read_csv(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(header, ["m", "avg_bound", "final_bound"]);
    assert_eq!(rows.len(), 6);
    assert!(rows.windows(2).all(|w| w[1][1] < w[0][1]));
    assert!(String::from_utf8_lossy(&out.stderr).contains("1 sensor"));
}

#[test]
fn json_output_parses() {
    let text = ok(&["run", "--model", "example1", "--horizon", "5", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["entries"].as_array().unwrap().len(), 5);
    let text = ok(&["sensors", "--model", "example1", "--max-m", "3", "--target", "10", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(v.is_object());
}
