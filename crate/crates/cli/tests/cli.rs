use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const REFERENCE_ROWS: &str = "x,y,z\n1,1,1\n2,2,2\n3,3,3\n";
const PERMUTED_ROWS: &str = "x,y,z\n3,1,2\n1,2,3\n2,3,1\n";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_groupdrift"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn groupdrift")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn permuted_rows(dir: &TempDir) -> (PathBuf, PathBuf) {
    (write(dir, "target.csv", PERMUTED_ROWS), write(dir, "reference.csv", REFERENCE_ROWS))
}

fn drift_value(out: &str) -> f64 {
    out.split_whitespace()
        .find_map(|t| t.strip_prefix("drift="))
        .expect("drift= in output")
        .parse()
        .unwrap()
}

fn attributions(report: &Value) -> Vec<(String, f64)> {
    report["per_group"]
        .as_array()
        .unwrap()
        .iter()
        .map(|g| (g["group"].as_str().unwrap().to_string(), g["attribution"].as_f64().unwrap()))
        .collect()
}

#[test]
fn permuted_rows_drift() {
    let dir = TempDir::new().unwrap();
    let (t, r) = permuted_rows(&dir);
    for (metric, want) in [("evd", -1.0), ("w1", 3.0)] {
        let o = run(&["drift", "--explicand", s(&t), "--baseline", s(&r), "--model", "demo:xz+y+z", "--metric", metric]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert_eq!(drift_value(&stdout(&o)), want, "{metric}");
        assert!(stdout(&o).starts_with(&format!("metric={metric} ")));
    }
    let o = run(&["drift", "--explicand", s(&t), "--baseline", s(&r), "--model", "x*z + y + z", "--metric", "w1"]);
    assert_eq!(drift_value(&stdout(&o)), 3.0);
}

#[test]
fn identical_files_have_zero_drift() {
    let dir = TempDir::new().unwrap();
    let (_, r) = permuted_rows(&dir);
    for metric in ["w1", "evd", "jsd", "ks"] {
        let o = run(&["drift", "--explicand", s(&r), "--baseline", s(&r), "--model", "demo:xz+y+z", "--metric", metric]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert_eq!(drift_value(&stdout(&o)), 0.0, "{metric}");
    }
}

#[test]
fn drift_json_output() {
    let dir = TempDir::new().unwrap();
    let (t, r) = permuted_rows(&dir);
    let json = dir.path().join("d.json");
    let o = run(&[
        "drift", "--explicand", s(&t), "--baseline", s(&r), "--model", "demo:xz+y+z", "--metric", "evd", "--json", s(&json),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(v["metric"], "evd");
    assert_eq!(v["drift"].as_f64(), Some(-1.0));
}

#[test]
fn precomputed_predictions() {
    let dir = TempDir::new().unwrap();
    let a = write(&dir, "a.csv", "x,score\n1,9\n2,8\n3,6\n");
    let b = write(&dir, "b.csv", "x,score\n1,3\n2,8\n3,15\n");
    let o = run(&["drift", "--explicand", s(&a), "--baseline", s(&b), "--predictions", "score", "--metric", "w1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(drift_value(&stdout(&o)), 3.0);
}

#[test]
fn unequal_sizes_need_bootstrap() {
    let dir = TempDir::new().unwrap();
    let (_, r) = permuted_rows(&dir);
    let big = write(&dir, "big.csv", "x,y,z\n1,1,1\n2,2,2\n3,3,3\n4,4,4\n");
    let o = run(&["drift", "--explicand", s(&big), "--baseline", s(&r), "--model", "demo:xz+y+z", "--metric", "w1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--bootstrap"));

    let args = [
        "drift", "--explicand", s(&big), "--baseline", s(&r), "--model", "demo:xz+y+z", "--metric", "evd",
        "--bootstrap", "3,50,0.9", "--seed", "7",
    ];
    let first = run(&args);
    assert!(first.status.success(), "{}", stderr(&first));
    assert!(stdout(&first).contains("repetitions=50 resample_size=3"));
    assert_eq!(stdout(&first), stdout(&run(&args)));
}

#[test]
fn closed_form_attributions() {
    let dir = TempDir::new().unwrap();
    let e = write(&dir, "e.csv", "x,y,z\n1,2,3\n");
    let b = write(&dir, "b.csv", "x,y,z\n0,0,0\n");
    let cases = [
        ("demo:x-y", "evd", "shapley", [1.0, -2.0, 0.0]),
        ("demo:x-y", "w1", "shapley", [0.0, 1.0, 0.0]),
        ("demo:xy-z^2", "w1", "shapley", [-1.0 / 3.0, -1.0 / 3.0, 23.0 / 3.0]),
        ("demo:min", "evd", "ig", [1.0, 0.0, 0.0]),
        ("demo:abs", "w1", "ig", [-1.0, 2.0, 0.0]),
    ];
    for (model, metric, method, want) in cases {
        let o = run(&[
            "attribute", "--explicand", s(&e), "--baseline", s(&b), "--model", model, "--metric", metric,
            "--method", method, "--groups", "features",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
        let got = attributions(&report);
        assert_eq!(got.iter().map(|g| g.0.as_str()).collect::<Vec<_>>(), ["x", "y", "z"]);
        for ((_, g), w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-6, "{model} {metric} {method}: {got:?} vs {want:?}");
        }
    }
}

#[test]
fn ig_rejects_non_differentiable_metrics() {
    let dir = TempDir::new().unwrap();
    let (t, r) = permuted_rows(&dir);
    for metric in ["ks", "jsd"] {
        let o = run(&[
            "attribute", "--explicand", s(&t), "--baseline", s(&r), "--model", "demo:xz+y+z", "--metric", metric,
            "--method", "ig", "--groups", "features",
        ]);
        assert_eq!(o.status.code(), Some(2), "{metric}: {}", stderr(&o));
        assert!(stderr(&o).contains("differentiable"), "{}", stderr(&o));
    }
}

#[test]
fn input_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let (t, r) = permuted_rows(&dir);
    let o = run(&["drift", "--explicand", s(&t), "--baseline", s(&r), "--model", "demo:xz+y+z", "--metric", "w1", "--nope"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["drift", "--explicand", "/no/such.csv", "--baseline", s(&r), "--model", "demo:xz+y+z", "--metric", "w1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["drift", "--explicand", s(&t), "--baseline", s(&r), "--model", "x + w", "--metric", "w1"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn csv_report_format() {
    let dir = TempDir::new().unwrap();
    let (t, r) = permuted_rows(&dir);
    let out = dir.path().join("r.csv");
    let o = run(&[
        "attribute", "--explicand", s(&t), "--baseline", s(&r), "--model", "demo:xz+y+z", "--metric", "evd",
        "--groups", "features", "--format", "csv", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out).unwrap();
    assert!(text.lines().next().unwrap().starts_with("group,attribution"), "{text}");
    assert_eq!(text.lines().count(), 4);
}

fn synth(dir: &TempDir, name: &str, seed: u64, inject: Option<&str>) -> PathBuf {
    let out = dir.path().join(name);
    let seed = seed.to_string();
    let mut args = vec!["synth", "--rows-per-period", "400", "--periods", "3", "--seed", &seed, "--out", s(&out)];
    if let Some(spec) = inject {
        args.extend(["--inject", spec]);
    }
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

#[test]
fn case_study_pipeline() {
    let dir = TempDir::new().unwrap();
    let buggy = synth(&dir, "buggy.csv", 1, Some("location_case_bug@1"));
    let clean = synth(&dir, "clean.csv", 2, None);
    let head = fs::read_to_string(&buggy).unwrap();
    assert!(head.starts_with("day,location,education,experience,engineer_type,relevant_experience\n"));
    assert!(head.contains("springfield"), "lower-cased locations expected on day 1");

    let args = [
        "attribute", "--explicand", s(&buggy), "--baseline", s(&clean), "--model", "salary", "--metric", "w1",
        "--method", "shapley-sampled", "--permutations", "60", "--seed", "3", "--groups", "features*rows:day",
    ];
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let got = attributions(&report);
    assert_eq!(got.len(), 15);
    let (top, _) = got.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    assert!(top.starts_with("location") && top.contains('1'), "top group {top}: {got:?}");
    assert_eq!(report["encodings"]["location"]["unknown"]["fallback"], 0.0);

    let again = run(&["--threads", "1"].iter().chain(&args).copied().collect::<Vec<_>>());
    assert_eq!(stdout(&o), stdout(&again), "thread count changed the result");
}

#[test]
fn timeseries_flags_the_buggy_day() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir, "d.csv", 4, Some("location_case_bug@2"));
    let o = run(&["timeseries", "--data", s(&data), "--model", "salary"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["reference"], "0");
    let periods = v["periods"].as_array().unwrap();
    assert_eq!(periods.len(), 3);
    assert_eq!(periods[0]["w1"].as_f64(), Some(0.0));
    let evd2 = periods[2]["evd"].as_f64().unwrap();
    assert!(evd2 < -5000.0, "day 2 evd {evd2}");
    assert!(periods[1]["w1"].as_f64().unwrap() < periods[2]["w1"].as_f64().unwrap());
}

#[test]
fn axioms_table() {
    let o = run(&["axioms", "--trials", "200", "--seed", "5"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let out = stdout(&o);
    for metric in ["w1", "evd", "jsd", "ks"] {
        assert!(out.lines().any(|l| l.starts_with(metric)), "{out}");
    }
    assert!(!out.contains("UNEXPECTED"), "{out}");
}

#[test]
fn config_file_supplies_flags_and_cli_wins() {
    let dir = TempDir::new().unwrap();
    let (t, r) = permuted_rows(&dir);
    let cfg = write(
        &dir,
        "run.cfg",
        &format!("# permuted rows\nexplicand = {}\nbaseline = {}\nmodel = demo:xz+y+z\nmetric = w1\n", s(&t), s(&r)),
    );
    let o = run(&["--config", s(&cfg), "drift"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(drift_value(&stdout(&o)), 3.0);
    let o = run(&["--config", s(&cfg), "drift", "--metric", "evd"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(drift_value(&stdout(&o)), -1.0);
}
