use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn oblique(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oblique")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

const GROWTH: &str = r#"
name = "growth_copy"
checks = ["theorem1"]

[problem]
kind = "emden_fowler"
n = 2
coefficient = "-2*t^(-6)"
derivative = "12*t^(-7)"

[ivp]
t0 = 1.0
x0 = 1.0
xp0 = 2.0

[integration]
horizon = 100.0
"#;

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn classify_free_motion_json() {
    let out = oblique(&["classify", "--config", "builtin:free_motion", "--omit-timings"]);
    assert_eq!(code(&out), 0);
    let doc = json(&out);
    assert!(doc.get("timings").is_none());
    let kind = &doc["report"]["classification"]["kind"];
    assert_eq!(kind["kind"], "asymptotically_linear", "{kind}");
    assert!((kind["x1"].as_f64().unwrap() - 2.0).abs() < 1e-9);
}

#[test]
fn timings_are_reported_by_default() {
    let out = oblique(&["classify", "--config", "builtin:free_motion"]);
    assert_eq!(code(&out), 0);
    assert!(json(&out)["timings"].is_object());
}

#[test]
fn integrate_writes_csv() {
    let out = oblique(&["integrate", "--config", "builtin:free_motion", "--format", "csv"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x,xp,u,v,V1,V2"));
    let mut last_t = 0.0;
    let mut rows = 0;
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 7, "{line}");
        let t: f64 = cols[0].parse().unwrap();
        let x: f64 = cols[1].parse().unwrap();
        assert!(t > last_t);
        assert!((x - (2.0 * t - 1.0)).abs() <= 1e-8 * x.abs().max(1.0), "{line}");
        last_t = t;
        rows += 1;
    }
    assert!(rows > 2);
    assert_eq!(last_t, 100.0);
}

#[test]
fn check_exits_one_on_failed_hypothesis() {
    let out = oblique(&["check", "--config", "builtin:control_caligo"]);
    assert_eq!(code(&out), 1);
    let doc = json(&out);
    let verdicts = doc["report"]["hypotheses"].as_array().unwrap();
    assert!(verdicts
        .iter()
        .flat_map(|c| c["verdicts"].as_array().unwrap())
        .any(|v| v["status"] == "fails" && v["witness"].is_object()));
}

#[test]
fn check_passes_on_demo() {
    let out = oblique(&["check", "--config", "builtin:theorem1_demo"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "growth.toml", GROWTH);
    let out = oblique(&["classify", "--config", &path, "--horizon", "10", "--omit-timings"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc = json(&out);
    assert_eq!(doc["report"]["scenario"]["name"], "growth_copy");
    assert_eq!(doc["report"]["trajectory"]["t_last"], 10.0);
    let x = doc["report"]["trajectory"]["final_state"]["x"].as_f64().unwrap();
    assert!((x - 100.0).abs() < 1e-5);
}

#[test]
fn emit_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let plot = dir.path().join("residual.csv");
    let report = dir.path().join("report.json");
    let out = oblique(&[
        "classify",
        "--config",
        "builtin:theorem1_demo",
        "--emit-plot-data",
        plot.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(doc["report"]["classification"]["kind"]["kind"], "asymptotically_linear");
    let text = fs::read_to_string(&plot).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,residual"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let (t, r) = l.split_once(',').unwrap();
            (t.parse().unwrap(), r.parse().unwrap())
        })
        .collect();
    assert!(rows.len() > 10);
    // the residual dies out at the far end
    let (_, last) = rows[rows.len() - 1];
    assert!(last.abs() < 1e-3, "{last}");
}

#[test]
fn plot_data_needs_an_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let plot = dir.path().join("residual.csv");
    let out = oblique(&["classify", "--config", "builtin:blowup", "--emit-plot-data", plot.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
}

#[test]
fn sweep_csv() {
    let out = oblique(&["sweep", "--config", "builtin:theorem1_demo", "--format", "csv", "--workers", "2"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("x0,xp0,kind,x1,x2,t_inf,threshold,threshold_margin,error")
    );
    assert_eq!(lines.count(), 256);
}

#[test]
fn sweep_without_grid_is_a_usage_error() {
    let out = oblique(&["sweep", "--config", "builtin:free_motion"]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    let bad_toml = write(dir.path(), "bad.toml", "name = [");
    let bad_expr = write(dir.path(), "expr.toml", &GROWTH.replace("-2*t^(-6)", "-2*t^(-6"));
    let no_horizon = write(dir.path(), "horizon.toml", &GROWTH.replace("horizon = 100.0", ""));
    let overlap = write(
        dir.path(),
        "overlap.toml",
        &GROWTH.replace(
            "coefficient = \"-2*t^(-6)\"",
            "coefficient = { default = \"0\", segments = [{ from = 1.0, to = 3.0, expr = \"-2\" }, { from = 2.0, to = 4.0, expr = \"-1\" }] }",
        ),
    );
    let cases: [&[&str]; 8] = [
        &["classify", "--config", missing.to_str().unwrap()],
        &["classify", "--config", &bad_toml],
        &["classify", "--config", &bad_expr],
        &["classify", "--config", &no_horizon],
        &["classify", "--config", &overlap],
        &["classify", "--config", "builtin:nonexistent"],
        &["classify", "--config", "builtin:growth", "--rel-tol", "-1"],
        &["frobnicate"],
    ];
    for args in cases {
        let out = oblique(args);
        assert_eq!(code(&out), 2, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stderr.is_empty());
    }
    let out = oblique(&["classify", "--config", &overlap]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("overlap"));
}

#[test]
fn verify_suite_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("suite.json");
    let out = oblique(&["verify-paper", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    assert_eq!(doc["report"]["passed"], true);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("[PASS] criterion 1"));
    assert!(!stderr.contains("[FAIL]"));
}
