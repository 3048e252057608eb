use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn nshvi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nshvi"))
        .args(args)
        .env_remove("SOURCE_DATE_EPOCH")
        .output()
        .expect("binary runs")
}

fn run(sub: &str, config: &Path, out: Option<&Path>, extra: &[&str]) -> Output {
    let mut args = vec![
        sub.to_string(),
        "--config".into(),
        config.display().to_string(),
    ];
    if let Some(o) = out {
        args.extend(["--out".into(), o.display().to_string()]);
    }
    args.extend(extra.iter().map(|s| s.to_string()));
    nshvi(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Data rows of a CSV written with a `#` manifest header.
fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines
        .next()
        .unwrap()
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    (header, rows)
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

#[test]
fn check_theta_sign_certifies() {
    let o = run("check-theta", &configs().join("check_sign.json"), None, &[]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("certificate: t0 = 1"), "{s}");
    assert!(
        s.contains("breakpoint 0: left limit -1, right limit 1"),
        "{s}"
    );
}

#[test]
fn check_theta_negative_slope_is_violation() {
    let o = run(
        "check-theta",
        &configs().join("check_negative.json"),
        None,
        &[],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("witness"));
}

#[test]
fn check_theta_orifice_constants() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        "check-theta",
        &configs().join("check_orifice.json"),
        Some(dir.path()),
        &[],
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("certificate: t0 = 1.5, a = 2.5, b = 2"));
    let rep = read_json(&dir.path().join("check.json"));
    assert_eq!(rep["result"]["certificate"]["a"], 2.5);
    assert_eq!(rep["result"]["certificate"]["b"], 2.0);
}

#[test]
fn malformed_config_exits_2_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(
        &cfg,
        "{\"theta\": \"sign\", \"solve\": {\"viscosity\": -1}}",
    )
    .unwrap();
    let out = dir.path().join("out");
    for sub in ["solve", "sweep", "depend", "control"] {
        let o = run(sub, &cfg, Some(&out), &[]);
        assert_eq!(o.status.code(), Some(2), "{sub}");
    }
    let o = run("check-theta", &dir.path().join("missing.json"), None, &[]);
    assert_eq!(o.status.code(), Some(2));
    // valid JSON, invalid value
    let mut v = read_json(&configs().join("solve_zero.json"));
    v["solve"]["viscosity"] = Value::from(0.0);
    let o = run(
        "solve",
        &write_config(dir.path(), "nu0.json", &v),
        Some(&out),
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn missing_out_is_config_error() {
    let o = run("solve", &configs().join("solve_zero.json"), None, &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn rauch_violation_in_run_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = read_json(&configs().join("solve_zero.json"));
    v["theta"] = serde_json::json!({"kind": "linear", "slope": -1.0});
    let out = dir.path().join("out");
    let o = run(
        "solve",
        &write_config(dir.path(), "neg.json", &v),
        Some(&out),
        &[],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn solve_zero_law_zero_force_gives_zero_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        "solve",
        &configs().join("solve_zero.json"),
        Some(dir.path()),
        &[],
    );
    assert_eq!(o.status.code(), Some(0));
    let r = read_json(&dir.path().join("result.json"));
    assert_eq!(r["result"]["status"], "converged");
    let coeffs = r["result"]["final"]["coeffs"].as_array().unwrap();
    assert!(!coeffs.is_empty());
    assert!(coeffs.iter().all(|c| c.as_f64() == Some(0.0)));
    assert_eq!(r["manifest"]["command"], "solve");
    assert_eq!(r["manifest"]["config"]["input"]["solve"]["tol"], 1e-10);
    for f in ["steps.csv", "boundary.csv"] {
        let text = std::fs::read_to_string(dir.path().join(f)).unwrap();
        assert!(text.starts_with("# command: solve\n"), "{f}");
    }
}

#[test]
fn solve_orifice_passes_checks() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        "solve",
        &configs().join("solve_orifice.json"),
        Some(dir.path()),
        &["--seed", "7"],
    );
    assert_eq!(o.status.code(), Some(0));
    let (header, rows) = csv_rows(&dir.path().join("steps.csv"));
    assert_eq!(rows.len(), 5);
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    assert!(rows
        .iter()
        .all(|r| r[col("converged")] == "true" && r[col("apriori_ok")] == "true"));
    let r = read_json(&dir.path().join("result.json"));
    assert!(
        r["result"]["inclusion"]["pass_fraction_regular"]
            .as_f64()
            .unwrap()
            == 1.0
    );
    assert_eq!(r["manifest"]["seed"], 7);
    let (_, branches) = csv_rows(&dir.path().join("branches.csv"));
    assert!(!branches.is_empty());
}

#[test]
fn non_convergence_exits_3_and_flags_results() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = read_json(&configs().join("solve_orifice.json"));
    v["solve"]["max_iters"] = Value::from(1);
    v["solve"]["tol"] = Value::from(1e-15);
    let out = dir.path().join("out");
    let o = run(
        "solve",
        &write_config(dir.path(), "nc.json", &v),
        Some(&out),
        &[],
    );
    assert_eq!(o.status.code(), Some(3));
    let r = read_json(&out.join("result.json"));
    assert_eq!(r["result"]["status"], "non_converged");
    assert!(r["result"]["best_iterate"].is_object());
    let (_, rows) = csv_rows(&out.join("steps.csv"));
    assert_eq!(rows.len(), 1);
}

#[test]
fn sweep_four_steps_has_cauchy_column() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        "sweep",
        &configs().join("sweep.json"),
        Some(dir.path()),
        &[],
    );
    assert_eq!(o.status.code(), Some(0));
    let (header, rows) = csv_rows(&dir.path().join("sweep.csv"));
    assert_eq!(rows.len(), 4);
    let c = header.iter().position(|h| h == "cauchy_eps").unwrap();
    assert_eq!(rows[0][c], "");
    assert!(rows[1..].iter().all(|r| r[c].parse::<f64>().unwrap() > 0.0));
}

#[test]
fn depend_theta_distances_shrink() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        "depend",
        &configs().join("depend_theta.json"),
        Some(dir.path()),
        &[],
    );
    assert_eq!(o.status.code(), Some(0));
    let r = read_json(&dir.path().join("depend.json"));
    assert!(r["result"]["trend_ratio"].as_f64().unwrap() <= 0.2);
    assert_eq!(r["result"]["graph_inclusion"]["passed"], true);
    let (_, graph) = csv_rows(&dir.path().join("graph.csv"));
    assert_eq!(graph.len(), 5);
}

#[test]
fn depend_force_reports_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        "depend",
        &configs().join("depend_force.json"),
        Some(dir.path()),
        &[],
    );
    assert_eq!(o.status.code(), Some(0));
    let r = read_json(&dir.path().join("depend.json"));
    assert!(r["result"]["in_band_ratio"].as_f64().unwrap() <= 0.2);
    assert_eq!(r["result"]["weak_convergence_witness"], true);
}

#[test]
fn control_history_best_is_non_increasing() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = read_json(&configs().join("control_inverse.json"));
    v["optimizer"]["budget"] = Value::from(60);
    let out = dir.path().join("out");
    let o = run(
        "control",
        &write_config(dir.path(), "ctl.json", &v),
        Some(&out),
        &["--seed", "5"],
    );
    assert_eq!(o.status.code(), Some(0));
    let (header, rows) = csv_rows(&out.join("history.csv"));
    let c = header.iter().position(|h| h == "best").unwrap();
    let best: Vec<f64> = rows.iter().map(|r| r[c].parse().unwrap()).collect();
    assert!(best.len() <= 60 && best.len() > 10);
    assert!(best.windows(2).all(|w| w[1] <= w[0]));
    let r = read_json(&out.join("control.json"));
    assert_eq!(r["manifest"]["config"]["input"]["optimizer"]["seed"], 5);
    assert!(r["manifest"]["config"]["radius"].as_f64().unwrap() > 0.0);
    assert_eq!(r["result"]["reference_value"], 0.0);
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("depend_theta.json");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(
        run("depend", &cfg, Some(&a), &["--seed", "1"])
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        run("depend", &cfg, Some(&b), &["--seed", "1", "--threads", "2"])
            .status
            .code(),
        Some(0)
    );
    for f in ["depend.csv", "graph.csv", "depend.json"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}
