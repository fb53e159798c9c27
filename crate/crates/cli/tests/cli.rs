use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn sinkstab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sinkstab")).args(args).output().expect("binary runs")
}

fn run_in(dir: &Path, cmd: &str, config: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    sinkstab(&args)
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn parse_rows(text: &str) -> Vec<(String, f64)> {
    text.lines()
        .skip(1)
        .map(|l| {
            let (key, value) = l.rsplit_once(',').unwrap();
            (key.to_string(), value.parse().unwrap())
        })
        .collect()
}

#[test]
fn triangular_run_matches_golden_trace() {
    let dir = TempDir::new().unwrap();
    let out = run_in(dir.path(), "run", &data("triangular.json"), &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let got = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let want = fs::read_to_string(data("triangular_trace.csv")).unwrap();
    assert_eq!(got.lines().next(), Some("n,side,metric,value"));

    let (got, want) = (parse_rows(&got), parse_rows(&want));
    assert_eq!(got.len(), 4 * 2 * 50);
    let metrics: std::collections::BTreeSet<&str> = got.iter().map(|(k, _)| k.rsplit(',').next().unwrap()).collect();
    assert_eq!(metrics.len(), 4);
    for ((gk, gv), (wk, wv)) in got.iter().zip(&want) {
        assert_eq!(gk, wk);
        assert!((gv - wv).abs() <= 1e-14 + 1e-9 * wv.abs(), "{gk}: {gv} vs {wv}");
    }
    assert!(dir.path().join("report.txt").exists());
}

#[test]
fn run_output_is_deterministic() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for d in [&a, &b] {
        assert!(run_in(d.path(), "run", &data("triangular.json"), &[]).status.success());
    }
    for f in ["trace.csv", "report.txt"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seeded_random_model_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "r.json", r#"{"model": {"random": {"n": 6, "m": 5}}, "seed": 4, "maxiter": 20}"#);
    let read = |sub: &str, extra: &[&str]| {
        let d = dir.path().join(sub);
        fs::create_dir(&d).unwrap();
        let o = run_in(&d, "run", &cfg, extra);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(d.join("trace.csv")).unwrap()
    };
    let first = read("a", &[]);
    assert_eq!(first, read("b", &[]));
    assert_eq!(first, read("c", &["--seed", "4"]));
    assert_ne!(first, read("d", &["--seed", "5"]));
}

#[test]
fn maxiter_zero_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"model": {"zoo": {"name": "triangular"}}, "maxiter": 0}"#);
    let o = run_in(dir.path(), "run", &cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("maxiter"));
}

#[test]
fn missing_output_directory_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let o = run_in(&dir.path().join("absent"), "run", &data("triangular.json"), &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("i/o"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let cases = [
        ("unknown.json", r#"{"model": {"zoo": {"name": "triangular"}}, "iterations": 5}"#, "run"),
        ("model.json", r#"{"model": {"zoo": {"name": "nonexistent"}}}"#, "run"),
        ("param.json", r#"{"model": {"zoo": {"name": "triangular", "params": {"q": 1}}}}"#, "run"),
        ("metric.json", r#"{"model": {"zoo": {"name": "triangular"}}, "metrics": ["nope"]}"#, "run"),
        ("syntax.json", r#"{"model": "#, "run"),
        ("empty.json", r#"{"model": {"zoo": {"name": "exponential"}}, "deltas": []}"#, "diagnose"),
        ("plain.json", r#"{"model": {"random": {"n": 3, "m": 3}}}"#, "diagnose"),
        ("notgauss.json", r#"{"model": {"zoo": {"name": "triangular"}}}"#, "gaussian"),
    ];
    for (name, text, cmd) in cases {
        let cfg = write_config(dir.path(), name, text);
        let o = run_in(dir.path(), cmd, &cfg, &[]);
        assert_eq!(o.status.code(), Some(2), "{name}: {}", stderr(&o));
    }
    let o = run_in(dir.path(), "run", &dir.path().join("missing.json"), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gaussian_dimension_above_eight_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "g.json",
        r#"{"model": {"gaussian": {"m": [0,0,0,0,0,0,0,0,0], "sigma": 1, "m_bar": 0, "sigma_bar": 1, "tau": 1}}}"#,
    );
    let o = run_in(dir.path(), "gaussian", &cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dimension"));
}

#[test]
fn non_spd_tau_exits_2_with_cholesky_message() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "g.json",
        r#"{"model": {"gaussian": {"m": [0, 0], "sigma": [[1, 0], [0, 1]], "m_bar": [0, 0],
            "sigma_bar": [[1, 0], [0, 1]], "tau": [[1, 2], [2, 1]]}}}"#,
    );
    let o = run_in(dir.path(), "gaussian", &cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Cholesky"), "{}", stderr(&o));
}

#[test]
fn degenerate_cost_row_exits_3_with_grid_point() {
    let dir = TempDir::new().unwrap();
    let o = run_in(dir.path(), "run", &data("degenerate.json"), &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("grid point 0"), "{}", stderr(&o));
}

#[test]
fn explicit_grid_with_side_file_runs() {
    let dir = TempDir::new().unwrap();
    let o = run_in(dir.path(), "run", &data("grid.json"), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.lines().count() > 1);
    let o = run_in(dir.path(), "run", &data("grid.json"), &["--refine", "2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gaussian_reports_theoretical_rate_and_cross_validation() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "g.json",
        r#"{"model": {"gaussian": {"m": 0, "sigma": 1, "m_bar": 0, "sigma_bar": 1, "tau": 1}}, "cycles": 20}"#,
    );
    let o = run_in(dir.path(), "gaussian", &cfg, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("theoretical rate: 0.381966"), "{}", stdout(&o));

    let cfg = write_config(
        dir.path(),
        "cv.json",
        r#"{"model": {"gaussian": {"m": 0, "sigma": 1, "m_bar": 0, "sigma_bar": 1, "tau": 3}},
            "cycles": 10, "cross_validate": true}"#,
    );
    let o = run_in(dir.path(), "gaussian", &cfg, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let line = text.lines().find(|l| l.contains("max mean error")).expect("cross-validation lines");
    let err: f64 = line.split_whitespace().last().unwrap().parse().unwrap();
    assert!(err <= 1e-3, "{line}");
}

#[test]
fn exponential_diagnose_reproduces_band() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "e.json",
        r#"{"model": {"zoo": {"name": "exponential", "params": {"varsigma": 0.2}}},
            "deltas": [0.1, 0.3, 0.45, 0.6, 0.9]}"#,
    );
    let o = run_in(dir.path(), "diagnose", &cfg, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("diagnose.json")).unwrap()).unwrap();
    let verdicts: Vec<&str> =
        doc["points"].as_array().unwrap().iter().map(|p| p["h_prime"]["verdict"].as_str().unwrap()).collect();
    assert_eq!(verdicts, ["violated", "satisfied", "satisfied", "violated", "violated"]);
    assert!(stdout(&o).contains("H_prime"));
}

#[test]
fn gaussian_diagnose_agrees_with_closed_form() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "g.json",
        r#"{"model": {"gaussian": {"m": 0, "sigma": 1, "m_bar": 0, "sigma_bar": 1, "tau": 4}},
            "deltas": [0.1, 0.5, 0.9]}"#,
    );
    let o = run_in(dir.path(), "diagnose", &cfg, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("diagnose.json")).unwrap()).unwrap();
    for p in doc["points"].as_array().unwrap() {
        assert_eq!(p["h"]["verdict"], p["analytic"], "{p}");
    }
}

#[test]
fn rates_refits_an_existing_trace() {
    let o = sinkstab(&["rates", data("triangular_trace.csv").to_str().unwrap(), "--theoretical", "0.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("theoretical rate: 0.5"));
    assert!(text.contains("TV even"));
    let o = sinkstab(&["rates", "/nonexistent/trace.csv"]);
    assert_eq!(o.status.code(), Some(3));
}
