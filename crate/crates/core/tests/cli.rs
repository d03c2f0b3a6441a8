use std::fs;
use std::path::PathBuf;
use std::process::Command;

use eigenweight::cli::{parse_config, parse_summary, run, STATUS_NO_POSITIVE};
use eigenweight::optimize::trace_from_csv;
use eigenweight::rearrange::{StepRearrangement, Weight};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("eigenweight-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn config(text: &str, out: &PathBuf) -> eigenweight::cli::RunConfig {
    let mut c = parse_config(text).unwrap();
    c.output_dir = out.clone();
    c
}

fn summary(dir: &PathBuf) -> Vec<(String, String)> {
    parse_summary(&fs::read_to_string(dir.join("summary")).unwrap()).unwrap()
}

fn value<'a>(s: &'a [(String, String)], key: &str) -> &'a str {
    &s.iter().find(|(k, _)| k == key).unwrap_or_else(|| panic!("no `{key}`")).1
}

#[test]
fn solve_constant_weight() {
    let out = scratch("solve");
    let c = config("task = solve\ndomain = 0, 1\nelements_per_axis = 64\nbc = dirichlet\nweight = two-valued: 1, 1, 0\n", &out);
    let outcome = run(&c).unwrap();
    assert_eq!(outcome.exit_code(), 0);
    let s = summary(&out);
    let lambda: f64 = value(&s, "lambda1").parse().unwrap();
    assert!((lambda - 9.8696).abs() < 0.01);
    let d_star: f64 = value(&s, "d_star").parse().unwrap();
    assert!((d_star - 1.0 / lambda).abs() < 1e-15);
    assert_eq!(value(&s, "status"), "converged");
    for f in ["trace.csv", "weight.csv", "eigenfunction.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let eig = fs::read_to_string(out.join("eigenfunction.csv")).unwrap();
    assert!(eig.starts_with("node,x,u\n"));
    assert_eq!(eig.lines().count(), 66);
}

#[test]
fn no_positive_eigenvalue_exits_zero() {
    let out = scratch("negative");
    let c = config("task = solve\ndomain = 0, 1\nelements_per_axis = 16\nbc = robin\nsigma = 1\nweight = two-valued: -1, 1, 0\n", &out);
    let outcome = run(&c).unwrap();
    assert_eq!(outcome.exit_code(), 0);
    assert_eq!(outcome.status, STATUS_NO_POSITIVE);
    let s = summary(&out);
    assert_eq!(value(&s, "status"), STATUS_NO_POSITIVE);
    assert_eq!(value(&s, "d_star"), "extinct for all d");
    assert!(!out.join("eigenfunction.csv").exists());
}

#[test]
fn sweep_trace_has_one_row_per_stripe_count() {
    let out = scratch("sweep");
    let c = config("task = sweep\ndomain = 0, 1\nelements_per_axis = 32\nbc = dirichlet\nweight = two-valued: 1, 0.5, -1\nstripes = 1, 2, 4, 8\n", &out);
    assert_eq!(run(&c).unwrap().exit_code(), 0);
    let trace = trace_from_csv(&fs::read_to_string(out.join("trace.csv")).unwrap()).unwrap();
    assert_eq!(trace.iter().map(|r| r.iteration).collect::<Vec<_>>(), vec![1, 2, 4, 8]);
    assert!(trace.windows(2).all(|w| w[1].mu1 < w[0].mu1));
    assert_eq!(value(&summary(&out), "mean_status"), STATUS_NO_POSITIVE);
}

#[test]
fn maximize_dirichlet_writes_rearrangements() {
    let out = scratch("maximize");
    let c = config("task = maximize\ndomain = 0, 1\nelements_per_axis = 32\nbc = dirichlet\nweight = two-valued: 2, 0.5, -1\n", &out);
    assert_eq!(run(&c).unwrap().exit_code(), 0);
    let s = summary(&out);
    let gamma: f64 = value(&s, "gamma").parse().unwrap();
    assert!((gamma - 0.25).abs() < 1.0 / 32.0);
    assert_eq!(value(&s, "in_class"), "false");
    let analytic = StepRearrangement::from_csv(&fs::read_to_string(out.join("rearrangement_analytic.csv")).unwrap()).unwrap();
    let computed = StepRearrangement::from_csv(&fs::read_to_string(out.join("rearrangement_computed.csv")).unwrap()).unwrap();
    assert!(computed.l1_distance(&analytic) <= 3.0 / 32.0);
    let trace = trace_from_csv(&fs::read_to_string(out.join("trace.csv")).unwrap()).unwrap();
    assert!(trace.windows(2).all(|w| w[1].mu1 <= w[0].mu1 * (1.0 + 1e-14)));
}

#[test]
fn minimize_robin_weight_round_trips() {
    let out = scratch("minimize");
    let c = config("task = minimize\ndomain = 0, 1\nelements_per_axis = 12\nbc = robin\nsigma = 1\nweight = list: 3, -1, 0.5, 2, -2, 1, 0, 0.25, -0.5, 1.5, -1.5, 0.75\nseed = 3\n", &out);
    assert_eq!(run(&c).unwrap().exit_code(), 0);
    let text = fs::read_to_string(out.join("weight.csv")).unwrap();
    let w = Weight::from_csv(&text, 1.0 / 12.0).unwrap();
    assert_eq!(w.to_csv(), text);
    assert_eq!(value(&summary(&out), "in_class"), "true");
    assert!(!out.join("rearrangement_analytic.csv").exists());
}

#[test]
fn runs_are_deterministic() {
    let text = "task = minimize\ndomain = 0, 1\nelements_per_axis = 16\nbc = dirichlet\nweight = list: 1, -2, 3, 0.5, -1, 2, 0.25, -0.5, 1.5, -1.5, 2.5, 0, 0.75, -0.25, 1.25, -0.75\nseed = 11\n";
    let (a, b) = (scratch("det-a"), scratch("det-b"));
    run(&config(text, &a)).unwrap();
    run(&config(text, &b)).unwrap();
    for f in ["summary", "trace.csv", "weight.csv", "eigenfunction.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn weight_file_is_read_relative_to_the_config() {
    let dir = scratch("file");
    let w = Weight::new(vec![1.0, -0.5, 2.0, 0.25], 0.25).unwrap();
    fs::write(dir.join("m.csv"), w.to_csv()).unwrap();
    fs::write(
        dir.join("run.conf"),
        "domain = 0, 1\nelements_per_axis = 4\nbc = robin\nsigma = 1\nweight = file: m.csv\n",
    )
    .unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_eigenweight"))
        .args(["probe", "--config"])
        .arg(dir.join("run.conf"))
        .arg("--out")
        .arg(dir.join("out"))
        .status()
        .unwrap();
    assert!(status.success());
    let s = summary(&dir.join("out"));
    assert_eq!(value(&s, "task"), "probe");
    assert_eq!(value(&s, "status"), "pass");
}

#[test]
fn binary_reports_config_errors() {
    let dir = scratch("bad");
    fs::write(dir.join("bad.conf"), "domain = 0, 1\nelements_per_axis = 8\nbc = dirichlet\nweight = two-valued: 1, 0.5, -1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_eigenweight"))
        .args(["maximize", "--config"])
        .arg(dir.join("bad.conf"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("maximize needs a positive weight integral"));
    let out = Command::new(env!("CARGO_BIN_EXE_eigenweight")).args(["validate", "--out"]).arg(&dir).output().unwrap();
    assert!(out.status.success());
    assert_eq!(fs::read_to_string(dir.join("validation")).unwrap().lines().filter(|l| l.starts_with("PASS")).count(), 8);
}
