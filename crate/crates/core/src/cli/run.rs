//! Executes one configured task and writes its artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use super::config::{RunConfig, Task};
use super::validate::{derivative_error, euler_error, CONVEXITY_TOL, DERIVATIVE_RTOL, EULER_TOL, HOMOGENEITY_RTOL};
use crate::csv::fmt_f64;
use crate::eigen::{homogeneity_check, EigenPair, Principal, SolverMethod, SolverOptions};
use crate::error::{Error, Result};
use crate::mesh::element_square_integrals;
use crate::optimize::{
    convexity_probe, fragmentation_sweep, maximize_lambda1, minimize_lambda1, persistence_threshold, trace_to_csv,
    OptOptions, OptResult, OptStatus, Persistence, Problem, TraceRow,
};
use crate::rearrange::{RearrangementClass, Weight};

pub const STATUS_NO_POSITIVE: &str = "no-positive-eigenvalue";

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub status: String,
    pub success: bool,
    /// `(key, value)` lines of the summary file, in order.
    pub summary: Vec<(String, String)>,
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.success {
            0
        } else {
            1
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

struct Artifacts {
    dir: PathBuf,
    files: Vec<PathBuf>,
    summary: Vec<(String, String)>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        Ok(Artifacts { dir: dir.to_path_buf(), files: Vec::new(), summary: Vec::new() })
    }

    fn write(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        self.files.push(path);
        Ok(())
    }

    fn set(&mut self, key: &str, value: impl Into<String>) {
        self.summary.push((key.into(), value.into()));
    }

    fn finish(mut self, status: &str, success: bool) -> Result<RunOutcome> {
        let text: String = self.summary.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        self.write("summary", &text)?;
        Ok(RunOutcome { status: status.into(), success, summary: self.summary, files: self.files })
    }
}

/// Reads a `summary` file back into ordered `(key, value)` pairs.
pub fn parse_summary(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Parse(format!("summary line `{l}` is not `key = value`")))
        })
        .collect()
}

/// Runs the configured task, writing into `config.output_dir`.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    let grid = config.grid()?;
    let opts = SolverOptions { tol: config.tol, max_iter: config.max_iter.max(1000), method: SolverMethod::Auto };
    let problem = Problem::new(grid, opts)?;
    let mut out = Artifacts::new(&config.output_dir)?;
    out.set("task", config.task.as_str());
    match config.task {
        Task::Solve => solve(config, &problem, out),
        Task::Minimize | Task::Maximize => optimize(config, &problem, out),
        Task::Sweep => sweep(config, &problem, out),
        Task::Probe => probe(config, &problem, out),
    }
}

fn opt_options(config: &RunConfig) -> OptOptions {
    OptOptions { tol: config.tol, max_iter: config.max_iter, seed: config.seed, ..OptOptions::default() }
}

fn eigen_fields(out: &mut Artifacts, mu1: f64, persistence: &Persistence) {
    out.set("mu1", fmt_f64(mu1));
    out.set("lambda1", fmt_f64(if mu1 > 0.0 { 1.0 / mu1 } else { f64::INFINITY }));
    out.set("d_star", persistence.describe());
}

fn threshold_of(mu1: f64) -> Persistence {
    if mu1 > 0.0 {
        Persistence::Threshold(mu1)
    } else {
        Persistence::ExtinctForAllD
    }
}

fn write_pair(out: &mut Artifacts, problem: &Problem, pair: &EigenPair) -> Result<()> {
    out.write("eigenfunction.csv", &pair.to_csv(&problem.grid)?)
}

fn solve(config: &RunConfig, problem: &Problem, mut out: Artifacts) -> Result<RunOutcome> {
    out.write("weight.csv", &config.weight.to_csv())?;
    let principal = problem.principal(&config.weight)?;
    let persistence = persistence_threshold(&principal);
    match principal {
        Principal::Positive(pair) => {
            eigen_fields(&mut out, pair.mu1, &persistence);
            out.set("status", "converged");
            out.set("residual", fmt_f64(pair.residual));
            out.write("trace.csv", &trace_to_csv(&[TraceRow { iteration: 0, mu1: pair.mu1, gap: pair.residual }]))?;
            write_pair(&mut out, problem, &pair)?;
            out.finish("converged", true)
        }
        Principal::NoPositiveEigenvalue { diagnostic } => {
            eigen_fields(&mut out, 0.0, &persistence);
            out.set("status", STATUS_NO_POSITIVE);
            out.set("diagnostic", diagnostic);
            out.write("trace.csv", &trace_to_csv(&[TraceRow { iteration: 0, mu1: 0.0, gap: 0.0 }]))?;
            out.finish(STATUS_NO_POSITIVE, true)
        }
    }
}

fn optimize(config: &RunConfig, problem: &Problem, mut out: Artifacts) -> Result<RunOutcome> {
    let class = RearrangementClass::new(&config.weight);
    let opts = opt_options(config);
    let r: OptResult = if config.task == Task::Minimize {
        minimize_lambda1(&class, problem, &opts)?
    } else {
        maximize_lambda1(&class, problem, &opts)?
    };
    eigen_fields(&mut out, r.final_mu1, &threshold_of(r.final_mu1));
    out.set("status", r.status.as_str());
    if let Some(g) = r.gamma {
        out.set("gamma", fmt_f64(g));
    }
    out.set("in_class", r.in_class.to_string());
    out.set("iterations", r.trace.len().to_string());
    if let Some(last) = r.trace.last() {
        out.set("final_gap", fmt_f64(last.gap));
    }
    out.write("trace.csv", &trace_to_csv(&r.trace))?;
    out.write("weight.csv", &r.final_weight.to_csv())?;
    if let Some(pair) = &r.eigenpair {
        write_pair(&mut out, problem, pair)?;
    }
    if let Some(analytic) = &r.analytic_rearrangement {
        let computed = r.computed_rearrangement();
        out.set("rearrangement_l1", fmt_f64(computed.l1_distance(analytic)));
        out.write("rearrangement_computed.csv", &computed.to_csv())?;
        out.write("rearrangement_analytic.csv", &analytic.to_csv())?;
    }
    let ok = r.status == OptStatus::Converged;
    out.finish(r.status.as_str(), ok)
}

fn sweep(config: &RunConfig, problem: &Problem, mut out: Artifacts) -> Result<RunOutcome> {
    let class = RearrangementClass::new(&config.weight);
    let report = fragmentation_sweep(&class, &config.stripes, problem)?;
    let last = report.rows.last().expect("at least one stripe count");
    let finest = class.checkerboard_rearrangement(&problem.grid, last.stripes)?;
    let principal = problem.principal(&finest)?;
    eigen_fields(&mut out, last.mu1, &threshold_of(last.mu1));
    let monotone = report.mu1_strictly_decreasing() && report.lambda1_strictly_increasing();
    let status = if monotone { "converged" } else { "not-monotone" };
    out.set("status", status);
    out.set("stripes", last.stripes.to_string());
    out.set("mean_mu1", fmt_f64(report.mean_mu1));
    out.set(
        "mean_status",
        match report.mean_principal {
            Principal::Positive(_) => "positive",
            Principal::NoPositiveEigenvalue { .. } => STATUS_NO_POSITIVE,
        },
    );
    out.write("trace.csv", &report.to_csv())?;
    out.write("weight.csv", &finest.to_csv())?;
    if let Some(pair) = principal.eigenpair() {
        write_pair(&mut out, problem, pair)?;
    }
    out.finish(status, monotone)
}

/// Randomized spot checks of the derivative, homogeneity and convexity on
/// the configured grid and weight.
fn probe(config: &RunConfig, problem: &Problem, mut out: Artifacts) -> Result<RunOutcome> {
    let mut rng = StdRng::seed_from_u64(config.seed);
    let m = &config.weight;
    let principal = problem.principal(m)?;
    let Some(pair) = principal.eigenpair() else {
        return Err(Error::Regime("probe needs a positive principal eigenvalue".into()));
    };
    eigen_fields(&mut out, pair.mu1, &persistence_threshold(&principal));

    let mut derivative: f64 = 0.0;
    for _ in 0..5 {
        let v = Weight::new((0..m.len()).map(|_| rng.gen_range(0.0..1.0)).collect(), m.element_measure())?;
        derivative = derivative.max(derivative_error(problem, m, &v, element_square_integrals)?);
    }
    let euler = euler_error(problem, m, element_square_integrals)?;
    let mut homogeneity: f64 = 0.0;
    for alpha in [0.5, 2.0, 3.7] {
        homogeneity = homogeneity.max(homogeneity_check(&problem.solver, &problem.grid, m, alpha)?.relative);
    }
    let mut shuffled = m.values().to_vec();
    shuffled.shuffle(&mut rng);
    let other = Weight::new(shuffled, m.element_measure())?;
    let t_grid: Vec<f64> = (1..10).map(|k| k as f64 / 10.0).collect();
    let convexity = convexity_probe(m, &other, &t_grid, problem)?;

    let checks = [
        ("derivative_rel_error", derivative, derivative <= DERIVATIVE_RTOL),
        ("euler_rel_error", euler, euler <= EULER_TOL),
        ("homogeneity_rel_error", homogeneity, homogeneity <= HOMOGENEITY_RTOL),
        ("convexity_max_violation", convexity.max_violation, convexity.max_violation <= CONVEXITY_TOL),
    ];
    let passed = checks.iter().all(|c| c.2);
    let status = if passed { "pass" } else { "fail" };
    out.set("status", status);
    for (key, value, _) in checks {
        out.set(key, fmt_f64(value));
    }
    if let Some(margin) = convexity.strictness_margin {
        out.set("strictness_margin", fmt_f64(margin));
    }
    out.write("trace.csv", &trace_to_csv(&[TraceRow { iteration: 0, mu1: pair.mu1, gap: pair.residual }]))?;
    out.write("weight.csv", &m.to_csv())?;
    write_pair(&mut out, problem, pair)?;
    out.finish(status, passed)
}
