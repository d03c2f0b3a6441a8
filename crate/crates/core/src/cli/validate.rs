//! The invariant battery behind `eigenweight validate` and the probe task.

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use crate::csv::fmt_f64;
use crate::eigen::{dense_spectrum_oracle, homogeneity_check, Principal, SolverOptions};
use crate::error::{Error, Result};
use crate::mesh::{
    assemble_weighted_mass, build_grid, element_square_integrals, BoundaryCondition, Domain, Grid, Sigma,
};
use crate::optimize::{convexity_probe, minimize_lambda1, OptOptions, Problem};
use crate::rearrange::{RearrangementClass, Weight};

pub const DERIVATIVE_RTOL: f64 = 1e-5;
pub const EULER_TOL: f64 = 1e-10;
pub const CONVEXITY_TOL: f64 = 1e-10;
pub const HOMOGENEITY_RTOL: f64 = 1e-12;
pub const ORACLE_TOL: f64 = 1e-12;
pub const BRACKET_RTOL: f64 = 1e-12;

pub type SquareIntegrals = fn(&Grid, &[f64]) -> Result<Vec<f64>>;
pub type Pairing = fn(&RearrangementClass, &[f64]) -> Result<Weight>;

/// The pieces of the library the checks exercise. Swapping one for a
/// deliberately broken version shows which checks can see the difference.
#[derive(Clone, Copy)]
pub struct Hooks {
    /// `∫_e u²` per cell from nodal values; the derivative carrier.
    pub square_integrals: SquareIntegrals,
    pub max_pairing: Pairing,
    pub min_pairing: Pairing,
}

impl Default for Hooks {
    fn default() -> Self {
        Hooks {
            square_integrals: element_square_integrals,
            max_pairing: RearrangementClass::hl_max_pairing,
            min_pairing: RearrangementClass::hl_min_pairing,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Worst measured quantity; compared against `threshold`.
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Check {
    fn new(name: &str, measured: f64, threshold: f64, detail: String) -> Check {
        Check { name: name.into(), passed: measured <= threshold, measured, threshold, detail }
    }

    fn failed(name: &str, err: Error) -> Check {
        Check {
            name: name.into(),
            passed: false,
            measured: f64::NAN,
            threshold: f64::NAN,
            detail: format!("error: {err}"),
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {} measured={} threshold={} {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            fmt_f64(self.measured),
            fmt_f64(self.threshold),
            self.detail
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_text(&self) -> String {
        self.checks.iter().map(|c| c.line() + "\n").collect()
    }
}

/// Runs every check with the library's own pieces.
pub fn validate_suite(seed: u64) -> ValidationReport {
    validate_with(&Hooks::default(), seed)
}

pub fn validate_with(hooks: &Hooks, seed: u64) -> ValidationReport {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut checks = Vec::new();
    let mut record = |name: &str, r: Result<Check>| checks.push(r.unwrap_or_else(|e| Check::failed(name, e)));
    record("derivative", derivative_battery(hooks, &mut rng));
    record("euler-identity", euler_battery(hooks, &mut rng));
    record("convexity", convexity_battery(&mut rng));
    record("strictness", strictness_battery(&mut rng));
    record("homogeneity", homogeneity_battery(&mut rng));
    record("sign-regimes", sign_regimes());
    record("bracket", bracket_battery(hooks, &mut rng));
    record("brute-force-oracle", brute_force_battery(hooks, &mut rng));
    ValidationReport { checks }
}

fn interval_problem(n: usize, bc: BoundaryCondition) -> Result<Problem> {
    Problem::new(build_grid(Domain::Interval { a: 0.0, b: 1.0 }, n, &bc)?, SolverOptions::default())
}

/// Uniform values in `[lo, hi]` with at least one positive entry.
pub fn random_weight(rng: &mut StdRng, grid: &Grid, lo: f64, hi: f64) -> Result<Weight> {
    loop {
        let v: Vec<f64> = (0..grid.element_count()).map(|_| rng.gen_range(lo..=hi)).collect();
        if v.iter().any(|&x| x > 0.0) {
            return Weight::on_grid(grid, v);
        }
    }
}

/// Central-difference check of `μ₁′(m; v) = Σ g_e v_e` where `g` comes from
/// `square_integrals`. Returns the relative error.
pub fn derivative_error(problem: &Problem, m: &Weight, v: &Weight, square_integrals: SquareIntegrals) -> Result<f64> {
    let pair = positive_pair(problem, m)?;
    let g = square_integrals(&problem.grid, &pair.nodal_values(&problem.grid)?)?;
    let predicted: f64 = g.iter().zip(v.values()).map(|(a, b)| a * b).sum();
    let amax = |w: &Weight| w.values().iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    let h = 1e-4 * amax(m) / amax(v);
    let shifted = |s: f64| -> Result<Weight> {
        let values = m.values().iter().zip(v.values()).map(|(a, b)| a + s * b).collect();
        Weight::new(values, m.element_measure())
    };
    let plus = problem.mu1(&shifted(h)?)?;
    let minus = problem.mu1(&shifted(-h)?)?;
    let fd = (plus - minus) / (2.0 * h);
    Ok((fd - predicted).abs() / predicted.abs())
}

/// `|Σ g_e m_e − μ₁| / μ₁`.
pub fn euler_error(problem: &Problem, m: &Weight, square_integrals: SquareIntegrals) -> Result<f64> {
    let pair = positive_pair(problem, m)?;
    let g = square_integrals(&problem.grid, &pair.nodal_values(&problem.grid)?)?;
    let s: f64 = g.iter().zip(m.values()).map(|(a, b)| a * b).sum();
    Ok((s - pair.mu1).abs() / pair.mu1)
}

fn positive_pair(problem: &Problem, m: &Weight) -> Result<crate::eigen::EigenPair> {
    problem
        .principal(m)?
        .into_eigenpair()
        .ok_or_else(|| Error::Regime("derivative needs a positive principal eigenvalue".into()))
}

fn derivative_battery(hooks: &Hooks, rng: &mut StdRng) -> Result<Check> {
    let p = interval_problem(50, BoundaryCondition::Dirichlet)?;
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let m = random_weight(rng, &p.grid, -1.0, 2.0)?;
        // nonnegative directions keep the directional derivative away from zero
        let v = Weight::on_grid(&p.grid, (0..50).map(|_| rng.gen_range(0.0..1.0)).collect())?;
        worst = worst.max(derivative_error(&p, &m, &v, hooks.square_integrals)?);
    }
    Ok(Check::new("derivative", worst, DERIVATIVE_RTOL, "5 random (m, v) pairs, n=50 Dirichlet, central differences".into()))
}

fn euler_battery(hooks: &Hooks, rng: &mut StdRng) -> Result<Check> {
    let p = interval_problem(50, BoundaryCondition::Dirichlet)?;
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let m = random_weight(rng, &p.grid, -1.0, 2.0)?;
        worst = worst.max(euler_error(&p, &m, hooks.square_integrals)?);
    }
    Ok(Check::new("euler-identity", worst, EULER_TOL, "sum of g_e m_e against mu1, relative".into()))
}

const T_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

fn convexity_battery(rng: &mut StdRng) -> Result<Check> {
    let p = interval_problem(30, BoundaryCondition::Dirichlet)?;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..20 {
        let m = random_weight(rng, &p.grid, -2.0, 2.0)?;
        let q = random_weight(rng, &p.grid, -2.0, 2.0)?;
        worst = worst.max(convexity_probe(&m, &q, &T_GRID, &p)?.max_violation);
    }
    Ok(Check::new("convexity", worst, CONVEXITY_TOL, "20 random segments, n=30 Dirichlet".into()))
}

fn strictness_battery(rng: &mut StdRng) -> Result<Check> {
    let p = interval_problem(30, BoundaryCondition::Dirichlet)?;
    let mut smallest = f64::INFINITY;
    let mut count = 0;
    while count < 5 {
        let m = random_weight(rng, &p.grid, -1.0, 2.0)?;
        let q = random_weight(rng, &p.grid, -1.0, 2.0)?;
        if let Some(margin) = convexity_probe(&m, &q, &[0.5], &p)?.strictness_margin {
            smallest = smallest.min(margin);
            count += 1;
        }
    }
    // passes when the smallest margin is positive
    Ok(Check::new("strictness", -smallest, 0.0, format!("smallest midpoint margin {}", fmt_f64(smallest)))
        .strict())
}

impl Check {
    /// Turns `measured ≤ threshold` into `measured < threshold`.
    fn strict(mut self) -> Check {
        self.passed = self.measured < self.threshold;
        self
    }
}

fn homogeneity_battery(rng: &mut StdRng) -> Result<Check> {
    let p = interval_problem(40, BoundaryCondition::Robin(Sigma::Constant(1.0)))?;
    let m = random_weight(rng, &p.grid, -1.0, 2.0)?;
    let mut worst: f64 = 0.0;
    for alpha in [0.5, 2.0, 3.7] {
        worst = worst.max(homogeneity_check(&p.solver, &p.grid, &m, alpha)?.relative);
    }
    Ok(Check::new("homogeneity", worst, HOMOGENEITY_RTOL, "alpha in {0.5, 2, 3.7}, n=40 Robin".into()))
}

fn sign_regimes() -> Result<Check> {
    let p = interval_problem(40, BoundaryCondition::Dirichlet)?;
    let spectrum = |w: &Weight| dense_spectrum_oracle(p.solver.stiffness(), &assemble_weighted_mass(&p.grid, w)?);
    let negative = Weight::on_grid(&p.grid, vec![-1.0; 40])?;
    let nonneg = Weight::on_grid(&p.grid, (0..40).map(|e| (e % 3) as f64).collect())?;
    let mixed = Weight::on_grid(&p.grid, (0..40).map(|e| if e < 20 { 1.0 } else { -1.0 }).collect())?;
    let mut failures = Vec::new();
    if !matches!(p.principal(&negative)?, Principal::NoPositiveEigenvalue { .. }) {
        failures.push("m = -1 has a positive eigenvalue");
    }
    if !spectrum(&nonneg)?.negative.is_empty() {
        failures.push("m >= 0 has a negative branch");
    }
    let s = spectrum(&mixed)?;
    if s.positive.is_empty() || s.negative.is_empty() {
        failures.push("sign-changing m is missing a branch");
    }
    let detail = if failures.is_empty() { "three weights, n=40 Dirichlet".to_string() } else { failures.join("; ") };
    Ok(Check::new("sign-regimes", failures.len() as f64, 0.0, detail))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Visits every permutation of `v` (Heap's algorithm).
pub fn for_each_permutation(v: &mut [f64], f: &mut impl FnMut(&[f64])) {
    fn go(k: usize, v: &mut [f64], f: &mut impl FnMut(&[f64])) {
        if k <= 1 {
            f(v);
            return;
        }
        go(k - 1, v, f);
        for i in 0..k - 1 {
            if k % 2 == 0 {
                v.swap(i, k - 1);
            } else {
                v.swap(0, k - 1);
            }
            go(k - 1, v, f);
        }
    }
    go(v.len(), v, f)
}

/// Worst relative violation of `Σ s⁻q ≤ Σ mq ≤ Σ s⁺q` and of exhaustive
/// attainment by the pairings.
pub fn bracket_violation(hooks: &Hooks, class: &RearrangementClass, m: &Weight, q: &[f64]) -> Result<f64> {
    let lo = dot((hooks.min_pairing)(class, q)?.values(), q);
    let hi = dot((hooks.max_pairing)(class, q)?.values(), q);
    let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    let s = dot(m.values(), q);
    let mut worst = ((lo - s).max(s - hi) / scale).max(0.0);
    if class.element_count() <= 8 {
        let (mut best_hi, mut best_lo) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut v = class.generator_values().to_vec();
        for_each_permutation(&mut v, &mut |p| {
            let s = dot(p, q);
            best_hi = best_hi.max(s);
            best_lo = best_lo.min(s);
        });
        worst = worst.max((best_hi - hi).abs() / scale).max((best_lo - lo).abs() / scale);
    }
    Ok(worst)
}

fn bracket_battery(hooks: &Hooks, rng: &mut StdRng) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let n = 3 + trial % 6;
        let values: Vec<f64> = (0..n).map(|_| (rng.gen_range(-3.0..3.0_f64) * 4.0).round() / 4.0).collect();
        let class = RearrangementClass::new(&Weight::new(values.clone(), 1.0 / n as f64)?);
        let mut member = values;
        member.shuffle(rng);
        let m = Weight::new(member, 1.0 / n as f64)?;
        // coarse q values so ties show up
        let q: Vec<f64> = (0..n).map(|_| (rng.gen_range(0.0..1.0_f64) * 4.0).round() / 4.0).collect();
        worst = worst.max(bracket_violation(hooks, &class, &m, &q)?);
    }
    Ok(Check::new("bracket", worst, BRACKET_RTOL, "20 random members, n = 3..8, exhaustive attainment".into()))
}

/// Largest `μ̃₁` over every permutation of the generator.
pub fn exhaustive_max_mu1(problem: &Problem, class: &RearrangementClass) -> Result<(f64, Weight)> {
    let h = class.element_measure();
    let mut best = (f64::NEG_INFINITY, Vec::new());
    let mut err = None;
    let mut v = class.generator_values().to_vec();
    for_each_permutation(&mut v, &mut |p| {
        if err.is_some() {
            return;
        }
        match Weight::new(p.to_vec(), h).and_then(|w| problem.mu1(&w)) {
            Ok(mu) if mu > best.0 => best = (mu, p.to_vec()),
            Ok(_) => {}
            Err(e) => err = Some(e),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok((best.0, Weight::new(best.1, h)?))
}

fn brute_force_battery(hooks: &Hooks, rng: &mut StdRng) -> Result<Check> {
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    for bc in [BoundaryCondition::Dirichlet, BoundaryCondition::Robin(Sigma::Constant(1.0))] {
        let p = interval_problem(6, bc)?;
        for _ in 0..2 {
            let values = loop {
                let v: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..3.0)).collect();
                if v.iter().sum::<f64>() > 0.0 {
                    break v;
                }
            };
            let class = RearrangementClass::new(&Weight::new(values, 1.0 / 6.0)?);
            let (best, best_weight) = exhaustive_max_mu1(&p, &class)?;
            let found = minimize_lambda1(&class, &p, &OptOptions::default())?;
            worst = worst.max((best - found.final_mu1).abs());
            // the optimum is a fixed point of the pairing step, up to ties
            let pair = p.solver.principal_unsigned(&assemble_weighted_mass(&p.grid, &best_weight)?)?;
            if let Some(pair) = pair.into_eigenpair() {
                let q = (hooks.square_integrals)(&p.grid, &pair.nodal_values(&p.grid)?)?;
                let paired = dot((hooks.max_pairing)(&class, &q)?.values(), &q);
                worst = worst.max((paired - dot(best_weight.values(), &q)).abs());
            }
            runs += 1;
        }
    }
    Ok(Check::new(
        "brute-force-oracle",
        worst,
        ORACLE_TOL,
        format!("{runs} classes of 6 cells, 720 permutations each, Dirichlet and Robin"),
    ))
}
