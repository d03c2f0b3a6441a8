//! Acceptance criteria. Each prints one PASS/FAIL line; the binary exits
//! nonzero if any fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use eigenweight::cli::{bracket_violation, derivative_error, euler_error, exhaustive_max_mu1, random_weight, Hooks};
use eigenweight::eigen::{dense_spectrum_oracle, gateaux_derivative, homogeneity_check, Principal, SolverOptions};
use eigenweight::mesh::{assemble_weighted_mass, build_grid, element_square_integrals, BoundaryCondition, Domain, Sigma};
use eigenweight::optimize::{
    comonotone_check, comonotone_check_within, convexity_probe, fragmentation_sweep, maximize_lambda1,
    maximize_lambda1_from, minimize_lambda1, MaxStart, Monotonicity, OptOptions, OptStatus, Problem,
};
use eigenweight::rearrange::{RearrangementClass, StepRearrangement, Weight};
use eigenweight::Result;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

type Outcome = Result<(bool, String)>;

fn unit(n: usize, bc: BoundaryCondition) -> Problem {
    Problem::new(build_grid(Domain::Interval { a: 0.0, b: 1.0 }, n, &bc).unwrap(), SolverOptions::default()).unwrap()
}

fn robin() -> BoundaryCondition {
    BoundaryCondition::Robin(Sigma::Constant(1.0))
}

fn two_valued(n: usize, high: f64, count: usize, low: f64) -> Weight {
    Weight::new((0..n).map(|e| if e < count { high } else { low }).collect(), 1.0 / n as f64).unwrap()
}

fn class_of(w: &Weight) -> RearrangementClass {
    RearrangementClass::new(w)
}

fn constant_weight_order() -> Outcome {
    let start = Instant::now();
    let mut errors = Vec::new();
    for n in [64, 128, 256] {
        let p = unit(n, BoundaryCondition::Dirichlet);
        let lambda = 1.0 / p.mu1(&Weight::constant(1.0, n, 1.0 / n as f64))?;
        errors.push(lambda - PI * PI);
    }
    let ratios = [errors[0] / errors[1], errors[1] / errors[2]];
    let secs = start.elapsed().as_secs_f64();
    let ok = ratios.iter().all(|r| (3.3..=4.7).contains(r)) && secs < 5.0;
    Ok((ok, format!("error ratios {:.4}, {:.4}; {secs:.2}s", ratios[0], ratios[1])))
}

fn brute_force_optimality() -> Outcome {
    let start = Instant::now();
    let generators = [
        vec![2.5, -1.2, 0.7, -0.4, 1.9, -2.1],
        vec![3.0, -2.5, 1.1, 0.3, -0.8, -0.6],
        vec![0.9, 1.4, -3.0, 2.2, -0.1, 0.05],
    ];
    let mut worst: f64 = 0.0;
    for bc in [BoundaryCondition::Dirichlet, robin()] {
        let p = unit(6, bc);
        for g in &generators {
            let class = class_of(&Weight::new(g.clone(), 1.0 / 6.0)?);
            let (best, _) = exhaustive_max_mu1(&p, &class)?;
            let found = minimize_lambda1(&class, &p, &OptOptions::default())?;
            worst = worst.max((best - found.final_mu1).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((worst <= 1e-12 && secs < 30.0, format!("max |dmu1| {worst:.3e} over 6 classes; {secs:.2}s")))
}

struct Dirichlet64 {
    result: eigenweight::optimize::OptResult,
    secs: f64,
}

fn dirichlet_maximizer() -> Result<Dirichlet64> {
    let start = Instant::now();
    let p = unit(64, BoundaryCondition::Dirichlet);
    let result = maximize_lambda1(&class_of(&two_valued(64, 2.0, 32, -1.0)), &p, &OptOptions::default())?;
    Ok(Dirichlet64 { result, secs: start.elapsed().as_secs_f64() })
}

fn truncation_formula(d: &Dirichlet64) -> Outcome {
    let target = StepRearrangement::new(vec![0.25, 1.0], vec![2.0, 0.0])?;
    let l1 = d.result.computed_rearrangement().l1_distance(&target);
    let gamma = d.result.gamma.unwrap_or(f64::NAN);
    let ok = l1 <= 3.0 / 64.0 && (gamma - 0.25).abs() <= 1.0 / 64.0 && d.secs < 60.0
        && d.result.status == OptStatus::Converged;
    Ok((ok, format!("L1 {l1:.3e}, gamma {gamma}, {:?}; {:.2}s", d.result.status, d.secs)))
}

fn maximizer_nonnegative(d: &Dirichlet64) -> Outcome {
    let min = d.result.final_weight.min();
    Ok((min >= -1e-8, format!("min value {min:.3e}")))
}

fn robin_in_class() -> Outcome {
    let p = unit(64, robin());
    let r = maximize_lambda1(&class_of(&two_valued(64, 2.0, 16, 0.5)), &p, &OptOptions::default())?;
    Ok((r.in_class && r.status == OptStatus::Converged, format!("in_class {} ({:?})", r.in_class, r.status)))
}

fn gateaux_derivative_check(rng: &mut StdRng) -> Outcome {
    let p = unit(50, BoundaryCondition::Dirichlet);
    let (mut worst, mut euler): (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let m = random_weight(rng, &p.grid, -1.0, 2.0)?;
        let v = Weight::on_grid(&p.grid, (0..50).map(|_| rng.gen_range(0.0..1.0)).collect())?;
        worst = worst.max(derivative_error(&p, &m, &v, element_square_integrals)?);
        euler = euler.max(euler_error(&p, &m, element_square_integrals)?);
    }
    Ok((worst < 1e-5 && euler <= 1e-10, format!("max rel error {worst:.3e}, Euler {euler:.3e}")))
}

fn convexity_and_strictness(rng: &mut StdRng) -> Outcome {
    let p = unit(40, BoundaryCondition::Dirichlet);
    let t_grid: Vec<f64> = (1..10).map(|k| k as f64 / 10.0).collect();
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100 {
        let m = random_weight(rng, &p.grid, -2.0, 2.0)?;
        let q = random_weight(rng, &p.grid, -2.0, 2.0)?;
        let r = convexity_probe(&m, &q, &t_grid, &p)?;
        worst = worst.max(r.max_violation);
        violations += usize::from(r.max_violation > 1e-10);
    }
    let mut margins = Vec::new();
    while margins.len() < 10 {
        let m = random_weight(rng, &p.grid, -1.0, 2.0)?;
        let q = random_weight(rng, &p.grid, -1.0, 2.0)?;
        if let Some(margin) = convexity_probe(&m, &q, &[0.5], &p)?.strictness_margin {
            margins.push(margin);
        }
    }
    let smallest = margins.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((
        violations == 0 && smallest > 0.0,
        format!("{violations} violations (worst {worst:.3e}); smallest strictness margin {smallest:.3e}"),
    ))
}

fn homogeneity(rng: &mut StdRng) -> Outcome {
    let mut worst: f64 = 0.0;
    for bc in [BoundaryCondition::Dirichlet, robin()] {
        let p = unit(60, bc);
        for _ in 0..3 {
            let m = random_weight(rng, &p.grid, -1.0, 2.0)?;
            for alpha in [0.5, 2.0, 3.7] {
                worst = worst.max(homogeneity_check(&p.solver, &p.grid, &m, alpha)?.relative);
            }
        }
    }
    Ok((worst <= 1e-12, format!("max relative deviation {worst:.3e}")))
}

fn sign_regimes(rng: &mut StdRng) -> Outcome {
    let mut failures = Vec::new();
    for (n, bc) in [(40, BoundaryCondition::Dirichlet), (100, BoundaryCondition::Dirichlet), (60, robin())] {
        let p = unit(n, bc);
        let spectrum = |w: &Weight| dense_spectrum_oracle(p.solver.stiffness(), &assemble_weighted_mass(&p.grid, w)?);
        let nonpositive = Weight::on_grid(&p.grid, (0..n).map(|_| -rng.gen_range(0.0..1.0)).collect())?;
        if !matches!(p.principal(&nonpositive)?, Principal::NoPositiveEigenvalue { .. }) {
            failures.push(format!("n={n}: m <= 0 gave a positive eigenvalue"));
        }
        let nonneg = Weight::on_grid(&p.grid, (0..n).map(|_| rng.gen_range(0.0..1.0)).collect())?;
        if !spectrum(&nonneg)?.negative.is_empty() {
            failures.push(format!("n={n}: m >= 0 has a negative branch"));
        }
        let mixed = random_weight(rng, &p.grid, -1.0, 1.0)?;
        let s = spectrum(&mixed)?;
        if s.positive.is_empty() || s.negative.is_empty() {
            failures.push(format!("n={n}: sign-changing m lacks a branch"));
        }
    }
    let detail = if failures.is_empty() { "three regimes on n = 40, 100, 60".into() } else { failures.join("; ") };
    Ok((failures.is_empty(), detail))
}

fn fragmentation() -> Outcome {
    let p = unit(64, BoundaryCondition::Dirichlet);
    let report = fragmentation_sweep(&class_of(&two_valued(64, 1.0, 32, -1.0)), &[2, 4, 8, 16], &p)?;
    let mus: Vec<String> = report.rows.iter().map(|r| format!("{:.4e}", r.mu1)).collect();
    let mean_none = matches!(report.mean_principal, Principal::NoPositiveEigenvalue { .. });
    Ok((
        report.mu1_strictly_decreasing() && mean_none && report.mean_mu1 == 0.0,
        format!("mu1 {}; mean weight has no positive eigenvalue: {mean_none}", mus.join(" > ")),
    ))
}

fn comonotonicity(d: &Dirichlet64) -> Outcome {
    let mut detail = Vec::new();
    let mut ok = true;
    for (bc, w) in [
        (BoundaryCondition::Dirichlet, Weight::new((0..48).map(|e| [2.0, -1.0, 0.5, -0.25][e % 4]).collect(), 1.0 / 48.0)?),
        (robin(), two_valued(48, 1.5, 20, -1.0)),
    ] {
        let p = unit(48, bc);
        let r = minimize_lambda1(&class_of(&w), &p, &OptOptions::default())?;
        let q = gateaux_derivative(&p.grid, r.eigenpair.as_ref().expect("positive"))?;
        let c = comonotone_check(&r.final_weight, &q, Monotonicity::Increasing)?;
        ok &= c.holds;
        detail.push(format!("minimizer {} violations", c.violations.len()));
    }
    let p = unit(64, BoundaryCondition::Dirichlet);
    let q = gateaux_derivative(&p.grid, d.result.eigenpair.as_ref().expect("positive"))?;
    let c = comonotone_check_within(&d.result.final_weight, &q, Monotonicity::Decreasing, 1e-8)?;
    ok &= c.holds;
    detail.push(format!("maximizer {} violations beyond plateau ties", c.violations.len()));
    Ok((ok, detail.join(", ")))
}

fn bracket(rng: &mut StdRng) -> Outcome {
    let hooks = Hooks::default();
    let mut worst: f64 = 0.0;
    for n in [8, 64] {
        for _ in 0..50 {
            let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let class = class_of(&Weight::new(values.clone(), 1.0 / n as f64)?);
            let mut member = values;
            member.shuffle(rng);
            let m = Weight::new(member, 1.0 / n as f64)?;
            let q: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            worst = worst.max(bracket_violation(&hooks, &class, &m, &q)?);
        }
    }
    Ok((worst <= 1e-12, format!("worst relative violation {worst:.3e}; n=8 exhaustive over 40320 permutations")))
}

fn uniqueness() -> Outcome {
    let opts = OptOptions::default();
    let mut detail = Vec::new();
    let mut ok = true;
    for (name, bc, w) in [
        ("Dirichlet", BoundaryCondition::Dirichlet, two_valued(64, 2.0, 32, -1.0)),
        ("Robin", robin(), two_valued(64, 2.0, 16, 0.5)),
    ] {
        let p = unit(64, bc);
        let class = class_of(&w);
        let a = maximize_lambda1_from(&class, &p, &opts, MaxStart::SortedAscending)?;
        let b = maximize_lambda1_from(&class, &p, &opts, MaxStart::SortedDescending)?;
        let l1 = a.final_weight.l1_distance(&b.final_weight);
        ok &= l1 <= 10.0 * opts.tol;
        detail.push(format!("{name} L1 {l1:.3e}"));
    }
    Ok((ok, detail.join(", ")))
}

fn main() -> ExitCode {
    let mut rng = StdRng::seed_from_u64(20240611);
    let dirichlet = dirichlet_maximizer();
    let mut results: Vec<(&str, Outcome)> = vec![
        ("1 constant-weight convergence order", constant_weight_order()),
        ("2 brute-force optimality", brute_force_optimality()),
    ];
    match &dirichlet {
        Ok(d) => {
            results.push(("3 Dirichlet truncation formula", truncation_formula(d)));
            results.push(("4 Dirichlet maximizer nonnegative", maximizer_nonnegative(d)));
        }
        Err(e) => {
            results.push(("3 Dirichlet truncation formula", Err(e.clone())));
            results.push(("4 Dirichlet maximizer nonnegative", Err(e.clone())));
        }
    }
    results.push(("5 Robin nonnegative maximizer in class", robin_in_class()));
    results.push(("6 Gateaux derivative", gateaux_derivative_check(&mut rng)));
    results.push(("7 convexity and strictness", convexity_and_strictness(&mut rng)));
    results.push(("8 homogeneity", homogeneity(&mut rng)));
    results.push(("9 sign regimes", sign_regimes(&mut rng)));
    results.push(("10 fragmentation divergence", fragmentation()));
    results.push((
        "11 comonotone characterization",
        match &dirichlet {
            Ok(d) => comonotonicity(d),
            Err(e) => Err(e.clone()),
        },
    ));
    results.push(("12 Hardy-Littlewood bracket", bracket(&mut rng)));
    results.push(("13 maximizer uniqueness", uniqueness()));

    let mut failed = 0;
    for (name, outcome) in results {
        let (ok, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += usize::from(!ok);
        println!("{} criterion {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
    println!("{} of 13 criteria passed", 13 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
