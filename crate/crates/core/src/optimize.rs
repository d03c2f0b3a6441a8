//! Optimization of the principal eigenvalue over a rearrangement class.
//!
//! Minimizing `λ₁` over `G(m₀)` is maximizing `μ₁ = 1/λ₁`. Each step pairs
//! the class values with the cell integrals `q_e = ∫_e u²` of the current
//! eigenfunction (largest values where `u²` is largest). Since
//! `μ₁(m') ≥ Σ m'_e q_e ≥ Σ m_e q_e = μ₁(m)`, the sequence is monotone, and
//! its fixed points are exactly the weights that are increasing functions of
//! the eigenfunction.
//!
//! Maximizing `λ₁` over the closure of `G(m₀)` is minimizing the convex
//! function `μ₁` over a polytope whose vertices are the class members. The
//! linear minimization oracle is the reverse pairing, and `Σ (m − s)_e q_e`
//! bounds the suboptimality from above.

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;

use crate::eigen::{gateaux_derivative, EigenPair, EigenSolver, Principal, SolverOptions, DENSE_LIMIT};
use crate::csv::{fmt_f64, parse_rows};
use crate::error::{Error, Result};
use crate::mesh::{assemble_stiffness, assemble_weighted_mass, BcKind, Domain, Grid};
use crate::rearrange::{decreasing_rearrangement, majorizes, RearrangementClass, StepRearrangement, Weight};

/// Value tolerance for reporting class membership of a computed maximizer.
pub const IN_CLASS_TOL: f64 = 1e-9;
/// Extra descent steps taken after the gap first drops below tolerance.
pub const POLISH_ITERS: usize = 20;
/// Polishing stops once a face Newton step moves no value by more than this
/// fraction of the largest generator magnitude.
pub const NEWTON_STEP_TOL: f64 = 1e-13;
/// Interval tolerance of the golden-section line search.
pub const LINE_SEARCH_TOL: f64 = 1e-8;
/// Largest cell count for which the minimizer escapes pairing fixed points
/// by trying every transposition of two cells.
pub const SWAP_SEARCH_LIMIT: usize = 128;

/// A grid with its factored stiffness form.
#[derive(Debug)]
pub struct Problem {
    pub grid: Grid,
    pub solver: EigenSolver,
}

impl Problem {
    pub fn new(grid: Grid, opts: SolverOptions) -> Result<Self> {
        let solver = EigenSolver::new(assemble_stiffness(&grid), opts)?;
        Ok(Problem { grid, solver })
    }

    pub fn principal(&self, m: &Weight) -> Result<Principal> {
        self.solver.principal_for(&self.grid, m)
    }

    /// `μ̃₁(m)`, zero without a positive eigenvalue.
    pub fn mu1(&self, m: &Weight) -> Result<f64> {
        self.solver.mu1_tilde(&self.grid, m)
    }

    /// Eigenpair and cell integrals of `u²`, or `None` when `μ̃₁ = 0`.
    fn linearize(&self, m: &Weight) -> Result<Option<(EigenPair, Vec<f64>)>> {
        match self.solver.principal_unsigned(&assemble_weighted_mass(&self.grid, m)?)? {
            Principal::Positive(p) => {
                let q = gateaux_derivative(&self.grid, &p)?;
                Ok(Some((p, q)))
            }
            Principal::NoPositiveEigenvalue { .. } => Ok(None),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptOptions {
    /// Stopping threshold on the linearized improvement (ascent) or the
    /// duality gap (conditional gradient).
    pub tol: f64,
    pub max_iter: usize,
    /// Extra random starting members for the minimizer (classes with at most
    /// [`SWAP_SEARCH_LIMIT`] cells only).
    pub restarts: usize,
    pub seed: u64,
}

impl Default for OptOptions {
    fn default() -> Self {
        OptOptions { tol: 1e-10, max_iter: 500, restarts: 8, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptStatus {
    Converged,
    IterLimit,
    /// `∫m₀ ≤ 0`: `λ₁` is unbounded above on the class and the closure
    /// minimizer of `μ̃₁` is the constant mean, with value 0.
    NoMaximizerRegime,
}

impl OptStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            OptStatus::Converged => "converged",
            OptStatus::IterLimit => "iter-limit",
            OptStatus::NoMaximizerRegime => "no-maximizer-regime",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub mu1: f64,
    pub gap: f64,
}

impl TraceRow {
    pub fn lambda1(&self) -> f64 {
        1.0 / self.mu1
    }
}

/// `iter,mu1,lambda1,gap`.
pub fn trace_to_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("iter,mu1,lambda1,gap\n");
    for r in trace {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.iteration,
            fmt_f64(r.mu1),
            fmt_f64(r.lambda1()),
            fmt_f64(r.gap)
        ));
    }
    out
}

pub fn trace_from_csv(text: &str) -> Result<Vec<TraceRow>> {
    parse_rows(text, &["iter", "mu1", "lambda1", "gap"])?
        .into_iter()
        .map(|r| {
            if r[0] < 0.0 || r[0].fract() != 0.0 {
                return Err(Error::Parse(format!("iteration {} is not a count", r[0])));
            }
            Ok(TraceRow { iteration: r[0] as usize, mu1: r[1], gap: r[3] })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub final_weight: Weight,
    pub final_mu1: f64,
    pub final_lambda1: f64,
    pub eigenpair: Option<EigenPair>,
    pub trace: Vec<TraceRow>,
    pub status: OptStatus,
    pub in_class: bool,
    /// Measure where the tail of `m₀*` integrates to zero (Dirichlet maximization).
    pub gamma: Option<f64>,
    /// The predicted decreasing rearrangement of the maximizer (Dirichlet).
    pub analytic_rearrangement: Option<StepRearrangement>,
}

impl OptResult {
    pub fn computed_rearrangement(&self) -> StepRearrangement {
        decreasing_rearrangement(&self.final_weight)
    }

    /// `|{m > threshold}|` of the final weight.
    pub fn positive_measure(&self, threshold: f64) -> f64 {
        crate::rearrange::distribution_function(&self.final_weight, threshold)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Interleaves the high and low halves of the sorted values cell by cell.
fn interleaved_member(class: &RearrangementClass) -> Weight {
    let n = class.element_count();
    let (high, low) = class.generator_values().split_at(n.div_ceil(2));
    let values = (0..n)
        .map(|e| if e % 2 == 0 { high[e / 2] } else { low[e / 2] })
        .collect();
    Weight::new(values, class.element_measure()).expect("class values are finite")
}

/// Two-stripe checkerboard when the grid allows it, cell interleaving otherwise.
pub fn minimization_start(class: &RearrangementClass, grid: &Grid) -> Result<Weight> {
    match class.checkerboard_rearrangement(grid, 2) {
        Ok(w) => Ok(w),
        Err(Error::IncompatibleStripes { .. }) => Ok(interleaved_member(class)),
        Err(e) => Err(e),
    }
}

/// Deterministic starting members: the checkerboard start, generator values
/// placed by distance to the domain center (peaked inside and at the
/// boundary), and the sorted orders along the cell numbering.
pub fn minimization_starts(class: &RearrangementClass, grid: &Grid) -> Result<Vec<Weight>> {
    let n = class.element_count();
    let gen = class.generator_values();
    let [cx, cy] = match grid.domain() {
        Domain::Interval { a, b } => [0.5 * (a + b), 0.0],
        Domain::Rectangle { x0, y0, x1, y1 } => [0.5 * (x0 + x1), 0.5 * (y0 + y1)],
    };
    let dist = |e: usize| {
        let [x, y] = grid.cell_center(e);
        (x - cx).hypot(y - cy)
    };
    let place = |order: &[usize]| {
        let mut values = vec![0.0; n];
        for (&e, &v) in order.iter().zip(gen) {
            values[e] = v;
        }
        Weight::new(values, class.element_measure()).expect("class values are finite")
    };
    let mut by_center: Vec<usize> = (0..n).collect();
    by_center.sort_by(|&i, &j| dist(i).total_cmp(&dist(j)).then(i.cmp(&j)));
    let mut by_edge = by_center.clone();
    by_edge.reverse();
    let forward: Vec<usize> = (0..n).collect();
    let backward: Vec<usize> = (0..n).rev().collect();
    let mut starts = vec![minimization_start(class, grid)?];
    for order in [&by_center, &by_edge, &forward, &backward] {
        let w = place(order);
        if !starts.contains(&w) {
            starts.push(w);
        }
    }
    Ok(starts)
}

/// Minimizes `λ₁` over the class by monotone rearrangement ascent of `μ₁`,
/// run from every member of [`minimization_starts`] plus `opts.restarts`
/// seeded random members; the best run is kept.
pub fn minimize_lambda1(class: &RearrangementClass, problem: &Problem, opts: &OptOptions) -> Result<OptResult> {
    let mut starts = minimization_starts(class, &problem.grid)?;
    if class.element_count() <= SWAP_SEARCH_LIMIT {
        let mut rng = StdRng::seed_from_u64(opts.seed);
        for _ in 0..opts.restarts {
            let mut values = class.generator_values().to_vec();
            values.shuffle(&mut rng);
            starts.push(Weight::new(values, class.element_measure())?);
        }
    }
    let mut best: Option<OptResult> = None;
    for start in starts {
        let r = minimize_lambda1_from(class, problem, opts, start)?;
        if best.as_ref().is_none_or(|b| r.final_mu1 > b.final_mu1) {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one start"))
}

pub fn minimize_lambda1_from(
    class: &RearrangementClass,
    problem: &Problem,
    opts: &OptOptions,
    start: Weight,
) -> Result<OptResult> {
    if class.max_value() <= 0.0 {
        return Err(Error::Regime(
            "every generator value is nonpositive, so no positive principal eigenvalue exists".into(),
        ));
    }
    if !class.contains(&start)? {
        return Err(Error::Regime("starting weight is not a member of the class".into()));
    }
    let mut m = start;
    let mut trace = Vec::new();
    let mut status = OptStatus::IterLimit;
    let mut pair = None;
    let swaps = m.len() <= SWAP_SEARCH_LIMIT;
    let mut it = 0;
    while it <= opts.max_iter {
        let Some((p, q)) = problem.linearize(&m)? else {
            return Err(Error::Regime(
                "class member without a resolved positive eigenvalue; refine the mesh".into(),
            ));
        };
        let next = class.hl_max_pairing(&q)?;
        let improvement = dot(next.values(), &q) - dot(m.values(), &q);
        trace.push(TraceRow { iteration: it, mu1: p.mu1, gap: improvement });
        let fixed = improvement < opts.tol || next == m;
        let mu = p.mu1;
        pair = Some(p);
        if it == opts.max_iter {
            if fixed {
                status = OptStatus::Converged;
            }
            break;
        }
        it += 1;
        if !fixed {
            m = next;
            continue;
        }
        match swaps.then(|| best_transposition(problem, &m, mu, opts.tol)).transpose()?.flatten() {
            Some(better) => m = better,
            None => {
                status = OptStatus::Converged;
                break;
            }
        }
    }
    let pair = pair.expect("at least one iteration");
    Ok(OptResult {
        final_mu1: pair.mu1,
        final_lambda1: pair.lambda1,
        eigenpair: Some(pair),
        in_class: class.contains(&m)?,
        final_weight: m,
        trace,
        status,
        gamma: None,
        analytic_rearrangement: None,
    })
}

/// The transposition of two cells with the largest `μ₁`, if it beats `mu` by
/// more than `tol`.
fn best_transposition(problem: &Problem, m: &Weight, mu: f64, tol: f64) -> Result<Option<Weight>> {
    let v = m.values();
    let mut best: Option<(f64, usize, usize)> = None;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            if v[i] == v[j] {
                continue;
            }
            let mut w = v.to_vec();
            w.swap(i, j);
            let trial = problem.mu1(&Weight::new(w, m.element_measure())?)?;
            if trial > mu + tol && best.is_none_or(|(b, _, _)| trial > b) {
                best = Some((trial, i, j));
            }
        }
    }
    Ok(best.map(|(_, i, j)| {
        let mut w = v.to_vec();
        w.swap(i, j);
        Weight::new(w, m.element_measure()).expect("same measure")
    }))
}

/// Starting vertex for the conditional-gradient driver.
#[derive(Debug, Clone, PartialEq)]
pub enum MaxStart {
    /// Generator values in increasing cell order.
    SortedAscending,
    /// Generator values in decreasing cell order.
    SortedDescending,
    Weight(Weight),
}

/// Euclidean projection onto the convex hull of the permutations of
/// `generator` (sorted descending), i.e. onto the closure of the class.
///
/// With `y` sorted descending, the projection is `y − c` where `c` is the
/// nonincreasing isotonic regression of `y − generator`.
pub fn project_onto_closure(generator: &[f64], y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| y[j].total_cmp(&y[i]));
    let d: Vec<f64> = order.iter().zip(generator).map(|(&i, g)| y[i] - g).collect();
    // pool adjacent violators for a nonincreasing fit: (sum, count) blocks
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(n);
    for &v in &d {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s0 / c0 as f64 >= s1 / c1 as f64 {
                break;
            }
            blocks.pop();
            *blocks.last_mut().unwrap() = (s0 + s1, c0 + c1);
        }
    }
    let mut x = vec![0.0; n];
    let mut k = 0;
    for (s, c) in blocks {
        let mean = s / c as f64;
        for _ in 0..c {
            x[order[k]] = y[order[k]] - mean;
            k += 1;
        }
    }
    x
}

/// Groups of cells whose sums are pinned on the face of the closure through
/// `m`: cells sorted by decreasing value, cut wherever a partial sum of `m`
/// meets the corresponding partial sum of the generator.
fn face_blocks(generator: &[f64], m: &[f64], tol: f64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..m.len()).collect();
    order.sort_by(|&i, &j| m[j].total_cmp(&m[i]));
    let (mut sm, mut sg) = (0.0, 0.0);
    let mut blocks = Vec::new();
    let mut current = Vec::new();
    for (k, &cell) in order.iter().enumerate() {
        sm += m[cell];
        sg += generator[k];
        current.push(cell);
        if sg - sm <= tol || k + 1 == m.len() {
            blocks.push(std::mem::take(&mut current));
        }
    }
    blocks
}

/// Newton step for the quadratic model `qᵀd + ½dᵀHd` restricted to the
/// current face (block sums fixed).
fn face_newton_direction(generator: &[f64], m: &Weight, q: &[f64], hessian: DMatrix<f64>, tol: f64) -> Option<Vec<f64>> {
    let n = m.len();
    let blocks = face_blocks(generator, m.values(), tol);
    if blocks.iter().all(|b| b.len() == 1) {
        return None;
    }
    let nb = blocks.len();
    let shift = 1e-12 * hessian.diagonal().amax().max(1e-300);
    let mut kkt = DMatrix::<f64>::zeros(n + nb, n + nb);
    kkt.view_mut((0, 0), (n, n)).copy_from(&hessian);
    for i in 0..n {
        kkt[(i, i)] += shift;
    }
    for (j, block) in blocks.iter().enumerate() {
        for &e in block {
            kkt[(e, n + j)] = 1.0;
            kkt[(n + j, e)] = 1.0;
        }
    }
    let mut rhs = DVector::<f64>::zeros(n + nb);
    for (i, g) in q.iter().enumerate() {
        rhs[i] = -g;
    }
    let sol = kkt.lu().solve(&rhs)?;
    let d: Vec<f64> = sol.iter().take(n).copied().collect();
    d.iter().all(|v| v.is_finite()).then_some(d)
}

fn golden_section(mut f: impl FnMut(f64) -> Result<f64>, tol: f64) -> Result<(f64, f64)> {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc <= fd { (c, fc) } else { (d, fd) })
}

/// Minimizes `μ̃₁` (maximizes `λ₁`) over the closure of the class.
pub fn maximize_lambda1(class: &RearrangementClass, problem: &Problem, opts: &OptOptions) -> Result<OptResult> {
    maximize_lambda1_from(class, problem, opts, MaxStart::SortedAscending)
}

/// Conditional-gradient minimization of `μ̃₁` over the closure.
///
/// Every iteration evaluates the oracle vertex `s = hl_min(q)` and the gap
/// `Σ (m − s)_e q_e`, and stops once the gap is below `tol` and no further
/// descent is possible (or [`POLISH_ITERS`] more steps were taken). The next iterate
/// is the best of three candidates: the exact line-search step towards `s`,
/// a projected gradient step, and (for dense-sized problems) a Newton step on
/// the current face of the closure. Projection lands exactly on faces, which
/// vertex steps reach only in the limit, and the Newton step resolves the
/// nearly flat directions where the optimal weight sits on a plateau.
/// Near the optimum a full Newton step is accepted when it raises `μ̃₁` by no
/// more than rounding noise, so the trace is monotone only up to a few ulp.
pub fn maximize_lambda1_from(
    class: &RearrangementClass,
    problem: &Problem,
    opts: &OptOptions,
    start: MaxStart,
) -> Result<OptResult> {
    if class.max_value() <= 0.0 {
        return Err(Error::Regime(
            "every generator value is nonpositive, so no positive principal eigenvalue exists".into(),
        ));
    }
    if class.integral() <= 0.0 {
        let mean = class.sorted_member().mean_constant();
        let mu = problem.mu1(&mean)?;
        return Ok(OptResult {
            final_mu1: mu,
            final_lambda1: if mu > 0.0 { 1.0 / mu } else { f64::INFINITY },
            eigenpair: None,
            in_class: class.contains(&mean)?,
            final_weight: mean,
            trace: Vec::new(),
            status: OptStatus::NoMaximizerRegime,
            gamma: None,
            analytic_rearrangement: None,
        });
    }

    let generator = class.generator_values().to_vec();
    let mut m = match start {
        MaxStart::SortedDescending => class.sorted_member(),
        MaxStart::SortedAscending => {
            let mut v = generator.clone();
            v.reverse();
            Weight::new(v, class.element_measure())?
        }
        MaxStart::Weight(w) => {
            if !class.closure_contains(&w)? {
                return Err(Error::Regime("starting weight is outside the closure of the class".into()));
            }
            w
        }
    };

    let objective = |w: &Weight| problem.mu1(w);
    let use_newton = problem.solver.dim() <= DENSE_LIMIT;
    let face_tol = 1e-10 * generator.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
    let value_scale = generator.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let mut trace = Vec::new();
    let mut status = OptStatus::IterLimit;
    let mut step = 1.0;
    let mut last = None;
    let mut polish = 0;
    let mut stalled = 0;
    for it in 0..=opts.max_iter {
        let (pair, q, hessian) = if use_newton {
            match problem.solver.second_order(&problem.grid, &m)? {
                Some(so) => (so.pair, so.gradient, Some(so.hessian)),
                None => return Err(Error::Regime("closure member without a resolved positive eigenvalue".into())),
            }
        } else {
            let Some((pair, q)) = problem.linearize(&m)? else {
                return Err(Error::Regime("closure member without a resolved positive eigenvalue".into()));
            };
            (pair, q, None)
        };
        let vertex = class.hl_min_pairing(&q)?;
        let gap = dot(m.values(), &q) - dot(vertex.values(), &q);
        let mu = pair.mu1;
        trace.push(TraceRow { iteration: it, mu1: mu, gap });
        last = Some(pair);
        if gap < opts.tol {
            status = OptStatus::Converged;
            // polish: a gap below tol still leaves vertex optima a few ulps of
            // tol away in value, so keep descending while that is possible
            polish += 1;
            if polish > POLISH_ITERS || gap <= 0.0 {
                break;
            }
        }
        if it == opts.max_iter {
            break;
        }

        let (t, fw_value) = golden_section(|t| objective(&m.lerp(&vertex, t)), LINE_SEARCH_TOL)?;
        let mut best = (fw_value, m.lerp(&vertex, t));

        // projected gradient with backtracking, reusing the last accepted step
        let q_norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if q_norm > 0.0 {
            let mut eta = 2.0 * step;
            for _ in 0..40 {
                let y: Vec<f64> = m.values().iter().zip(&q).map(|(a, g)| a - eta * g / q_norm).collect();
                let candidate = Weight::new(project_onto_closure(&generator, &y), class.element_measure())?;
                let moved: f64 = m.values().iter().zip(candidate.values()).map(|(a, b)| (a - b).abs()).sum();
                if moved == 0.0 {
                    break;
                }
                let value = objective(&candidate)?;
                let decrease = dot(&q, m.values()) - dot(&q, candidate.values());
                if value <= mu - 1e-4 * decrease {
                    step = eta;
                    if value < best.0 {
                        best = (value, candidate);
                    }
                    break;
                }
                eta *= 0.5;
            }
        }
        let newton = hessian.and_then(|h| face_newton_direction(&generator, &m, &q, h, face_tol));
        if let Some(d) = &newton {
            let mut t = 1.0;
            for _ in 0..30 {
                let y: Vec<f64> = m.values().iter().zip(d).map(|(a, b)| a + t * b).collect();
                let candidate = Weight::new(project_onto_closure(&generator, &y), class.element_measure())?;
                let value = objective(&candidate)?;
                let predicted = dot(&q, candidate.values()) - dot(&q, m.values());
                if value <= mu + 1e-4 * predicted.min(0.0) {
                    if value < best.0 {
                        best = (value, candidate);
                    }
                    break;
                }
                t *= 0.5;
            }
        }
        if polish > 0 || !(best.0 < mu) {
            // the remaining decrease is below the resolution of μ₁; trust the
            // quadratic model and take the full face Newton step
            let usable = newton.filter(|d| {
                stalled < POLISH_ITERS && d.iter().fold(0.0_f64, |a, v| a.max(v.abs())) > NEWTON_STEP_TOL * value_scale
            });
            if let Some(d) = usable {
                let y: Vec<f64> = m.values().iter().zip(&d).map(|(a, b)| a + b).collect();
                let candidate = Weight::new(project_onto_closure(&generator, &y), class.element_measure())?;
                if objective(&candidate)? <= mu * (1.0 + 64.0 * f64::EPSILON) {
                    stalled += usize::from(!(best.0 < mu));
                    m = candidate;
                    continue;
                }
            }
            if !(best.0 < mu) {
                break;
            }
        }
        m = best.1;
    }

    let mut pair = last.expect("at least one iteration");
    let in_class = class.contains_within(&m, IN_CLASS_TOL)?;
    if in_class {
        // snap onto the member with the same ordering
        let member = class.hl_max_pairing(m.values())?;
        if member != m {
            if let Some((p, _)) = problem.linearize(&member)? {
                pair = p;
                m = member;
            }
        }
    }
    let (gamma, analytic) = if problem.grid.bc_kind() == BcKind::Dirichlet {
        let (g, step) = class.truncation_rearrangement()?;
        (Some(g), Some(step))
    } else {
        (None, None)
    };
    Ok(OptResult {
        final_mu1: pair.mu1,
        final_lambda1: pair.lambda1,
        eigenpair: Some(pair),
        in_class,
        final_weight: m,
        trace,
        status,
        gamma,
        analytic_rearrangement: analytic,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub stripes: usize,
    /// `μ̃₁` of the striped member.
    pub mu1: f64,
    /// `1/μ̃₁`, infinite when `μ̃₁ = 0`.
    pub lambda1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// `μ̃₁` of the constant mean weight, the closure infimum.
    pub mean_mu1: f64,
    pub mean_principal: Principal,
}

impl SweepReport {
    pub fn mu1_strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].mu1 < w[0].mu1)
    }

    pub fn lambda1_strictly_increasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].lambda1 > w[0].lambda1)
    }

    pub fn to_csv(&self) -> String {
        let rows: Vec<TraceRow> = self
            .rows
            .iter()
            .map(|r| TraceRow { iteration: r.stripes, mu1: r.mu1, gap: 0.0 })
            .collect();
        trace_to_csv(&rows)
    }
}

/// Evaluates `μ̃₁` on increasingly fragmented class members.
///
/// Only meaningful when `∫m₀ ≤ 0`, where `λ₁` is unbounded above on the class.
pub fn fragmentation_sweep(class: &RearrangementClass, stripes: &[usize], problem: &Problem) -> Result<SweepReport> {
    if class.integral() > 0.0 {
        return Err(Error::Regime(
            "fragmentation sweep needs a nonpositive integral; use maximize for a positive one".into(),
        ));
    }
    if class.max_value() <= 0.0 {
        return Err(Error::Regime("fragmentation sweep needs some positive generator values".into()));
    }
    let rows = stripes
        .iter()
        .map(|&k| {
            let w = class.checkerboard_rearrangement(&problem.grid, k)?;
            let mu1 = problem.mu1(&w)?;
            Ok(SweepRow { stripes: k, mu1, lambda1: if mu1 > 0.0 { 1.0 / mu1 } else { f64::INFINITY } })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_principal = problem.principal(&class.sorted_member().mean_constant())?;
    Ok(SweepReport { rows, mean_mu1: mean_principal.mu1_or_zero(), mean_principal })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monotonicity {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComonotoneReport {
    pub holds: bool,
    pub violations: Vec<(usize, usize)>,
}

/// Whether `m` is a monotone function of `q` in the given direction:
/// `(q_i − q_j)(m_i − m_j)` has the right sign for every pair.
pub fn comonotone_check(m: &Weight, q: &[f64], direction: Monotonicity) -> Result<ComonotoneReport> {
    comonotone_check_within(m, q, direction, 0.0)
}

/// [`comonotone_check`] treating weight values within `value_tol` as ties.
pub fn comonotone_check_within(
    m: &Weight,
    q: &[f64],
    direction: Monotonicity,
    value_tol: f64,
) -> Result<ComonotoneReport> {
    if q.len() != m.len() {
        return Err(Error::SizeMismatch { expected: m.len(), found: q.len() });
    }
    let sign = match direction {
        Monotonicity::Increasing => 1.0,
        Monotonicity::Decreasing => -1.0,
    };
    let v = m.values();
    let mut violations = Vec::new();
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            let dm = v[i] - v[j];
            if dm.abs() <= value_tol {
                continue;
            }
            if sign * (q[i] - q[j]) * dm < 0.0 {
                violations.push((i, j));
            }
        }
    }
    Ok(ComonotoneReport { holds: violations.is_empty(), violations })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityReport {
    pub mu_m: f64,
    pub mu_q: f64,
    /// `(t, μ̃₁(tm + (1−t)q), tμ̃₁(m) + (1−t)μ̃₁(q))`.
    pub samples: Vec<(f64, f64, f64)>,
    /// Largest `μ̃₁(segment) − chord`, zero when convexity holds exactly.
    pub max_violation: f64,
    /// `chord − μ̃₁` at `t = 1/2`, when `m`, `q` are independent with `μ₁ > 0`.
    pub strictness_margin: Option<f64>,
}

impl ConvexityReport {
    pub fn passes(&self) -> bool {
        self.max_violation <= 1e-10
    }
}

fn linearly_independent(a: &[f64], b: &[f64]) -> bool {
    let (aa, bb, ab) = (dot(a, a), dot(b, b), dot(a, b));
    aa > 0.0 && bb > 0.0 && (aa * bb - ab * ab) > 1e-12 * aa * bb
}

/// Checks `μ̃₁(tm + (1−t)q) ≤ tμ̃₁(m) + (1−t)μ̃₁(q)` along the segment.
pub fn convexity_probe(m: &Weight, q: &Weight, t_grid: &[f64], problem: &Problem) -> Result<ConvexityReport> {
    if m.len() != q.len() {
        return Err(Error::SizeMismatch { expected: m.len(), found: q.len() });
    }
    let mu_m = problem.mu1(m)?;
    let mu_q = problem.mu1(q)?;
    let mut samples = Vec::with_capacity(t_grid.len());
    let mut max_violation: f64 = 0.0;
    for &t in t_grid {
        let value = problem.mu1(&q.lerp(m, t))?;
        let chord = t * mu_m + (1.0 - t) * mu_q;
        max_violation = max_violation.max(value - chord);
        samples.push((t, value, chord));
    }
    let strictness_margin = if mu_m > 0.0 && mu_q > 0.0 && linearly_independent(m.values(), q.values()) {
        let mid = problem.mu1(&q.lerp(m, 0.5))?;
        Some(0.5 * (mu_m + mu_q) - mid)
    } else {
        None
    };
    Ok(ConvexityReport { mu_m, mu_q, samples, max_violation, strictness_margin })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Persistence {
    /// Populations with diffusion rate `d < d*` persist.
    Threshold(f64),
    /// No positive principal eigenvalue: extinction for every diffusion rate.
    ExtinctForAllD,
}

impl Persistence {
    pub fn describe(&self) -> String {
        match self {
            Persistence::Threshold(d) => format!("{}", fmt_f64(*d)),
            Persistence::ExtinctForAllD => "extinct for all d".into(),
        }
    }
}

/// Critical diffusion rate `d* = 1/λ₁ = μ₁` of the logistic model.
pub fn persistence_threshold(principal: &Principal) -> Persistence {
    match principal {
        Principal::Positive(p) => Persistence::Threshold(p.mu1),
        Principal::NoPositiveEigenvalue { .. } => Persistence::ExtinctForAllD,
    }
}

/// Per-iterate bracket `Σ s⁻q ≤ Σ mq ≤ Σ s⁺q` with the pairings at the same `q`.
pub fn bracket_holds(class: &RearrangementClass, m: &Weight, q: &[f64]) -> Result<bool> {
    let lo = dot(class.hl_min_pairing(q)?.values(), q);
    let hi = dot(class.hl_max_pairing(q)?.values(), q);
    let s = dot(m.values(), q);
    let slack = 1e-12 * (lo.abs() + hi.abs()).max(1e-300);
    Ok(lo <= s + slack && s <= hi + slack)
}

/// Whether every closure iterate of a run is majorized by the generator.
pub fn closure_feasible(class: &RearrangementClass, m: &Weight) -> bool {
    majorizes(&class.sorted_member(), m)
}
