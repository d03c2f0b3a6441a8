//! Principal eigenpair of the pencil `(K, M_m)`.
//!
//! The eigenvalues `μ` of `K⁻¹ M_m` are the reciprocals of the eigenvalues
//! `λ` of `−Δu = λ m u`. With `K = L Lᵀ` the problem becomes the symmetric
//! matrix `C = L⁻¹ M_m L⁻ᵀ`, whose top eigenvalue is `μ₁`. For indefinite
//! weights `C` has a negative branch that may dominate in magnitude, so the
//! solvers below always look at the whole spectrum (dense) or at both ends
//! of it (Lanczos), never at the dominant eigenvalue alone.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::ops::serial::spsolve_csc_lower_triangular;
use nalgebra_sparse::ops::Op;
use nalgebra_sparse::{CscMatrix, CsrMatrix};

use crate::csv::fmt_f64;
use crate::error::{Error, Result};
use crate::mesh::{assemble_weighted_mass, element_square_integrals, Grid, StiffnessForm, WeightedMassForm};
use crate::rearrange::Weight;

/// Problems with at most this many free nodes are solved densely.
pub const DENSE_LIMIT: usize = 500;
/// Above this size, value-only evaluations use Lanczos under `Auto`.
pub const VALUE_DENSE_LIMIT: usize = 128;
/// Largest problem the dense spectrum oracle accepts.
pub const ORACLE_LIMIT: usize = 1000;
/// Eigenvalues with `|μ| ≤ ZERO_RTOL · max|μ|` count as zero.
pub const ZERO_RTOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMethod {
    /// Dense up to [`DENSE_LIMIT`] free nodes, Lanczos above.
    Auto,
    Dense,
    Lanczos,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative eigenresidual target.
    pub tol: f64,
    /// Krylov dimension cap for Lanczos.
    pub max_iter: usize,
    pub method: SolverMethod,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-10, max_iter: 5000, method: SolverMethod::Auto }
    }
}

/// `(μ₁, u)` with `u` on free nodes, normalized so that `uᵀKu = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub mu1: f64,
    pub lambda1: f64,
    pub u: Vec<f64>,
    pub residual: f64,
}

impl EigenPair {
    /// Eigenfunction on all grid nodes, zero on Dirichlet nodes.
    pub fn nodal_values(&self, grid: &Grid) -> Result<Vec<f64>> {
        grid.expand_free(&self.u)
    }

    /// `node,x[,y],u` over all grid nodes.
    pub fn to_csv(&self, grid: &Grid) -> Result<String> {
        let u = self.nodal_values(grid)?;
        let two_d = grid.dimension() == 2;
        let mut out = String::from(if two_d { "node,x,y,u\n" } else { "node,x,u\n" });
        for (k, v) in u.iter().enumerate() {
            let [x, y] = grid.node_coords(k);
            if two_d {
                out.push_str(&format!("{k},{},{},{}\n", fmt_f64(x), fmt_f64(y), fmt_f64(*v)));
            } else {
                out.push_str(&format!("{k},{},{}\n", fmt_f64(x), fmt_f64(*v)));
            }
        }
        Ok(out)
    }
}

/// Outcome of a principal eigensolve.
#[derive(Debug, Clone, PartialEq)]
pub enum Principal {
    Positive(EigenPair),
    /// No positive eigenvalue: `μ̃₁ = 0` and `λ₁ = +∞`.
    NoPositiveEigenvalue { diagnostic: String },
}

impl Principal {
    /// The extended value `μ̃₁`, zero when no positive eigenvalue exists.
    pub fn mu1_or_zero(&self) -> f64 {
        match self {
            Principal::Positive(p) => p.mu1,
            Principal::NoPositiveEigenvalue { .. } => 0.0,
        }
    }

    pub fn eigenpair(&self) -> Option<&EigenPair> {
        match self {
            Principal::Positive(p) => Some(p),
            Principal::NoPositiveEigenvalue { .. } => None,
        }
    }

    pub fn into_eigenpair(self) -> Option<EigenPair> {
        match self {
            Principal::Positive(p) => Some(p),
            Principal::NoPositiveEigenvalue { .. } => None,
        }
    }
}

/// Local quadratic model of `μ₁` around a weight.
#[derive(Debug, Clone)]
pub struct SecondOrder {
    pub pair: EigenPair,
    pub gradient: Vec<f64>,
    pub hessian: DMatrix<f64>,
}

/// Nonzero spectrum of `K⁻¹ M_m`, split by sign.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    /// `μ₁ ≥ μ₂ ≥ … > 0`.
    pub positive: Vec<f64>,
    /// `0 > μ₋₁ ≥ μ₋₂ ≥ …`.
    pub negative: Vec<f64>,
}

impl SpectrumReport {
    pub fn positive_count(&self) -> usize {
        self.positive.len()
    }

    pub fn negative_count(&self) -> usize {
        self.negative.len()
    }

    /// `λ_k = 1/μ_k` for the positive branch.
    pub fn lambdas(&self) -> Vec<f64> {
        self.positive.iter().map(|m| 1.0 / m).collect()
    }
}

enum SparseFactor {
    None,
    Cholesky(CscCholesky<f64>),
}

/// A factored stiffness form reused across many weights.
pub struct EigenSolver {
    stiffness: StiffnessForm,
    dense_l: Option<DMatrix<f64>>,
    sparse: SparseFactor,
    opts: SolverOptions,
}

impl std::fmt::Debug for EigenSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EigenSolver")
            .field("dim", &self.dim())
            .field("opts", &self.opts)
            .finish()
    }
}

impl EigenSolver {
    pub fn new(stiffness: StiffnessForm, opts: SolverOptions) -> Result<Self> {
        let n = stiffness.dim();
        let dense_l = if n <= ORACLE_LIMIT {
            let chol = nalgebra::Cholesky::new(stiffness.to_dense()).ok_or(Error::NotPositiveDefinite)?;
            Some(chol.l())
        } else {
            None
        };
        let sparse = if opts.method == SolverMethod::Lanczos || (opts.method == SolverMethod::Auto && n > VALUE_DENSE_LIMIT) {
            let csc = CscMatrix::from(&stiffness.matrix);
            SparseFactor::Cholesky(CscCholesky::factor(&csc).map_err(|_| Error::NotPositiveDefinite)?)
        } else {
            SparseFactor::None
        };
        Ok(EigenSolver { stiffness, dense_l, sparse, opts })
    }

    pub fn dim(&self) -> usize {
        self.stiffness.dim()
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    pub fn stiffness(&self) -> &StiffnessForm {
        &self.stiffness
    }

    pub fn principal(&self, mass: &WeightedMassForm) -> Result<Principal> {
        match self.top(mass)? {
            Top::Positive(mu, y) => self.finish(mass, mu, y, true),
            Top::None(diagnostic) => Ok(Principal::NoPositiveEigenvalue { diagnostic }),
        }
    }

    /// Like [`EigenSolver::principal`] but a sign change of the discrete
    /// eigenfunction is tolerated. Coarse meshes with strongly negative
    /// weights can produce one because the consistent mass matrix is not an
    /// M-matrix; the optimizers only need `u²`.
    pub fn principal_unsigned(&self, mass: &WeightedMassForm) -> Result<Principal> {
        match self.top(mass)? {
            Top::Positive(mu, y) => self.finish(mass, mu, y, false),
            Top::None(diagnostic) => Ok(Principal::NoPositiveEigenvalue { diagnostic }),
        }
    }

    /// Largest eigenvalue and its reduced-space vector, before sign fixing.
    fn top(&self, mass: &WeightedMassForm) -> Result<Top> {
        self.top_with(mass, DENSE_LIMIT)
    }

    fn top_with(&self, mass: &WeightedMassForm, auto_limit: usize) -> Result<Top> {
        if mass.dim() != self.dim() {
            return Err(Error::SizeMismatch { expected: self.dim(), found: mass.dim() });
        }
        if mass.weight.max() <= 0.0 {
            return Ok(Top::None("weight is nonpositive everywhere".into()));
        }
        let use_dense = match self.opts.method {
            SolverMethod::Dense => true,
            SolverMethod::Lanczos => false,
            SolverMethod::Auto => self.dim() <= auto_limit,
        };
        let (mu, y, scale) = if use_dense {
            self.dense_top(mass)?
        } else {
            self.lanczos_top(mass)?
        };
        if mu <= self.opts.tol * scale {
            return Ok(Top::None(format!(
                "top of spectrum {mu:e} is not resolved above zero (spectral scale {scale:e}); the mesh may be too coarse to see the positive branch"
            )));
        }
        Ok(Top::Positive(mu, y))
    }

    /// Convenience wrapper that assembles `M_m` on `grid` first.
    pub fn principal_for(&self, grid: &Grid, weight: &Weight) -> Result<Principal> {
        self.principal(&assemble_weighted_mass(grid, weight)?)
    }

    /// `μ̃₁(m)`: zero when there is no positive eigenvalue. Only the value is
    /// computed, so coarse meshes where the discrete eigenfunction loses its
    /// sign still get an objective.
    pub fn mu1_tilde(&self, grid: &Grid, weight: &Weight) -> Result<f64> {
        let mass = assemble_weighted_mass(grid, weight)?;
        Ok(match self.top_with(&mass, VALUE_DENSE_LIMIT)? {
            Top::Positive(mu, y) => {
                let u = self.back_transform(&y)?;
                let ku = dot(&u, &csr_mul(&self.stiffness.matrix, &u));
                let rq = dot(&u, &csr_mul(&mass.matrix, &u)) / ku;
                if (rq - mu).abs() <= 1e-8 * mu.abs() { rq } else { mu }
            }
            Top::None(_) => 0.0,
        })
    }

    fn dense_l(&self) -> Result<&DMatrix<f64>> {
        self.dense_l.as_ref().ok_or(Error::TooLarge { size: self.dim(), limit: ORACLE_LIMIT })
    }

    /// `C = L⁻¹ M Lᵀ⁻¹`, symmetrized.
    fn reduced_dense(&self, mass: &WeightedMassForm) -> Result<DMatrix<f64>> {
        let l = self.dense_l()?;
        let mut x = mass.to_dense();
        if !l.solve_lower_triangular_mut(&mut x) {
            return Err(Error::NotPositiveDefinite);
        }
        let mut c = x.transpose();
        l.solve_lower_triangular_mut(&mut c);
        Ok((&c + c.transpose()) * 0.5)
    }

    fn dense_top(&self, mass: &WeightedMassForm) -> Result<(f64, DVector<f64>, f64)> {
        let c = self.reduced_dense(mass)?;
        let eig = SymmetricEigen::new(c.clone());
        let (k, mu) = eig
            .eigenvalues
            .iter()
            .copied()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("nonempty");
        let scale = eig.eigenvalues.amax();
        let (mu, y) = refine_pair(&c, mu, eig.eigenvectors.column(k).into_owned());
        Ok((mu, y, scale))
    }

    fn apply_reduced(&self, chol: &CscCholesky<f64>, m: &CsrMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
        let mut x = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
        spsolve_csc_lower_triangular(Op::Transpose(chol.l()), &mut x).expect("factor is nonsingular");
        let mut z = csr_mul(m, x.as_slice());
        let mut zm = DMatrix::from_column_slice(z.len(), 1, &z);
        spsolve_csc_lower_triangular(Op::NoOp(chol.l()), &mut zm).expect("factor is nonsingular");
        z.copy_from_slice(zm.as_slice());
        DVector::from_vec(z)
    }

    /// Lanczos with full reorthogonalization on `C`; converges on the
    /// algebraically largest Ritz value while the tridiagonal model also
    /// tracks the bottom end, so the top is never confused with the dominant
    /// negative branch.
    fn lanczos_top(&self, mass: &WeightedMassForm) -> Result<(f64, DVector<f64>, f64)> {
        let chol = match &self.sparse {
            SparseFactor::Cholesky(c) => c,
            SparseFactor::None => {
                let csc = CscMatrix::from(&self.stiffness.matrix);
                return self
                    .with_factor(&CscCholesky::factor(&csc).map_err(|_| Error::NotPositiveDefinite)?, mass);
            }
        };
        self.with_factor(chol, mass)
    }

    fn with_factor(&self, chol: &CscCholesky<f64>, mass: &WeightedMassForm) -> Result<(f64, DVector<f64>, f64)> {
        let n = self.dim();
        let cap = self.opts.max_iter.min(n).max(1);
        // deterministic start with no sign cancellations against a positive mode
        let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.5 * ((i as f64 * 0.618_033_988_75).fract()));
        v /= v.norm();
        let mut basis: Vec<DVector<f64>> = Vec::with_capacity(cap);
        let mut alphas = Vec::with_capacity(cap);
        let mut betas: Vec<f64> = Vec::with_capacity(cap);
        let mut last = (0.0, f64::INFINITY);
        let mut target = 0.1 * self.opts.tol;
        for j in 0..cap {
            let mut w = self.apply_reduced(chol, &mass.matrix, &v);
            let alpha = v.dot(&w);
            w.axpy(-alpha, &v, 1.0);
            if let (Some(prev), Some(&b)) = (basis.last(), betas.last()) {
                w.axpy(-b, prev, 1.0);
            }
            basis.push(v.clone());
            alphas.push(alpha);
            for _ in 0..2 {
                for q in &basis {
                    let c = q.dot(&w);
                    w.axpy(-c, q, 1.0);
                }
            }
            let beta = w.norm();
            let dim = j + 1;
            let check = dim == cap || beta <= f64::EPSILON * alpha.abs().max(1e-300) || dim % 8 == 0;
            if check {
                let t = tridiagonal(&alphas, &betas);
                let eig = SymmetricEigen::new(t);
                let (k, theta) = eig
                    .eigenvalues
                    .iter()
                    .copied()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(&b.1))
                    .expect("nonempty");
                let scale = eig.eigenvalues.amax();
                let s = eig.eigenvectors.column(k);
                let estimate = beta * s[dim - 1].abs();
                last = (theta, estimate);
                let exhausted = dim == n || beta <= f64::EPSILON * scale.max(1e-300);
                if exhausted || estimate <= target * scale.max(theta.abs()) {
                    let mut y = DVector::zeros(n);
                    for (q, c) in basis.iter().zip(s.iter()) {
                        y.axpy(*c, q, 1.0);
                    }
                    y /= y.norm();
                    // the Ritz residual lives in the reduced space; accept only
                    // once the residual of the original pencil is small enough
                    let residual = self.pencil_residual(mass, theta, &y)?;
                    if exhausted || residual <= self.opts.tol || target < 1e3 * f64::EPSILON {
                        return Ok((theta, y, scale));
                    }
                    target *= 0.01;
                }
            }
            betas.push(beta);
            v = w / beta;
        }
        Err(Error::NotConverged { iterations: cap, residual: last.1 })
    }

    fn pencil_residual(&self, mass: &WeightedMassForm, mu: f64, y: &DVector<f64>) -> Result<f64> {
        let u = self.back_transform(y)?;
        let ku = csr_mul(&self.stiffness.matrix, &u);
        let mu_vec = csr_mul(&mass.matrix, &u);
        let r = mu_vec.iter().zip(&ku).map(|(a, b)| (a - mu * b).powi(2)).sum::<f64>().sqrt();
        Ok(r / dot(&ku, &ku).sqrt())
    }

    /// Sign fix, K-normalization, positivity and residual checks.
    fn finish(&self, mass: &WeightedMassForm, mu: f64, y: DVector<f64>, require_positive: bool) -> Result<Principal> {
        let mut u = self.back_transform(&y)?;
        if u.iter().sum::<f64>() < 0.0 {
            u.iter_mut().for_each(|x| *x = -*x);
        }
        let ku = csr_mul(&self.stiffness.matrix, &u);
        let norm = dot(&u, &ku).sqrt();
        u.iter_mut().for_each(|x| *x /= norm);
        let ku: Vec<f64> = ku.iter().map(|x| x / norm).collect();
        let mu_rq = dot(&u, &csr_mul(&mass.matrix, &u));
        let mu = if (mu_rq - mu).abs() <= 1e-8 * mu.abs() { mu_rq } else { mu };
        let mu_vec = csr_mul(&mass.matrix, &u);
        let residual = mu_vec
            .iter()
            .zip(&ku)
            .map(|(a, b)| (a - mu * b).powi(2))
            .sum::<f64>()
            .sqrt()
            / dot(&ku, &ku).sqrt();
        if residual > self.opts.tol.max(1e-12) * 10.0 {
            return Err(Error::NotConverged { iterations: self.opts.max_iter, residual });
        }
        let min = u.iter().copied().fold(f64::INFINITY, f64::min);
        if require_positive && !(min > 0.0) {
            return Err(Error::EigenfunctionNotPositive { min_value: min });
        }
        Ok(Principal::Positive(EigenPair { mu1: mu, lambda1: 1.0 / mu, u, residual }))
    }

    /// `u = L⁻ᵀ y`.
    fn back_transform(&self, y: &DVector<f64>) -> Result<Vec<f64>> {
        if let Some(l) = &self.dense_l {
            let mut u = y.clone();
            l.tr_solve_lower_triangular_mut(&mut u);
            return Ok(u.as_slice().to_vec());
        }
        let chol = match &self.sparse {
            SparseFactor::Cholesky(c) => c,
            SparseFactor::None => unreachable!("large problems always carry a sparse factor"),
        };
        let mut x = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
        spsolve_csc_lower_triangular(Op::Transpose(chol.l()), &mut x).expect("factor is nonsingular");
        Ok(x.as_slice().to_vec())
    }

    /// Principal eigenpair, gradient `q_e = ∫_e u²` and Hessian of `μ₁`
    /// with respect to the cell values, from a full dense eigendecomposition:
    /// `∂²μ₁/∂m_e∂m_f = 2 Σ_{k≠1} (u₁ᵀM_e u_k)(u₁ᵀM_f u_k) / (μ₁ − μ_k)`.
    ///
    /// Returns `None` when there is no positive eigenvalue.
    pub fn second_order(&self, grid: &Grid, weight: &Weight) -> Result<Option<SecondOrder>> {
        let mass = assemble_weighted_mass(grid, weight)?;
        if mass.dim() != self.dim() {
            return Err(Error::SizeMismatch { expected: self.dim(), found: mass.dim() });
        }
        if weight.max() <= 0.0 {
            return Ok(None);
        }
        let c = self.reduced_dense(&mass)?;
        let mut eig = SymmetricEigen::new(c.clone());
        let (top, mu) = eig
            .eigenvalues
            .iter()
            .copied()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("nonempty");
        if mu <= self.opts.tol * eig.eigenvalues.amax() {
            return Ok(None);
        }
        let (mu, y) = refine_pair(&c, mu, eig.eigenvectors.column(top).into_owned());
        eig.eigenvalues[top] = mu;
        eig.eigenvectors.set_column(top, &y);
        let Principal::Positive(pair) = self.finish(&mass, mu, eig.eigenvectors.column(top).into_owned(), false)? else {
            unreachable!("finish only returns positive pairs");
        };
        let l = self.dense_l()?;
        let mut modes = eig.eigenvectors.clone();
        l.tr_solve_lower_triangular_mut(&mut modes);
        let u1 = pair.nodal_values(grid)?;
        let cells = weight.len();
        let n = self.dim();
        let free = grid.free_index();
        // coupling[e, k] = u₁ᵀ M_e u_k
        let mut coupling = DMatrix::<f64>::zeros(cells, n);
        for e in 0..cells {
            for (a, b, v) in crate::mesh::cell_mass_entries(grid, e) {
                let Some(fb) = free[b] else { continue };
                if u1[a] == 0.0 {
                    continue;
                }
                let w = v * u1[a];
                for k in 0..n {
                    coupling[(e, k)] += w * modes[(fb, k)];
                }
            }
        }
        for k in 0..n {
            let scale = if k == top { 0.0 } else { (2.0 / (pair.mu1 - eig.eigenvalues[k])).sqrt() };
            coupling.column_mut(k).scale_mut(scale);
        }
        let hessian = &coupling * coupling.transpose();
        let gradient = element_square_integrals(grid, &u1)?;
        Ok(Some(SecondOrder { pair, gradient, hessian }))
    }

    /// Full nonzero spectrum by dense symmetric reduction.
    pub fn spectrum(&self, mass: &WeightedMassForm) -> Result<SpectrumReport> {
        if self.dim() > ORACLE_LIMIT {
            return Err(Error::TooLarge { size: self.dim(), limit: ORACLE_LIMIT });
        }
        let eig = SymmetricEigen::new(self.reduced_dense(mass)?);
        let cut = ZERO_RTOL * eig.eigenvalues.amax();
        let mut positive: Vec<f64> = eig.eigenvalues.iter().copied().filter(|&m| m > cut).collect();
        let mut negative: Vec<f64> = eig.eigenvalues.iter().copied().filter(|&m| m < -cut).collect();
        positive.sort_by(|a, b| b.total_cmp(a));
        negative.sort_by(|a, b| b.total_cmp(a));
        Ok(SpectrumReport { positive, negative })
    }
}

/// Shifted inverse iteration on one eigenpair of a symmetric matrix. The QR
/// iteration can leave eigenvector residuals near `1e-8` on small indefinite
/// matrices; two or three solves bring them to rounding level.
fn refine_pair(c: &DMatrix<f64>, mut mu: f64, mut y: DVector<f64>) -> (f64, DVector<f64>) {
    let n = c.nrows();
    let floor = 4.0 * f64::EPSILON * c.amax() * (n as f64).sqrt();
    for _ in 0..4 {
        let r = (c * &y - &y * mu).norm();
        if r <= floor {
            break;
        }
        let shifted = c - DMatrix::identity(n, n) * mu;
        let Some(z) = shifted.lu().solve(&y) else { break };
        let norm = z.norm();
        if !norm.is_finite() || norm == 0.0 {
            break;
        }
        let z = z / norm;
        let next = z.dot(&(c * &z));
        if (c * &z - &z * next).norm() >= r {
            break;
        }
        y = z;
        mu = next;
    }
    (mu, y)
}

enum Top {
    Positive(f64, DVector<f64>),
    None(String),
}

fn tridiagonal(alphas: &[f64], betas: &[f64]) -> DMatrix<f64> {
    let k = alphas.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    t
}

pub(crate) fn csr_mul(a: &CsrMatrix<f64>, x: &[f64]) -> Vec<f64> {
    a.row_iter()
        .map(|row| row.col_indices().iter().zip(row.values()).map(|(&j, v)| v * x[j]).sum())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One-shot principal eigensolve of the pencil `(K, M_m)`.
pub fn principal_eigenpair(
    stiffness: &StiffnessForm,
    mass: &WeightedMassForm,
    tol: f64,
    max_iter: usize,
) -> Result<Principal> {
    let opts = SolverOptions { tol, max_iter, method: SolverMethod::Auto };
    EigenSolver::new(stiffness.clone(), opts)?.principal(mass)
}

/// Validation oracle: all nonzero eigenvalues of `K⁻¹ M_m`.
pub fn dense_spectrum_oracle(stiffness: &StiffnessForm, mass: &WeightedMassForm) -> Result<SpectrumReport> {
    if stiffness.dim() > ORACLE_LIMIT {
        return Err(Error::TooLarge { size: stiffness.dim(), limit: ORACLE_LIMIT });
    }
    let opts = SolverOptions { method: SolverMethod::Dense, ..SolverOptions::default() };
    EigenSolver::new(stiffness.clone(), opts)?.spectrum(mass)
}

/// `fᵀM_m f / fᵀK f`.
pub fn rayleigh_quotient(f: &[f64], stiffness: &StiffnessForm, mass: &WeightedMassForm) -> Result<f64> {
    if f.len() != stiffness.dim() {
        return Err(Error::SizeMismatch { expected: stiffness.dim(), found: f.len() });
    }
    let denom = dot(f, &csr_mul(&stiffness.matrix, f));
    if f.iter().all(|&x| x == 0.0) || denom == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(dot(f, &csr_mul(&mass.matrix, f)) / denom)
}

/// Per-cell carrier `g_e = ∫_e u²` of the derivative of `μ₁`: the directional
/// derivative in direction `v` is `Σ g_e v_e`.
pub fn gateaux_derivative(grid: &Grid, pair: &EigenPair) -> Result<Vec<f64>> {
    element_square_integrals(grid, &pair.nodal_values(grid)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneityReport {
    pub alpha: f64,
    pub mu1: f64,
    pub mu1_scaled: f64,
    /// `|μ₁(αm) − αμ₁(m)|`.
    pub deviation: f64,
    /// `deviation / (αμ₁(m))`.
    pub relative: f64,
}

impl HomogeneityReport {
    pub fn passes(&self) -> bool {
        self.relative <= 1e-12
    }
}

/// Compares `μ₁(αm)` with `αμ₁(m)` from two independent solves.
pub fn homogeneity_check(solver: &EigenSolver, grid: &Grid, m: &Weight, alpha: f64) -> Result<HomogeneityReport> {
    if !(alpha > 0.0) {
        return Err(Error::Regime(format!("homogeneity needs alpha > 0, got {alpha}")));
    }
    let base = solver.principal_for(grid, m)?;
    let Principal::Positive(base) = base else {
        return Err(Error::Regime("homogeneity needs a positive principal eigenvalue".into()));
    };
    let scaled = solver.principal_for(grid, &m.scaled(alpha))?.mu1_or_zero();
    let deviation = (scaled - alpha * base.mu1).abs();
    Ok(HomogeneityReport {
        alpha,
        mu1: base.mu1,
        mu1_scaled: scaled,
        deviation,
        relative: deviation / (alpha * base.mu1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{assemble_stiffness, build_grid, BoundaryCondition, Domain, Sigma};
    use std::f64::consts::PI;

    fn interval(n: usize, bc: BoundaryCondition) -> (Grid, EigenSolver) {
        let g = build_grid(Domain::Interval { a: 0.0, b: 1.0 }, n, &bc).unwrap();
        let s = EigenSolver::new(assemble_stiffness(&g), SolverOptions::default()).unwrap();
        (g, s)
    }

    fn two_valued(grid: &Grid) -> Weight {
        let n = grid.element_count();
        let values = (0..n).map(|e| if (e / 3) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        Weight::on_grid(grid, values).unwrap()
    }

    #[test]
    fn constant_weight_matches_sine_mode() {
        let (g, s) = interval(64, BoundaryCondition::Dirichlet);
        let p = s.principal_for(&g, &Weight::constant(1.0, 64, 1.0 / 64.0)).unwrap();
        let p = p.eigenpair().unwrap();
        assert!((p.lambda1 - PI * PI).abs() < 0.01, "lambda1 = {}", p.lambda1);
        // P1 with consistent mass overestimates: λ_h = (6/h²)(1 − cos πh)/(2 + cos πh)
        let h = 1.0 / 64.0;
        let exact_discrete = 6.0 / (h * h) * (1.0 - (PI * h).cos()) / (2.0 + (PI * h).cos());
        assert!((p.lambda1 - exact_discrete).abs() < 1e-9 * exact_discrete);
    }

    #[test]
    fn value_only_path_agrees_with_principal() {
        let (g, s) = interval(300, BoundaryCondition::Dirichlet);
        let w = two_valued(&g);
        let mu = s.principal_for(&g, &w).unwrap().eigenpair().unwrap().mu1;
        let value = s.mu1_tilde(&g, &w).unwrap();
        assert!((value - mu).abs() <= 1e-13 * mu, "{value} vs {mu}");
    }

    #[test]
    fn nonpositive_weight_has_no_positive_eigenvalue() {
        let (g, s) = interval(16, BoundaryCondition::Dirichlet);
        for m in [Weight::constant(-1.0, 16, 1.0 / 16.0), Weight::constant(0.0, 16, 1.0 / 16.0)] {
            assert!(matches!(s.principal_for(&g, &m).unwrap(), Principal::NoPositiveEigenvalue { .. }));
        }
    }

    #[test]
    fn indefinite_weight_gives_positive_normalized_eigenfunction() {
        for bc in [BoundaryCondition::Dirichlet, BoundaryCondition::Robin(Sigma::Constant(1.0))] {
            let (g, s) = interval(60, bc);
            let m = two_valued(&g);
            let mass = assemble_weighted_mass(&g, &m).unwrap();
            let p = s.principal(&mass).unwrap().into_eigenpair().unwrap();
            assert!(p.u.iter().all(|&x| x > 0.0));
            let k = s.stiffness();
            assert!((dot(&p.u, &csr_mul(&k.matrix, &p.u)) - 1.0).abs() < 1e-12);
            assert!((dot(&p.u, &csr_mul(&mass.matrix, &p.u)) - p.mu1).abs() < 1e-10);
            assert!(p.residual <= 1e-10);
            assert!((rayleigh_quotient(&p.u, k, &mass).unwrap() - p.mu1).abs() < 1e-12);
        }
    }

    #[test]
    fn dominant_negative_branch_is_not_mistaken_for_mu1() {
        let (g, s) = interval(40, BoundaryCondition::Dirichlet);
        let values = (0..40).map(|e| if (17..23).contains(&e) { 1.0 } else { -4.0 }).collect();
        let m = Weight::on_grid(&g, values).unwrap();
        let mass = assemble_weighted_mass(&g, &m).unwrap();
        let spec = s.spectrum(&mass).unwrap();
        assert!(spec.negative[spec.negative.len() - 1].abs() > spec.positive[0]);
        let lanczos = EigenSolver::new(
            assemble_stiffness(&g),
            SolverOptions { method: SolverMethod::Lanczos, ..SolverOptions::default() },
        )
        .unwrap();
        for solver in [&s, &lanczos] {
            let p = solver.principal(&mass).unwrap();
            assert!((p.mu1_or_zero() - spec.positive[0]).abs() < 1e-10 * spec.positive[0]);
        }
    }

    #[test]
    fn dense_pair_is_refined_to_rounding_level() {
        let (grid, solver) = interval(6, BoundaryCondition::Dirichlet);
        let values = vec![2.565583828929368, -1.3886727539144226, -2.832256188704609, 2.395434127906465, -1.5942651502018883, 2.4522772336689];
        let w = Weight::new(values, 1.0 / 6.0).unwrap();
        let p = solver.principal_for(&grid, &w).unwrap().into_eigenpair().unwrap();
        assert!(p.residual < 1e-14, "{}", p.residual);
        let oracle = dense_spectrum_oracle(solver.stiffness(), &assemble_weighted_mass(&grid, &w).unwrap()).unwrap();
        assert!((oracle.positive[0] - p.mu1).abs() < 1e-15);
    }

    #[test]
    fn rayleigh_examples() {
        let (g, s) = interval(20, BoundaryCondition::Dirichlet);
        let mass = assemble_weighted_mass(&g, &two_valued(&g)).unwrap();
        let mu1 = s.principal(&mass).unwrap().mu1_or_zero();
        let k = s.stiffness();
        assert_eq!(rayleigh_quotient(&[0.0; 19], k, &mass), Err(Error::ZeroVector));
        let mut spike = vec![0.0; 19];
        spike[1] = 1.0; // node 2 sits inside the first positive block
        assert!(rayleigh_quotient(&spike, k, &mass).unwrap() > 0.0);
        for seed in 0..20u64 {
            let f: Vec<f64> = (0..19).map(|i| (((i as u64 + 3) * (seed + 7) * 2654435761) % 1000) as f64 / 500.0 - 1.0).collect();
            assert!(rayleigh_quotient(&f, k, &mass).unwrap() <= mu1 + 1e-12);
        }
    }

    #[test]
    fn spectrum_sign_branches() {
        let (g, s) = interval(30, BoundaryCondition::Dirichlet);
        let pos = s.spectrum(&assemble_weighted_mass(&g, &Weight::constant(1.0, 30, 1.0 / 30.0)).unwrap()).unwrap();
        assert_eq!(pos.negative_count(), 0);
        assert_eq!(pos.positive_count(), 29);
        let mixed = s.spectrum(&assemble_weighted_mass(&g, &two_valued(&g)).unwrap()).unwrap();
        assert!(mixed.positive_count() > 0 && mixed.negative_count() > 0);
        assert!(mixed.positive[0] > mixed.positive[1]);
    }

    #[test]
    fn lanczos_agrees_with_dense() {
        let (g, dense) = interval(50, BoundaryCondition::Robin(Sigma::Constant(0.7)));
        let lanczos = EigenSolver::new(
            assemble_stiffness(&g),
            SolverOptions { method: SolverMethod::Lanczos, ..SolverOptions::default() },
        )
        .unwrap();
        let mass = assemble_weighted_mass(&g, &two_valued(&g)).unwrap();
        let a = dense.principal(&mass).unwrap().into_eigenpair().unwrap();
        let b = lanczos.principal(&mass).unwrap().into_eigenpair().unwrap();
        let oracle = dense_spectrum_oracle(dense.stiffness(), &mass).unwrap();
        assert!((a.mu1 - b.mu1).abs() < 1e-10);
        assert!((oracle.positive[0] - b.mu1).abs() < 1e-10);
        let diff = a.u.iter().zip(&b.u).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-6, "eigenfunction mismatch {diff}");
    }

    #[test]
    fn large_grid_uses_lanczos() {
        let (g, s) = interval(1024, BoundaryCondition::Dirichlet);
        let p = s.principal_for(&g, &Weight::constant(1.0, 1024, 1.0 / 1024.0)).unwrap();
        let p = p.into_eigenpair().unwrap();
        assert!((p.lambda1 - PI * PI).abs() < 1e-4);
        assert!(p.residual <= 1e-10);
        assert!(s.spectrum(&assemble_weighted_mass(&g, &Weight::constant(1.0, 1024, 1.0 / 1024.0)).unwrap()).is_err());
    }

    #[test]
    fn derivative_euler_identity_and_zero_direction() {
        let (g, s) = interval(24, BoundaryCondition::Dirichlet);
        let m = two_valued(&g);
        let p = s.principal_for(&g, &m).unwrap().into_eigenpair().unwrap();
        let d = gateaux_derivative(&g, &p).unwrap();
        let euler: f64 = d.iter().zip(m.values()).map(|(a, b)| a * b).sum();
        assert!((euler - p.mu1).abs() < 1e-10);
        let zero: f64 = d.iter().map(|a| a * 0.0).sum();
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn hessian_matches_finite_differences() {
        let (g, s) = interval(12, BoundaryCondition::Robin(Sigma::Constant(1.0)));
        let m = two_valued(&g);
        let so = s.second_order(&g, &m).unwrap().unwrap();
        let grad_at = |w: &Weight| {
            let p = s.principal_for(&g, w).unwrap().into_eigenpair().unwrap();
            gateaux_derivative(&g, &p).unwrap()
        };
        let eps = 1e-6;
        for f in [0, 5, 11] {
            let mut plus = m.clone().into_values();
            let mut minus = plus.clone();
            plus[f] += eps;
            minus[f] -= eps;
            let gp = grad_at(&Weight::on_grid(&g, plus).unwrap());
            let gm = grad_at(&Weight::on_grid(&g, minus).unwrap());
            for e in 0..12 {
                let fd = (gp[e] - gm[e]) / (2.0 * eps);
                assert!((fd - so.hessian[(e, f)]).abs() < 1e-6 * so.hessian.amax(), "H[{e},{f}]");
            }
        }
        assert!(so.hessian.clone().symmetric_eigenvalues().min() > -1e-12);
    }

    #[test]
    fn homogeneity_examples() {
        let (g, s) = interval(40, BoundaryCondition::Dirichlet);
        let m = two_valued(&g);
        for alpha in [1.0, 2.0, 3.7] {
            let r = homogeneity_check(&s, &g, &m, alpha).unwrap();
            assert!(r.passes(), "alpha {alpha}: {r:?}");
        }
        assert!(homogeneity_check(&s, &g, &m, 0.0).is_err());
    }

    #[test]
    fn eigenfunction_csv_layout() {
        let (g, s) = interval(4, BoundaryCondition::Dirichlet);
        let p = s.principal_for(&g, &Weight::constant(1.0, 4, 0.25)).unwrap().into_eigenpair().unwrap();
        let csv = p.to_csv(&g).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "node,x,u");
        assert_eq!(lines.len(), 6);
        assert!(lines[1].starts_with("0,0.0000000000000000e0,0.0000000000000000e0"));
    }

    #[test]
    fn two_d_dirichlet_square() {
        let g = build_grid(
            Domain::Rectangle { x0: 0.0, y0: 0.0, x1: 1.0, y1: 1.0 },
            16,
            &BoundaryCondition::Dirichlet,
        )
        .unwrap();
        let s = EigenSolver::new(assemble_stiffness(&g), SolverOptions::default()).unwrap();
        let p = s.principal_for(&g, &Weight::constant(1.0, 256, 1.0 / 256.0)).unwrap();
        let lambda = p.eigenpair().unwrap().lambda1;
        assert!((lambda - 2.0 * PI * PI).abs() / (2.0 * PI * PI) < 0.03, "lambda {lambda}");
    }
}
