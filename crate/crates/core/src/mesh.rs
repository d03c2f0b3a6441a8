//! Uniform meshes of intervals and rectangles, and P1 assembly of the
//! bilinear forms that define the eigenproblem.
//!
//! Cells are the weight-carrying unit. In 2D each axis-aligned cell is split
//! along its lower-left to upper-right diagonal into two triangles for
//! assembly; the weight stays constant over the whole cell.

use nalgebra::DMatrix;
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::error::{Error, Result};
use crate::rearrange::Weight;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Interval { a: f64, b: f64 },
    Rectangle { x0: f64, y0: f64, x1: f64, y1: f64 },
}

impl Domain {
    pub fn dimension(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            Domain::Rectangle { .. } => 2,
        }
    }

    pub fn measure(&self) -> f64 {
        match *self {
            Domain::Interval { a, b } => b - a,
            Domain::Rectangle { x0, y0, x1, y1 } => (x1 - x0) * (y1 - y0),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && hi > lo;
        match *self {
            Domain::Interval { a, b } if !ok(a, b) => Err(Error::InvalidDomain(format!(
                "interval ({a}, {b}) has nonpositive extent"
            ))),
            Domain::Rectangle { x0, y0, x1, y1 } if !ok(x0, x1) || !ok(y0, y1) => {
                Err(Error::InvalidDomain(format!(
                    "rectangle ({x0}, {y0})-({x1}, {y1}) has nonpositive extent"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Robin coefficient, either one value for every boundary face or one per face.
#[derive(Debug, Clone, PartialEq)]
pub enum Sigma {
    Constant(f64),
    PerFace(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryCondition {
    Dirichlet,
    Robin(Sigma),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcKind {
    Dirichlet,
    Robin,
}

/// A boundary face: an endpoint in 1D, a cell edge in 2D.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFace {
    pub id: usize,
    /// Counting measure 1 for endpoints, edge length in 2D.
    pub measure: f64,
    /// `None` under Dirichlet conditions.
    pub sigma: Option<f64>,
    pub nodes: Vec<usize>,
}

/// Uniform rectilinear mesh with `n` cells per axis.
///
/// Node `(i, j)` has index `j * (n + 1) + i`; cell `(i, j)` has index `j * n + i`.
/// 2D boundary faces are ordered bottom (left to right), right (bottom to top),
/// top (left to right), left (bottom to top).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    domain: Domain,
    elements_per_axis: usize,
    element_measure: f64,
    boundary_faces: Vec<BoundaryFace>,
    bc_kind: BcKind,
    free_index: Vec<Option<usize>>,
    free_nodes: Vec<usize>,
}

pub fn build_grid(domain: Domain, elements_per_axis: usize, bc: &BoundaryCondition) -> Result<Grid> {
    domain.validate()?;
    let n = elements_per_axis;
    let min_n = match bc {
        BoundaryCondition::Dirichlet => 2,
        BoundaryCondition::Robin(_) => 1,
    };
    if n < min_n {
        return Err(Error::InvalidDomain(format!(
            "need at least {min_n} elements per axis, got {n}"
        )));
    }

    let mut faces = boundary_faces(&domain, n);
    let bc_kind = match bc {
        BoundaryCondition::Dirichlet => BcKind::Dirichlet,
        BoundaryCondition::Robin(sigma) => {
            let values = match sigma {
                Sigma::Constant(s) => vec![*s; faces.len()],
                Sigma::PerFace(v) => {
                    if v.len() != faces.len() {
                        return Err(Error::InvalidBoundary(format!(
                            "{} sigma values for {} boundary faces",
                            v.len(),
                            faces.len()
                        )));
                    }
                    v.clone()
                }
            };
            if let Some(bad) = values.iter().find(|s| !s.is_finite() || **s < 0.0) {
                return Err(Error::InvalidBoundary(format!("sigma = {bad} is negative")));
            }
            if values.iter().all(|&s| s == 0.0) {
                return Err(Error::NeumannExcluded);
            }
            for (face, s) in faces.iter_mut().zip(values) {
                face.sigma = Some(s);
            }
            BcKind::Robin
        }
    };

    let node_count = match domain {
        Domain::Interval { .. } => n + 1,
        Domain::Rectangle { .. } => (n + 1) * (n + 1),
    };
    let mut on_boundary = vec![false; node_count];
    for face in &faces {
        for &v in &face.nodes {
            on_boundary[v] = true;
        }
    }
    let mut free_index = vec![None; node_count];
    let mut free_nodes = Vec::new();
    for v in 0..node_count {
        if bc_kind == BcKind::Robin || !on_boundary[v] {
            free_index[v] = Some(free_nodes.len());
            free_nodes.push(v);
        }
    }

    let cells = match domain {
        Domain::Interval { .. } => n,
        Domain::Rectangle { .. } => n * n,
    };
    Ok(Grid {
        domain,
        elements_per_axis: n,
        element_measure: domain.measure() / cells as f64,
        boundary_faces: faces,
        bc_kind,
        free_index,
        free_nodes,
    })
}

fn boundary_faces(domain: &Domain, n: usize) -> Vec<BoundaryFace> {
    match *domain {
        Domain::Interval { .. } => vec![
            BoundaryFace { id: 0, measure: 1.0, sigma: None, nodes: vec![0] },
            BoundaryFace { id: 1, measure: 1.0, sigma: None, nodes: vec![n] },
        ],
        Domain::Rectangle { x0, y0, x1, y1 } => {
            let hx = (x1 - x0) / n as f64;
            let hy = (y1 - y0) / n as f64;
            let node = |i: usize, j: usize| j * (n + 1) + i;
            let mut faces = Vec::with_capacity(4 * n);
            let mut push = |measure: f64, a: usize, b: usize| {
                let id = faces.len();
                faces.push(BoundaryFace { id, measure, sigma: None, nodes: vec![a, b] });
            };
            for i in 0..n {
                push(hx, node(i, 0), node(i + 1, 0));
            }
            for j in 0..n {
                push(hy, node(n, j), node(n, j + 1));
            }
            for i in 0..n {
                push(hx, node(i, n), node(i + 1, n));
            }
            for j in 0..n {
                push(hy, node(0, j), node(0, j + 1));
            }
            faces
        }
    }
}

impl Grid {
    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dimension(&self) -> usize {
        self.domain.dimension()
    }

    pub fn elements_per_axis(&self) -> usize {
        self.elements_per_axis
    }

    pub fn element_count(&self) -> usize {
        match self.domain {
            Domain::Interval { .. } => self.elements_per_axis,
            Domain::Rectangle { .. } => self.elements_per_axis * self.elements_per_axis,
        }
    }

    pub fn element_measure(&self) -> f64 {
        self.element_measure
    }

    pub fn measure(&self) -> f64 {
        self.domain.measure()
    }

    pub fn bc_kind(&self) -> BcKind {
        self.bc_kind
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary_faces
    }

    pub fn node_count(&self) -> usize {
        self.free_index.len()
    }

    pub fn free_count(&self) -> usize {
        self.free_nodes.len()
    }

    /// Free-node position of each node, `None` for Dirichlet boundary nodes.
    pub fn free_index(&self) -> &[Option<usize>] {
        &self.free_index
    }

    pub fn free_nodes(&self) -> &[usize] {
        &self.free_nodes
    }

    pub fn node_coords(&self, node: usize) -> [f64; 2] {
        let n = self.elements_per_axis;
        match self.domain {
            Domain::Interval { a, b } => [a + (b - a) * node as f64 / n as f64, 0.0],
            Domain::Rectangle { x0, y0, x1, y1 } => {
                let (i, j) = (node % (n + 1), node / (n + 1));
                [
                    x0 + (x1 - x0) * i as f64 / n as f64,
                    y0 + (y1 - y0) * j as f64 / n as f64,
                ]
            }
        }
    }

    /// Centroid of a cell.
    pub fn cell_center(&self, cell: usize) -> [f64; 2] {
        let n = self.elements_per_axis;
        match self.domain {
            Domain::Interval { a, b } => [a + (b - a) * (cell as f64 + 0.5) / n as f64, 0.0],
            Domain::Rectangle { x0, y0, x1, y1 } => {
                let (i, j) = (cell % n, cell / n);
                [
                    x0 + (x1 - x0) * (i as f64 + 0.5) / n as f64,
                    y0 + (y1 - y0) * (j as f64 + 0.5) / n as f64,
                ]
            }
        }
    }

    /// Position of a cell along the first axis.
    pub fn cell_column(&self, cell: usize) -> usize {
        cell % self.elements_per_axis
    }

    /// Triangles (node triples) making up a cell. 1D cells return their two
    /// endpoints as a single "simplex".
    pub fn cell_simplices(&self, cell: usize) -> Vec<Vec<usize>> {
        let n = self.elements_per_axis;
        match self.domain {
            Domain::Interval { .. } => vec![vec![cell, cell + 1]],
            Domain::Rectangle { .. } => {
                let (i, j) = (cell % n, cell / n);
                let node = |i: usize, j: usize| j * (n + 1) + i;
                let (ll, lr, ur, ul) = (node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1));
                vec![vec![ll, lr, ur], vec![ll, ur, ul]]
            }
        }
    }

    fn mesh_width(&self) -> f64 {
        match self.domain {
            Domain::Interval { a, b } => (b - a) / self.elements_per_axis as f64,
            Domain::Rectangle { .. } => unreachable!("mesh width is a 1D quantity"),
        }
    }

    /// Scatters free-node values into a full nodal vector with zeros on
    /// Dirichlet nodes.
    pub fn expand_free(&self, free_values: &[f64]) -> Result<Vec<f64>> {
        check_len(self.free_count(), free_values.len())?;
        Ok(self
            .free_index
            .iter()
            .map(|slot| slot.map_or(0.0, |k| free_values[k]))
            .collect())
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::SizeMismatch { expected, found })
    }
}

/// Symmetric positive definite form `∫∇u·∇v (+ ∫σuv on ∂Ω)` on free nodes.
#[derive(Debug, Clone)]
pub struct StiffnessForm {
    pub matrix: CsrMatrix<f64>,
    pub node_count: usize,
    pub free_index: Vec<Option<usize>>,
}

/// Weighted mass pairing `∫ m u v` on free nodes.
#[derive(Debug, Clone)]
pub struct WeightedMassForm {
    pub matrix: CsrMatrix<f64>,
    pub weight: Weight,
}

impl StiffnessForm {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        csr_to_dense(&self.matrix)
    }
}

impl WeightedMassForm {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        csr_to_dense(&self.matrix)
    }
}

pub(crate) fn csr_to_dense(a: &CsrMatrix<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, j, v) in a.triplet_iter() {
        d[(i, j)] += *v;
    }
    d
}

/// Local stiffness and unit mass matrices of one simplex.
fn simplex_matrices(grid: &Grid, nodes: &[usize]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    match nodes.len() {
        2 => {
            let h = grid.mesh_width();
            (
                vec![vec![1.0 / h, -1.0 / h], vec![-1.0 / h, 1.0 / h]],
                vec![vec![h / 3.0, h / 6.0], vec![h / 6.0, h / 3.0]],
            )
        }
        3 => {
            let p: Vec<[f64; 2]> = nodes.iter().map(|&v| grid.node_coords(v)).collect();
            let area2 = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
            let area = 0.5 * area2.abs();
            let b: Vec<f64> = (0..3).map(|i| p[(i + 1) % 3][1] - p[(i + 2) % 3][1]).collect();
            let c: Vec<f64> = (0..3).map(|i| p[(i + 2) % 3][0] - p[(i + 1) % 3][0]).collect();
            let stiff = (0..3)
                .map(|i| (0..3).map(|j| (b[i] * b[j] + c[i] * c[j]) / (4.0 * area)).collect())
                .collect();
            let mass = (0..3)
                .map(|i| {
                    (0..3)
                        .map(|j| if i == j { area / 6.0 } else { area / 12.0 })
                        .collect()
                })
                .collect();
            (stiff, mass)
        }
        _ => unreachable!("simplices have 2 or 3 nodes"),
    }
}

fn scatter(coo: &mut CooMatrix<f64>, free_index: &[Option<usize>], nodes: &[usize], local: &[Vec<f64>], scale: f64) {
    for (a, &na) in nodes.iter().enumerate() {
        let Some(ra) = free_index[na] else { continue };
        for (b, &nb) in nodes.iter().enumerate() {
            let Some(rb) = free_index[nb] else { continue };
            let v = scale * local[a][b];
            if v != 0.0 {
                coo.push(ra, rb, v);
            }
        }
    }
}

pub fn assemble_stiffness(grid: &Grid) -> StiffnessForm {
    let dim = grid.free_count();
    let mut coo = CooMatrix::new(dim, dim);
    for cell in 0..grid.element_count() {
        for simplex in grid.cell_simplices(cell) {
            let (stiff, _) = simplex_matrices(grid, &simplex);
            scatter(&mut coo, &grid.free_index, &simplex, &stiff, 1.0);
        }
    }
    if grid.bc_kind == BcKind::Robin {
        for face in &grid.boundary_faces {
            let sigma = face.sigma.unwrap_or(0.0);
            if sigma == 0.0 {
                continue;
            }
            let local = match face.nodes.len() {
                1 => vec![vec![1.0]],
                _ => {
                    let l = face.measure;
                    vec![vec![l / 3.0, l / 6.0], vec![l / 6.0, l / 3.0]]
                }
            };
            scatter(&mut coo, &grid.free_index, &face.nodes, &local, sigma);
        }
    }
    StiffnessForm {
        matrix: CsrMatrix::from(&coo),
        node_count: grid.node_count(),
        free_index: grid.free_index.clone(),
    }
}

pub fn assemble_weighted_mass(grid: &Grid, weight: &Weight) -> Result<WeightedMassForm> {
    check_len(grid.element_count(), weight.len())?;
    let dim = grid.free_count();
    let mut coo = CooMatrix::new(dim, dim);
    for (cell, &m) in weight.values().iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        for simplex in grid.cell_simplices(cell) {
            let (_, mass) = simplex_matrices(grid, &simplex);
            scatter(&mut coo, &grid.free_index, &simplex, &mass, m);
        }
    }
    Ok(WeightedMassForm {
        matrix: CsrMatrix::from(&coo),
        weight: weight.clone(),
    })
}

/// Entries `(a, b, ∫_e φ_a φ_b)` of the unit-weight mass matrix of one cell,
/// over global node ids.
pub fn cell_mass_entries(grid: &Grid, cell: usize) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for simplex in grid.cell_simplices(cell) {
        let (_, mass) = simplex_matrices(grid, &simplex);
        for (i, &a) in simplex.iter().enumerate() {
            for (j, &b) in simplex.iter().enumerate() {
                out.push((a, b, mass[i][j]));
            }
        }
    }
    out
}

/// Exact `∫_e u² dx` for every cell, with `u` given on all nodes.
pub fn element_square_integrals(grid: &Grid, u: &[f64]) -> Result<Vec<f64>> {
    check_len(grid.node_count(), u.len())?;
    let integrals = (0..grid.element_count())
        .map(|cell| {
            grid.cell_simplices(cell)
                .iter()
                .map(|s| match s.len() {
                    2 => {
                        let (a, b) = (u[s[0]], u[s[1]]);
                        grid.mesh_width() / 3.0 * (a * a + a * b + b * b)
                    }
                    _ => {
                        let (a, b, c) = (u[s[0]], u[s[1]], u[s[2]]);
                        let area = grid.element_measure / 2.0;
                        area / 6.0 * (a * a + b * b + c * c + a * b + a * c + b * c)
                    }
                })
                .sum()
        })
        .collect();
    Ok(integrals)
}
