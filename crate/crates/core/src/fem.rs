//! Finite element discretization of the Neumann state equation
//! `∫ ∇y·∇v + y v = ∫ u v`, with continuous P1 states and discontinuous
//! degree-`k` Lagrange controls.

use std::sync::Arc;

use nalgebra::DMatrix;
use num::ToPrimitive;
use thiserror::Error;

use crate::exactbasis::{basis_integrals, lagrange_basis, BasisError, LagrangeBasisSpec};
use crate::mesh::{MeshError, SimplexMesh};
use crate::quadrature::{simplex_rule, QuadratureError, QuadratureRule};

/// Default relative residual tolerance for CG.
pub const DEFAULT_CG_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("quadrature exactness {provided} is below the required {required}")]
    InsufficientQuadrature { required: u32, provided: u32 },
    #[error("rule dimension {rule} does not match mesh dimension {mesh}")]
    DimensionMismatch { mesh: usize, rule: usize },
    #[error("vector of length {got} where {expected} was expected")]
    SizeMismatch { expected: usize, got: usize },
    #[error("CG did not converge: {0:?}")]
    NotConverged(LinearSolveReport),
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseMatrix {
    /// Sums duplicate entries; columns within a row come out sorted.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            assert!(i < nrows && j < ncols, "entry ({i}, {j}) out of bounds");
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
            symmetric: false,
        }
    }

    /// Builds a symmetric matrix from upper-triangle contributions
    /// (`i <= j`); the lower triangle is a mirror of the summed upper one.
    pub fn from_upper_triplets(n: usize, triplets: Vec<(usize, usize, f64)>) -> Self {
        let upper = Self::from_triplets(n, n, triplets);
        let mut all = Vec::with_capacity(2 * upper.nnz());
        for i in 0..n {
            for (j, v) in upper.row(i) {
                assert!(i <= j, "lower-triangle entry ({i}, {j}) passed as upper");
                all.push((i, j, v));
                if i != j {
                    all.push((j, i, v));
                }
            }
        }
        let mut m = Self::from_triplets(n, n, all);
        m.symmetric = true;
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_symmetric_flagged(&self) -> bool {
        self.symmetric
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(p) => self.values[r.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// Exact entrywise check `A = A^T`.
    pub fn is_symmetric(&self) -> bool {
        self.nrows == self.ncols
            && (0..self.nrows).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut out = vec![0.0; self.ncols];
        for (i, xi) in x.iter().enumerate() {
            for (j, v) in self.row(i) {
                out[j] += v * xi;
            }
        }
        out
    }

    /// Column sums `1^T A`.
    pub fn column_sums(&self) -> Vec<f64> {
        self.matvec_transpose(&vec![1.0; self.nrows])
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                d[(i, j)] += v;
            }
        }
        d
    }

    /// `x^T A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.matvec(x))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearSolveReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Jacobi-preconditioned CG from a zero initial guess, with at most
/// `10 * dof` iterations.
pub fn cg_solve(
    a: &SparseMatrix,
    rhs: &[f64],
    tol: f64,
) -> Result<(Vec<f64>, LinearSolveReport), FemError> {
    cg_solve_with_limit(a, rhs, tol, 10 * a.nrows())
}

pub fn cg_solve_with_limit(
    a: &SparseMatrix,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, LinearSolveReport), FemError> {
    let n = a.nrows();
    if rhs.len() != n {
        return Err(FemError::SizeMismatch {
            expected: n,
            got: rhs.len(),
        });
    }
    let bnorm = norm(rhs);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((
            x,
            LinearSolveReport {
                iterations: 0,
                relative_residual: 0.0,
                converged: true,
            },
        ));
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut iterations = 0;
    let mut r = rhs.to_vec();
    loop {
        // (re)start from the true residual of the current iterate
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        while norm(&r) > tol * bnorm && iterations < max_iter {
            let ap = a.matvec(&p);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                break;
            }
            let step = rz / pap;
            for i in 0..n {
                x[i] += step * p[i];
                r[i] -= step * ap[i];
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
            iterations += 1;
        }
        let ax = a.matvec(&x);
        r = rhs.iter().zip(&ax).map(|(b, v)| b - v).collect();
        let relative_residual = norm(&r) / bnorm;
        let report = LinearSolveReport {
            iterations,
            relative_residual,
            converged: relative_residual <= tol,
        };
        if report.converged {
            return Ok((x, report));
        }
        if iterations >= max_iter || rz == 0.0 {
            return Err(FemError::NotConverged(report));
        }
    }
}

/// Continuous piecewise linear functions; one dof per mesh vertex.
#[derive(Clone, Debug)]
pub struct StateSpace {
    mesh: Arc<SimplexMesh>,
}

impl StateSpace {
    pub fn new(mesh: Arc<SimplexMesh>) -> Self {
        StateSpace { mesh }
    }

    pub fn mesh(&self) -> &SimplexMesh {
        &self.mesh
    }

    pub fn dof_count(&self) -> usize {
        self.mesh.vertex_count()
    }
}

/// Barycentric coordinates of a reference point.
fn p1_values(x: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(x.len() + 1);
    v.push(1.0 - x.iter().sum::<f64>());
    v.extend_from_slice(x);
    v
}

/// Discontinuous degree-`k` Lagrange functions. The global index of local
/// basis function `j` on cell `c` is `c * m + j`.
#[derive(Clone, Debug)]
pub struct ControlSpace {
    mesh: Arc<SimplexMesh>,
    basis: Arc<LagrangeBasisSpec>,
    reference_integrals: Vec<f64>,
}

impl ControlSpace {
    pub fn new(mesh: Arc<SimplexMesh>, degree: u32) -> Result<Self, FemError> {
        let basis = Arc::new(lagrange_basis(mesh.dim(), degree)?);
        Ok(Self::with_basis(mesh, basis))
    }

    pub fn with_basis(mesh: Arc<SimplexMesh>, basis: Arc<LagrangeBasisSpec>) -> Self {
        assert_eq!(mesh.dim(), basis.dim());
        let reference_integrals = basis_integrals(&basis)
            .iter()
            .map(|v| v.to_f64().unwrap())
            .collect();
        ControlSpace {
            mesh,
            basis,
            reference_integrals,
        }
    }

    pub fn mesh(&self) -> &SimplexMesh {
        &self.mesh
    }

    pub fn basis(&self) -> &LagrangeBasisSpec {
        &self.basis
    }

    pub fn degree(&self) -> u32 {
        self.basis.degree()
    }

    /// Local basis size `m = C(d + k, d)`.
    pub fn local_count(&self) -> usize {
        self.basis.node_count()
    }

    /// `N_n = m * cells`.
    pub fn dof_count(&self) -> usize {
        self.local_count() * self.mesh.cell_count()
    }

    pub fn global_index(&self, cell: usize, local: usize) -> usize {
        cell * self.local_count() + local
    }

    /// `∫_T̂ psi_j`, rounded from the exact values.
    pub fn reference_integrals(&self) -> &[f64] {
        &self.reference_integrals
    }

    /// Reference basis values at the rule's points, `out[q][j]`.
    pub fn tabulate(&self, rule: &QuadratureRule) -> Vec<Vec<f64>> {
        self.basis.tabulate(rule.points())
    }

    /// Reference mass matrix `∫_T̂ psi_a psi_b` by quadrature.
    pub fn reference_mass(&self, rule: &QuadratureRule) -> DMatrix<f64> {
        let m = self.local_count();
        let tab = self.tabulate(rule);
        let mut out = DMatrix::zeros(m, m);
        for (vals, w) in tab.iter().zip(rule.weights()) {
            for a in 0..m {
                for b in 0..m {
                    out[(a, b)] += w * vals[a] * vals[b];
                }
            }
        }
        out
    }
}

fn check_rule(mesh: &SimplexMesh, rule: &QuadratureRule, required: u32) -> Result<(), FemError> {
    if rule.dim() != mesh.dim() {
        return Err(FemError::DimensionMismatch {
            mesh: mesh.dim(),
            rule: rule.dim(),
        });
    }
    if rule.exactness() < required {
        return Err(FemError::InsufficientQuadrature {
            required,
            provided: rule.exactness(),
        });
    }
    Ok(())
}

fn assemble_p1(
    space: &StateSpace,
    rule: &QuadratureRule,
    stiffness: f64,
    mass: f64,
) -> Result<SparseMatrix, FemError> {
    let mesh = space.mesh();
    check_rule(mesh, rule, 2)?;
    let d = mesh.dim();
    let local_mass = {
        let mut m = DMatrix::<f64>::zeros(d + 1, d + 1);
        for (x, w) in rule.points().iter().zip(rule.weights()) {
            let v = p1_values(x);
            for a in 0..=d {
                for b in 0..=d {
                    m[(a, b)] += w * v[a] * v[b];
                }
            }
        }
        m
    };
    let ref_volume: f64 = rule.weights().iter().sum();
    // reference gradients of the barycentric coordinates, one per column
    let mut ref_grads = DMatrix::<f64>::zeros(d, d + 1);
    for i in 0..d {
        ref_grads[(i, 0)] = -1.0;
        ref_grads[(i, i + 1)] = 1.0;
    }
    let mut triplets = Vec::with_capacity(mesh.cell_count() * (d + 1) * (d + 2) / 2);
    for c in 0..mesh.cell_count() {
        let map = mesh.cell_affine_map(c)?;
        let grads = map.inverse_transpose() * &ref_grads;
        let det = map.det_abs();
        let verts = mesh.cell(c);
        for a in 0..=d {
            for b in 0..=d {
                let (i, j) = (verts[a], verts[b]);
                if i > j {
                    continue;
                }
                let k = ref_volume * grads.column(a).dot(&grads.column(b));
                let v = det * (stiffness * k + mass * local_mass[(a, b)]);
                triplets.push((i, j, v));
            }
        }
    }
    Ok(SparseMatrix::from_upper_triplets(space.dof_count(), triplets))
}

/// `A = K + M`, the matrix of `∫ ∇y·∇v + y v` on the P1 space.
pub fn assemble_state_operator(
    space: &StateSpace,
    rule: &QuadratureRule,
) -> Result<SparseMatrix, FemError> {
    assemble_p1(space, rule, 1.0, 1.0)
}

pub fn assemble_stiffness(space: &StateSpace, rule: &QuadratureRule) -> Result<SparseMatrix, FemError> {
    assemble_p1(space, rule, 1.0, 0.0)
}

pub fn assemble_state_mass(space: &StateSpace, rule: &QuadratureRule) -> Result<SparseMatrix, FemError> {
    assemble_p1(space, rule, 0.0, 1.0)
}

/// Block-diagonal control mass matrix, one `m x m` block `|det B| M̂` per cell.
pub fn assemble_control_mass(
    space: &ControlSpace,
    rule: &QuadratureRule,
) -> Result<SparseMatrix, FemError> {
    let mesh = space.mesh();
    check_rule(mesh, rule, 2 * space.degree())?;
    let m = space.local_count();
    let reference = space.reference_mass(rule);
    let mut triplets = Vec::with_capacity(mesh.cell_count() * m * (m + 1) / 2);
    for c in 0..mesh.cell_count() {
        let det = mesh.cell_affine_map(c)?.det_abs();
        for a in 0..m {
            for b in a..m {
                triplets.push((
                    space.global_index(c, a),
                    space.global_index(c, b),
                    det * reference[(a, b)],
                ));
            }
        }
    }
    Ok(SparseMatrix::from_upper_triplets(space.dof_count(), triplets))
}

/// Rectangular `C[a, i] = ∫ v_a phi_i` (state dofs by control dofs).
pub fn assemble_coupling(
    state: &StateSpace,
    control: &ControlSpace,
    rule: &QuadratureRule,
) -> Result<SparseMatrix, FemError> {
    let mesh = control.mesh();
    check_rule(mesh, rule, control.degree() + 1)?;
    let d = mesh.dim();
    let m = control.local_count();
    let tab = control.tabulate(rule);
    let mut reference = DMatrix::<f64>::zeros(d + 1, m);
    for ((x, vals), w) in rule.points().iter().zip(&tab).zip(rule.weights()) {
        let p1 = p1_values(x);
        for a in 0..=d {
            for j in 0..m {
                reference[(a, j)] += w * p1[a] * vals[j];
            }
        }
    }
    let mut triplets = Vec::with_capacity(mesh.cell_count() * (d + 1) * m);
    for c in 0..mesh.cell_count() {
        let det = mesh.cell_affine_map(c)?.det_abs();
        for (a, &v) in mesh.cell(c).iter().enumerate() {
            for j in 0..m {
                triplets.push((v, control.global_index(c, j), det * reference[(a, j)]));
            }
        }
    }
    Ok(SparseMatrix::from_triplets(
        state.dof_count(),
        control.dof_count(),
        triplets,
    ))
}

/// Load vector `∫ f v_a`.
pub fn assemble_load<F: Fn(&[f64]) -> f64>(
    space: &StateSpace,
    rule: &QuadratureRule,
    f: F,
) -> Result<Vec<f64>, FemError> {
    let mesh = space.mesh();
    check_rule(mesh, rule, 1)?;
    let mut out = vec![0.0; space.dof_count()];
    for c in 0..mesh.cell_count() {
        let map = mesh.cell_affine_map(c)?;
        let verts = mesh.cell(c);
        for (x, w) in rule.points().iter().zip(rule.weights()) {
            let fx = f(&map.apply(x));
            for (a, v) in p1_values(x).iter().enumerate() {
                out[verts[a]] += map.det_abs() * w * fx * v;
            }
        }
    }
    Ok(out)
}

/// `‖y_h - g‖_{L²}` for a P1 function `y_h` by quadrature.
pub fn p1_l2_error<F: Fn(&[f64]) -> f64>(
    space: &StateSpace,
    coeffs: &[f64],
    rule: &QuadratureRule,
    exact: F,
) -> Result<f64, FemError> {
    let mesh = space.mesh();
    check_rule(mesh, rule, 2)?;
    let mut sum = 0.0;
    for c in 0..mesh.cell_count() {
        let map = mesh.cell_affine_map(c)?;
        let verts = mesh.cell(c);
        for (x, w) in rule.points().iter().zip(rule.weights()) {
            let yh: f64 = p1_values(x)
                .iter()
                .zip(verts)
                .map(|(v, &i)| v * coeffs[i])
                .sum();
            let e = yh - exact(&map.apply(x));
            sum += map.det_abs() * w * e * e;
        }
    }
    Ok(sum.sqrt())
}

/// The assembled discrete state equation `A y = C lambda`, together with the
/// mass matrices needed to evaluate `L²` quantities.
#[derive(Clone, Debug)]
pub struct DiscreteModel {
    state: StateSpace,
    control: ControlSpace,
    operator: SparseMatrix,
    state_mass: SparseMatrix,
    control_mass: SparseMatrix,
    coupling: SparseMatrix,
    control_rule: QuadratureRule,
    tol: f64,
}

impl DiscreteModel {
    /// Assembles with exactness 2 for the P1 matrices and `2k + 2` for the
    /// control mass and coupling.
    pub fn new(mesh: Arc<SimplexMesh>, degree: u32, tol: f64) -> Result<Self, FemError> {
        let control = ControlSpace::new(mesh.clone(), degree)?;
        Self::with_control(control, tol)
    }

    pub fn with_control(control: ControlSpace, tol: f64) -> Result<Self, FemError> {
        let mesh = control.mesh.clone();
        let d = mesh.dim();
        let state = StateSpace::new(mesh);
        let p1_rule = simplex_rule(d, 2)?;
        let control_rule = simplex_rule(d, 2 * control.degree() + 2)?;
        let operator = assemble_state_operator(&state, &p1_rule)?;
        let state_mass = assemble_state_mass(&state, &p1_rule)?;
        let control_mass = assemble_control_mass(&control, &control_rule)?;
        let coupling = assemble_coupling(&state, &control, &control_rule)?;
        Ok(DiscreteModel {
            state,
            control,
            operator,
            state_mass,
            control_mass,
            coupling,
            control_rule,
            tol,
        })
    }

    pub fn state(&self) -> &StateSpace {
        &self.state
    }

    pub fn control(&self) -> &ControlSpace {
        &self.control
    }

    pub fn operator(&self) -> &SparseMatrix {
        &self.operator
    }

    pub fn state_mass(&self) -> &SparseMatrix {
        &self.state_mass
    }

    pub fn control_mass(&self) -> &SparseMatrix {
        &self.control_mass
    }

    pub fn coupling(&self) -> &SparseMatrix {
        &self.coupling
    }

    /// Rule of exactness `2k + 2` used for control quantities.
    pub fn control_rule(&self) -> &QuadratureRule {
        &self.control_rule
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Solves `A x = rhs` for a right-hand side in state-dual space.
    pub fn solve_operator(&self, rhs: &[f64]) -> Result<Vec<f64>, FemError> {
        cg_solve(&self.operator, rhs, self.tol).map(|(x, _)| x)
    }

    /// Discrete state `y_n(u)` for control coefficients `u`.
    pub fn solve_state(&self, u: &[f64]) -> Result<(Vec<f64>, LinearSolveReport), FemError> {
        if u.len() != self.control.dof_count() {
            return Err(FemError::SizeMismatch {
                expected: self.control.dof_count(),
                got: u.len(),
            });
        }
        cg_solve(&self.operator, &self.coupling.matvec(u), self.tol)
    }

    /// `∫_Ω phi_i` for every control basis function.
    pub fn control_integrals(&self) -> Vec<f64> {
        self.coupling.column_sums()
    }

    /// `∫_Ω y` for P1 coefficients `y`.
    pub fn state_integral(&self, y: &[f64]) -> f64 {
        self.state_mass.matvec(y).iter().sum()
    }

    /// `∫_Ω u` for control coefficients `u`.
    pub fn control_integral(&self, u: &[f64]) -> f64 {
        dot(&self.control_integrals(), u)
    }

    pub fn state_l2_norm(&self, y: &[f64]) -> f64 {
        self.state_mass.quadratic_form(y).max(0.0).sqrt()
    }

    pub fn control_l2_norm(&self, u: &[f64]) -> f64 {
        self.control_mass.quadratic_form(u).max(0.0).sqrt()
    }
}
