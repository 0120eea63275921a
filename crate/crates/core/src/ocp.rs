//! The discretized model problem
//!
//! ```text
//! min ‖y_n(u) + 1‖² + α ‖u‖²   subject to   u = Σ λ_i φ_i,  λ_i ≥ 0
//! ```
//!
//! on the unit interval or unit square, solved as a bound-constrained convex
//! QP in the coefficients. The continuous problem has the unique solution
//! `u = 0` with objective `|Ω|`. When some reference basis function has a
//! negative integral, [`build_certificate`] constructs an explicit feasible
//! discrete control whose objective lies a mesh-independent margin `δ` below
//! `|Ω|`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num::{BigRational, One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::exactbasis::{
    basis_integrals, format_rational, reference_volume, BasisError, ExactPolynomial,
};
use crate::fem::{dot, norm, DiscreteModel, FemError, DEFAULT_CG_TOL};
use crate::jsonfmt::{fixed17, fixed17_opt};
use crate::mesh::{unit_interval_mesh, unit_square_mesh, MeshError, SimplexMesh};

/// The desired state `y_d`.
pub const DESIRED_STATE: f64 = -1.0;
/// Default Tikhonov weight.
pub const DEFAULT_ALPHA: f64 = 0.1;
/// Default stopping tolerance on `‖λ − Π(λ − g/L)‖`.
pub const DEFAULT_KKT_TOL: f64 = 1e-9;
/// Coefficients down to this value count as non-negative.
pub const FEASIBILITY_TOL: f64 = 1e-12;
/// Slack when comparing objective values against `|Ω|` or `|Ω| − δ`.
pub const OBJECTIVE_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone)]
pub enum OcpError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("vector of length {got} where {expected} was expected")]
    SizeMismatch { expected: usize, got: usize },
    /// Every reference basis function has a non-negative integral, so no
    /// counterexample direction exists.
    #[error("no reference basis function has a negative integral")]
    NoNegativeBasis,
    #[error("QP solver hit its iteration cap (KKT residual {:e})", .0.kkt_residual)]
    IterationCap(Box<QpSolution>),
}

impl OcpError {
    /// True for failures of an iterative solver.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            OcpError::IterationCap(_) | OcpError::Fem(FemError::NotConverged(_))
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OcpConfig {
    pub dim: usize,
    pub degree: u32,
    pub n: usize,
    #[serde(serialize_with = "fixed17")]
    pub alpha: f64,
    /// Relative residual tolerance of the state and adjoint solves.
    #[serde(serialize_with = "fixed17")]
    pub cg_tol: f64,
    #[serde(serialize_with = "fixed17")]
    pub kkt_tol: f64,
    pub max_iter: usize,
}

impl OcpConfig {
    pub fn new(dim: usize, degree: u32, n: usize, alpha: f64) -> Result<Self, OcpError> {
        let c = OcpConfig {
            dim,
            degree,
            n,
            alpha,
            cg_tol: DEFAULT_CG_TOL,
            kkt_tol: DEFAULT_KKT_TOL,
            max_iter: 100_000,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_cg_tol(mut self, tol: f64) -> Self {
        self.cg_tol = tol;
        self
    }

    pub fn with_kkt_tol(mut self, tol: f64) -> Self {
        self.kkt_tol = tol;
        self
    }

    pub fn with_mesh(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn validate(&self) -> Result<(), OcpError> {
        let bad = |m: String| Err(OcpError::InvalidConfig(m));
        if !(1..=2).contains(&self.dim) {
            return bad(format!("dimension {} (expected 1 or 2)", self.dim));
        }
        let max = crate::exactbasis::MAX_DEGREE[self.dim - 1];
        if self.degree == 0 || self.degree > max {
            return bad(format!("degree {} (supported 1..={max})", self.degree));
        }
        if self.n == 0 {
            return bad("mesh parameter must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        for (name, t) in [("cg_tol", self.cg_tol), ("kkt_tol", self.kkt_tol)] {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("{name} must be positive, got {t}"));
            }
        }
        Ok(())
    }

    pub fn mesh(&self) -> Result<SimplexMesh, OcpError> {
        Ok(match self.dim {
            1 => unit_interval_mesh(self.n)?,
            _ => unit_square_mesh(self.n)?,
        })
    }
}

/// A convex quadratic over `x ≥ 0`, accessed through its value, gradient
/// and Hessian action.
pub trait BoundedQuadratic {
    fn dim(&self) -> usize;
    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>), OcpError>;
    fn hessian_vec(&self, s: &[f64]) -> Result<Vec<f64>, OcpError>;
}

/// `f(x) = constant + c^T x + x^T H x / 2` with dense `H`.
#[derive(Clone, Debug)]
pub struct DenseQuadratic {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constant: f64,
}

impl DenseQuadratic {
    pub fn value(&self, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        self.constant + self.linear.dot(&x) + 0.5 * x.dot(&(&self.hessian * &x))
    }
}

impl BoundedQuadratic for DenseQuadratic {
    fn dim(&self) -> usize {
        self.linear.len()
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>), OcpError> {
        let xv = DVector::from_column_slice(x);
        let g = &self.hessian * &xv + &self.linear;
        Ok((self.value(x), g.iter().copied().collect()))
    }

    fn hessian_vec(&self, s: &[f64]) -> Result<Vec<f64>, OcpError> {
        Ok((&self.hessian * DVector::from_column_slice(s))
            .iter()
            .copied()
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpOptions {
    pub kkt_tol: f64,
    pub max_iter: usize,
}

/// Output of [`solve_bounded_qp`].
#[derive(Clone, Debug, PartialEq)]
pub struct QpIterate {
    pub x: Vec<f64>,
    pub value: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// Step-size constant `Ĺ` (safeguarded Hessian norm estimate).
    pub lipschitz: f64,
    pub converged: bool,
}

/// Power iteration estimate of `‖H‖₂` for symmetric positive semidefinite
/// `H`.
pub fn hessian_norm_estimate<Q: BoundedQuadratic + ?Sized>(q: &Q) -> Result<f64, OcpError> {
    let n = q.dim();
    if n == 0 {
        return Ok(0.0);
    }
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.7).sin()).collect();
    let s = norm(&v);
    v.iter_mut().for_each(|x| *x /= s);
    let mut estimate = 0.0;
    for _ in 0..500 {
        let hv = q.hessian_vec(&v)?;
        let nrm = norm(&hv);
        if nrm == 0.0 {
            return Ok(0.0);
        }
        let prev = estimate;
        estimate = nrm;
        v = hv.into_iter().map(|x| x / nrm).collect();
        if (estimate - prev).abs() <= 1e-9 * estimate {
            break;
        }
    }
    Ok(estimate)
}

fn project(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
}

fn projected_residual(x: &[f64], g: &[f64], lipschitz: f64) -> f64 {
    x.iter()
        .zip(g)
        .map(|(&xi, &gi)| {
            let r = xi - (xi - gi / lipschitz).max(0.0);
            r * r
        })
        .sum::<f64>()
        .sqrt()
}

/// Accelerated projected gradient (FISTA with adaptive restart) for
/// `min q(x)` over `x ≥ 0`, started at `x = 0`. Terminates when
/// `‖x − Π(x − ∇q(x)/Ĺ)‖ ≤ kkt_tol`.
///
/// On hitting the iteration cap the best iterate found is returned with
/// `converged = false`.
pub fn solve_bounded_qp<Q: BoundedQuadratic + ?Sized>(
    q: &Q,
    opts: &QpOptions,
) -> Result<QpIterate, OcpError> {
    let n = q.dim();
    // the power iteration approaches ‖H‖ from below
    let lipschitz = match 1.02 * hessian_norm_estimate(q)? {
        l if l > 0.0 => l,
        _ => 1.0,
    };
    let mut x = vec![0.0; n];
    let (f0, g0) = q.value_and_gradient(&x)?;
    let mut best = (f0, x.clone(), projected_residual(&x, &g0, lipschitz));
    if best.2 <= opts.kkt_tol {
        return Ok(QpIterate {
            x,
            value: f0,
            kkt_residual: best.2,
            iterations: 0,
            lipschitz,
            converged: true,
        });
    }
    let mut z = x.clone();
    let mut gz = g0;
    let mut t: f64 = 1.0;
    for it in 1..=opts.max_iter {
        let mut x_new: Vec<f64> = z.iter().zip(&gz).map(|(zi, gi)| zi - gi / lipschitz).collect();
        project(&mut x_new);
        let step: Vec<f64> = x_new.iter().zip(&z).map(|(a, b)| a - b).collect();
        let mapping = norm(&step);
        let moved: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        // restart when the momentum points uphill
        let restart = dot(&step, &moved) < 0.0;
        x = x_new;
        if restart {
            t = 1.0;
            z = x.clone();
        } else {
            let beta = (t - 1.0) / t_new;
            z = x.iter().zip(&moved).map(|(xi, d)| xi + beta * d).collect();
            t = t_new;
        }
        let (fz, g) = q.value_and_gradient(&z)?;
        gz = g;
        if mapping <= opts.kkt_tol || it % 50 == 0 {
            let (fx, gx) = if restart {
                (fz, gz.clone())
            } else {
                q.value_and_gradient(&x)?
            };
            let res = projected_residual(&x, &gx, lipschitz);
            if fx < best.0 {
                best = (fx, x.clone(), res);
            }
            if res <= opts.kkt_tol {
                return Ok(QpIterate {
                    x,
                    value: fx,
                    kkt_residual: res,
                    iterations: it,
                    lipschitz,
                    converged: true,
                });
            }
        }
    }
    Ok(QpIterate {
        x: best.1,
        value: best.0,
        kkt_residual: best.2,
        iterations: opts.max_iter,
        lipschitz,
        converged: false,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub lambda: Vec<f64>,
    pub state: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CounterexampleCertificate {
    /// Local indices `j` with `∫_T̂ psi_j < 0`.
    pub reference_negative: Vec<usize>,
    /// Global indices `I_n` of control basis functions with negative integral.
    pub negative_indices: Vec<usize>,
    /// Coefficients of `w_n = Σ_{i ∈ I_n} φ_i`.
    pub direction: Vec<f64>,
    /// `∫_T̂ ŵ` and `‖ŵ‖²_{L²(T̂)}`, exact.
    pub reference_integral: BigRational,
    pub reference_norm2: BigRational,
    /// `β = −∫_Ω w_n` and `M² = ‖w_n‖²`, from the exact reference values.
    pub beta: f64,
    pub m2: f64,
    /// The same quantities measured on the assembled mesh.
    pub beta_measured: f64,
    pub m2_measured: f64,
    /// `L_n = ‖y_n(w_n)‖`.
    pub l_n: f64,
    pub t_hat: f64,
    pub delta: f64,
    /// `|Ω| − δ`.
    pub bound: f64,
    /// `J_n(t̂ w_n)`, evaluated directly.
    pub measured_objective: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeasibilityAudit {
    /// `(1/|T|) ∫_T u_h` per cell, from the exact reference integrals.
    pub cell_averages: Vec<f64>,
    pub min_cell_average: f64,
    /// `‖min(u_h, 0)‖_{L²}` by quadrature of exactness `2k + 2`; approximate
    /// since the integrand is only piecewise polynomial.
    pub negative_part_norm: f64,
    /// Fraction of cells with `∫_T u_h < −1e−12`.
    pub negative_cell_fraction: f64,
}

/// Assembled model problem for one configuration.
#[derive(Clone, Debug)]
pub struct ModelProblem {
    config: OcpConfig,
    model: DiscreteModel,
    measure: f64,
    mass_of_one: Vec<f64>,
    control_integrals: Vec<f64>,
}

impl ModelProblem {
    pub fn new(config: OcpConfig) -> Result<Self, OcpError> {
        config.validate()?;
        let mesh = Arc::new(config.mesh()?);
        let measure = mesh.measure()?;
        let model = DiscreteModel::new(mesh, config.degree, config.cg_tol)?;
        let mass_of_one = model
            .state_mass()
            .matvec(&vec![1.0; model.state().dof_count()]);
        let control_integrals = model.control_integrals();
        Ok(ModelProblem {
            config,
            model,
            measure,
            mass_of_one,
            control_integrals,
        })
    }

    pub fn config(&self) -> &OcpConfig {
        &self.config
    }

    pub fn model(&self) -> &DiscreteModel {
        &self.model
    }

    /// `|Ω|`.
    pub fn measure(&self) -> f64 {
        self.measure
    }

    /// `N_n`.
    pub fn control_dofs(&self) -> usize {
        self.model.control().dof_count()
    }

    /// `∫_Ω φ_i` for every control basis function.
    pub fn control_integrals(&self) -> &[f64] {
        &self.control_integrals
    }

    fn check_len(&self, v: &[f64]) -> Result<(), OcpError> {
        if v.len() != self.control_dofs() {
            return Err(OcpError::SizeMismatch {
                expected: self.control_dofs(),
                got: v.len(),
            });
        }
        Ok(())
    }

    fn objective_from_state(&self, lambda: &[f64], y: &[f64]) -> f64 {
        let my = self.model.state_mass().matvec(y);
        let tracking = dot(y, &my) + 2.0 * my.iter().sum::<f64>() + self.measure;
        tracking + self.config.alpha * self.model.control_mass().quadratic_form(lambda)
    }

    /// `J_n(λ) = ‖y + 1‖² + α ‖u‖²`, with `‖y + 1‖² = yᵀMy + 2·1ᵀMy + |Ω|`.
    pub fn objective(&self, lambda: &[f64]) -> Result<f64, OcpError> {
        self.check_len(lambda)?;
        let (y, _) = self.model.solve_state(lambda)?;
        Ok(self.objective_from_state(lambda, &y))
    }

    /// Objective, reduced gradient `2 Cᵀp + 2α M_u λ` with `A p = M (y + 1)`,
    /// and the state.
    pub fn evaluate(&self, lambda: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>), OcpError> {
        self.check_len(lambda)?;
        let (y, _) = self.model.solve_state(lambda)?;
        let value = self.objective_from_state(lambda, &y);
        let rhs: Vec<f64> = self
            .model
            .state_mass()
            .matvec(&y)
            .iter()
            .zip(&self.mass_of_one)
            .map(|(a, b)| a + b)
            .collect();
        let p = self.model.solve_operator(&rhs)?;
        let ctp = self.model.coupling().matvec_transpose(&p);
        let mul = self.model.control_mass().matvec(lambda);
        let alpha = self.config.alpha;
        let g = ctp
            .iter()
            .zip(&mul)
            .map(|(a, b)| 2.0 * a + 2.0 * alpha * b)
            .collect();
        Ok((value, g, y))
    }

    pub fn gradient(&self, lambda: &[f64]) -> Result<Vec<f64>, OcpError> {
        self.evaluate(lambda).map(|(_, g, _)| g)
    }

    /// Dense `(constant, c, H)` representation; only sensible for small `N_n`.
    pub fn to_dense_quadratic(&self) -> Result<DenseQuadratic, OcpError> {
        let n = self.control_dofs();
        let (constant, g0, _) = self.evaluate(&vec![0.0; n])?;
        let mut h = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let col = self.hessian_vec(&e)?;
            for i in 0..n {
                h[(i, j)] = col[i];
            }
        }
        let h = 0.5 * (&h + h.transpose());
        Ok(DenseQuadratic {
            hessian: h,
            linear: DVector::from_vec(g0),
            constant,
        })
    }

    /// Minimizes `J_n` over `λ ≥ 0`.
    pub fn solve_qp(&self) -> Result<QpSolution, OcpError> {
        let opts = QpOptions {
            kkt_tol: self.config.kkt_tol,
            max_iter: self.config.max_iter,
        };
        let it = solve_bounded_qp(self, &opts)?;
        let (y, _) = self.model.solve_state(&it.x)?;
        let solution = QpSolution {
            objective: self.objective_from_state(&it.x, &y),
            lambda: it.x,
            state: y,
            kkt_residual: it.kkt_residual,
            iterations: it.iterations,
        };
        if it.converged {
            Ok(solution)
        } else {
            Err(OcpError::IterationCap(Box::new(solution)))
        }
    }

    /// Cell averages and negative part of `u_h = Σ λ_i φ_i`.
    pub fn feasibility_audit(&self, lambda: &[f64]) -> Result<FeasibilityAudit, OcpError> {
        self.check_len(lambda)?;
        let control = self.model.control();
        let mesh = control.mesh();
        let m = control.local_count();
        let inv_ref_volume = 1.0 / reference_volume(mesh.dim()).to_f64().unwrap();
        let rule = self.model.control_rule();
        let tab = control.tabulate(rule);
        let mut cell_averages = Vec::with_capacity(mesh.cell_count());
        let mut neg2 = 0.0;
        for c in 0..mesh.cell_count() {
            let coeffs = &lambda[c * m..(c + 1) * m];
            cell_averages.push(inv_ref_volume * dot(coeffs, control.reference_integrals()));
            let det = mesh.cell_affine_map(c)?.det_abs();
            for (vals, w) in tab.iter().zip(rule.weights()) {
                let u = dot(coeffs, vals).min(0.0);
                neg2 += det * w * u * u;
            }
        }
        let min_cell_average = cell_averages.iter().copied().fold(f64::INFINITY, f64::min);
        let negative = cell_averages.iter().filter(|&&a| a < -FEASIBILITY_TOL).count();
        Ok(FeasibilityAudit {
            negative_cell_fraction: negative as f64 / mesh.cell_count() as f64,
            min_cell_average,
            negative_part_norm: neg2.sqrt(),
            cell_averages,
        })
    }
}

impl BoundedQuadratic for ModelProblem {
    fn dim(&self) -> usize {
        self.control_dofs()
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>), OcpError> {
        self.evaluate(x).map(|(v, g, _)| (v, g))
    }

    /// `H s = 2 Cᵀ A⁻¹ M A⁻¹ C s + 2α M_u s`.
    fn hessian_vec(&self, s: &[f64]) -> Result<Vec<f64>, OcpError> {
        self.check_len(s)?;
        let (z, _) = self.model.solve_state(s)?;
        let q = self.model.solve_operator(&self.model.state_mass().matvec(&z))?;
        let ctq = self.model.coupling().matvec_transpose(&q);
        let mus = self.model.control_mass().matvec(s);
        let alpha = self.config.alpha;
        Ok(ctq
            .iter()
            .zip(&mus)
            .map(|(a, b)| 2.0 * a + 2.0 * alpha * b)
            .collect())
    }
}

/// Builds `w_n`, `β`, `M²`, `t̂`, `δ` and checks the descent bound by a
/// direct evaluation of `J_n(t̂ w_n)`.
pub fn build_certificate(problem: &ModelProblem) -> Result<CounterexampleCertificate, OcpError> {
    let control = problem.model().control();
    let spec = control.basis();
    let integrals = basis_integrals(spec);
    let reference_negative: Vec<usize> = integrals
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_negative())
        .map(|(j, _)| j)
        .collect();
    if reference_negative.is_empty() {
        return Err(OcpError::NoNegativeBasis);
    }
    let w_hat = reference_negative
        .iter()
        .fold(ExactPolynomial::zero(spec.dim()), |acc, &j| acc.add(&spec.basis()[j]));
    let reference_integral = w_hat.integrate();
    let reference_norm2 = w_hat.mul(&w_hat).integrate();
    // |Ω| / |T̂| with |Ω| = 1 for the unit interval and square
    let scale = BigRational::one() / reference_volume(spec.dim());
    let beta_exact = -(&scale * &reference_integral);
    let m2_exact = &scale * &reference_norm2;
    debug_assert!(beta_exact > BigRational::zero());
    let beta = beta_exact.to_f64().unwrap();
    let m2 = m2_exact.to_f64().unwrap();

    let mesh = control.mesh();
    let m = control.local_count();
    let mut direction = vec![0.0; control.dof_count()];
    let mut negative_indices = Vec::with_capacity(mesh.cell_count() * reference_negative.len());
    for c in 0..mesh.cell_count() {
        for &j in &reference_negative {
            let i = c * m + j;
            direction[i] = 1.0;
            negative_indices.push(i);
        }
    }
    let beta_measured = -problem.model().control_integral(&direction);
    let m2_measured = problem.model().control_mass().quadratic_form(&direction);
    let (z, _) = problem.model().solve_state(&direction)?;
    let l_n = problem.model().state_l2_norm(&z);

    let alpha = problem.config().alpha;
    let t_hat = beta / ((1.0 + alpha) * m2);
    let delta = beta * t_hat;
    let scaled: Vec<f64> = direction.iter().map(|v| v * t_hat).collect();
    let measured_objective = problem.objective(&scaled)?;
    Ok(CounterexampleCertificate {
        reference_negative,
        negative_indices,
        direction,
        reference_integral,
        reference_norm2,
        beta,
        m2,
        beta_measured,
        m2_measured,
        l_n,
        t_hat,
        delta,
        bound: problem.measure() - delta,
        measured_objective,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Regime {
    #[serde(rename = "FEASIBLE_LIMIT")]
    FeasibleLimit,
    #[serde(rename = "INFEASIBLE_LIMIT")]
    InfeasibleLimit,
    /// The runs match neither fingerprint.
    #[serde(rename = "INCONCLUSIVE")]
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyConfig {
    pub dim: usize,
    pub degree: u32,
    #[serde(serialize_with = "fixed17")]
    pub alpha: f64,
    pub meshes: Vec<usize>,
    #[serde(serialize_with = "fixed17")]
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertificateSummary {
    #[serde(serialize_with = "fixed17")]
    pub beta: f64,
    #[serde(rename = "M2", serialize_with = "fixed17")]
    pub m2: f64,
    #[serde(serialize_with = "fixed17")]
    pub t_hat: f64,
    #[serde(serialize_with = "fixed17")]
    pub delta: f64,
}

impl From<&CounterexampleCertificate> for CertificateSummary {
    fn from(c: &CounterexampleCertificate) -> Self {
        CertificateSummary {
            beta: c.beta,
            m2: c.m2,
            t_hat: c.t_hat,
            delta: c.delta,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyRun {
    pub n: usize,
    #[serde(rename = "J", serialize_with = "fixed17")]
    pub objective: f64,
    #[serde(serialize_with = "fixed17")]
    pub min_cell_avg: f64,
    #[serde(serialize_with = "fixed17")]
    pub neg_part_norm: f64,
    pub iters: usize,
    #[serde(serialize_with = "fixed17")]
    pub kkt_residual: f64,
    /// `|Ω| − δ` when a certificate exists.
    #[serde(serialize_with = "fixed17_opt")]
    pub bound: Option<f64>,
    /// `J_n(t̂ w_n)` when a certificate exists.
    #[serde(serialize_with = "fixed17_opt")]
    pub certificate_objective: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub regime: Regime,
    pub certificate: Option<CertificateSummary>,
    pub runs: Vec<StudyRun>,
}

impl StudyReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn study_run(config: OcpConfig) -> Result<(StudyRun, Option<CounterexampleCertificate>), OcpError> {
    let n = config.n;
    let problem = ModelProblem::new(config)?;
    let certificate = match build_certificate(&problem) {
        Ok(c) => Some(c),
        Err(OcpError::NoNegativeBasis) => None,
        Err(e) => return Err(e),
    };
    let solution = problem.solve_qp()?;
    let audit = problem.feasibility_audit(&solution.lambda)?;
    Ok((
        StudyRun {
            n,
            objective: solution.objective,
            min_cell_avg: audit.min_cell_average,
            neg_part_norm: audit.negative_part_norm,
            iters: solution.iterations,
            kkt_residual: solution.kkt_residual,
            bound: certificate.as_ref().map(|c| c.bound),
            certificate_objective: certificate.as_ref().map(|c| c.measured_objective),
        },
        certificate,
    ))
}

/// Solves the problem on each mesh (in parallel) and classifies the
/// sequence of discrete optima.
///
/// `FEASIBLE_LIMIT`: no certificate exists, every `J_n = |Ω|` within
/// `1e−8`, and no cell average is below `−1e−12`.
/// `INFEASIBLE_LIMIT`: a certificate exists, every `J_n ≤ |Ω| − δ + 1e−8`,
/// and every run has a negative cell average.
pub fn convergence_study(base: &OcpConfig, meshes: &[usize]) -> Result<StudyReport, OcpError> {
    if meshes.len() < 2 {
        return Err(OcpError::InvalidConfig(
            "a convergence study needs at least two meshes".into(),
        ));
    }
    let mut sorted = meshes.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != meshes.len() {
        return Err(OcpError::InvalidConfig("mesh parameters must be distinct".into()));
    }
    for &n in &sorted {
        base.clone().with_mesh(n).validate()?;
    }
    let results = sorted
        .par_iter()
        .map(|&n| study_run(base.clone().with_mesh(n)))
        .collect::<Result<Vec<_>, _>>()?;
    let certificate = results[0].1.as_ref().map(CertificateSummary::from);
    let runs: Vec<StudyRun> = results.into_iter().map(|(r, _)| r).collect();
    let regime = match &certificate {
        Some(c) => {
            let gap = runs.iter().all(|r| r.objective <= 1.0 - c.delta + OBJECTIVE_TOL);
            let negative = runs.iter().all(|r| r.min_cell_avg < -FEASIBILITY_TOL);
            if gap && negative {
                Regime::InfeasibleLimit
            } else {
                Regime::Inconclusive
            }
        }
        None => {
            let at_measure = runs.iter().all(|r| (r.objective - 1.0).abs() <= OBJECTIVE_TOL);
            let clean = runs.iter().all(|r| r.min_cell_avg >= -FEASIBILITY_TOL);
            if at_measure && clean {
                Regime::FeasibleLimit
            } else {
                Regime::Inconclusive
            }
        }
    };
    Ok(StudyReport {
        config: StudyConfig {
            dim: base.dim,
            degree: base.degree,
            alpha: base.alpha,
            meshes: sorted,
            tol: base.cg_tol,
        },
        regime,
        certificate,
        runs,
    })
}

/// JSON form of a certificate for reports.
#[derive(Serialize)]
pub struct CertificateReport<'a> {
    pub dim: usize,
    pub degree: u32,
    pub n: usize,
    #[serde(serialize_with = "fixed17")]
    pub alpha: f64,
    pub reference_negative: &'a [usize],
    pub negative_count: usize,
    #[serde(serialize_with = "ser_rational")]
    pub reference_integral: &'a BigRational,
    #[serde(serialize_with = "ser_rational")]
    pub reference_norm2: &'a BigRational,
    #[serde(serialize_with = "fixed17")]
    pub beta: f64,
    #[serde(rename = "M2", serialize_with = "fixed17")]
    pub m2: f64,
    #[serde(serialize_with = "fixed17")]
    pub beta_measured: f64,
    #[serde(rename = "M2_measured", serialize_with = "fixed17")]
    pub m2_measured: f64,
    #[serde(rename = "L_n", serialize_with = "fixed17")]
    pub l_n: f64,
    #[serde(serialize_with = "fixed17")]
    pub t_hat: f64,
    #[serde(serialize_with = "fixed17")]
    pub delta: f64,
    #[serde(serialize_with = "fixed17")]
    pub bound: f64,
    #[serde(serialize_with = "fixed17")]
    pub measured_objective: f64,
}

fn ser_rational<S: Serializer>(r: &&BigRational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format_rational(r))
}

impl CounterexampleCertificate {
    pub fn report<'a>(&'a self, config: &OcpConfig) -> CertificateReport<'a> {
        CertificateReport {
            dim: config.dim,
            degree: config.degree,
            n: config.n,
            alpha: config.alpha,
            reference_negative: &self.reference_negative,
            negative_count: self.negative_indices.len(),
            reference_integral: &self.reference_integral,
            reference_norm2: &self.reference_norm2,
            beta: self.beta,
            m2: self.m2,
            beta_measured: self.beta_measured,
            m2_measured: self.m2_measured,
            l_n: self.l_n,
            t_hat: self.t_hat,
            delta: self.delta,
            bound: self.bound,
            measured_objective: self.measured_objective,
        }
    }
}
