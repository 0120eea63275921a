//! Quadrature on the reference interval and triangle.
//!
//! Every rule is checked against the exact monomial moments when it is built;
//! a rule that misses its advertised exactness is an error, never a silent
//! loss of accuracy.

use num::ToPrimitive;
use thiserror::Error;

use crate::exactbasis::{graded_indices, monomial_integral};

/// Relative error allowed on any monomial within the advertised exactness.
pub const EXACTNESS_TOLERANCE: f64 = 1e-13;

/// Largest exactness offered in each dimension.
pub const MAX_EXACTNESS: [u32; 2] = [59, 40];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("no quadrature in dimension {0}")]
    UnsupportedDimension(usize),
    #[error("exactness {exactness} unsupported in dimension {dim} (max {max})")]
    UnsupportedExactness { dim: usize, exactness: u32, max: u32 },
    #[error("rule fails its exactness check: relative error {error:e} on degree {degree}")]
    ExactnessCheckFailed { degree: u32, error: f64 },
    #[error("rule is badly conditioned: sum |w| = {0}")]
    IllConditioned(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    dim: usize,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    exactness: u32,
}

impl QuadratureRule {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn exactness(&self) -> u32 {
        self.exactness
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `∫_T̂ f`, approximately.
    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(x))
            .sum()
    }

    /// Largest relative error over all monomials of total degree at most
    /// `degree`, measured against the exact moments. Returns the error and
    /// the degree where it occurs.
    pub fn max_relative_error(&self, degree: u32) -> (f64, u32) {
        graded_indices(self.dim, degree)
            .iter()
            .map(|a| {
                let exact = monomial_integral(a).to_f64().unwrap();
                let approx = self.integrate(|x| {
                    x.iter()
                        .zip(a.entries())
                        .map(|(c, &e)| c.powi(e as i32))
                        .product()
                });
                ((approx - exact).abs() / exact.abs(), a.order())
            })
            .fold((0.0, 0), |best, e| if e.0 > best.0 { e } else { best })
    }

    fn certified(self) -> Result<Self, QuadratureError> {
        let (error, degree) = self.max_relative_error(self.exactness);
        if !(error <= EXACTNESS_TOLERANCE) {
            return Err(QuadratureError::ExactnessCheckFailed { degree, error });
        }
        let abs_sum: f64 = self.weights.iter().map(|w| w.abs()).sum();
        let volume = if self.dim == 1 { 1.0 } else { 0.5 };
        if !(abs_sum <= 10.0 * volume) {
            return Err(QuadratureError::IllConditioned(abs_sum));
        }
        Ok(self)
    }
}

/// `n`-point Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, t);
            dp = d;
            let step = p / d;
            t -= step;
            if step.abs() <= 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, t);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - t * t) * dp * dp);
        // t is the i-th largest root; mirror it
        nodes[i] = 0.5 * (1.0 - t);
        nodes[n - 1 - i] = 0.5 * (1.0 + t);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

/// `P_n(t)` and `P_n'(t)` by the three-term recurrence.
fn legendre(n: usize, t: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, t);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    (p1, n * (t * p1 - p0) / (t * t - 1.0))
}

/// A rule on the `d`-dimensional reference simplex integrating every
/// polynomial of total degree `<= exactness`.
///
/// For `d = 1` this is Gauss-Legendre. For `d = 2`, exactness 1 gives the
/// centroid rule, 2 the symmetric three-point rule, and higher orders a
/// collapsed (Duffy) tensor product of Gauss-Legendre rules, whose weights
/// are all positive.
pub fn simplex_rule(dim: usize, exactness: u32) -> Result<QuadratureRule, QuadratureError> {
    if !(1..=2).contains(&dim) {
        return Err(QuadratureError::UnsupportedDimension(dim));
    }
    let max = MAX_EXACTNESS[dim - 1];
    if exactness > max {
        return Err(QuadratureError::UnsupportedExactness {
            dim,
            exactness,
            max,
        });
    }
    let exactness = exactness.max(1);
    let rule = match (dim, exactness) {
        (1, e) => {
            let (x, w) = gauss_legendre((e as usize + 2) / 2);
            QuadratureRule {
                dim,
                points: x.into_iter().map(|p| vec![p]).collect(),
                weights: w,
                exactness: e,
            }
        }
        (2, 1) => QuadratureRule {
            dim,
            points: vec![vec![1.0 / 3.0, 1.0 / 3.0]],
            weights: vec![0.5],
            exactness: 1,
        },
        (2, 2) => QuadratureRule {
            dim,
            points: vec![
                vec![1.0 / 6.0, 1.0 / 6.0],
                vec![2.0 / 3.0, 1.0 / 6.0],
                vec![1.0 / 6.0, 2.0 / 3.0],
            ],
            weights: vec![1.0 / 6.0; 3],
            exactness: 2,
        },
        (_, e) => {
            // x = u, y = v (1 - u), dx dy = (1 - u) du dv; the extra factor
            // raises the degree in u by one.
            let (xu, wu) = gauss_legendre((e as usize + 3) / 2);
            let (xv, wv) = gauss_legendre((e as usize + 2) / 2);
            let mut points = Vec::with_capacity(xu.len() * xv.len());
            let mut weights = Vec::with_capacity(xu.len() * xv.len());
            for (u, a) in xu.iter().zip(&wu) {
                for (v, b) in xv.iter().zip(&wv) {
                    points.push(vec![*u, v * (1.0 - u)]);
                    weights.push(a * b * (1.0 - u));
                }
            }
            QuadratureRule {
                dim,
                points,
                weights,
                exactness: e,
            }
        }
    };
    rule.certified()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_and_centroid() {
        let r = simplex_rule(1, 1).unwrap();
        assert_eq!(r.points(), &[vec![0.5]]);
        assert_eq!(r.weights(), &[1.0]);
        let r = simplex_rule(2, 1).unwrap();
        assert_eq!(r.weights(), &[0.5]);
        assert_eq!(r.points()[0], vec![1.0 / 3.0, 1.0 / 3.0]);
        // exactness 0 is served by the degree-1 rule
        assert_eq!(simplex_rule(2, 0).unwrap().exactness(), 1);
    }

    #[test]
    fn x2y2_on_triangle() {
        let r = simplex_rule(2, 4).unwrap();
        let v = r.integrate(|x| x[0] * x[0] * x[1] * x[1]);
        assert!((v - 1.0 / 180.0).abs() < 1e-16);
    }

    #[test]
    fn every_rule_is_certified() {
        for d in 1..=2 {
            for e in 1..=MAX_EXACTNESS[d - 1] {
                let r = simplex_rule(d, e).unwrap();
                let (err, _) = r.max_relative_error(e);
                assert!(err <= EXACTNESS_TOLERANCE, "d={d} e={e} err={err}");
                let vol = if d == 1 { 1.0 } else { 0.5 };
                assert!((r.weights().iter().sum::<f64>() - vol).abs() < 1e-14);
                assert!(r.weights().iter().all(|w| w.is_finite()));
            }
        }
    }

    #[test]
    fn rules_are_not_exact_beyond_their_degree() {
        let r = simplex_rule(1, 3).unwrap();
        assert!(r.max_relative_error(4).0 > 1e-6);
    }

    #[test]
    fn unsupported_requests() {
        assert_eq!(
            simplex_rule(3, 2),
            Err(QuadratureError::UnsupportedDimension(3))
        );
        assert!(matches!(
            simplex_rule(2, 41),
            Err(QuadratureError::UnsupportedExactness { max: 40, .. })
        ));
    }

    #[test]
    fn gauss_points_are_interior_and_sorted() {
        for n in 1..=30 {
            let (x, w) = gauss_legendre(n);
            assert!(x.windows(2).all(|p| p[0] < p[1]));
            assert!(x.iter().all(|&p| p > 0.0 && p < 1.0));
            assert!(w.iter().all(|&v| v > 0.0));
        }
    }
}
