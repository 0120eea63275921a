//! Exact Lagrange bases on the reference simplex.
//!
//! The reference simplex is `{x >= 0, x_1 + ... + x_d <= 1}` for `d` in 1..=3.
//! Nodes are the equispaced lattice points `alpha / k` with `|alpha| <= k`, and
//! every basis polynomial is stored in the monomial basis with
//! arbitrary-precision rational coefficients. All sign decisions made here
//! (in particular the sign of `∫ psi_j`) are exact.
//!
//! Ordering of multi-indices (nodes and monomials alike) is graded: by total
//! order ascending, and within one order lexicographically *descending*, so
//! that for `d = 2` the order-one indices come as `(1,0), (0,1)`.

use std::collections::BTreeMap;
use std::fmt;

use num::bigint::Sign;
use num::{BigInt, BigRational, Integer, One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};
use thiserror::Error;

/// Largest supported degree for `d = 1, 2, 3`.
pub const MAX_DEGREE: [u32; 3] = [16, 10, 7];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BasisError {
    #[error("unsupported dimension {0} (expected 1, 2 or 3)")]
    UnsupportedDimension(usize),
    #[error("unsupported degree {degree} for dimension {dim} (supported: 1..={max})")]
    UnsupportedDegree { dim: usize, degree: u32, max: u32 },
    #[error("generalized Vandermonde matrix is singular")]
    SingularVandermonde,
}

/// Exponent vector of a monomial, or lattice coordinates of a node.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        MultiIndex(entries)
    }

    pub fn zero(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

fn check_dim(dim: usize) -> Result<(), BasisError> {
    if (1..=3).contains(&dim) {
        Ok(())
    } else {
        Err(BasisError::UnsupportedDimension(dim))
    }
}

fn check_degree(dim: usize, degree: u32) -> Result<(), BasisError> {
    check_dim(dim)?;
    let max = MAX_DEGREE[dim - 1];
    if degree == 0 || degree > max {
        return Err(BasisError::UnsupportedDegree { dim, degree, max });
    }
    Ok(())
}

/// All multi-indices of length `dim` with exactly the given order,
/// lexicographically descending.
fn indices_of_order(dim: usize, order: u32) -> Vec<MultiIndex> {
    if dim == 1 {
        return vec![MultiIndex(vec![order])];
    }
    let mut out = Vec::new();
    for first in (0..=order).rev() {
        for rest in indices_of_order(dim - 1, order - first) {
            let mut e = Vec::with_capacity(dim);
            e.push(first);
            e.extend_from_slice(&rest.0);
            out.push(MultiIndex(e));
        }
    }
    out
}

/// All multi-indices with `|alpha| <= max_order` in graded order.
pub fn graded_indices(dim: usize, max_order: u32) -> Vec<MultiIndex> {
    (0..=max_order)
        .flat_map(|o| indices_of_order(dim, o))
        .collect()
}

/// `C(n, r)` for small arguments.
pub fn binomial(n: u64, r: u64) -> u64 {
    let r = r.min(n - r);
    (0..r).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

fn factorial(n: u32) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, i| acc * BigInt::from(i))
}

/// Volume `1/d!` of the reference simplex.
pub fn reference_volume(dim: usize) -> BigRational {
    BigRational::new(BigInt::one(), factorial(dim as u32))
}

/// Equispaced lattice nodes `alpha/k`, `|alpha| <= k`, in graded order.
pub fn lattice_nodes(dim: usize, degree: u32) -> Result<Vec<Vec<BigRational>>, BasisError> {
    check_dim(dim)?;
    if degree == 0 {
        return Err(BasisError::UnsupportedDegree {
            dim,
            degree,
            max: MAX_DEGREE[dim - 1],
        });
    }
    let k = BigInt::from(degree);
    Ok(graded_indices(dim, degree)
        .into_iter()
        .map(|a| {
            a.0.iter()
                .map(|&e| BigRational::new(BigInt::from(e), k.clone()))
                .collect()
        })
        .collect())
}

/// `∫_T̂ x^alpha = (prod alpha_i!) / (|alpha| + d)!`.
pub fn monomial_integral(alpha: &MultiIndex) -> BigRational {
    let num = alpha
        .0
        .iter()
        .fold(BigInt::one(), |acc, &a| acc * factorial(a));
    let den = factorial(alpha.order() + alpha.dim() as u32);
    BigRational::new(num, den)
}

/// Multivariate polynomial with exact rational coefficients.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExactPolynomial {
    dim: usize,
    terms: BTreeMap<MultiIndex, BigRational>,
}

impl ExactPolynomial {
    pub fn zero(dim: usize) -> Self {
        ExactPolynomial {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, value: BigRational) -> Self {
        let mut p = Self::zero(dim);
        p.add_term(MultiIndex::zero(dim), value);
        p
    }

    /// Builds a polynomial from `(exponent, coefficient)` pairs; repeated
    /// exponents are summed.
    ///
    /// Panics if an exponent has the wrong length.
    pub fn from_terms<I>(dim: usize, terms: I) -> Self
    where
        I: IntoIterator<Item = (MultiIndex, BigRational)>,
    {
        let mut p = Self::zero(dim);
        for (a, c) in terms {
            p.add_term(a, c);
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &BigRational)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, alpha: &MultiIndex) -> BigRational {
        self.terms.get(alpha).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(MultiIndex::order).max()
    }

    fn add_term(&mut self, alpha: MultiIndex, c: BigRational) {
        assert_eq!(alpha.dim(), self.dim, "exponent length mismatch");
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(alpha.clone()).or_insert_with(BigRational::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&alpha);
        }
    }

    pub fn add(&self, other: &ExactPolynomial) -> ExactPolynomial {
        let mut out = self.clone();
        for (a, c) in &other.terms {
            out.add_term(a.clone(), c.clone());
        }
        out
    }

    pub fn scale(&self, factor: &BigRational) -> ExactPolynomial {
        if factor.is_zero() {
            return Self::zero(self.dim);
        }
        ExactPolynomial {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|(a, c)| (a.clone(), c * factor))
                .collect(),
        }
    }

    pub fn mul(&self, other: &ExactPolynomial) -> ExactPolynomial {
        let mut out = Self::zero(self.dim);
        for (a, c) in &self.terms {
            for (b, e) in &other.terms {
                out.add_term(a.add(b), c * e);
            }
        }
        out
    }

    pub fn eval(&self, point: &[BigRational]) -> BigRational {
        assert_eq!(point.len(), self.dim);
        self.terms
            .iter()
            .map(|(a, c)| {
                a.0.iter()
                    .zip(point)
                    .fold(c.clone(), |acc, (&e, x)| acc * num::pow(x.clone(), e as usize))
            })
            .fold(BigRational::zero(), |acc, v| acc + v)
    }

    /// Exact integral over the reference simplex.
    pub fn integrate(&self) -> BigRational {
        self.terms
            .iter()
            .map(|(a, c)| c * monomial_integral(a))
            .fold(BigRational::zero(), |acc, v| acc + v)
    }

    /// Evaluation at a floating-point point, computed exactly at the dyadic
    /// value of the coordinates and rounded once.
    pub fn eval_f64(&self, point: &[f64]) -> f64 {
        let degree = self.degree().unwrap_or(0);
        let powers = DyadicPowers::new(point, degree);
        CompiledPolynomial::new(self).eval(&powers)
    }
}

/// Integer powers of the exact dyadic values of a floating-point point.
struct DyadicPowers {
    /// `pows[i][p] = (mantissa_i^p, p * exponent_i)`.
    pows: Vec<Vec<(BigInt, i64)>>,
}

impl DyadicPowers {
    fn new(point: &[f64], degree: u32) -> Self {
        let pows = point
            .iter()
            .map(|&x| {
                assert!(x.is_finite(), "non-finite evaluation point");
                let (mant, exp, sign) = num::Float::integer_decode(x);
                let m = if sign < 0 {
                    -BigInt::from(mant)
                } else {
                    BigInt::from(mant)
                };
                let mut row = Vec::with_capacity(degree as usize + 1);
                let mut acc = BigInt::one();
                for p in 0..=degree as i64 {
                    row.push((acc.clone(), p * exp as i64));
                    acc *= &m;
                }
                row
            })
            .collect();
        DyadicPowers { pows }
    }
}

/// A polynomial with coefficients over a common integer denominator.
struct CompiledPolynomial {
    denominator: BigInt,
    terms: Vec<(Vec<u32>, BigInt)>,
}

impl CompiledPolynomial {
    fn new(p: &ExactPolynomial) -> Self {
        let denominator = p
            .terms
            .values()
            .fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
        let terms = p
            .terms
            .iter()
            .map(|(a, c)| (a.0.clone(), c.numer() * (&denominator / c.denom())))
            .collect();
        CompiledPolynomial {
            denominator,
            terms,
        }
    }

    fn eval(&self, powers: &DyadicPowers) -> f64 {
        let mut parts: Vec<(BigInt, i64)> = Vec::with_capacity(self.terms.len());
        for (alpha, c) in &self.terms {
            let mut v = c.clone();
            let mut e = 0i64;
            for (i, &a) in alpha.iter().enumerate() {
                let (ref m, pe) = powers.pows[i][a as usize];
                v *= m;
                e += pe;
            }
            if v.sign() != Sign::NoSign {
                parts.push((v, e));
            }
        }
        let Some(min_exp) = parts.iter().map(|p| p.1).min() else {
            return 0.0;
        };
        let sum = parts
            .into_iter()
            .fold(BigInt::zero(), |acc, (v, e)| acc + (v << ((e - min_exp) as usize)));
        let value = if min_exp >= 0 {
            BigRational::new(sum << (min_exp as usize), self.denominator.clone())
        } else {
            BigRational::new(sum, self.denominator.clone() << ((-min_exp) as usize))
        };
        value.to_f64().unwrap_or(f64::NAN)
    }
}

/// Nodes and nodal basis of the degree-`k` Lagrange element on the reference
/// simplex.
#[derive(Clone, Debug)]
pub struct LagrangeBasisSpec {
    dim: usize,
    degree: u32,
    node_indices: Vec<MultiIndex>,
    nodes: Vec<Vec<BigRational>>,
    basis: Vec<ExactPolynomial>,
}

impl LagrangeBasisSpec {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Vec<BigRational>] {
        &self.nodes
    }

    /// Lattice coordinates `alpha` of node `i` (the node is `alpha / k`).
    pub fn node_index(&self, i: usize) -> &MultiIndex {
        &self.node_indices[i]
    }

    pub fn basis(&self) -> &[ExactPolynomial] {
        &self.basis
    }

    /// Dimension of the smallest face of the reference simplex containing
    /// node `i`: 0 for vertices, 1 for edge-interior nodes, and so on.
    pub fn face_dimension(&self, i: usize) -> usize {
        let a = &self.node_indices[i];
        let first = self.degree - a.order();
        let nonzero = a.0.iter().filter(|&&e| e > 0).count() + usize::from(first > 0);
        nonzero - 1
    }

    /// Values of every basis function at each point, `out[q][j]`, each value
    /// correctly rounded from its exact counterpart.
    pub fn tabulate(&self, points: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let compiled: Vec<CompiledPolynomial> =
            self.basis.iter().map(CompiledPolynomial::new).collect();
        points
            .iter()
            .map(|x| {
                assert_eq!(x.len(), self.dim);
                let powers = DyadicPowers::new(x, self.degree);
                compiled.iter().map(|p| p.eval(&powers)).collect()
            })
            .collect()
    }
}

/// Solves `V X = I` for square `V` by Gauss-Jordan elimination with partial
/// pivoting on the largest magnitude.
fn invert(mut a: Vec<Vec<BigRational>>) -> Result<Vec<Vec<BigRational>>, BasisError> {
    let n = a.len();
    let mut inv: Vec<Vec<BigRational>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        BigRational::one()
                    } else {
                        BigRational::zero()
                    }
                })
                .collect()
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .filter(|&r| !a[r][col].is_zero())
            .max_by(|&r, &s| a[r][col].abs().cmp(&a[s][col].abs()))
            .ok_or(BasisError::SingularVandermonde)?;
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col].clone();
        for v in a[col].iter_mut().skip(col) {
            *v /= &p;
        }
        for v in inv[col].iter_mut() {
            *v /= &p;
        }
        let (pa, pi) = (a[col].clone(), inv[col].clone());
        for r in 0..n {
            if r == col || a[r][col].is_zero() {
                continue;
            }
            let f = a[r][col].clone();
            for (v, pv) in a[r].iter_mut().zip(&pa).skip(col) {
                if !pv.is_zero() {
                    *v -= &f * pv;
                }
            }
            for (v, pv) in inv[r].iter_mut().zip(&pi) {
                if !pv.is_zero() {
                    *v -= &f * pv;
                }
            }
        }
    }
    Ok(inv)
}

/// Degree-`k` Lagrange basis on the `d`-dimensional reference simplex.
///
/// The generalized Vandermonde system is solved in lattice coordinates
/// `xi = k x` (integer nodes) and mapped back by `c_alpha -> c_alpha k^|alpha|`.
pub fn lagrange_basis(dim: usize, degree: u32) -> Result<LagrangeBasisSpec, BasisError> {
    check_degree(dim, degree)?;
    let node_indices = graded_indices(dim, degree);
    let monomials = node_indices.clone();
    let vandermonde: Vec<Vec<BigRational>> = node_indices
        .iter()
        .map(|node| {
            monomials
                .iter()
                .map(|m| {
                    let v = node
                        .0
                        .iter()
                        .zip(&m.0)
                        .fold(BigInt::one(), |acc, (&x, &e)| acc * num::pow(BigInt::from(x), e as usize));
                    BigRational::from_integer(v)
                })
                .collect()
        })
        .collect();
    let inv = invert(vandermonde)?;
    let k = BigInt::from(degree);
    let scale: Vec<BigRational> = monomials
        .iter()
        .map(|m| BigRational::from_integer(num::pow(k.clone(), m.order() as usize)))
        .collect();
    let basis = (0..node_indices.len())
        .map(|i| {
            ExactPolynomial::from_terms(
                dim,
                monomials
                    .iter()
                    .enumerate()
                    .map(|(r, m)| (m.clone(), &inv[r][i] * &scale[r])),
            )
        })
        .collect();
    let nodes = node_indices
        .iter()
        .map(|a| {
            a.0.iter()
                .map(|&e| BigRational::new(BigInt::from(e), k.clone()))
                .collect()
        })
        .collect();
    Ok(LagrangeBasisSpec {
        dim,
        degree,
        node_indices,
        nodes,
        basis,
    })
}

/// Exact `∫_T̂ psi_j` for every basis function.
pub fn basis_integrals(spec: &LagrangeBasisSpec) -> Vec<BigRational> {
    spec.basis.iter().map(ExactPolynomial::integrate).collect()
}

/// Sign audit of one degree.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DegreeRecord {
    pub k: u32,
    #[serde(serialize_with = "serialize_rationals")]
    pub integrals: Vec<BigRational>,
    pub all_nonnegative: bool,
    pub negative_indices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport {
    pub dimension: usize,
    pub records: Vec<DegreeRecord>,
}

impl AuditReport {
    /// Degrees whose basis integrals are all non-negative.
    pub fn nonnegative_degrees(&self) -> Vec<u32> {
        self.records
            .iter()
            .filter(|r| r.all_nonnegative)
            .map(|r| r.k)
            .collect()
    }
}

/// `p/q` form, always with an explicit denominator.
pub fn format_rational(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

fn serialize_rationals<S: Serializer>(v: &[BigRational], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for r in v {
        seq.serialize_element(&format_rational(r))?;
    }
    seq.end()
}

pub fn audit_degree(dim: usize, degree: u32) -> Result<DegreeRecord, BasisError> {
    let spec = lagrange_basis(dim, degree)?;
    let integrals = basis_integrals(&spec);
    let negative_indices: Vec<usize> = integrals
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_negative())
        .map(|(i, _)| i)
        .collect();
    Ok(DegreeRecord {
        k: degree,
        all_nonnegative: negative_indices.is_empty(),
        integrals,
        negative_indices,
    })
}

/// Audits every degree `1..=k_max`. Degrees are processed in parallel;
/// records come back in ascending `k`.
pub fn audit_degrees(dim: usize, k_max: u32) -> Result<AuditReport, BasisError> {
    check_degree(dim, k_max)?;
    let records = (1..=k_max)
        .into_par_iter()
        .map(|k| audit_degree(dim, k))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AuditReport {
        dimension: dim,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn poly1(coeffs: &[(u32, BigRational)]) -> ExactPolynomial {
        ExactPolynomial::from_terms(
            1,
            coeffs
                .iter()
                .map(|(e, c)| (MultiIndex::new(vec![*e]), c.clone())),
        )
    }

    #[test]
    fn lattice_node_examples() {
        assert_eq!(
            lattice_nodes(1, 2).unwrap(),
            vec![vec![q(0, 1)], vec![q(1, 2)], vec![q(1, 1)]]
        );
        assert_eq!(
            lattice_nodes(2, 1).unwrap(),
            vec![
                vec![q(0, 1), q(0, 1)],
                vec![q(1, 1), q(0, 1)],
                vec![q(0, 1), q(1, 1)]
            ]
        );
        assert_eq!(lattice_nodes(2, 4).unwrap().len(), 15);
        assert_eq!(
            lattice_nodes(4, 1),
            Err(BasisError::UnsupportedDimension(4))
        );
        assert!(lattice_nodes(0, 1).is_err());
    }

    #[test]
    fn lattice_nodes_are_distinct_and_inside() {
        for d in 1..=3 {
            for k in 1..=5 {
                let nodes = lattice_nodes(d, k).unwrap();
                assert_eq!(nodes.len() as u64, binomial(d as u64 + k as u64, d as u64));
                for (i, x) in nodes.iter().enumerate() {
                    assert!(x.iter().all(|c| !c.is_negative()));
                    let s = x.iter().fold(BigRational::zero(), |a, c| a + c);
                    assert!(s <= BigRational::one());
                    assert!(nodes[..i].iter().all(|y| y != x));
                }
            }
        }
    }

    #[test]
    fn monomial_integral_examples() {
        assert_eq!(monomial_integral(&MultiIndex::new(vec![0, 0])), q(1, 2));
        assert_eq!(monomial_integral(&MultiIndex::new(vec![1, 1])), q(1, 24));
        assert_eq!(monomial_integral(&MultiIndex::new(vec![3])), q(1, 4));
        assert_eq!(monomial_integral(&MultiIndex::new(vec![0, 0, 0])), q(1, 6));
    }

    #[test]
    fn one_dimensional_bases() {
        let b1 = lagrange_basis(1, 1).unwrap();
        assert_eq!(b1.basis()[0], poly1(&[(0, q(1, 1)), (1, q(-1, 1))]));
        assert_eq!(b1.basis()[1], poly1(&[(1, q(1, 1))]));

        // frozen from a hand 3x3 Vandermonde solve on {0, 1/2, 1}
        let b2 = lagrange_basis(1, 2).unwrap();
        assert_eq!(
            b2.basis()[0],
            poly1(&[(2, q(2, 1)), (1, q(-3, 1)), (0, q(1, 1))])
        );
        assert_eq!(b2.basis()[1], poly1(&[(2, q(-4, 1)), (1, q(4, 1))]));
        assert_eq!(b2.basis()[2], poly1(&[(2, q(2, 1)), (1, q(-1, 1))]));
        assert_eq!(basis_integrals(&b2), vec![q(1, 6), q(2, 3), q(1, 6)]);
    }

    #[test]
    fn barycentric_p1_on_triangle() {
        let b = lagrange_basis(2, 1).unwrap();
        let x = MultiIndex::new(vec![1, 0]);
        let y = MultiIndex::new(vec![0, 1]);
        let one = MultiIndex::zero(2);
        let expect = [
            ExactPolynomial::from_terms(
                2,
                [(one, q(1, 1)), (x.clone(), q(-1, 1)), (y.clone(), q(-1, 1))],
            ),
            ExactPolynomial::from_terms(2, [(x, q(1, 1))]),
            ExactPolynomial::from_terms(2, [(y, q(1, 1))]),
        ];
        assert_eq!(b.basis(), &expect);
    }

    #[test]
    fn delta_property_and_partition_of_unity() {
        for (d, kmax) in [(1, 11), (2, 6), (3, 4)] {
            for k in 1..=kmax {
                let b = lagrange_basis(d, k).unwrap();
                let mut sum = ExactPolynomial::zero(d);
                for (i, p) in b.basis().iter().enumerate() {
                    for (j, x) in b.nodes().iter().enumerate() {
                        let expect = if i == j {
                            BigRational::one()
                        } else {
                            BigRational::zero()
                        };
                        assert_eq!(p.eval(x), expect, "d={d} k={k} i={i} j={j}");
                    }
                    sum = sum.add(p);
                }
                assert_eq!(sum, ExactPolynomial::constant(d, BigRational::one()));
                let total = basis_integrals(&b)
                    .into_iter()
                    .fold(BigRational::zero(), |a, v| a + v);
                assert_eq!(total, reference_volume(d));
            }
        }
    }

    #[test]
    fn known_integrals_in_2d_and_3d() {
        let b = lagrange_basis(2, 2).unwrap();
        for (i, v) in basis_integrals(&b).iter().enumerate() {
            let expect = if b.face_dimension(i) == 0 { q(0, 1) } else { q(1, 6) };
            assert_eq!(v, &expect);
        }
        let b = lagrange_basis(3, 2).unwrap();
        for (i, v) in basis_integrals(&b).iter().enumerate() {
            let expect = if b.face_dimension(i) == 0 {
                q(-1, 120)
            } else {
                q(1, 30)
            };
            assert_eq!(v, &expect);
        }
    }

    #[test]
    fn face_dimensions() {
        let b = lagrange_basis(2, 3).unwrap();
        let dims: Vec<usize> = (0..b.node_count()).map(|i| b.face_dimension(i)).collect();
        assert_eq!(dims.iter().filter(|&&f| f == 0).count(), 3);
        assert_eq!(dims.iter().filter(|&&f| f == 1).count(), 6);
        assert_eq!(dims.iter().filter(|&&f| f == 2).count(), 1);
    }

    #[test]
    fn unsupported_degrees() {
        assert!(matches!(
            lagrange_basis(2, 0),
            Err(BasisError::UnsupportedDegree { .. })
        ));
        assert!(matches!(
            lagrange_basis(3, 99),
            Err(BasisError::UnsupportedDegree { max: 7, .. })
        ));
        assert!(audit_degrees(1, 17).is_err());
    }

    #[test]
    fn singular_system_is_reported() {
        let a = vec![vec![q(1, 1), q(2, 1)], vec![q(2, 1), q(4, 1)]];
        assert_eq!(invert(a), Err(BasisError::SingularVandermonde));
    }

    #[test]
    fn polynomial_arithmetic_drops_zeros() {
        let p = poly1(&[(1, q(1, 1)), (0, q(2, 1))]);
        let m = p.scale(&q(-1, 1));
        assert!(p.add(&m).is_zero());
        assert_eq!(p.mul(&p).integrate(), q(1, 3) + q(2, 1) + q(4, 1));
        assert_eq!(p.degree(), Some(1));
        assert_eq!(ExactPolynomial::zero(2).degree(), None);
    }

    #[test]
    fn float_evaluation_is_correctly_rounded() {
        let b = lagrange_basis(2, 5).unwrap();
        let pts = vec![vec![0.1, 0.3], vec![1.0 / 3.0, 0.25], vec![0.0, 0.0], vec![0.7, 0.0]];
        let tab = b.tabulate(&pts);
        for (x, row) in pts.iter().zip(&tab) {
            let exact_x: Vec<BigRational> =
                x.iter().map(|&c| BigRational::from_float(c).unwrap()).collect();
            for (p, &v) in b.basis().iter().zip(row) {
                let exact = p.eval(&exact_x).to_f64().unwrap();
                assert_eq!(v, exact);
                assert_eq!(p.eval_f64(x), exact);
            }
        }
        // partition of unity survives rounding to within a few ulps
        for row in &tab {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn audit_report_json_shape() {
        let r = audit_degrees(2, 2).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["dimension"], 2);
        assert_eq!(v["records"][1]["integrals"][0], "0/1");
        assert_eq!(v["records"][1]["integrals"][1], "1/6");
        assert_eq!(v["records"][1]["all_nonnegative"], true);
    }
}
