//! Independent oracles shared by the integration tests. None of them goes
//! through the library's basis construction or QP solver.

#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num::{BigInt, BigRational, One, Signed, Zero};

pub fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn factorial(n: u32) -> BigInt {
    (1..=n).fold(BigInt::one(), |a, i| a * BigInt::from(i))
}

/// Solves a square rational system by plain Gaussian elimination
/// (first non-zero pivot, back substitution).
pub fn solve_rational(mut a: Vec<Vec<BigRational>>, mut b: Vec<BigRational>) -> Vec<BigRational> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).find(|&r| !a[r][c].is_zero()).expect("singular");
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            if a[r][c].is_zero() {
                continue;
            }
            let f = &a[r][c] / &a[c][c];
            for j in c..n {
                let v = &f * &a[c][j];
                a[r][j] -= v;
            }
            let v = &f * &b[c];
            b[r] -= v;
        }
    }
    let mut x = vec![BigRational::zero(); n];
    for r in (0..n).rev() {
        let mut s = b[r].clone();
        for j in r + 1..n {
            s -= &a[r][j] * &x[j];
        }
        x[r] = s / &a[r][r];
    }
    x
}

/// Closed Newton-Cotes weights on `[0, 1]` with nodes `j/k`, from the moment
/// conditions `Σ_j w_j (j/k)^p = 1/(p+1)`, `p = 0..k`.
pub fn newton_cotes_weights(k: u32) -> Vec<BigRational> {
    let n = k as usize + 1;
    let nodes: Vec<BigRational> = (0..=k as i64).map(|j| q(j, k as i64)).collect();
    let a = (0..n)
        .map(|p| nodes.iter().map(|x| num::pow(x.clone(), p)).collect())
        .collect();
    let b = (0..n).map(|p| q(1, p as i64 + 1)).collect();
    solve_rational(a, b)
}

/// A polynomial in the `d + 1` barycentric coordinates.
type BaryPoly = BTreeMap<Vec<u32>, BigRational>;

fn bary_mul(a: &BaryPoly, b: &BaryPoly) -> BaryPoly {
    let mut out = BaryPoly::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            let e: Vec<u32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
            *out.entry(e).or_insert_with(BigRational::zero) += ca * cb;
        }
    }
    out.retain(|_, v| !v.is_zero());
    out
}

/// `∫_T̂ λ^a = (Π a_i!) / (|a| + d)!` on the unit simplex.
pub fn barycentric_moment(a: &[u32]) -> BigRational {
    let d = a.len() as u32 - 1;
    let num = a.iter().fold(BigInt::one(), |acc, &e| acc * factorial(e));
    BigRational::new(num, factorial(a.iter().sum::<u32>() + d))
}

/// `∫_T̂ ψ_β` for the Lagrange function of barycentric lattice index `β`
/// (`|β| = k`), `ψ_β = Π_i Π_{l < β_i} (k λ_i − l)/(l + 1)`.
pub fn barycentric_basis_integral(beta: &[u32]) -> BigRational {
    let k: u32 = beta.iter().sum();
    let len = beta.len();
    let mut p = BaryPoly::new();
    p.insert(vec![0; len], BigRational::one());
    for (i, &b) in beta.iter().enumerate() {
        for l in 0..b {
            let mut factor = BaryPoly::new();
            let mut e = vec![0; len];
            e[i] = 1;
            factor.insert(e, q(k as i64, l as i64 + 1));
            if l > 0 {
                factor.insert(vec![0; len], q(-(l as i64), l as i64 + 1));
            }
            p = bary_mul(&p, &factor);
        }
    }
    p.iter()
        .map(|(e, c)| c * barycentric_moment(e))
        .fold(BigRational::zero(), |a, v| a + v)
}

pub fn is_nonnegative(v: &BigRational) -> bool {
    !v.is_negative()
}

/// Global minimum of `c + gᵀx + xᵀHx/2` over `x ≥ 0` by enumerating every
/// free set and keeping the best feasible stationary point.
pub fn enumerate_qp(h: &DMatrix<f64>, g: &DVector<f64>, constant: f64) -> (f64, Vec<f64>) {
    let n = g.len();
    assert!(n <= 16);
    let value = |x: &[f64]| {
        let xv = DVector::from_column_slice(x);
        constant + g.dot(&xv) + 0.5 * xv.dot(&(h * &xv))
    };
    let mut best = (value(&vec![0.0; n]), vec![0.0; n]);
    for mask in 1u32..(1 << n) {
        let free: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let hf = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
        let rhs = DVector::from_fn(free.len(), |a, _| -g[free[a]]);
        let Some(sol) = hf.lu().solve(&rhs) else { continue };
        if sol.iter().any(|&v| v < 0.0) {
            continue;
        }
        let mut x = vec![0.0; n];
        for (a, &i) in free.iter().enumerate() {
            x[i] = sol[a];
        }
        let v = value(&x);
        if v < best.0 {
            best = (v, x);
        }
    }
    best
}
