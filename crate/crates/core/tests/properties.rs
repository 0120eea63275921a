mod common;

use std::sync::Arc;

use ctrldisc::exactbasis::{lagrange_basis, ExactPolynomial, MultiIndex};
use ctrldisc::fem::{cg_solve, DiscreteModel, SparseMatrix};
use ctrldisc::mesh::{unit_interval_mesh, unit_square_mesh};
use ctrldisc::ocp::{solve_bounded_qp, DenseQuadratic, QpOptions};
use nalgebra::{DMatrix, DVector};
use num::{BigRational, One, Zero};
use proptest::prelude::*;

use common::{enumerate_qp, q};

fn rational() -> impl Strategy<Value = BigRational> {
    (-20i64..=20, 1i64..=9).prop_map(|(n, d)| q(n, d))
}

fn polynomial(dim: usize) -> impl Strategy<Value = ExactPolynomial> {
    prop::collection::vec((prop::collection::vec(0u32..4, dim), rational()), 0..6).prop_map(
        move |terms| {
            ExactPolynomial::from_terms(
                dim,
                terms.into_iter().map(|(e, c)| (MultiIndex::new(e), c)),
            )
        },
    )
}

fn point(dim: usize) -> impl Strategy<Value = Vec<BigRational>> {
    prop::collection::vec(rational(), dim)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lagrange_basis_is_nodal(dim in 1usize..=3, k in 1u32..=4) {
        let spec = lagrange_basis(dim, k).unwrap();
        for (j, p) in spec.basis().iter().enumerate() {
            for (i, x) in spec.nodes().iter().enumerate() {
                let want = if i == j { BigRational::one() } else { BigRational::zero() };
                prop_assert_eq!(p.eval(x), want);
            }
        }
    }

    #[test]
    fn lagrange_basis_is_a_partition_of_unity(dim in 1usize..=3, k in 1u32..=5, x in point(3)) {
        let spec = lagrange_basis(dim, k).unwrap();
        let sum = spec
            .basis()
            .iter()
            .fold(BigRational::zero(), |a, p| a + p.eval(&x[..dim]));
        prop_assert_eq!(sum, BigRational::one());
    }

    #[test]
    fn polynomial_ring_laws(a in polynomial(2), b in polynomial(2), c in polynomial(2), x in point(2)) {
        prop_assert_eq!(a.mul(&b), b.mul(&a));
        prop_assert_eq!(a.add(&b).mul(&c), a.mul(&c).add(&b.mul(&c)));
        prop_assert_eq!(a.mul(&b).eval(&x), a.eval(&x) * b.eval(&x));
        prop_assert_eq!(a.add(&b).integrate(), a.integrate() + b.integrate());
        prop_assert!(a.add(&a.scale(&q(-1, 1))).is_zero());
    }

    #[test]
    fn float_evaluation_is_correctly_rounded(a in polynomial(2), u in 0.0f64..1.0, v in 0.0f64..1.0) {
        use num::{FromPrimitive, ToPrimitive};
        let exact = a.eval(&[
            BigRational::from_f64(u).unwrap(),
            BigRational::from_f64(v).unwrap(),
        ]);
        prop_assert_eq!(a.eval_f64(&[u, v]), exact.to_f64().unwrap());
    }

    #[test]
    fn bounded_qp_matches_enumeration(
        n in 1usize..=8,
        seed in prop::collection::vec(-1.0f64..1.0, 64 + 8),
    ) {
        let b = DMatrix::from_fn(n, n, |i, j| seed[i * 8 + j]);
        let hessian = &b * b.transpose() + DMatrix::identity(n, n) * 0.1;
        let linear = DVector::from_fn(n, |i, _| 2.0 * seed[64 + i]);
        let qp = DenseQuadratic { hessian, linear, constant: 0.0 };
        let opts = QpOptions { kkt_tol: 1e-11, max_iter: 100_000 };
        let it = solve_bounded_qp(&qp, &opts).unwrap();
        prop_assert!(it.converged);
        prop_assert!(it.x.iter().all(|&v| v >= 0.0));
        let (best, _) = enumerate_qp(&qp.hessian, &qp.linear, qp.constant);
        prop_assert!((it.value - best).abs() <= 1e-8, "{} vs {}", it.value, best);
    }

    #[test]
    fn symmetric_build_mirrors_the_upper_triangle(
        entries in prop::collection::vec((0usize..6, 0usize..6, -1.0f64..1.0), 0..30),
        x in prop::collection::vec(-1.0f64..1.0, 6),
    ) {
        let upper: Vec<(usize, usize, f64)> =
            entries.iter().map(|&(i, j, v)| (i.min(j), i.max(j), v)).collect();
        let mut full = upper.clone();
        full.extend(upper.iter().filter(|t| t.0 != t.1).map(|&(i, j, v)| (j, i, v)));
        let sym = SparseMatrix::from_upper_triplets(6, upper);
        let reference = SparseMatrix::from_triplets(6, 6, full);
        prop_assert!(sym.is_symmetric());
        prop_assert_eq!(sym.to_dense(), reference.to_dense());
        let dense = DVector::from_column_slice(&x);
        let want = sym.to_dense() * &dense;
        for (a, b) in sym.matvec(&x).iter().zip(want.iter()) {
            prop_assert!((a - b).abs() <= 1e-14);
        }
    }

    #[test]
    fn meshes_tile_the_domain(n in 1usize..=12) {
        let line = unit_interval_mesh(n).unwrap();
        let square = unit_square_mesh(n).unwrap();
        prop_assert!((line.measure().unwrap() - 1.0).abs() <= 1e-14);
        prop_assert!((square.measure().unwrap() - 1.0).abs() <= 1e-13);
        prop_assert_eq!(square.cell_count(), 2 * n * n);
        for c in 0..square.cell_count() {
            prop_assert!(square.cell_diameter(c) <= square.h() * (1.0 + 1e-15));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn state_solve_conserves_mass(
        dim in 1usize..=2,
        k in 1u32..=5,
        n in 1usize..=5,
        coeffs in prop::collection::vec(-1.0f64..1.0, 2 * 25 * 21),
    ) {
        let mesh = Arc::new(if dim == 1 { unit_interval_mesh(n) } else { unit_square_mesh(n) }.unwrap());
        let model = DiscreteModel::new(mesh, k, 1e-13).unwrap();
        let u = &coeffs[..model.control().dof_count()];
        let (y, rep) = model.solve_state(u).unwrap();
        prop_assert!(rep.converged);
        prop_assert!((model.state_integral(&y) - model.control_integral(u)).abs() <= 1e-10);
        // A is SPD: the solve agrees with a dense factorization
        let rhs = model.coupling().matvec(u);
        let dense = model.operator().to_dense().cholesky().unwrap().solve(&DVector::from_column_slice(&rhs));
        let (again, _) = cg_solve(model.operator(), &rhs, 1e-13).unwrap();
        for (a, b) in again.iter().zip(dense.iter()) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }
}
