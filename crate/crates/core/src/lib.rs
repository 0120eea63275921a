//! Exact audits of simplicial Lagrange control discretizations, and a finite
//! element reproduction of a model optimal control problem whose discrete
//! optima drift towards an infeasible limit when some reference basis
//! function has a negative integral.

pub mod cli;
pub mod exactbasis;
pub mod fem;
pub mod mesh;
pub mod quadrature;
pub mod ocp;

mod jsonfmt;
