//! Simplicial meshes of the unit interval and the unit square.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("mesh parameter must be at least 1")]
    EmptyMesh,
    #[error("cell {cell} is degenerate (|det B| = {det})")]
    DegenerateCell { cell: usize, det: f64 },
    #[error("cell index {0} out of range")]
    NoSuchCell(usize),
}

/// A conforming simplicial mesh. Coordinates are stored flat with stride
/// `dim`, cells flat with stride `dim + 1`.
#[derive(Clone, Debug, Serialize)]
pub struct SimplexMesh {
    dim: usize,
    coords: Vec<f64>,
    cells: Vec<usize>,
    h: f64,
}

impl SimplexMesh {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertex_count(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len() / (self.dim + 1)
    }

    pub fn vertex(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let s = self.dim + 1;
        &self.cells[c * s..(c + 1) * s]
    }

    /// Maximum cell diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn cell_diameter(&self, c: usize) -> f64 {
        let v = self.cell(c);
        let mut diam: f64 = 0.0;
        for (i, &a) in v.iter().enumerate() {
            for &b in &v[i + 1..] {
                let d2: f64 = self
                    .vertex(a)
                    .iter()
                    .zip(self.vertex(b))
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                diam = diam.max(d2.sqrt());
            }
        }
        diam
    }

    /// Volume of cell `c`.
    pub fn cell_volume(&self, c: usize) -> Result<f64, MeshError> {
        Ok(self.cell_affine_map(c)?.det_abs() / factorial(self.dim))
    }

    /// `|Ω|` as the sum of cell volumes.
    pub fn measure(&self) -> Result<f64, MeshError> {
        (0..self.cell_count()).map(|c| self.cell_volume(c)).sum()
    }

    /// Affine map `x = B xhat + b` from the reference simplex onto cell `c`,
    /// sending reference vertex `0` to the cell's first vertex and reference
    /// vertex `e_i` to its `(i+1)`-th.
    pub fn cell_affine_map(&self, c: usize) -> Result<AffineMap, MeshError> {
        if c >= self.cell_count() {
            return Err(MeshError::NoSuchCell(c));
        }
        let v = self.cell(c);
        let d = self.dim;
        let origin = DVector::from_column_slice(self.vertex(v[0]));
        let mut linear = DMatrix::zeros(d, d);
        for j in 0..d {
            let p = self.vertex(v[j + 1]);
            for i in 0..d {
                linear[(i, j)] = p[i] - origin[i];
            }
        }
        let det = linear.determinant();
        let scale = linear.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if !(det.abs() > 1e-14 * scale.powi(d as i32)) {
            return Err(MeshError::DegenerateCell { cell: c, det });
        }
        Ok(AffineMap {
            linear,
            offset: origin,
            det_abs: det.abs(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("mesh serializes")
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// `x = B xhat + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    linear: DMatrix<f64>,
    offset: DVector<f64>,
    det_abs: f64,
}

impl AffineMap {
    pub fn linear(&self) -> &DMatrix<f64> {
        &self.linear
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    /// `|det B| = d! |T|`.
    pub fn det_abs(&self) -> f64 {
        self.det_abs
    }

    pub fn apply(&self, xhat: &[f64]) -> Vec<f64> {
        (&self.linear * DVector::from_column_slice(xhat) + &self.offset)
            .iter()
            .copied()
            .collect()
    }

    /// `B^{-T}`, which maps reference gradients to physical ones.
    pub fn inverse_transpose(&self) -> DMatrix<f64> {
        self.linear
            .clone()
            .try_inverse()
            .expect("non-degenerate by construction")
            .transpose()
    }
}

/// `n` equal cells on `[0, 1]`.
pub fn unit_interval_mesh(n: usize) -> Result<SimplexMesh, MeshError> {
    if n == 0 {
        return Err(MeshError::EmptyMesh);
    }
    let coords = (0..=n).map(|i| i as f64 / n as f64).collect();
    let cells = (0..n).flat_map(|i| [i, i + 1]).collect();
    Ok(SimplexMesh {
        dim: 1,
        coords,
        cells,
        h: 1.0 / n as f64,
    })
}

/// `n x n` squares on `[0, 1]^2`, each cut along its lower-left to
/// upper-right diagonal. Vertex `(i, j)` has index `j (n + 1) + i`; square
/// `(i, j)` yields cells `2 (j n + i)` (below the diagonal) and
/// `2 (j n + i) + 1` (above), both positively oriented.
pub fn unit_square_mesh(n: usize) -> Result<SimplexMesh, MeshError> {
    if n == 0 {
        return Err(MeshError::EmptyMesh);
    }
    let nv = n + 1;
    let mut coords = Vec::with_capacity(2 * nv * nv);
    for j in 0..nv {
        for i in 0..nv {
            coords.push(i as f64 / n as f64);
            coords.push(j as f64 / n as f64);
        }
    }
    let mut cells = Vec::with_capacity(6 * n * n);
    for j in 0..n {
        for i in 0..n {
            let v00 = j * nv + i;
            let v10 = v00 + 1;
            let v01 = v00 + nv;
            let v11 = v01 + 1;
            cells.extend_from_slice(&[v00, v10, v11]);
            cells.extend_from_slice(&[v00, v11, v01]);
        }
    }
    Ok(SimplexMesh {
        dim: 2,
        coords,
        cells,
        h: std::f64::consts::SQRT_2 / n as f64,
    })
}
