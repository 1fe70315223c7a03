//! Linear finite elements on the sphere mesh and the Dirichlet solves of the
//! Laplace–Beltrami (LH) and biharmonic (BH) equations.
//!
//! Meshes have at most a few hundred vertices, so operators are dense.

use nalgebra::{DMatrix, DVector};

use super::mesh::{cross, dot, norm, sub, SphereMesh};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PdeKind {
    /// `Δu = 0`
    Lh,
    /// `Δ²u = 0`
    Bh,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FemOperators {
    /// Cotangent stiffness matrix, positive semidefinite with `K·1 = 0`.
    pub stiffness: DMatrix<f64>,
    /// Lumped mass: a third of the area of the triangles around each vertex.
    pub mass: Vec<f64>,
}

impl FemOperators {
    /// `K` for LH, `K·M⁻¹·K` for BH.
    pub fn system(&self, kind: PdeKind) -> DMatrix<f64> {
        match kind {
            PdeKind::Lh => self.stiffness.clone(),
            PdeKind::Bh => {
                let k = &self.stiffness;
                let mut scaled = k.clone();
                for (r, &m) in self.mass.iter().enumerate() {
                    scaled.row_mut(r).scale_mut(1.0 / m);
                }
                let a = k * scaled;
                // Symmetrize away rounding so Cholesky sees an exactly symmetric matrix.
                (&a + a.transpose()) * 0.5
            }
        }
    }
}

pub fn assemble_operators(mesh: &SphereMesh) -> Result<FemOperators> {
    let n = mesh.vertices.len();
    let mut k = DMatrix::zeros(n, n);
    let mut mass = vec![0.0; n];
    for t in &mesh.triangles {
        let p = t.map(|i| mesh.vertices[i]);
        let area = 0.5 * norm(cross(sub(p[1], p[0]), sub(p[2], p[0])));
        if !(area > 1e-14) {
            return Err(Error::Mesh(format!("degenerate triangle {t:?}")));
        }
        for c in 0..3 {
            // Angle at corner c, opposite edge (i, j).
            let (i, j) = ((c + 1) % 3, (c + 2) % 3);
            let (a, b) = (sub(p[i], p[c]), sub(p[j], p[c]));
            let cot = dot(a, b) / norm(cross(a, b));
            let w = 0.5 * cot;
            k[(t[i], t[j])] -= w;
            k[(t[j], t[i])] -= w;
            mass[t[c]] += area / 3.0;
        }
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| k[(i, j)]).sum();
        k[(i, i)] = -off;
    }
    Ok(FemOperators { stiffness: k, mass })
}

/// Splits vertices into free and known, given a known flag per vertex.
fn partition(known: &[bool]) -> (Vec<usize>, Vec<usize>) {
    let free = (0..known.len()).filter(|&i| !known[i]).collect();
    let fixed = (0..known.len()).filter(|&i| known[i]).collect();
    (free, fixed)
}

/// Solves `A_ff X = -A_fk B` for every column of `b` (one row per known
/// vertex, in ascending vertex order). Returns one row per free vertex.
pub(crate) fn solve_free_block(
    system: &DMatrix<f64>,
    known: &[bool],
    b: &DMatrix<f64>,
) -> Result<(Vec<usize>, DMatrix<f64>)> {
    let (free, fixed) = partition(known);
    if fixed.is_empty() {
        return Err(Error::Singular("no known vertices".into()));
    }
    let a_ff = system.select_rows(&free).select_columns(&free);
    let a_fk = system.select_rows(&free).select_columns(&fixed);
    let rhs = -(a_fk * b);
    if free.is_empty() {
        return Ok((free, rhs));
    }
    let chol = a_ff.cholesky().ok_or_else(|| Error::Singular("free block is not positive definite".into()))?;
    Ok((free, chol.solve(&rhs)))
}

/// Dirichlet solve. `known` maps vertex index to value; the result holds a
/// value for every vertex, with known vertices keeping theirs exactly.
pub fn solve_dirichlet(ops: &FemOperators, kind: PdeKind, known: &[(usize, f64)]) -> Result<Vec<f64>> {
    let n = ops.mass.len();
    let mut flag = vec![false; n];
    let mut values = vec![0.0; n];
    for &(v, x) in known {
        if v >= n {
            return Err(Error::DimensionMismatch(format!("vertex {v} outside a mesh of {n}")));
        }
        flag[v] = true;
        values[v] = x;
    }
    let fixed: Vec<f64> = (0..n).filter(|&i| flag[i]).map(|i| values[i]).collect();
    let (free, x) = solve_free_block(&ops.system(kind), &flag, &DMatrix::from_column_slice(fixed.len(), 1, &fixed))?;
    for (r, &v) in free.iter().enumerate() {
        values[v] = x[(r, 0)];
    }
    Ok(values)
}

/// Residual norm check used by tests and debugging.
pub fn dirichlet_residual(ops: &FemOperators, kind: PdeKind, known: &[bool], u: &[f64]) -> f64 {
    let a = ops.system(kind);
    let r = &a * DVector::from_column_slice(u);
    (0..u.len()).filter(|&i| !known[i]).map(|i| r[i] * r[i]).sum::<f64>().sqrt()
}
