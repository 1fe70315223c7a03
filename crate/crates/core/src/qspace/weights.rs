//! Precomputed linear prediction weights.
//!
//! The Dirichlet solve is linear in the known values, so the prediction for
//! a target channel is a fixed weighted sum of the known channels. Column
//! `j` of the weight matrix is the solve with indicator data on known
//! channel `j`. Applying the weights to a voxel is then a dot product.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::fem::{assemble_operators, solve_free_block, FemOperators, PdeKind};
use super::mesh::{build_sphere_mesh, SphereMesh};
use crate::error::{Error, Result};
use crate::volume::{Dims, Volume};

/// Fixed-point scale of the weights.
pub const WEIGHT_ONE: i64 = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    pub kind: PdeKind,
    pub known: Vec<usize>,
    pub targets: Vec<usize>,
    /// `targets.len()` rows of `known.len()` real weights.
    pub real: Vec<Vec<f64>>,
    /// The same rows at scale 2^-16, each summing to exactly 2^16.
    pub fixed: Vec<Vec<i64>>,
}

/// Rounds to the 2^-16 grid and moves the rounding surplus onto the
/// largest-magnitude entry (lowest index on ties).
pub fn quantize_row(row: &[f64]) -> Vec<i64> {
    let mut q: Vec<i64> = row.iter().map(|&w| (w * WEIGHT_ONE as f64).round() as i64).collect();
    let surplus = WEIGHT_ONE - q.iter().sum::<i64>();
    if let Some(k) = (0..q.len()).fold(None, |best: Option<usize>, i| match best {
        Some(b) if q[b].abs() >= q[i].abs() => Some(b),
        _ => Some(i),
    }) {
        q[k] += surplus;
    }
    q
}

/// Weights from an already assembled mesh. Channels that are neither known
/// nor targets are free but unpredicted.
pub fn weights_on_mesh(
    mesh: &SphereMesh,
    ops: &FemOperators,
    known: &[usize],
    targets: &[usize],
    kind: PdeKind,
) -> Result<WeightMatrix> {
    let channels = mesh.channel_count();
    if known.is_empty() {
        return Err(Error::Singular("no known channels".into()));
    }
    let mut is_known = vec![false; channels];
    for &c in known {
        if c >= channels || is_known[c] {
            return Err(Error::Options(format!("known channel {c} invalid or repeated")));
        }
        is_known[c] = true;
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= channels || is_known[t]) {
        return Err(Error::Options(format!("target channel {t} invalid or known")));
    }

    let vertex_known: Vec<bool> = (0..2 * channels).map(|v| is_known[v / 2]).collect();
    // Indicator data: known vertex rows (ascending) against known channel columns.
    let known_vertices: Vec<usize> = (0..2 * channels).filter(|&v| vertex_known[v]).collect();
    let column: Vec<usize> = {
        let mut col = vec![0; channels];
        for (j, &c) in known.iter().enumerate() {
            col[c] = j;
        }
        col
    };
    let mut b = DMatrix::zeros(known_vertices.len(), known.len());
    for (r, &v) in known_vertices.iter().enumerate() {
        b[(r, column[v / 2])] = 1.0;
    }
    let (free, x) = solve_free_block(&ops.system(kind), &vertex_known, &b)?;
    let mut row_of = vec![usize::MAX; 2 * channels];
    for (r, &v) in free.iter().enumerate() {
        row_of[v] = r;
    }

    let real: Vec<Vec<f64>> = targets
        .iter()
        .map(|&t| {
            let (r0, r1) = (row_of[2 * t], row_of[2 * t + 1]);
            (0..known.len()).map(|j| 0.5 * (x[(r0, j)] + x[(r1, j)])).collect()
        })
        .collect();
    let fixed = real.iter().map(|r| quantize_row(r)).collect();
    Ok(WeightMatrix { kind, known: known.to_vec(), targets: targets.to_vec(), real, fixed })
}

/// Builds the mesh over `directions`, assembles it, and computes weights.
pub fn compute_weights(
    directions: &[[f64; 3]],
    known: &[usize],
    targets: &[usize],
    kind: PdeKind,
) -> Result<WeightMatrix> {
    let mesh = build_sphere_mesh(directions)?;
    let ops = assemble_operators(&mesh)?;
    weights_on_mesh(&mesh, &ops, known, targets, kind)
}

/// Fixed-point dot product of one weight row with the known volumes,
/// rounded half away from zero and clamped to the 16-bit range.
pub fn predict_volume(known: &[&Volume], row: &[i64]) -> Result<Volume> {
    if known.len() != row.len() {
        return Err(Error::DimensionMismatch(format!("{} weights for {} volumes", row.len(), known.len())));
    }
    let dims: Dims =
        known.first().map(|v| v.dims).ok_or_else(|| Error::DimensionMismatch("no known volumes".into()))?;
    if known.iter().any(|v| v.dims != dims) {
        return Err(Error::DimensionMismatch("known volumes differ in dims".into()));
    }
    const CHUNK: usize = 4096;
    let mut out = vec![0u16; dims.len()];
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        let base = c * CHUNK;
        // Integer sums are exact, so accumulating volume by volume matches
        // any other summation order.
        let mut acc = vec![0i64; chunk.len()];
        for (v, &w) in known.iter().zip(row) {
            for (a, &s) in acc.iter_mut().zip(&v.samples[base..base + chunk.len()]) {
                *a += w * s as i64;
            }
        }
        for (o, &a) in chunk.iter_mut().zip(&acc) {
            *o = fixed_to_sample(a);
        }
    });
    Volume::new(dims, out)
}

/// `acc / 2^16` rounded half away from zero, clamped to `0..=65535`.
pub fn fixed_to_sample(acc: i64) -> u16 {
    if acc <= 0 {
        0
    } else {
        ((acc + WEIGHT_ONE / 2) >> 16).min(u16::MAX as i64) as u16
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qspace::fem::solve_dirichlet;
    use crate::qspace::testutil::fibonacci_directions;

    #[test]
    fn octahedron_half_half() {
        let axes = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let w = compute_weights(&axes, &[0, 1], &[2], PdeKind::Lh).unwrap();
        assert!((w.real[0][0] - 0.5).abs() < 1e-12 && (w.real[0][1] - 0.5).abs() < 1e-12);
        assert_eq!(w.fixed[0], vec![32768, 32768]);
    }

    #[test]
    fn rows_sum_to_one() {
        let dirs = fibonacci_directions(21);
        for kind in [PdeKind::Lh, PdeKind::Bh] {
            let w = compute_weights(&dirs, &[0, 3, 5, 9, 11, 20], &[1, 2, 19], kind).unwrap();
            for (r, f) in w.real.iter().zip(&w.fixed) {
                assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                assert_eq!(f.iter().sum::<i64>(), WEIGHT_ONE);
            }
        }
    }

    #[test]
    fn superposition_matches_direct_solve() {
        let dirs = fibonacci_directions(16);
        let mesh = build_sphere_mesh(&dirs).unwrap();
        let ops = assemble_operators(&mesh).unwrap();
        let known = [2usize, 7, 0, 12, 9];
        let data = [100.0, 950.0, 20.0, 333.0, 707.0];
        for kind in [PdeKind::Lh, PdeKind::Bh] {
            let w = weights_on_mesh(&mesh, &ops, &known, &[4, 15], kind).unwrap();
            let pairs: Vec<(usize, f64)> =
                known.iter().zip(&data).flat_map(|(&c, &x)| [(2 * c, x), (2 * c + 1, x)]).collect();
            let u = solve_dirichlet(&ops, kind, &pairs).unwrap();
            for (row, &t) in w.real.iter().zip(&w.targets) {
                let via_w: f64 = row.iter().zip(&data).map(|(a, b)| a * b).sum();
                let direct = 0.5 * (u[2 * t] + u[2 * t + 1]);
                assert!((via_w - direct).abs() < 1e-6 * 930.0);
            }
        }
    }

    #[test]
    fn quantize_row_renormalizes() {
        let q = quantize_row(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(q.iter().sum::<i64>(), WEIGHT_ONE);
        assert_eq!(q, vec![21846, 21845, 21845]);
        let q = quantize_row(&[-0.2, 1.3, -0.1]);
        assert_eq!(q.iter().sum::<i64>(), WEIGHT_ONE);
    }

    #[test]
    fn prediction_rounding() {
        let d = Dims::new(1, 1, 1);
        let a = Volume::new(d, vec![10]).unwrap();
        let b = Volume::new(d, vec![11]).unwrap();
        assert_eq!(predict_volume(&[&a, &b], &[32768, 32768]).unwrap().samples, vec![11]);
        assert_eq!(predict_volume(&[&a, &b], &[-65536, 131072]).unwrap().samples, vec![12]);
        assert_eq!(predict_volume(&[&a, &b], &[131072, -65536]).unwrap().samples, vec![9]);
        let hi = Volume::new(d, vec![65535]).unwrap();
        let lo = Volume::new(d, vec![0]).unwrap();
        assert_eq!(predict_volume(&[&hi, &lo], &[131072, -65536]).unwrap().samples, vec![65535]);
        assert_eq!(predict_volume(&[&hi, &lo], &[-65536, 131072]).unwrap().samples, vec![0]);
        assert!(predict_volume(&[&a], &[1, 2]).is_err());
    }

    #[test]
    fn constant_volumes_predicted_exactly() {
        let dirs = fibonacci_directions(9);
        let w = compute_weights(&dirs, &[0, 2, 4, 6], &[8], PdeKind::Bh).unwrap();
        let d = Dims::new(3, 2, 2);
        let v = Volume::new(d, vec![4321; d.len()]).unwrap();
        let refs = vec![&v; 4];
        assert_eq!(predict_volume(&refs, &w.fixed[0]).unwrap(), v);
    }
}
