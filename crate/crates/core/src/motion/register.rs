//! Intensity-based affine registration of same-grid volumes.
//!
//! The pull map `P` (reference voxel to moving voxel) is parameterized
//! about the grid centre as `P(x) = c + Rz·Ry·Rx·S·H (x - c) + t`, with `S`
//! diagonal scales and `H` upper-triangular shears. The cost is the mean
//! squared error left after the best linear intensity mapping of the moving
//! image onto the reference, which tolerates the contrast difference between
//! b=0 and diffusion-weighted volumes. Only reference voxels whose pull
//! point lies inside the moving grid take part. The cost is minimized by
//! Levenberg-Marquardt over the geometric and intensity parameters jointly,
//! coarse to fine on a smoothed pyramid.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Rotation3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::AffineTransform;
use crate::volume::{Dims, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dof {
    Rigid6,
    Affine12,
}

impl Dof {
    fn count(self) -> usize {
        match self {
            Dof::Rigid6 => 6,
            Dof::Affine12 => 12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegistrationParams {
    pub levels: usize,
    pub dof: Dof,
    pub max_iterations: usize,
    /// Convergence threshold on the largest voxel displacement of a step.
    pub tolerance: f64,
}

impl Default for RegistrationParams {
    fn default() -> Self {
        RegistrationParams { levels: 3, dof: Dof::Affine12, max_iterations: 50, tolerance: 0.01 }
    }
}

/// Pyramid levels stop before any dimension drops below this.
const MIN_LEVEL_DIM: usize = 8;

/// Fraction of reference voxels that must map inside the moving grid.
const MIN_OVERLAP: f64 = 0.5;

fn pull_map(params: &[f64], centre: [f64; 3]) -> Matrix4<f64> {
    let rot = Rotation3::from_euler_angles(params[3], params[4], params[5]).into_inner();
    let scale = Matrix3::from_diagonal(&Vector3::new(1.0 + params[6], 1.0 + params[7], 1.0 + params[8]));
    let shear = Matrix3::new(1.0, params[9], params[10], 0.0, 1.0, params[11], 0.0, 0.0, 1.0);
    let a = rot * scale * shear;
    let c = Vector3::from(centre);
    let t = Vector3::new(params[0], params[1], params[2]) + c - a * c;
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&a);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
    m
}

struct Level {
    dims: Dims,
    factor: f64,
    moving: Vec<f64>,
    reference: Vec<f64>,
}

fn smooth_and_halve(data: &[f64], dims: Dims) -> (Vec<f64>, Dims) {
    // Separable [1 2 1]/4 blur, then every second voxel.
    let mut a = data.to_vec();
    let strides = [1, dims.nx, dims.nx * dims.ny];
    let extents = [dims.nx, dims.ny, dims.nz];
    for axis in 0..3 {
        let (s, n) = (strides[axis], extents[axis]);
        let src = a.clone();
        for (i, out) in a.iter_mut().enumerate() {
            let pos = i / s % n;
            let lo = if pos > 0 { i - s } else { i };
            let hi = if pos + 1 < n { i + s } else { i };
            *out = 0.25 * src[lo] + 0.5 * src[i] + 0.25 * src[hi];
        }
    }
    let h = Dims::new(dims.nx.div_ceil(2), dims.ny.div_ceil(2), dims.nz.div_ceil(2));
    let mut out = Vec::with_capacity(h.len());
    for z in 0..h.nz {
        for y in 0..h.ny {
            for x in 0..h.nx {
                out.push(a[dims.index(2 * x, 2 * y, 2 * z)]);
            }
        }
    }
    (out, h)
}

/// Trilinear value and gradient at a point inside the grid.
fn sample_with_gradient(samples: &[f64], dims: Dims, p: [f64; 3]) -> (f64, [f64; 3]) {
    let axis = |c: f64, n: usize| -> (usize, usize, f64) {
        let i0 = (c.floor() as usize).min(n - 1);
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, c - i0 as f64)
    };
    let (x0, x1, fx) = axis(p[0], dims.nx);
    let (y0, y1, fy) = axis(p[1], dims.ny);
    let (z0, z1, fz) = axis(p[2], dims.nz);
    let v = |x, y, z| samples[dims.index(x, y, z)];
    let (c000, c100, c010, c110) = (v(x0, y0, z0), v(x1, y0, z0), v(x0, y1, z0), v(x1, y1, z0));
    let (c001, c101, c011, c111) = (v(x0, y0, z1), v(x1, y0, z1), v(x0, y1, z1), v(x1, y1, z1));
    let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
    let (c00, c10) = (lerp(c000, c100, fx), lerp(c010, c110, fx));
    let (c01, c11) = (lerp(c001, c101, fx), lerp(c011, c111, fx));
    let (c0, c1) = (lerp(c00, c10, fy), lerp(c01, c11, fy));
    let value = lerp(c0, c1, fz);
    let dz = c1 - c0;
    let dy = lerp(c10 - c00, c11 - c01, fz);
    let dx = lerp(lerp(c100 - c000, c110 - c010, fy), lerp(c101 - c001, c111 - c011, fy), fz);
    (value, [dx, dy, dz])
}

/// Normal equations of one linearization: `JᵀJ`, `Jᵀr`, `Σr²` and the
/// number of overlapping voxels.
struct Normal {
    jtj: DMatrix<f64>,
    jtr: DVector<f64>,
    sse: f64,
    count: usize,
}

impl Normal {
    fn zeros(n: usize) -> Self {
        Normal { jtj: DMatrix::zeros(n, n), jtr: DVector::zeros(n), sse: 0.0, count: 0 }
    }

    fn add(mut self, o: Normal) -> Self {
        self.jtj += o.jtj;
        self.jtr += o.jtr;
        self.sse += o.sse;
        self.count += o.count;
        self
    }
}

impl Level {
    /// Pull map on this level's grid for full-resolution parameters.
    fn map(&self, params: &[f64], full_centre: [f64; 3]) -> Matrix4<f64> {
        let f = self.factor;
        let o = (f - 1.0) / 2.0;
        let mut to_full = Matrix4::identity() * f;
        to_full[(3, 3)] = 1.0;
        to_full.fixed_view_mut::<3, 1>(0, 3).fill(o);
        let mut to_level = Matrix4::identity() / f;
        to_level[(3, 3)] = 1.0;
        to_level.fixed_view_mut::<3, 1>(0, 3).fill(-o / f);
        to_level * pull_map(params, full_centre) * to_full
    }

    /// Accumulates the least-squares system for parameters `q` (the
    /// geometric ones followed by intensity gain and offset). Without
    /// `jacobian` only `sse` and `count` are filled.
    fn linearize(&self, q: &[f64], active: usize, centre: [f64; 3], jacobian: bool) -> Normal {
        let n = active + 2;
        let (gain, offset) = (q[12], q[13]);
        let m = self.map(q, centre);
        // Derivatives of the map with respect to each geometric parameter.
        let derivs: Vec<Matrix4<f64>> = if jacobian {
            (0..active)
                .map(|k| {
                    let h = 1e-6;
                    let (mut a, mut b) = (q.to_vec(), q.to_vec());
                    a[k] += h;
                    b[k] -= h;
                    (self.map(&a, centre) - self.map(&b, centre)) / (2.0 * h)
                })
                .collect()
        } else {
            Vec::new()
        };
        let d = self.dims;
        let hi = [(d.nx - 1) as f64, (d.ny - 1) as f64, (d.nz - 1) as f64];
        let parts: Vec<Normal> = (0..d.nz)
            .into_par_iter()
            .map(|z| {
                let mut acc = Normal::zeros(if jacobian { n } else { 0 });
                let mut row = vec![0.0; n];
                for y in 0..d.ny {
                    for x in 0..d.nx {
                        let (xf, yf, zf) = (x as f64, y as f64, z as f64);
                        let p = [0, 1, 2].map(|r| m[(r, 0)] * xf + m[(r, 1)] * yf + m[(r, 2)] * zf + m[(r, 3)]);
                        if (0..3).any(|k| !(p[k] >= 0.0 && p[k] <= hi[k])) {
                            continue;
                        }
                        let (v, g) = sample_with_gradient(&self.moving, d, p);
                        let r = gain * v + offset - self.reference[d.index(x, y, z)];
                        acc.sse += r * r;
                        acc.count += 1;
                        if !jacobian {
                            continue;
                        }
                        for (k, dm) in derivs.iter().enumerate() {
                            let dp =
                                [0, 1, 2].map(|r| dm[(r, 0)] * xf + dm[(r, 1)] * yf + dm[(r, 2)] * zf + dm[(r, 3)]);
                            row[k] = gain * (g[0] * dp[0] + g[1] * dp[1] + g[2] * dp[2]);
                        }
                        row[active] = v;
                        row[active + 1] = 1.0;
                        for i in 0..n {
                            acc.jtr[i] += row[i] * r;
                            for j in 0..=i {
                                acc.jtj[(i, j)] += row[i] * row[j];
                            }
                        }
                    }
                }
                acc
            })
            .collect();
        let mut total = parts.into_iter().fold(Normal::zeros(if jacobian { n } else { 0 }), Normal::add);
        for i in 0..total.jtj.nrows() {
            for j in 0..i {
                total.jtj[(j, i)] = total.jtj[(i, j)];
            }
        }
        total
    }

    fn cost(&self, q: &[f64], active: usize, centre: [f64; 3]) -> f64 {
        let l = self.linearize(q, active, centre, false);
        if (l.count as f64) < MIN_OVERLAP * self.dims.len() as f64 {
            return f64::INFINITY;
        }
        l.sse / l.count as f64
    }

    /// Closed-form intensity gain and offset for fixed geometry.
    fn fit_intensity(&self, q: &mut [f64], centre: [f64; 3]) {
        let m = self.map(q, centre);
        let d = self.dims;
        let hi = [(d.nx - 1) as f64, (d.ny - 1) as f64, (d.nz - 1) as f64];
        let (mut n, mut sm, mut sr, mut smm, mut smr) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..d.len() {
            let (x, y, z) = d.coords(i);
            let (xf, yf, zf) = (x as f64, y as f64, z as f64);
            let p = [0, 1, 2].map(|r| m[(r, 0)] * xf + m[(r, 1)] * yf + m[(r, 2)] * zf + m[(r, 3)]);
            if (0..3).any(|k| !(p[k] >= 0.0 && p[k] <= hi[k])) {
                continue;
            }
            let v = sample_with_gradient(&self.moving, d, p).0;
            let r = self.reference[i];
            n += 1.0;
            sm += v;
            sr += r;
            smm += v * v;
            smr += v * r;
        }
        if n == 0.0 {
            return;
        }
        let var = smm - sm * sm / n;
        let gain = if var > 0.0 { (smr - sm * sr / n) / var } else { 0.0 };
        q[12] = gain;
        q[13] = (sr - gain * sm) / n;
    }
}

/// Largest displacement, in voxels of this level, caused by changing the
/// geometry from `a` to `b`, measured at the grid corners.
fn displacement(level: &Level, a: &[f64], b: &[f64], centre: [f64; 3]) -> f64 {
    let (ma, mb) = (level.map(a, centre), level.map(b, centre));
    let d = level.dims;
    let mut worst = 0.0f64;
    for corner in 0..8 {
        let p = nalgebra::Vector4::new(
            if corner & 1 == 0 { 0.0 } else { (d.nx - 1) as f64 },
            if corner & 2 == 0 { 0.0 } else { (d.ny - 1) as f64 },
            if corner & 4 == 0 { 0.0 } else { (d.nz - 1) as f64 },
            1.0,
        );
        worst = worst.max(((ma - mb) * p).norm());
    }
    worst
}

fn levenberg_marquardt(level: &Level, q: &mut [f64; 14], params: &RegistrationParams, centre: [f64; 3]) {
    let active = params.dof.count();
    let mut lambda = 1e-3;
    for _ in 0..params.max_iterations {
        let lin = level.linearize(q, active, centre, true);
        if (lin.count as f64) < MIN_OVERLAP * level.dims.len() as f64 {
            return;
        }
        let current = lin.sse / lin.count as f64;
        let index = |k: usize| if k < active { k } else { 12 + (k - active) };
        let mut accepted = false;
        for _ in 0..8 {
            let mut a = lin.jtj.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += lambda * lin.jtj[(i, i)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&lin.jtr))) else {
                lambda *= 4.0;
                continue;
            };
            let mut trial = *q;
            for (k, s) in step.iter().enumerate() {
                trial[index(k)] += s;
            }
            let c = level.cost(&trial, active, centre);
            if c < current {
                let moved = displacement(level, q, &trial, centre);
                *q = trial;
                lambda = (lambda / 3.0).max(1e-9);
                accepted = true;
                if moved < params.tolerance {
                    return;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            return;
        }
    }
}

/// Transform mapping `moving` voxel coordinates to `reference` voxel
/// coordinates. Returns the identity when no improvement over it is found.
pub fn register_affine(moving: &Volume, reference: &Volume, params: &RegistrationParams) -> Result<AffineTransform> {
    if moving.dims != reference.dims {
        return Err(Error::DimensionMismatch("registration volumes differ in dims".into()));
    }
    if params.levels == 0 || params.max_iterations == 0 || !(params.tolerance > 0.0) {
        return Err(Error::Options(format!("invalid registration parameters {params:?}")));
    }
    let dims = moving.dims;
    let centre = [(dims.nx - 1) as f64 / 2.0, (dims.ny - 1) as f64 / 2.0, (dims.nz - 1) as f64 / 2.0];

    let mut levels = vec![Level {
        dims,
        factor: 1.0,
        moving: moving.samples.iter().map(|&v| v as f64).collect(),
        reference: reference.samples.iter().map(|&v| v as f64).collect(),
    }];
    while levels.len() < params.levels {
        let last = levels.last().unwrap();
        if last.dims.nx.min(last.dims.ny).min(last.dims.nz) < 2 * MIN_LEVEL_DIM {
            break;
        }
        let (m, d) = smooth_and_halve(&last.moving, last.dims);
        let (r, _) = smooth_and_halve(&last.reference, last.dims);
        levels.push(Level { dims: d, factor: last.factor * 2.0, moving: m, reference: r });
    }

    let active = params.dof.count();
    let mut q = [0.0f64; 14];
    for level in levels.iter().rev() {
        level.fit_intensity(&mut q, centre);
        levenberg_marquardt(level, &mut q, params, centre);
    }

    let full = &levels[0];
    let mut identity = [0.0f64; 14];
    full.fit_intensity(&mut identity, centre);
    full.fit_intensity(&mut q, centre);
    if !(full.cost(&q, active, centre) < full.cost(&identity, active, centre)) {
        return Ok(AffineTransform::identity());
    }
    AffineTransform::from_matrix(pull_map(&q, centre))?.inverse()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::quantize;

    /// Smooth blob phantom sampled at `map(x)`.
    fn phantom(d: Dims, map: impl Fn([f64; 3]) -> [f64; 3]) -> Volume {
        let c = [(d.nx - 1) as f64 / 2.0, (d.ny - 1) as f64 / 2.0, (d.nz - 1) as f64 / 2.0];
        let samples = (0..d.len())
            .map(|i| {
                let (x, y, z) = d.coords(i);
                let q = map([x as f64, y as f64, z as f64]);
                let e = |cx: f64, cy: f64, cz: f64, rx: f64, ry: f64, rz: f64| {
                    let (a, b, cc) = ((q[0] - cx) / rx, (q[1] - cy) / ry, (q[2] - cz) / rz);
                    (-(a * a + b * b + cc * cc)).exp()
                };
                let v = 2000.0 * e(c[0], c[1], c[2], 7.0, 5.0, 4.0)
                    + 900.0 * e(c[0] + 4.0, c[1] - 3.0, c[2] + 1.0, 2.5, 3.5, 2.0)
                    + 600.0 * e(c[0] - 5.0, c[1] + 2.0, c[2] - 2.0, 3.0, 2.0, 3.0);
                quantize(100.0 + v, 0, u16::MAX)
            })
            .collect();
        Volume::new(d, samples).unwrap()
    }

    #[test]
    fn identical_volumes_give_identity() {
        let d = Dims::new(20, 20, 16);
        let v = phantom(d, |p| p);
        let t = register_affine(&v, &v, &RegistrationParams::default()).unwrap();
        assert!(t.is_identity());
    }

    #[test]
    fn recovers_translation() {
        let d = Dims::new(24, 24, 20);
        let reference = phantom(d, |p| p);
        // Content moved by (3, -2, 1): moving(x) = reference(x - t).
        let moving = phantom(d, |p| [p[0] - 3.0, p[1] + 2.0, p[2] - 1.0]);
        let t = register_affine(&moving, &reference, &RegistrationParams::default()).unwrap();
        let o = t.apply([11.5, 11.5, 9.5]);
        let shift = [o[0] - 11.5, o[1] - 11.5, o[2] - 9.5];
        for (k, want) in [-3.0, 2.0, -1.0].iter().enumerate() {
            assert!((shift[k] - want).abs() < 0.25, "{shift:?}");
        }
    }

    #[test]
    fn recovers_rotation() {
        let d = Dims::new(24, 24, 20);
        let reference = phantom(d, |p| p);
        let a = 5f64.to_radians();
        let c = [11.5, 11.5, 9.5];
        let moving = phantom(d, |p| {
            let (x, y) = (p[0] - c[0], p[1] - c[1]);
            [c[0] + a.cos() * x + a.sin() * y, c[1] - a.sin() * x + a.cos() * y, p[2]]
        });
        let params = RegistrationParams { dof: Dof::Rigid6, ..Default::default() };
        let t = register_affine(&moving, &reference, &params).unwrap();
        let l = t.linear();
        let angle = l[(1, 0)].atan2(l[(0, 0)]);
        assert!((angle.abs() - a).abs() < 0.5f64.to_radians(), "{}", angle.to_degrees());
    }

    #[test]
    fn mismatched_dims_rejected() {
        let a = Volume::zeros(Dims::new(2, 2, 2));
        let b = Volume::zeros(Dims::new(2, 2, 3));
        assert!(register_affine(&a, &b, &RegistrationParams::default()).is_err());
    }
}
