use nalgebra::Matrix3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::AffineTransform;
use crate::volume::{quantize, Dims, Volume};

/// Trilinear sample at a real-valued voxel position. Coordinates outside
/// the grid are clamped to the nearest boundary voxel.
#[inline]
pub fn sample_trilinear(samples: &[f64], dims: Dims, p: [f64; 3]) -> f64 {
    let axis = |c: f64, n: usize| -> (usize, usize, f64) {
        let c = c.clamp(0.0, (n - 1) as f64);
        let i0 = c.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, c - i0 as f64)
    };
    let (x0, x1, fx) = axis(p[0], dims.nx);
    let (y0, y1, fy) = axis(p[1], dims.ny);
    let (z0, z1, fz) = axis(p[2], dims.nz);
    let v = |x, y, z| samples[dims.index(x, y, z)];
    let c00 = v(x0, y0, z0) * (1.0 - fx) + v(x1, y0, z0) * fx;
    let c10 = v(x0, y1, z0) * (1.0 - fx) + v(x1, y1, z0) * fx;
    let c01 = v(x0, y0, z1) * (1.0 - fx) + v(x1, y0, z1) * fx;
    let c11 = v(x0, y1, z1) * (1.0 - fx) + v(x1, y1, z1) * fx;
    let c0 = c00 * (1.0 - fy) + c10 * fy;
    let c1 = c01 * (1.0 - fy) + c11 * fy;
    c0 * (1.0 - fz) + c1 * fz
}

/// Samples `source` at `pull(p)` for every voxel `p` of a grid of `dims`.
pub(crate) fn pull(source: &[f64], src_dims: Dims, dims: Dims, pull: &AffineTransform) -> Vec<f64> {
    let m = *pull.matrix();
    let mut out = vec![0.0; dims.len()];
    let nxy = dims.nx * dims.ny;
    out.par_chunks_mut(nxy).enumerate().for_each(|(z, slice)| {
        for y in 0..dims.ny {
            for x in 0..dims.nx {
                let (xf, yf, zf) = (x as f64, y as f64, z as f64);
                let p = [
                    m[(0, 0)] * xf + m[(0, 1)] * yf + m[(0, 2)] * zf + m[(0, 3)],
                    m[(1, 0)] * xf + m[(1, 1)] * yf + m[(1, 2)] * zf + m[(1, 3)],
                    m[(2, 0)] * xf + m[(2, 1)] * yf + m[(2, 2)] * zf + m[(2, 3)],
                ];
                slice[x + dims.nx * y] = sample_trilinear(source, src_dims, p);
            }
        }
    });
    out
}

/// Moves `volume` into the space `transform` maps it to: each output voxel
/// `p` takes the interpolated input at `transform⁻¹(p)`.
pub fn resample(volume: &Volume, transform: &AffineTransform) -> Result<Vec<f64>> {
    let src: Vec<f64> = volume.samples.iter().map(|&v| v as f64).collect();
    if transform.is_identity() {
        return Ok(src);
    }
    let inv = transform.inverse()?;
    Ok(pull(&src, volume.dims, volume.dims, &inv))
}

/// [`resample`] followed by quantization to `0..=65535`.
pub fn resample_quantized(volume: &Volume, transform: &AffineTransform) -> Result<Volume> {
    let r = resample(volume, transform)?;
    Volume::new(volume.dims, r.into_iter().map(|v| quantize(v, 0, u16::MAX)).collect())
}

/// `T_P⁻¹ ∘ T_X`: maps volume X into the space of volume P, given both
/// volumes' transforms to the common reference.
pub fn compose_to_target(t_x: &AffineTransform, t_p: &AffineTransform) -> Result<AffineTransform> {
    Ok(t_p.inverse()?.then_after(t_x))
}

/// Rotational part of the linear block, `R = L (LᵀL)^(-1/2)`, via SVD.
pub fn rotation_part(t: &AffineTransform) -> Result<Matrix3<f64>> {
    let svd = t.linear().svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let r = u * vt;
    if r.determinant() < 0.0 {
        return Err(Error::Affine("transform contains a reflection".into()));
    }
    Ok(r)
}

/// Rotates `g` by the rotational part of `t`. A transform without a linear
/// component returns `g` untouched.
pub fn reorient_gradient(g: [f64; 3], t: &AffineTransform) -> Result<[f64; 3]> {
    if t.linear() == Matrix3::identity() {
        return Ok(g);
    }
    let r = rotation_part(t)?;
    let v = r * nalgebra::Vector3::new(g[0], g[1], g[2]);
    let n = v.norm();
    if n == 0.0 {
        return Ok([0.0; 3]);
    }
    Ok([v[0] / n, v[1] / n, v[2] / n])
}
