use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::volume::{Dims, Volume};

pub const GRID_SPACING: usize = 4;

/// Known voxels held fixed during inpainting.
#[derive(Debug, Clone, PartialEq)]
pub struct InpaintingMask {
    pub dims: Dims,
    pub member: Vec<bool>,
    /// Full-size array; only entries with `member[i]` are meaningful.
    pub values: Vec<u16>,
}

impl InpaintingMask {
    pub fn new(dims: Dims, member: Vec<bool>, values: Vec<u16>) -> Result<Self> {
        if member.len() != dims.len() || values.len() != dims.len() {
            return Err(Error::DimensionMismatch("mask arrays do not match dims".into()));
        }
        if !member.iter().any(|&m| m) {
            return Err(Error::Dataset("inpainting mask is empty".into()));
        }
        Ok(InpaintingMask { dims, member, values })
    }

    /// Mask of the given members with values taken from `image`.
    pub fn from_image(image: &Volume, member: Vec<bool>) -> Result<Self> {
        let values = image.samples.iter().zip(&member).map(|(&v, &m)| if m { v } else { 0 }).collect();
        Self::new(image.dims, member, values)
    }

    pub fn count(&self) -> usize {
        self.member.iter().filter(|&&m| m).count()
    }
}

fn grid_axis(n: usize) -> usize {
    (n - 1) / GRID_SPACING + 1
}

/// Membership of the regular seed grid: voxels `(4i, 4j, 4k)`.
pub fn initial_mask(dims: Dims) -> Vec<bool> {
    let mut m = vec![false; dims.len()];
    for z in (0..dims.nz).step_by(GRID_SPACING) {
        for y in (0..dims.ny).step_by(GRID_SPACING) {
            for x in (0..dims.nx).step_by(GRID_SPACING) {
                m[dims.index(x, y, z)] = true;
            }
        }
    }
    m
}

pub fn initial_mask_count(dims: Dims) -> usize {
    grid_axis(dims.nx) * grid_axis(dims.ny) * grid_axis(dims.nz)
}

/// Stage at which each voxel is coded: 0 for the seed grid, then the
/// face-connected distance to it. Depends on the dims only.
pub fn coding_layers(dims: Dims) -> Vec<u32> {
    let mut layer = vec![u32::MAX; dims.len()];
    let mut queue = VecDeque::new();
    for (i, &m) in initial_mask(dims).iter().enumerate() {
        if m {
            layer[i] = 0;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y, z) = dims.coords(i);
        let next = layer[i] + 1;
        let mut visit = |j: usize| {
            if layer[j] == u32::MAX {
                layer[j] = next;
                queue.push_back(j);
            }
        };
        if x > 0 {
            visit(i - 1);
        }
        if x + 1 < dims.nx {
            visit(i + 1);
        }
        if y > 0 {
            visit(i - dims.nx);
        }
        if y + 1 < dims.ny {
            visit(i + dims.nx);
        }
        if z > 0 {
            visit(i - dims.nx * dims.ny);
        }
        if z + 1 < dims.nz {
            visit(i + dims.nx * dims.ny);
        }
    }
    layer
}

/// Trilinear interpolation of the seed grid values, constant beyond the
/// last grid plane of each axis. Starting point for the first inpainting.
pub fn grid_interpolation(dims: Dims, values: &[u16]) -> Vec<f64> {
    let axis = |x: usize, n: usize| -> (usize, usize, f64) {
        let last = (n - 1) / GRID_SPACING * GRID_SPACING;
        let g = x / GRID_SPACING * GRID_SPACING;
        if g >= last {
            (last, last, 0.0)
        } else {
            (g, g + GRID_SPACING, (x - g) as f64 / GRID_SPACING as f64)
        }
    };
    let mut out = vec![0.0; dims.len()];
    for z in 0..dims.nz {
        let (z0, z1, fz) = axis(z, dims.nz);
        for y in 0..dims.ny {
            let (y0, y1, fy) = axis(y, dims.ny);
            for x in 0..dims.nx {
                let (x0, x1, fx) = axis(x, dims.nx);
                let v = |xx, yy, zz| values[dims.index(xx, yy, zz)] as f64;
                let c00 = v(x0, y0, z0) * (1.0 - fx) + v(x1, y0, z0) * fx;
                let c10 = v(x0, y1, z0) * (1.0 - fx) + v(x1, y1, z0) * fx;
                let c01 = v(x0, y0, z1) * (1.0 - fx) + v(x1, y0, z1) * fx;
                let c11 = v(x0, y1, z1) * (1.0 - fx) + v(x1, y1, z1) * fx;
                let c0 = c00 * (1.0 - fy) + c10 * fy;
                let c1 = c01 * (1.0 - fy) + c11 * fy;
                out[dims.index(x, y, z)] = c0 * (1.0 - fz) + c1 * fz;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(dims: Dims) -> usize {
        initial_mask(dims).iter().filter(|&&m| m).count()
    }

    #[test]
    fn full_size_grid_count() {
        let d = Dims::new(104, 104, 72);
        assert_eq!(count(d), 12_168);
        assert_eq!(initial_mask_count(d), 26 * 26 * 18);
    }

    #[test]
    fn single_voxel() {
        let d = Dims::new(1, 1, 1);
        assert_eq!(initial_mask(d), vec![true]);
        assert_eq!(coding_layers(d), vec![0]);
    }

    #[test]
    fn five_cube_corners() {
        let d = Dims::new(5, 5, 5);
        let m = initial_mask(d);
        let members: Vec<_> = (0..d.len()).filter(|&i| m[i]).map(|i| d.coords(i)).collect();
        assert_eq!(members.len(), 8);
        for (x, y, z) in members {
            assert!([x, y, z].iter().all(|c| *c == 0 || *c == 4));
        }
    }

    #[test]
    fn layers_cover_everything() {
        for d in [Dims::new(7, 3, 9), Dims::new(1, 13, 2), Dims::new(16, 16, 16)] {
            let l = coding_layers(d);
            assert!(l.iter().all(|&v| v != u32::MAX));
            let interior_max = *l.iter().max().unwrap();
            assert!(interior_max <= 9);
        }
    }

    #[test]
    fn interpolation_hits_grid_values() {
        let d = Dims::new(9, 6, 1);
        let vals: Vec<u16> = (0..d.len() as u16).collect();
        let interp = grid_interpolation(d, &vals);
        for (i, &m) in initial_mask(d).iter().enumerate() {
            if m {
                assert_eq!(interp[i], vals[i] as f64);
            }
        }
    }
}
