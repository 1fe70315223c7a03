use crate::error::{Error, Result};

/// Grid extent of a 3D volume, x varying fastest in memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    pub const fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Dims { nx, ny, nz }
    }

    pub const fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub const fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.nx * (y + self.ny * z)
    }

    #[inline]
    pub const fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let x = idx % self.nx;
        let r = idx / self.nx;
        (x, r % self.ny, r / self.ny)
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }
}

/// One 3D image of unsigned 16-bit intensities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Volume {
    pub dims: Dims,
    pub samples: Vec<u16>,
}

impl Volume {
    pub fn new(dims: Dims, samples: Vec<u16>) -> Result<Self> {
        if samples.len() != dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for a {}x{}x{} grid",
                samples.len(),
                dims.nx,
                dims.ny,
                dims.nz
            )));
        }
        Ok(Volume { dims, samples })
    }

    pub fn zeros(dims: Dims) -> Self {
        Volume { dims, samples: vec![0; dims.len()] }
    }

    pub fn min_max(&self) -> (u16, u16) {
        let mut lo = u16::MAX;
        let mut hi = u16::MIN;
        for &v in &self.samples {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if self.samples.is_empty() {
            (0, 0)
        } else {
            (lo, hi)
        }
    }
}

/// Rounds half away from zero and clamps to `[lo, hi]`.
///
/// This is the one rounding rule shared by every real-valued predictor, so
/// encoder and decoder agree on each quantized prediction.
#[inline]
pub fn quantize(value: f64, lo: u16, hi: u16) -> u16 {
    if value.is_nan() {
        return lo;
    }
    let r = value.round();
    if r <= lo as f64 {
        lo
    } else if r >= hi as f64 {
        hi
    } else {
        r as u16
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_roundtrip() {
        let d = Dims::new(3, 4, 5);
        for i in 0..d.len() {
            let (x, y, z) = d.coords(i);
            assert_eq!(d.index(x, y, z), i);
        }
    }

    #[test]
    fn quantize_rounds_half_away() {
        assert_eq!(quantize(10.5, 0, 65535), 11);
        assert_eq!(quantize(10.49, 0, 65535), 10);
        assert_eq!(quantize(-0.5, 0, 65535), 0);
        assert_eq!(quantize(70000.0, 0, 65535), 65535);
        assert_eq!(quantize(5.0, 7, 9), 7);
    }
}
