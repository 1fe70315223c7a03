//! Diffusion tensor baseline: log-linear least squares on
//! `S(g) = S0 · exp(-b gᵀ D g)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::volume::{quantize, Volume};

/// Largest accepted condition number of the design matrix.
pub const MAX_CONDITION: f64 = 1e8;

/// Unique components `[xx, yy, zz, xy, xz, yz]` in mm²/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionTensor(pub [f64; 6]);

impl DiffusionTensor {
    pub fn isotropic(d: f64) -> Self {
        DiffusionTensor([d, d, d, 0.0, 0.0, 0.0])
    }

    /// `gᵀ D g`.
    pub fn quadratic_form(&self, g: [f64; 3]) -> f64 {
        dot6(&design_row(g), &self.0)
    }
}

fn dot6(a: &[f64; 6], b: &[f64; 6]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn design_row(g: [f64; 3]) -> [f64; 6] {
    [g[0] * g[0], g[1] * g[1], g[2] * g[2], 2.0 * g[0] * g[1], 2.0 * g[0] * g[2], 2.0 * g[1] * g[2]]
}

/// Pseudo-inverse of the `n × 6` matrix of design rows, as `6 × n`.
fn design_pinv(directions: &[[f64; 3]]) -> Result<DMatrix<f64>> {
    if directions.len() < 6 {
        return Err(Error::RankDeficient(f64::INFINITY));
    }
    let x = DMatrix::from_fn(directions.len(), 6, |r, c| design_row(directions[r])[c]);
    let svd = x.svd(true, true);
    let (max, min) = svd.singular_values.iter().fold((0.0f64, f64::INFINITY), |(hi, lo), &s| (hi.max(s), lo.min(s)));
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(cond <= MAX_CONDITION) {
        return Err(Error::RankDeficient(cond));
    }
    svd.pseudo_inverse(0.0).map_err(|e| Error::Singular(e.to_string()))
}

fn log_ratio(s: f64, s0: f64) -> f64 {
    (s.max(1.0) / s0).ln()
}

pub fn fit_dti(s0: f64, signals: &[f64], directions: &[[f64; 3]], b: f64) -> Result<DiffusionTensor> {
    if signals.len() != directions.len() {
        return Err(Error::DimensionMismatch(format!("{} signals for {} directions", signals.len(), directions.len())));
    }
    if !(s0 > 0.0) || !(b > 0.0) {
        return Err(Error::Options(format!("need s0 > 0 and b > 0 (s0 = {s0}, b = {b})")));
    }
    let pinv = design_pinv(directions)?;
    let y = DVector::from_iterator(signals.len(), signals.iter().map(|&s| log_ratio(s, s0)));
    let d = pinv * y / -b;
    Ok(DiffusionTensor([d[0], d[1], d[2], d[3], d[4], d[5]]))
}

pub fn predict_dti(tensor: &DiffusionTensor, s0: f64, direction: [f64; 3], b: f64) -> f64 {
    s0 * (-b * tensor.quadratic_form(direction)).exp()
}

/// Fit-and-predict for one target direction, folded into a single row of
/// coefficients: the prediction is `s0 · exp(Σ cᵢ · ln(max(sᵢ, 1) / s0))`.
/// The b-value cancels.
#[derive(Debug, Clone, PartialEq)]
pub struct DtiPredictor {
    pub coefficients: Vec<f64>,
}

impl DtiPredictor {
    pub fn new(known_directions: &[[f64; 3]], target: [f64; 3]) -> Result<Self> {
        let pinv = design_pinv(known_directions)?;
        let row = design_row(target);
        let coefficients = (0..known_directions.len()).map(|j| (0..6).map(|r| row[r] * pinv[(r, j)]).sum()).collect();
        Ok(DtiPredictor { coefficients })
    }

    pub fn predict(&self, s0: f64, signals: &[f64]) -> f64 {
        let e: f64 = self.coefficients.iter().zip(signals).map(|(c, &s)| c * log_ratio(s, s0)).sum();
        s0 * e.exp()
    }

    /// Per-voxel prediction, quantized to `[lo, hi]`. `s0` values are
    /// clamped to at least 1.
    pub fn predict_volume(&self, s0: &Volume, known: &[&Volume], lo: u16, hi: u16) -> Result<Volume> {
        if known.len() != self.coefficients.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for {} volumes",
                self.coefficients.len(),
                known.len()
            )));
        }
        if known.iter().any(|v| v.dims != s0.dims) {
            return Err(Error::DimensionMismatch("DTI inputs differ in dims".into()));
        }
        let mut out = vec![0u16; s0.dims.len()];
        out.par_chunks_mut(4096).enumerate().for_each(|(c, chunk)| {
            let mut signals = vec![0.0; known.len()];
            for (k, o) in chunk.iter_mut().enumerate() {
                let i = c * 4096 + k;
                for (s, v) in signals.iter_mut().zip(known) {
                    *s = v.samples[i] as f64;
                }
                let base = (s0.samples[i] as f64).max(1.0);
                *o = quantize(self.predict(base, &signals), lo, hi);
            }
        });
        Volume::new(s0.dims, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn directions(n: usize) -> Vec<[f64; 3]> {
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        (0..n)
            .map(|i| {
                let z = 1.0 - (i as f64 + 0.5) / n as f64;
                let r = (1.0 - z * z).sqrt();
                [r * (golden * i as f64).cos(), r * (golden * i as f64).sin(), z]
            })
            .collect()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn isotropic_recovery() {
        let dirs = directions(6);
        let d = DiffusionTensor::isotropic(1e-3);
        let s: Vec<f64> = dirs.iter().map(|&g| predict_dti(&d, 1000.0, g, 1000.0)).collect();
        let fit = fit_dti(1000.0, &s, &dirs, 1000.0).unwrap();
        for k in 0..3 {
            assert!(rel(fit.0[k], 1e-3) < 1e-12);
            assert!(fit.0[k + 3].abs() < 1e-15);
        }
    }

    #[test]
    fn anisotropic_recovery_and_consistency() {
        let dirs = directions(30);
        let d = DiffusionTensor([1.7e-3, 0.3e-3, 0.3e-3, 0.0, 0.0, 0.0]);
        let s: Vec<f64> = dirs.iter().map(|&g| predict_dti(&d, 5000.0, g, 700.0)).collect();
        let fit = fit_dti(5000.0, &s, &dirs, 700.0).unwrap();
        for k in 0..3 {
            assert!(rel(fit.0[k], d.0[k]) < 1e-9);
        }
        for (g, &si) in dirs.iter().zip(&s) {
            assert!(rel(predict_dti(&fit, 5000.0, *g, 700.0), si) < 1e-9);
        }
    }

    #[test]
    fn constant_signal_gives_zero_tensor() {
        let dirs = directions(8);
        let fit = fit_dti(321.0, &[321.0; 8], &dirs, 1000.0).unwrap();
        assert!(fit.0.iter().all(|&x| x.abs() < 1e-18));
        assert_eq!(predict_dti(&DiffusionTensor([0.0; 6]), 321.0, [0.0, 0.0, 1.0], 1000.0), 321.0);
    }

    #[test]
    fn antipodal_and_permutation_invariance() {
        let d = DiffusionTensor([1.1e-3, 0.7e-3, 0.4e-3, 0.1e-3, -0.05e-3, 0.2e-3]);
        let g = [0.48, -0.6, 0.64];
        assert_eq!(predict_dti(&d, 900.0, g, 1000.0), predict_dti(&d, 900.0, [-0.48, 0.6, -0.64], 1000.0));

        let dirs = directions(10);
        let s: Vec<f64> = dirs.iter().enumerate().map(|(i, &g)| predict_dti(&d, 900.0, g, 1000.0) + i as f64).collect();
        let a = fit_dti(900.0, &s, &dirs, 1000.0).unwrap();
        let perm = [3, 9, 0, 1, 7, 2, 8, 4, 6, 5];
        let ps: Vec<f64> = perm.iter().map(|&i| s[i]).collect();
        let pd: Vec<[f64; 3]> = perm.iter().map(|&i| dirs[i]).collect();
        let b = fit_dti(900.0, &ps, &pd, 1000.0).unwrap();
        for k in 0..6 {
            assert!((a.0[k] - b.0[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn rank_deficiency() {
        assert!(matches!(fit_dti(1.0, &[1.0; 5], &directions(5), 1.0), Err(Error::RankDeficient(_))));
        let planar: Vec<[f64; 3]> = (0..8).map(|i| [(i as f64).cos(), (i as f64).sin(), 0.0]).collect();
        assert!(matches!(fit_dti(1.0, &[1.0; 8], &planar, 1.0), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn predictor_matches_fit_then_predict() {
        let dirs = directions(12);
        let d = DiffusionTensor([1.2e-3, 0.5e-3, 0.8e-3, 0.1e-3, 0.0, -0.1e-3]);
        let s: Vec<f64> = dirs.iter().map(|&g| predict_dti(&d, 2000.0, g, 1000.0) * 1.01).collect();
        let target = [0.0, 0.6, 0.8];
        let via_fit = predict_dti(&fit_dti(2000.0, &s, &dirs, 1000.0).unwrap(), 2000.0, target, 1000.0);
        let p = DtiPredictor::new(&dirs, target).unwrap();
        assert!(rel(p.predict(2000.0, &s), via_fit) < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn random_fits_are_antipodal_and_permutation_invariant(
            n in 6usize..24,
            signals in proptest::collection::vec(1.0f64..2000.0, 24),
            keys in proptest::collection::vec(proptest::prelude::any::<u32>(), 24),
        ) {
            let dirs = directions(n);
            let s = &signals[..n];
            let t = fit_dti(1500.0, s, &dirs, 1000.0).unwrap();
            let g = [0.3, -0.5, 0.81];
            proptest::prop_assert_eq!(predict_dti(&t, 1500.0, g, 1000.0), predict_dti(&t, 1500.0, [-g[0], -g[1], -g[2]], 1000.0));

            let mut perm: Vec<usize> = (0..n).collect();
            perm.sort_by_key(|&i| (keys[i], i));
            let ps: Vec<f64> = perm.iter().map(|&i| s[i]).collect();
            let pd: Vec<[f64; 3]> = perm.iter().map(|&i| dirs[i]).collect();
            let u = fit_dti(1500.0, &ps, &pd, 1000.0).unwrap();
            for k in 0..6 {
                proptest::prop_assert!((t.0[k] - u.0[k]).abs() <= 1e-9 * (1.0 + t.0[k].abs()), "{:?} vs {:?}", t, u);
            }
        }
    }
}
