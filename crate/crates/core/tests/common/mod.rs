//! Synthetic diffusion datasets for integration tests.
#![allow(dead_code)]

use nalgebra::{Matrix3, Rotation3, Vector3};
use qdmr_core::io::gradients::{format_fsl, DEFAULT_B0_THRESHOLD};
use qdmr_core::io::{write_affine_flirt, AffineTransform, NiftiHeaderBlob};
use qdmr_core::{quantize, Dims, DwiDataset, Volume};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone)]
pub struct Spec {
    pub dims: Dims,
    pub b0_count: usize,
    /// `(b-value, number of directions)` per shell.
    pub shells: Vec<(f64, usize)>,
    pub noise_sigma: f64,
    /// Largest rotation (degrees) and translation (voxels) per volume.
    pub motion: Option<(f64, f64)>,
    /// Relative amplitude of fine anatomical texture shared by all volumes.
    pub texture: f64,
    /// Shortest and longest texture wavelength in voxels.
    pub wavelengths: (f64, f64),
    /// Scales fractional anisotropy; small values give a smooth q-space signal.
    pub anisotropy: f64,
    /// Slope of the tissue boundary; larger is sharper.
    pub edge: f64,
    /// Tissue radii as fractions of the field of view.
    pub extent: f64,
    pub seed: u64,
}

impl Spec {
    pub fn new(dims: Dims, b0_count: usize, shells: Vec<(f64, usize)>, seed: u64) -> Self {
        Spec {
            dims,
            b0_count,
            shells,
            noise_sigma: 0.0,
            motion: None,
            texture: 0.0,
            wavelengths: (2.0, 6.0),
            anisotropy: 1.0,
            edge: 8.0,
            extent: 0.4,
            seed,
        }
    }
}

pub struct Synthetic {
    pub dataset: DwiDataset,
    pub nifti: Vec<u8>,
    pub bval: Vec<u8>,
    pub bvec: Vec<u8>,
    /// Per-volume maps from voxel coordinates to the first volume's voxel
    /// coordinates (identity without motion).
    pub transforms: Vec<AffineTransform>,
}

impl Synthetic {
    pub fn transform_texts(&self) -> Vec<String> {
        self.transforms.iter().map(write_affine_flirt).collect()
    }
}

/// Roughly uniform directions on the hemisphere `z > 0`, slightly
/// perturbed so no two sets are identical.
pub fn directions<R: Rng>(n: usize, rng: &mut R) -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    (0..n)
        .map(|i| {
            let z = 1.0 - (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let a = golden * i as f64 + phase;
            [r * a.cos(), r * a.sin(), z]
        })
        .collect()
}

/// Sum of random plane waves.
struct Texture(Vec<([f64; 3], f64)>);

impl Texture {
    fn new<R: Rng>(rng: &mut R, amplitude: f64, (lo, hi): (f64, f64)) -> Self {
        if amplitude == 0.0 {
            return Texture(Vec::new());
        }
        let waves = (0..24)
            .map(|_| {
                let dir =
                    Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                        .normalize();
                let k = std::f64::consts::TAU / rng.random_range(lo..hi);
                ([dir[0] * k, dir[1] * k, dir[2] * k], rng.random_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        Texture(waves)
    }

    fn at(&self, p: [f64; 3]) -> f64 {
        if self.0.is_empty() {
            return 0.0;
        }
        let s: f64 = self.0.iter().map(|(k, ph)| (k[0] * p[0] + k[1] * p[1] + k[2] * p[2] + ph).sin()).sum();
        s / (self.0.len() as f64 / 2.0).sqrt()
    }
}

/// Head-frame signal: ellipsoidal S0 with optional fine texture and a
/// tensor whose principal direction bends across the volume.
fn signal(spec: &Spec, p: [f64; 3], b: f64, g: Vector3<f64>, texture: f64) -> f64 {
    let d = spec.dims;
    let c = [(d.nx as f64 - 1.0) / 2.0, (d.ny as f64 - 1.0) / 2.0, (d.nz as f64 - 1.0) / 2.0];
    let r = [1.05 * spec.extent * d.nx as f64, spec.extent * d.ny as f64, 0.95 * spec.extent * d.nz as f64];
    let q = [(p[0] - c[0]) / r[0], (p[1] - c[1]) / r[1], (p[2] - c[2]) / r[2]];
    let rho2 = q[0] * q[0] + q[1] * q[1] + q[2] * q[2];
    let tissue = 1.0 / (1.0 + (spec.edge * (rho2 - 1.0)).exp());
    let s0 =
        (60.0 + 1400.0 * tissue * (1.0 + 0.15 * (2.5 * q[0]).sin() * (2.0 * q[1]).cos())) * (1.0 + texture).max(0.1);
    if b == 0.0 {
        return s0;
    }
    let angle = 0.9 * q[0] + 0.6 * q[2] + 0.5 * texture;
    let e1 = Vector3::new(angle.cos(), angle.sin(), 0.2).normalize();
    let fa = (0.2 + 0.5 * tissue * (1.0 - 0.5 * q[1].abs().min(1.0)) + texture).clamp(0.05, 0.85) * spec.anisotropy;
    let (l1, l2) = (1.0e-3 * (1.0 + fa), 1.0e-3 * (1.0 - 0.6 * fa));
    let dt = Matrix3::identity() * l2 + e1 * e1.transpose() * (l1 - l2);
    s0 * (-b * (g.transpose() * dt * g)[0]).exp()
}

pub fn generate(spec: &Spec) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.dims;
    let mut bvals = vec![0.0; spec.b0_count];
    let mut bvecs = vec![[0.0; 3]; spec.b0_count];
    for &(b, n) in &spec.shells {
        for g in directions(n, &mut rng) {
            bvals.push(b);
            bvecs.push(g);
        }
    }
    let n = bvals.len();
    let centre = Vector3::new((d.nx as f64 - 1.0) / 2.0, (d.ny as f64 - 1.0) / 2.0, (d.nz as f64 - 1.0) / 2.0);
    let transforms: Vec<AffineTransform> = (0..n)
        .map(|i| match spec.motion {
            Some((deg, shift)) if i > 0 => {
                let mut a = || rng.random_range(-deg..=deg).to_radians();
                let rot = Rotation3::from_euler_angles(a(), a(), a()).into_inner();
                let t = Vector3::new(
                    rng.random_range(-shift..=shift),
                    rng.random_range(-shift..=shift),
                    rng.random_range(-shift..=shift),
                );
                AffineTransform::from_parts(rot, centre - rot * centre + t).unwrap()
            }
            _ => AffineTransform::identity(),
        })
        .collect();
    let texture = Texture::new(&mut rng, spec.texture, spec.wavelengths);
    let noise = Normal::new(0.0, spec.noise_sigma.max(1e-12)).unwrap();
    let volumes: Vec<Volume> = (0..n)
        .map(|k| {
            let t = &transforms[k];
            let rot = t.linear();
            let g = rot * Vector3::from(bvecs[k]);
            let samples = (0..d.len())
                .map(|i| {
                    let (x, y, z) = d.coords(i);
                    let p = t.apply([x as f64, y as f64, z as f64]);
                    let mut v = signal(spec, p, bvals[k], g, spec.texture * texture.at(p));
                    if spec.noise_sigma > 0.0 {
                        v += noise.sample(&mut rng);
                    }
                    quantize(v, 0, u16::MAX)
                })
                .collect();
            Volume::new(d, samples).unwrap()
        })
        .collect();
    let (bval_text, bvec_text) = format_fsl(&bvals, &bvecs);
    let header = NiftiHeaderBlob::new_u16(d, n, [2.0, 2.0, 2.0]).unwrap();
    let nifti = qdmr_core::io::write_nifti(&header, &volumes).unwrap();
    let dataset =
        DwiDataset::from_bytes(&nifti, bval_text.as_bytes(), bvec_text.as_bytes(), DEFAULT_B0_THRESHOLD).unwrap();
    Synthetic { dataset, nifti, bval: bval_text.into_bytes(), bvec: bvec_text.into_bytes(), transforms }
}

/// Byte-exact round trip of all three files.
pub fn roundtrip_exact(s: &Synthetic, bytes: &[u8]) -> bool {
    match qdmr_core::decompress(bytes) {
        Ok(back) => {
            back.nifti_bytes().map(|b| b == s.nifti).unwrap_or(false)
                && back.bval_bytes() == s.bval.as_slice()
                && back.bvec_bytes() == s.bvec.as_slice()
        }
        Err(_) => false,
    }
}
