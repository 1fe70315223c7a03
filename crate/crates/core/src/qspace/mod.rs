//! q-space inpainting: finite elements on the sphere of gradient directions.

pub mod fem;
pub mod mesh;
pub mod ordering;
pub mod weights;

pub use fem::{assemble_operators, solve_dirichlet, FemOperators, PdeKind};
pub use mesh::{build_sphere_mesh, SphereMesh, MIN_SEPARATION_DEG};
pub use ordering::{angular_distance, order_volumes, OrderingStrategy};
pub use weights::{compute_weights, predict_volume, weights_on_mesh, WeightMatrix, WEIGHT_ONE};

#[cfg(test)]
pub(crate) mod testutil {
    /// Spiral over the upper hemisphere; no two directions are antipodal.
    pub fn fibonacci_directions(n: usize) -> Vec<[f64; 3]> {
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        (0..n)
            .map(|i| {
                let z = 1.0 - (i as f64 + 0.5) / n as f64;
                let r = (1.0 - z * z).sqrt();
                let t = golden * i as f64;
                [r * t.cos(), r * t.sin(), z]
            })
            .collect()
    }
}
