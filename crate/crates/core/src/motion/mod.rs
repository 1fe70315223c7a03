//! Motion compensation: registration to a common b=0 reference, transform
//! composition, resampling with nearest-neighbour extrapolation, and
//! gradient reorientation.

pub mod register;
pub mod resample;

pub use register::{register_affine, Dof, RegistrationParams};
pub use resample::{
    compose_to_target, reorient_gradient, resample, resample_quantized, rotation_part, sample_trilinear,
};
