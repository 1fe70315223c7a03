//! File formats: NIfTI-1 volumes, FSL gradient tables and FLIRT matrices.

pub mod affine;
pub mod gradients;
pub mod nifti;

pub use affine::{read_affine_ascii, write_affine_ascii, write_affine_flirt, AffineTransform};
pub use gradients::{read_gradients, GradientTable, Shell};
pub use nifti::{read_nifti, write_nifti, NiftiHeaderBlob};
