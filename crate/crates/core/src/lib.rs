//! Lossless compression of 4D diffusion MRI datasets.
//!
//! Each 3D volume is predicted either by edge-enhancing diffusion inpainting
//! in image space, or by finite-element inpainting over the sphere of
//! diffusion gradient directions (q-space). Prediction residuals are taken
//! modulo 2^16 and entropy coded with canonical Huffman coding or DEFLATE,
//! whichever is smaller. Decompression reproduces the input files bit-exactly.

// Negated float comparisons are how NaN gets rejected along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod codec;
pub mod coding;
pub mod container;
pub mod dti;
pub mod error;
pub mod io;
pub mod motion;
pub mod qspace;
pub mod spatial;
mod volume;

pub use codec::{compress, decompress, stats, CodecOptions, DwiDataset, MotionMode, QspacePredictor};
pub use error::{Error, Result};
pub use volume::{quantize, Dims, Volume};
