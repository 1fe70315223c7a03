//! Image-space codec: a regular seed grid, EED inpainting, and residual
//! coding of face-connected neighbours layer by layer.

pub mod codec;
pub mod eed;
pub mod mask;

pub use codec::{decode_volume_spatial, encode_volume_spatial};
pub use eed::{eed_tensor, inpaint_eed, inpaint_eed_from, EedParams, InpaintReport, DEFAULT_LAMBDA};
pub use mask::{coding_layers, initial_mask, initial_mask_count, InpaintingMask};
