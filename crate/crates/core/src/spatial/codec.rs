//! Spatial record payload:
//!
//! ```text
//! SpatialRecordHeader (17 bytes)
//! zero bitmap over the seed grid, MSB-first bits, DEFLATE (zero_mask_len bytes)
//! nonzero seed intensities, Huffman or DEFLATE (intensity_len bytes)
//! residuals of all later stages, Huffman or DEFLATE (rest of the record)
//! ```
//!
//! Stage `s` codes the voxels whose face-connected distance to the seed grid
//! is `s`, in linear index order. Before each stage the current mask is
//! inpainted, starting from the previous stage's state (the first stage
//! starts from trilinear interpolation of the grid). When the recorded
//! minimum equals the maximum every prediction is that value and no
//! inpainting runs.

use super::eed::{inpaint_eed_from, EedParams};
use super::mask::{coding_layers, grid_interpolation, initial_mask, InpaintingMask};
use crate::coding::{choose_stream, decode_stream, deflate_decode, deflate_encode};
use crate::container::{PdeType, SpatialRecordHeader};
use crate::error::{Error, Result};
use crate::volume::{quantize, Dims, Volume};

fn pack_bits(bits: impl Iterator<Item = bool>) -> Vec<u8> {
    let mut out = Vec::new();
    for (i, b) in bits.enumerate() {
        if i % 8 == 0 {
            out.push(0);
        }
        if b {
            *out.last_mut().unwrap() |= 0x80 >> (i % 8);
        }
    }
    out
}

/// Runs the staged prediction. `resolve` receives each stage's voxel
/// indices with their quantized predictions and must return the true values.
fn run_stages(
    dims: Dims,
    grid_values: Vec<u16>,
    min: u16,
    max: u16,
    params: &EedParams,
    mut resolve: impl FnMut(&[usize], &[u16]) -> Result<Vec<u16>>,
) -> Result<Vec<u16>> {
    let layers = coding_layers(dims);
    let last = layers.iter().copied().max().unwrap_or(0) as usize;
    let mut stage_voxels: Vec<Vec<usize>> = vec![Vec::new(); last + 1];
    for (i, &l) in layers.iter().enumerate() {
        stage_voxels[l as usize].push(i);
    }

    let member: Vec<bool> = layers.iter().map(|&l| l == 0).collect();
    let mut mask = InpaintingMask::new(dims, member, grid_values)?;
    let mut state = if min == max || last == 0 { Vec::new() } else { grid_interpolation(dims, &mask.values) };

    for voxels in &stage_voxels[1..] {
        let predictions: Vec<u16> = if min == max {
            vec![min; voxels.len()]
        } else {
            let (u, _) = inpaint_eed_from(std::mem::take(&mut state), &mask, params)?;
            state = u;
            voxels.iter().map(|&i| quantize(state[i], min, max)).collect()
        };
        let values = resolve(voxels, &predictions)?;
        for (&i, &v) in voxels.iter().zip(&values) {
            mask.member[i] = true;
            mask.values[i] = v;
        }
    }
    Ok(mask.values)
}

/// Codes one volume losslessly with the image-space codec. Only λ is
/// stored; the other solver constants are fixed by the format.
pub fn encode_volume_spatial(volume: &Volume, lambda: f32) -> Result<Vec<u8>> {
    encode_with(volume, &EedParams::with_lambda(lambda))
}

/// Encodes with arbitrary solver constants. The payload only decodes with
/// [`decode_with`] given the same constants.
pub(crate) fn encode_with(volume: &Volume, params: &EedParams) -> Result<Vec<u8>> {
    params.validate()?;
    let dims = volume.dims;
    if dims.is_empty() || volume.samples.len() != dims.len() {
        return Err(Error::DimensionMismatch("volume does not match its dims".into()));
    }
    let (min, max) = volume.min_max();
    let grid = initial_mask(dims);

    let grid_samples: Vec<u16> = (0..dims.len()).filter(|&i| grid[i]).map(|i| volume.samples[i]).collect();
    let zero_mask = deflate_encode(&pack_bits(grid_samples.iter().map(|&v| v == 0)));
    let nonzero: Vec<u16> = grid_samples.iter().copied().filter(|&v| v != 0).collect();
    let intensities = choose_stream(&nonzero);

    let grid_values: Vec<u16> = volume.samples.iter().zip(&grid).map(|(&v, &g)| if g { v } else { 0 }).collect();
    let mut residuals = Vec::with_capacity(dims.len() - grid_samples.len());
    run_stages(dims, grid_values, min, max, params, |voxels, predictions| {
        Ok(voxels
            .iter()
            .zip(predictions)
            .map(|(&i, &p)| {
                let v = volume.samples[i];
                residuals.push(v.wrapping_sub(p));
                v
            })
            .collect())
    })?;
    let residuals = choose_stream(&residuals);

    let header = SpatialRecordHeader {
        min,
        max,
        zero_mask_len: stream_len(zero_mask.len())?,
        intensity_len: stream_len(intensities.len())?,
        lambda: params.lambda,
        pde: PdeType::Eed,
        intensity_coder: intensities.coder,
        residual_coder: residuals.coder,
    };
    let mut out = Vec::with_capacity(SpatialRecordHeader::LEN + zero_mask.len() + intensities.len() + residuals.len());
    header.write(&mut out);
    out.extend_from_slice(&zero_mask);
    out.extend_from_slice(&intensities.bytes);
    out.extend_from_slice(&residuals.bytes);
    Ok(out)
}

fn stream_len(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Stream("stream longer than 4 GiB".into()))
}

/// EED parameters a decoder uses for a record: the stored λ with the
/// format's fixed solver constants.
pub fn record_params(header: &SpatialRecordHeader) -> Result<EedParams> {
    if header.pde != PdeType::Eed {
        return Err(Error::Container("fourth-order EED records are not supported".into()));
    }
    let params = EedParams::with_lambda(header.lambda);
    params.validate()?;
    Ok(params)
}

/// Inverse of [`encode_volume_spatial`].
pub fn decode_volume_spatial(payload: &[u8], dims: Dims) -> Result<Volume> {
    decode_with(payload, dims, None)
}

pub(crate) fn decode_with(payload: &[u8], dims: Dims, solver: Option<&EedParams>) -> Result<Volume> {
    if dims.is_empty() {
        return Err(Error::DimensionMismatch("empty grid".into()));
    }
    let header = SpatialRecordHeader::read(payload)?;
    let mut params = record_params(&header)?;
    if let Some(s) = solver {
        params = EedParams { lambda: header.lambda, ..*s };
    }
    let (min, max) = (header.min, header.max);

    let body = &payload[SpatialRecordHeader::LEN..];
    let (zlen, ilen) = (header.zero_mask_len as usize, header.intensity_len as usize);
    if zlen.checked_add(ilen).is_none_or(|n| n > body.len()) {
        return Err(Error::Stream("spatial record shorter than its stream lengths".into()));
    }
    let (zero_bytes, rest) = body.split_at(zlen);
    let (intensity_bytes, residual_bytes) = rest.split_at(ilen);

    let grid = initial_mask(dims);
    let grid_count = grid.iter().filter(|&&g| g).count();
    let bitmap = deflate_decode(zero_bytes)?;
    if bitmap.len() != grid_count.div_ceil(8) {
        return Err(Error::Stream("zero bitmap has the wrong length".into()));
    }
    let is_zero = |k: usize| bitmap[k / 8] & (0x80 >> (k % 8)) != 0;
    if (grid_count..bitmap.len() * 8).any(is_zero) {
        return Err(Error::Stream("zero bitmap padding bits set".into()));
    }
    let nonzero_count = (0..grid_count).filter(|&k| !is_zero(k)).count();
    let nonzero = decode_stream(header.intensity_coder, intensity_bytes, nonzero_count)?;

    let mut grid_values = vec![0u16; dims.len()];
    let mut next = nonzero.iter();
    for (k, i) in (0..dims.len()).filter(|&i| grid[i]).enumerate() {
        if !is_zero(k) {
            let v = *next.next().unwrap();
            if v == 0 {
                return Err(Error::Stream("zero in the nonzero intensity stream".into()));
            }
            grid_values[i] = v;
        }
    }
    let residuals = decode_stream(header.residual_coder, residual_bytes, dims.len() - grid_count)?;

    let mut cursor = 0;
    let samples = run_stages(dims, grid_values, min, max, &params, |voxels, predictions| {
        let r = &residuals[cursor..cursor + voxels.len()];
        cursor += voxels.len();
        Ok(predictions.iter().zip(r).map(|(&p, &r)| p.wrapping_add(r)).collect())
    })?;
    Volume::new(dims, samples)
}
