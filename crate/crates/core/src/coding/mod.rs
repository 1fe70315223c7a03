//! Modular residuals and the two entropy coders, with smallest-stream
//! selection between them.

pub mod deflate;
pub mod huffman;

pub use deflate::{deflate_decode, deflate_encode};
pub use huffman::{huffman_decode, huffman_encode};

use crate::error::{Error, Result};
use crate::volume::Volume;

/// `(original - predicted) mod 2^16`, element-wise.
pub fn residuals(original: &[u16], predicted: &[u16]) -> Result<Vec<u16>> {
    if original.len() != predicted.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} originals vs {} predictions",
            original.len(),
            predicted.len()
        )));
    }
    Ok(original.iter().zip(predicted).map(|(&o, &p)| o.wrapping_sub(p)).collect())
}

/// Inverse of [`residuals`].
pub fn apply_residuals(predicted: &[u16], residuals: &[u16]) -> Result<Vec<u16>> {
    if residuals.len() != predicted.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} residuals vs {} predictions",
            residuals.len(),
            predicted.len()
        )));
    }
    Ok(predicted.iter().zip(residuals).map(|(&p, &r)| p.wrapping_add(r)).collect())
}

pub fn residuals_encode(original: &Volume, predicted: &Volume) -> Result<Vec<u16>> {
    if original.dims != predicted.dims {
        return Err(Error::DimensionMismatch("original and prediction dims differ".into()));
    }
    residuals(&original.samples, &predicted.samples)
}

pub fn residuals_apply(predicted: &Volume, block: &[u16]) -> Result<Volume> {
    Volume::new(predicted.dims, apply_residuals(&predicted.samples, block)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Coder {
    Huffman,
    Deflate,
}

impl Coder {
    /// Value of the one-bit coder flag in record headers.
    pub fn bit(self) -> u8 {
        match self {
            Coder::Huffman => 0,
            Coder::Deflate => 1,
        }
    }

    pub fn from_bit(bit: u8) -> Self {
        if bit == 0 {
            Coder::Huffman
        } else {
            Coder::Deflate
        }
    }
}

/// A coded run of 16-bit symbols. `bytes` is exactly what goes on disk; the
/// symbol count is implied by the record that holds the stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedStream {
    pub coder: Coder,
    pub count: usize,
    pub bytes: Vec<u8>,
}

impl EncodedStream {
    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    /// The zero-length stream used for zero symbols.
    pub fn empty() -> Self {
        EncodedStream { coder: Coder::Huffman, count: 0, bytes: Vec::new() }
    }

    pub fn decode(&self) -> Result<Vec<u16>> {
        decode_stream(self.coder, &self.bytes, self.count)
    }
}

pub fn encode_with(coder: Coder, symbols: &[u16]) -> Result<EncodedStream> {
    let bytes = match coder {
        Coder::Huffman => huffman_encode(symbols)?,
        Coder::Deflate => deflate::deflate_symbols(symbols),
    };
    Ok(EncodedStream { coder, count: symbols.len(), bytes })
}

/// Codes with both coders and keeps the smaller; ties go to Huffman.
/// An empty symbol list gives an empty stream.
pub fn choose_stream(symbols: &[u16]) -> EncodedStream {
    if symbols.is_empty() {
        return EncodedStream::empty();
    }
    let h = encode_with(Coder::Huffman, symbols).expect("nonempty input");
    let d = encode_with(Coder::Deflate, symbols).expect("nonempty input");
    if d.len() < h.len() {
        d
    } else {
        h
    }
}

pub fn decode_stream(coder: Coder, bytes: &[u8], count: usize) -> Result<Vec<u16>> {
    if count == 0 {
        if !bytes.is_empty() {
            return Err(Error::Stream("data present for an empty stream".into()));
        }
        return Ok(Vec::new());
    }
    match coder {
        Coder::Huffman => huffman_decode(bytes, count),
        Coder::Deflate => deflate::inflate_symbols(bytes, count),
    }
}
