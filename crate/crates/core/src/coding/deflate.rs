//! Raw RFC 1951 DEFLATE, backed by `flate2`.

use std::io::Write;

use flate2::write::DeflateEncoder;
use flate2::{Compression, Decompress, FlushDecompress, Status};

use crate::error::{Error, Result};

pub fn deflate_encode(bytes: &[u8]) -> Vec<u8> {
    let mut enc = DeflateEncoder::new(Vec::with_capacity(bytes.len() / 2 + 16), Compression::best());
    enc.write_all(bytes).expect("writing to a Vec cannot fail");
    enc.finish().expect("writing to a Vec cannot fail")
}

/// Requires a complete stream with no trailing bytes.
pub fn deflate_decode(bytes: &[u8]) -> Result<Vec<u8>> {
    let err = |m: String| Error::Stream(format!("DEFLATE: {m}"));
    let mut d = Decompress::new(false);
    let mut out = Vec::with_capacity(bytes.len() * 4 + 64);
    loop {
        if out.len() == out.capacity() {
            out.reserve(out.capacity());
        }
        let (before_in, before_out) = (d.total_in(), d.total_out());
        let status = d
            .decompress_vec(&bytes[before_in as usize..], &mut out, FlushDecompress::None)
            .map_err(|e| err(e.to_string()))?;
        if status == Status::StreamEnd {
            break;
        }
        if d.total_in() == before_in && d.total_out() == before_out && out.len() < out.capacity() {
            return Err(err("truncated stream".into()));
        }
    }
    if d.total_in() as usize != bytes.len() {
        return Err(err("trailing bytes after the final block".into()));
    }
    Ok(out)
}

/// DEFLATE over 16-bit symbols serialized little-endian.
pub fn deflate_symbols(symbols: &[u16]) -> Vec<u8> {
    let bytes: Vec<u8> = symbols.iter().flat_map(|s| s.to_le_bytes()).collect();
    deflate_encode(&bytes)
}

pub fn inflate_symbols(bytes: &[u8], count: usize) -> Result<Vec<u16>> {
    let raw = deflate_decode(bytes)?;
    if raw.len() != 2 * count {
        return Err(Error::Stream(format!("DEFLATE: expected {count} symbols, stream holds {} bytes", raw.len())));
    }
    Ok(raw.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect())
}
