//! NIfTI-1 single-file (`.nii`, optionally gzip-wrapped) reading and writing.
//!
//! Only what lossless round trips need is interpreted: dimensions, datatype,
//! voxel sizes, scaling and the data offset. The 348 header bytes are kept
//! verbatim and written back unchanged, so the byte order of the output is
//! always the byte order of the source.

use std::io::Read;

use flate2::read::GzDecoder;

use crate::error::{Error, Result};
use crate::volume::{Dims, Volume};

pub const HEADER_SIZE: usize = 348;
const MAGIC_SINGLE_FILE: &[u8; 4] = b"n+1\0";
const MAGIC_PAIR: &[u8; 4] = b"ni1\0";

pub const DT_UINT8: i16 = 2;
pub const DT_INT16: i16 = 4;
pub const DT_FLOAT32: i16 = 16;
pub const DT_FLOAT64: i16 = 64;
pub const DT_INT8: i16 = 256;
pub const DT_UINT16: i16 = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endian {
    Little,
    Big,
}

/// Storage type of the voxel payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleType {
    U8,
    I8,
    I16,
    U16,
    F32,
    F64,
}

impl SampleType {
    fn from_code(code: i16) -> Result<Self> {
        Ok(match code {
            DT_UINT8 => SampleType::U8,
            DT_INT8 => SampleType::I8,
            DT_INT16 => SampleType::I16,
            DT_UINT16 => SampleType::U16,
            DT_FLOAT32 => SampleType::F32,
            DT_FLOAT64 => SampleType::F64,
            other => return Err(Error::UnsupportedDatatype(other)),
        })
    }

    pub fn code(self) -> i16 {
        match self {
            SampleType::U8 => DT_UINT8,
            SampleType::I8 => DT_INT8,
            SampleType::I16 => DT_INT16,
            SampleType::U16 => DT_UINT16,
            SampleType::F32 => DT_FLOAT32,
            SampleType::F64 => DT_FLOAT64,
        }
    }

    pub fn byte_size(self) -> usize {
        match self {
            SampleType::U8 | SampleType::I8 => 1,
            SampleType::I16 | SampleType::U16 => 2,
            SampleType::F32 => 4,
            SampleType::F64 => 8,
        }
    }
}

/// Fields interpreted from the raw header.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiInfo {
    pub dims: Dims,
    pub nvol: usize,
    pub sample_type: SampleType,
    pub voxel_size: [f32; 3],
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub vox_offset: usize,
    pub endian: Endian,
}

/// The verbatim 348-byte header together with its parsed view.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeaderBlob {
    raw: Vec<u8>,
    info: NiftiInfo,
}

struct Fields<'a> {
    raw: &'a [u8],
    endian: Endian,
}

impl Fields<'_> {
    fn i16_at(&self, off: usize) -> i16 {
        let b = [self.raw[off], self.raw[off + 1]];
        match self.endian {
            Endian::Little => i16::from_le_bytes(b),
            Endian::Big => i16::from_be_bytes(b),
        }
    }

    fn i32_at(&self, off: usize) -> i32 {
        let b: [u8; 4] = self.raw[off..off + 4].try_into().unwrap();
        match self.endian {
            Endian::Little => i32::from_le_bytes(b),
            Endian::Big => i32::from_be_bytes(b),
        }
    }

    fn f32_at(&self, off: usize) -> f32 {
        f32::from_bits(self.i32_at(off) as u32)
    }
}

impl NiftiHeaderBlob {
    /// Parses a raw header. `raw` must be exactly 348 bytes.
    pub fn from_raw(raw: &[u8]) -> Result<Self> {
        if raw.len() != HEADER_SIZE {
            return Err(Error::Nifti(format!("header must be {HEADER_SIZE} bytes, got {}", raw.len())));
        }
        let magic = &raw[344..348];
        if magic == MAGIC_PAIR {
            return Err(Error::Nifti("split .hdr/.img pairs are not supported".into()));
        }
        if magic != MAGIC_SINGLE_FILE {
            return Err(Error::Nifti("bad magic".into()));
        }

        // dim[0] is in 1..=7 in the file's own byte order.
        let le = i16::from_le_bytes([raw[40], raw[41]]);
        let endian = if (1..=7).contains(&le) {
            Endian::Little
        } else {
            let be = i16::from_be_bytes([raw[40], raw[41]]);
            if !(1..=7).contains(&be) {
                return Err(Error::Nifti(format!("invalid dim[0] = {le}")));
            }
            Endian::Big
        };
        let f = Fields { raw, endian };

        let sizeof_hdr = f.i32_at(0);
        if sizeof_hdr != HEADER_SIZE as i32 {
            return Err(Error::Nifti(format!("sizeof_hdr = {sizeof_hdr}")));
        }

        let ndim = f.i16_at(40) as usize;
        let mut dim = [1usize; 7];
        for (i, d) in dim.iter_mut().enumerate().take(ndim) {
            let v = f.i16_at(42 + 2 * i);
            if v < 1 {
                return Err(Error::Nifti(format!("dim[{}] = {v}", i + 1)));
            }
            *d = v as usize;
        }
        let dims = Dims::new(dim[0], dim[1], dim[2]);
        let nvol: usize = dim[3..].iter().product();

        let sample_type = SampleType::from_code(f.i16_at(70))?;

        let vox = f.f32_at(108);
        if !(vox.is_finite() && vox >= HEADER_SIZE as f32 && vox.fract() == 0.0) {
            return Err(Error::Nifti(format!("vox_offset = {vox}")));
        }

        let info = NiftiInfo {
            dims,
            nvol,
            sample_type,
            voxel_size: [f.f32_at(80), f.f32_at(84), f.f32_at(88)],
            scl_slope: f.f32_at(112),
            scl_inter: f.f32_at(116),
            vox_offset: vox as usize,
            endian,
        };
        Ok(NiftiHeaderBlob { raw: raw.to_vec(), info })
    }

    /// A minimal little-endian uint16 header, used for synthetic datasets.
    pub fn new_u16(dims: Dims, nvol: usize, voxel_size: [f32; 3]) -> Result<Self> {
        let to_i16 = |v: usize, what: &str| {
            i16::try_from(v)
                .ok()
                .filter(|&d| d >= 1)
                .ok_or_else(|| Error::Nifti(format!("{what} = {v} does not fit a NIfTI-1 dim")))
        };
        let mut raw = vec![0u8; HEADER_SIZE];
        raw[0..4].copy_from_slice(&(HEADER_SIZE as i32).to_le_bytes());
        let dim: [i16; 8] =
            [4, to_i16(dims.nx, "nx")?, to_i16(dims.ny, "ny")?, to_i16(dims.nz, "nz")?, to_i16(nvol, "nvol")?, 1, 1, 1];
        for (i, d) in dim.iter().enumerate() {
            raw[40 + 2 * i..42 + 2 * i].copy_from_slice(&d.to_le_bytes());
        }
        raw[70..72].copy_from_slice(&DT_UINT16.to_le_bytes());
        raw[72..74].copy_from_slice(&16i16.to_le_bytes());
        let pixdim = [1.0f32, voxel_size[0], voxel_size[1], voxel_size[2], 1.0, 0.0, 0.0, 0.0];
        for (i, p) in pixdim.iter().enumerate() {
            raw[76 + 4 * i..80 + 4 * i].copy_from_slice(&p.to_le_bytes());
        }
        raw[108..112].copy_from_slice(&352f32.to_le_bytes());
        raw[112..116].copy_from_slice(&1f32.to_le_bytes());
        raw[344..348].copy_from_slice(MAGIC_SINGLE_FILE);
        Self::from_raw(&raw)
    }

    pub fn raw(&self) -> &[u8] {
        &self.raw
    }

    pub fn info(&self) -> &NiftiInfo {
        &self.info
    }

    pub fn dims(&self) -> Dims {
        self.info.dims
    }

    pub fn nvol(&self) -> usize {
        self.info.nvol
    }

    fn payload_len(&self) -> usize {
        self.info.dims.len() * self.info.nvol * self.info.sample_type.byte_size()
    }
}

fn maybe_gunzip(bytes: &[u8]) -> Result<std::borrow::Cow<'_, [u8]>> {
    if bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(bytes).read_to_end(&mut out).map_err(|e| Error::Nifti(format!("gzip: {e}")))?;
        Ok(out.into())
    } else {
        Ok(bytes.into())
    }
}

fn sample_to_u16(ty: SampleType, endian: Endian, b: &[u8]) -> Result<u16> {
    macro_rules! num {
        ($t:ty) => {{
            let arr = b.try_into().unwrap();
            match endian {
                Endian::Little => <$t>::from_le_bytes(arr),
                Endian::Big => <$t>::from_be_bytes(arr),
            }
        }};
    }
    let neg = || Error::Nifti("negative intensities are not supported".into());
    match ty {
        SampleType::U8 => Ok(b[0] as u16),
        SampleType::I8 => u16::try_from(b[0] as i8).map_err(|_| neg()),
        SampleType::U16 => Ok(num!(u16)),
        SampleType::I16 => u16::try_from(num!(i16)).map_err(|_| neg()),
        SampleType::F32 => float_to_u16(num!(f32) as f64, num!(f32).is_sign_negative()),
        SampleType::F64 => float_to_u16(num!(f64), num!(f64).is_sign_negative()),
    }
}

fn float_to_u16(v: f64, sign_negative: bool) -> Result<u16> {
    if v.is_finite() && !sign_negative && v.fract() == 0.0 && v <= 65535.0 {
        Ok(v as u16)
    } else if sign_negative && v.is_finite() {
        Err(Error::Nifti(format!("negative intensity {v} cannot be represented losslessly")))
    } else {
        Err(Error::Nifti(format!("float sample {v} is not an integer in [0, 65535]")))
    }
}

fn u16_to_sample(ty: SampleType, endian: Endian, v: u16, out: &mut Vec<u8>) -> Result<()> {
    macro_rules! put {
        ($x:expr) => {{
            let x = $x;
            match endian {
                Endian::Little => out.extend_from_slice(&x.to_le_bytes()),
                Endian::Big => out.extend_from_slice(&x.to_be_bytes()),
            }
        }};
    }
    let range = || Error::Nifti(format!("value {v} does not fit the header datatype"));
    match ty {
        SampleType::U8 => out.push(u8::try_from(v).map_err(|_| range())?),
        SampleType::I8 => out.push(i8::try_from(v).map_err(|_| range())? as u8),
        SampleType::U16 => put!(v),
        SampleType::I16 => put!(i16::try_from(v).map_err(|_| range())?),
        SampleType::F32 => put!(v as f32),
        SampleType::F64 => put!(v as f64),
    }
    Ok(())
}

/// Reads a NIfTI-1 file into its raw header and one [`Volume`] per 3D frame.
pub fn read_nifti(bytes: &[u8]) -> Result<(NiftiHeaderBlob, Vec<Volume>)> {
    let bytes = maybe_gunzip(bytes)?;
    if bytes.len() < HEADER_SIZE {
        return Err(Error::Nifti(format!("file is {} bytes, shorter than the header", bytes.len())));
    }
    let header = NiftiHeaderBlob::from_raw(&bytes[..HEADER_SIZE])?;
    let info = header.info();

    let start = info.vox_offset;
    let expected = start + header.payload_len();
    if bytes.len() < expected {
        return Err(Error::Nifti(format!("truncated payload: expected {expected} bytes, got {}", bytes.len())));
    }
    if bytes.len() > expected {
        return Err(Error::Nifti(format!("{} trailing bytes after the payload", bytes.len() - expected)));
    }
    // Anything between the header and vox_offset must be zero padding; it is
    // regenerated from vox_offset on write.
    if bytes[HEADER_SIZE..start].iter().any(|&b| b != 0) {
        return Err(Error::Nifti("NIfTI header extensions are not supported".into()));
    }

    let n = info.dims.len();
    let bs = info.sample_type.byte_size();
    let mut volumes = Vec::with_capacity(info.nvol);
    for v in 0..info.nvol {
        let base = start + v * n * bs;
        let samples = bytes[base..base + n * bs]
            .chunks_exact(bs)
            .map(|c| sample_to_u16(info.sample_type, info.endian, c))
            .collect::<Result<Vec<u16>>>()?;
        volumes.push(Volume { dims: info.dims, samples });
    }
    Ok((header, volumes))
}

/// Writes the verbatim header, zero padding up to `vox_offset`, and the
/// payload in the header's datatype and byte order.
pub fn write_nifti(header: &NiftiHeaderBlob, volumes: &[Volume]) -> Result<Vec<u8>> {
    let info = header.info();
    if volumes.is_empty() {
        return Err(Error::DimensionMismatch("no volumes to write".into()));
    }
    if volumes.len() != info.nvol {
        return Err(Error::DimensionMismatch(format!("header declares {} volumes, got {}", info.nvol, volumes.len())));
    }
    if let Some(v) = volumes.iter().find(|v| v.dims != info.dims) {
        return Err(Error::DimensionMismatch(format!(
            "volume dims {:?} differ from header dims {:?}",
            v.dims, info.dims
        )));
    }

    let mut out = Vec::with_capacity(info.vox_offset + header.payload_len());
    out.extend_from_slice(header.raw());
    out.resize(info.vox_offset, 0);
    for vol in volumes {
        for &s in &vol.samples {
            u16_to_sample(info.sample_type, info.endian, s, &mut out)?;
        }
    }
    Ok(out)
}
