//! The single-file compressed format.
//!
//! ```text
//! magic "QDMR" | version u8 | flags u8 | volume count u16
//! directory: one entry per original volume index, in index order
//!     kind u8 | coding position u16 | offset u64 | length u64
//! blobs, each u32 length-prefixed:
//!     NIfTI header (348 bytes) | bval ASCII | bvec ASCII
//!     [one FLIRT-style affine per volume, iff flags bit 0]
//! record payloads, in coding order
//! CRC-32 of everything before it, u32
//! ```
//!
//! All integers are little-endian. Offsets are absolute file positions.

use crate::coding::Coder;
use crate::error::{Error, Result};
use crate::io::nifti::HEADER_SIZE;

pub const MAGIC: &[u8; 4] = b"QDMR";
pub const VERSION: u8 = 1;
pub const FLAG_MOTION: u8 = 1;

pub const FIXED_HEADER_LEN: usize = 8;
pub const DIRECTORY_ENTRY_LEN: usize = 1 + 2 + 8 + 8;
pub const FOOTER_LEN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RecordKind {
    /// A diffusion-weighted volume coded with the image-space codec.
    Spatial,
    Qspace,
    /// A b=0 volume coded against the reference b=0 volume.
    B0Diff,
    /// The reference b=0 volume, coded with the image-space codec.
    Reference,
}

impl RecordKind {
    pub fn code(self) -> u8 {
        match self {
            RecordKind::Spatial => 0,
            RecordKind::Qspace => 1,
            RecordKind::B0Diff => 2,
            RecordKind::Reference => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => RecordKind::Spatial,
            1 => RecordKind::Qspace,
            2 => RecordKind::B0Diff,
            3 => RecordKind::Reference,
            c => return Err(Error::Container(format!("unknown record kind {c}"))),
        })
    }

    pub fn is_spatial(self) -> bool {
        matches!(self, RecordKind::Spatial | RecordKind::Reference)
    }

    pub fn name(self) -> &'static str {
        match self {
            RecordKind::Spatial => "spatial",
            RecordKind::Qspace => "qspace",
            RecordKind::B0Diff => "b0diff",
            RecordKind::Reference => "reference",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub kind: RecordKind,
    pub position: u16,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Container {
    pub nifti_header: Vec<u8>,
    pub bval_ascii: Vec<u8>,
    pub bvec_ascii: Vec<u8>,
    /// One FLIRT-style matrix per original volume when motion correction ran.
    pub affines: Option<Vec<Vec<u8>>>,
    /// Indexed by original volume index.
    pub records: Vec<Record>,
}

/// Byte accounting of a serialized container.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SizeBreakdown {
    pub fixed_header: usize,
    pub directory: usize,
    pub nifti_header: usize,
    pub gradients: usize,
    pub affines: usize,
    pub records: Vec<usize>,
    pub footer: usize,
}

impl SizeBreakdown {
    pub fn overhead(&self) -> usize {
        self.fixed_header + self.directory + self.nifti_header + self.gradients + self.affines + self.footer
    }

    pub fn total(&self) -> usize {
        self.overhead() + self.records.iter().sum::<usize>()
    }
}

impl Container {
    pub fn motion(&self) -> bool {
        self.affines.is_some()
    }

    pub fn size_breakdown(&self) -> SizeBreakdown {
        let blob = |b: &[u8]| 4 + b.len();
        SizeBreakdown {
            fixed_header: FIXED_HEADER_LEN,
            directory: DIRECTORY_ENTRY_LEN * self.records.len(),
            nifti_header: blob(&self.nifti_header),
            gradients: blob(&self.bval_ascii) + blob(&self.bvec_ascii),
            affines: self.affines.as_ref().map_or(0, |a| a.iter().map(|b| blob(b)).sum()),
            records: self.records.iter().map(|r| r.payload.len()).collect(),
            footer: FOOTER_LEN,
        }
    }

    /// Record indices in coding order.
    pub fn coding_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.records.len()).collect();
        order.sort_by_key(|&i| self.records[i].position);
        order
    }

    fn validate(&self) -> Result<()> {
        let n = self.records.len();
        if n == 0 {
            return Err(Error::Container("container holds no volumes".into()));
        }
        if n > u16::MAX as usize {
            return Err(Error::Container(format!("{n} volumes exceed the u16 count field")));
        }
        if self.nifti_header.len() != HEADER_SIZE {
            return Err(Error::Container(format!(
                "NIfTI header blob is {} bytes, expected {HEADER_SIZE}",
                self.nifti_header.len()
            )));
        }
        let mut seen = vec![false; n];
        for r in &self.records {
            let p = r.position as usize;
            if p >= n || seen[p] {
                return Err(Error::Container(format!("coding positions are not a permutation of 0..{n}")));
            }
            seen[p] = true;
        }
        if let Some(a) = &self.affines {
            if a.len() != n {
                return Err(Error::Container(format!("{} transform blobs for {n} volumes", a.len())));
            }
        }
        Ok(())
    }
}

fn push_blob(out: &mut Vec<u8>, blob: &[u8]) -> Result<()> {
    let len = u32::try_from(blob.len()).map_err(|_| Error::Container("blob larger than 4 GiB".into()))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(blob);
    Ok(())
}

pub fn serialize(c: &Container) -> Result<Vec<u8>> {
    c.validate()?;
    let n = c.records.len();
    let sizes = c.size_breakdown();
    let mut out = Vec::with_capacity(sizes.total());

    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(if c.motion() { FLAG_MOTION } else { 0 });
    out.extend_from_slice(&(n as u16).to_le_bytes());

    // Payloads go in coding order right after the blobs.
    let mut offsets = vec![0u64; n];
    let mut cursor =
        (sizes.fixed_header + sizes.directory + sizes.nifti_header + sizes.gradients + sizes.affines) as u64;
    let order = c.coding_order();
    for &i in &order {
        offsets[i] = cursor;
        cursor += c.records[i].payload.len() as u64;
    }
    for (i, r) in c.records.iter().enumerate() {
        out.push(r.kind.code());
        out.extend_from_slice(&r.position.to_le_bytes());
        out.extend_from_slice(&offsets[i].to_le_bytes());
        out.extend_from_slice(&(r.payload.len() as u64).to_le_bytes());
    }

    push_blob(&mut out, &c.nifti_header)?;
    push_blob(&mut out, &c.bval_ascii)?;
    push_blob(&mut out, &c.bvec_ascii)?;
    if let Some(affines) = &c.affines {
        for a in affines {
            push_blob(&mut out, a)?;
        }
    }
    for &i in &order {
        out.extend_from_slice(&c.records[i].payload);
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    debug_assert_eq!(out.len(), sizes.total());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Container("unexpected end of data".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_bits(self.u32()?))
    }

    fn blob(&mut self) -> Result<Vec<u8>> {
        let len = self.u32()? as usize;
        Ok(self.take(len)?.to_vec())
    }
}

pub fn parse(bytes: &[u8]) -> Result<Container> {
    if bytes.len() < FIXED_HEADER_LEN + FOOTER_LEN {
        return Err(Error::Container("file too short".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Container("bad magic".into()));
    }
    let body_len = bytes.len() - FOOTER_LEN;
    let stored = u32::from_le_bytes(bytes[body_len..].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[..body_len]);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let body = &bytes[..body_len];
    let mut r = Reader { bytes: body, pos: 4 };

    let version = r.u8()?;
    if version != VERSION {
        return Err(Error::Container(format!("unsupported version {version}")));
    }
    let flags = r.u8()?;
    if flags & !FLAG_MOTION != 0 {
        return Err(Error::Container(format!("reserved flag bits set ({flags:#04x})")));
    }
    let n = r.u16()? as usize;
    if n == 0 {
        return Err(Error::Container("container holds no volumes".into()));
    }

    let mut entries = Vec::with_capacity(n);
    for _ in 0..n {
        let kind = RecordKind::from_code(r.u8()?)?;
        let position = r.u16()?;
        let offset = r.u64()?;
        let length = r.u64()?;
        entries.push((kind, position, offset, length));
    }

    let nifti_header = r.blob()?;
    if nifti_header.len() != HEADER_SIZE {
        return Err(Error::Container(format!(
            "NIfTI header blob is {} bytes, expected {HEADER_SIZE}",
            nifti_header.len()
        )));
    }
    let bval_ascii = r.blob()?;
    let bvec_ascii = r.blob()?;
    let affines =
        if flags & FLAG_MOTION != 0 { Some((0..n).map(|_| r.blob()).collect::<Result<Vec<_>>>()?) } else { None };
    let payload_start = r.pos as u64;

    let mut spans: Vec<(u64, u64)> = Vec::with_capacity(n);
    let mut records = Vec::with_capacity(n);
    for &(kind, position, offset, length) in &entries {
        let end = offset
            .checked_add(length)
            .filter(|&e| offset >= payload_start && e <= body_len as u64)
            .ok_or_else(|| Error::Container(format!("record at {offset}+{length} out of range")))?;
        spans.push((offset, end));
        records.push(Record { kind, position, payload: body[offset as usize..end as usize].to_vec() });
    }
    spans.sort_unstable();
    if spans.windows(2).any(|w| w[1].0 < w[0].1) {
        return Err(Error::Container("overlapping records".into()));
    }

    let c = Container { nifti_header, bval_ascii, bvec_ascii, affines, records };
    c.validate()?;
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdeType {
    Eed,
    /// Reserved code for a fourth-order variant; never written.
    Foeed,
}

/// Header of an image-space coded volume (17 bytes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialRecordHeader {
    pub min: u16,
    pub max: u16,
    pub zero_mask_len: u32,
    pub intensity_len: u32,
    pub lambda: f32,
    pub pde: PdeType,
    pub intensity_coder: Coder,
    pub residual_coder: Coder,
}

impl SpatialRecordHeader {
    pub const LEN: usize = 17;

    pub fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.min.to_le_bytes());
        out.extend_from_slice(&self.max.to_le_bytes());
        out.extend_from_slice(&self.zero_mask_len.to_le_bytes());
        out.extend_from_slice(&self.intensity_len.to_le_bytes());
        out.extend_from_slice(&self.lambda.to_bits().to_le_bytes());
        let pde = match self.pde {
            PdeType::Eed => 0u8,
            PdeType::Foeed => 1,
        };
        out.push(pde | self.intensity_coder.bit() << 3 | self.residual_coder.bit() << 4);
    }

    pub fn read(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let min = r.u16()?;
        let max = r.u16()?;
        let zero_mask_len = r.u32()?;
        let intensity_len = r.u32()?;
        let lambda = r.f32()?;
        let flags = r.u8()?;
        if min > max {
            return Err(Error::Container(format!("spatial record min {min} > max {max}")));
        }
        if flags & 0b1110_0100 != 0 {
            return Err(Error::Container(format!("reserved bits set in spatial record flags ({flags:#04x})")));
        }
        let pde = match flags & 0b11 {
            0 => PdeType::Eed,
            1 => PdeType::Foeed,
            p => return Err(Error::Container(format!("unknown PDE type {p}"))),
        };
        Ok(SpatialRecordHeader {
            min,
            max,
            zero_mask_len,
            intensity_len,
            lambda,
            pde,
            intensity_coder: Coder::from_bit(flags >> 3 & 1),
            residual_coder: Coder::from_bit(flags >> 4 & 1),
        })
    }
}

/// Predictor of a q-space or b=0 difference record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PredictorCode {
    Lh,
    Bh,
    Dti,
    B0Diff,
}

impl PredictorCode {
    pub fn code(self) -> u8 {
        match self {
            PredictorCode::Lh => 0,
            PredictorCode::Bh => 1,
            PredictorCode::Dti => 2,
            PredictorCode::B0Diff => 3,
        }
    }

    fn from_code(c: u8) -> Self {
        match c & 0b11 {
            0 => PredictorCode::Lh,
            1 => PredictorCode::Bh,
            2 => PredictorCode::Dti,
            _ => PredictorCode::B0Diff,
        }
    }
}

/// Header of a q-space or b=0 difference record (7 bytes).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QspaceRecordHeader {
    pub min: u16,
    pub max: u16,
    pub predictor: PredictorCode,
    pub residual_coder: Coder,
    pub original_index: u16,
}

impl QspaceRecordHeader {
    pub const LEN: usize = 7;

    pub fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.min.to_le_bytes());
        out.extend_from_slice(&self.max.to_le_bytes());
        out.push(self.predictor.code() | self.residual_coder.bit() << 2);
        out.extend_from_slice(&self.original_index.to_le_bytes());
    }

    pub fn read(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let min = r.u16()?;
        let max = r.u16()?;
        let flags = r.u8()?;
        let original_index = r.u16()?;
        if min > max {
            return Err(Error::Container(format!("q-space record min {min} > max {max}")));
        }
        if flags & 0b1111_1000 != 0 {
            return Err(Error::Container(format!("reserved bits set in q-space record flags ({flags:#04x})")));
        }
        Ok(QspaceRecordHeader {
            min,
            max,
            predictor: PredictorCode::from_code(flags),
            residual_coder: Coder::from_bit(flags >> 2 & 1),
            original_index,
        })
    }
}
