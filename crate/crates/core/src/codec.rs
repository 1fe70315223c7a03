//! Compression and decompression of whole datasets.
//!
//! Coding order: the first b=0 volume (image-space codec), the remaining
//! b=0 volumes as residuals against it, then each shell's diffusion-weighted
//! volumes in the chosen direction order. The first volume of a shell is
//! coded in image space. Later ones are predicted in q-space from the
//! shell's already coded volumes; while the image-space codec still wins
//! the size comparison it keeps being tried, and after the first q-space win
//! only q-space is used.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::coding::{choose_stream, decode_stream, residuals};
use crate::container::{self, Container, PredictorCode, QspaceRecordHeader, Record, RecordKind, SizeBreakdown};
use crate::dti::DtiPredictor;
use crate::error::{Error, Result};
use crate::io::gradients::{read_gradients, table_with_b0_group, DEFAULT_B0_THRESHOLD};
use crate::io::{
    read_affine_ascii, read_nifti, write_affine_flirt, write_nifti, AffineTransform, GradientTable, NiftiHeaderBlob,
};
use crate::motion::{compose_to_target, register_affine, reorient_gradient, resample_quantized, RegistrationParams};
use crate::qspace::{
    assemble_operators, build_sphere_mesh, order_volumes, predict_volume, weights_on_mesh, FemOperators,
    OrderingStrategy, PdeKind, SphereMesh,
};
use crate::spatial::{decode_volume_spatial, encode_volume_spatial, DEFAULT_LAMBDA};
use crate::volume::{Dims, Volume};

/// Minimum number of known directions for a tensor fit.
pub const DTI_MIN_KNOWN: usize = 6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum QspacePredictor {
    #[default]
    Lh,
    Bh,
    Dti,
}

impl QspacePredictor {
    pub fn name(self) -> &'static str {
        match self {
            QspacePredictor::Lh => "lh",
            QspacePredictor::Bh => "bh",
            QspacePredictor::Dti => "dti",
        }
    }

    fn code(self) -> PredictorCode {
        match self {
            QspacePredictor::Lh => PredictorCode::Lh,
            QspacePredictor::Bh => PredictorCode::Bh,
            QspacePredictor::Dti => PredictorCode::Dti,
        }
    }

    fn from_code(code: PredictorCode) -> Result<Self> {
        match code {
            PredictorCode::Lh => Ok(QspacePredictor::Lh),
            PredictorCode::Bh => Ok(QspacePredictor::Bh),
            PredictorCode::Dti => Ok(QspacePredictor::Dti),
            PredictorCode::B0Diff => Err(Error::Container("b=0 difference code in a q-space record".into())),
        }
    }
}

impl FromStr for QspacePredictor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lh" => Ok(QspacePredictor::Lh),
            "bh" => Ok(QspacePredictor::Bh),
            "dti" => Ok(QspacePredictor::Dti),
            _ => Err(Error::Options(format!("unknown q-space predictor {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub enum MotionMode {
    #[default]
    Off,
    /// Register every volume to the first b=0 volume.
    Builtin,
    /// One FLIRT-style matrix text per volume, mapping its voxel
    /// coordinates to those of the common reference. Stored verbatim.
    Import(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodecOptions {
    pub predictor: QspacePredictor,
    pub ordering: OrderingStrategy,
    pub motion: MotionMode,
    /// EED contrast parameter of the image-space codec.
    pub lambda: f32,
    /// Number of volumes per shell coded in image space before q-space
    /// prediction takes over without size trials. `None` means adaptive for
    /// LH/BH and 6 for DTI.
    pub spatial_split: Option<usize>,
    /// Code every volume with the image-space codec.
    pub spatial_only: bool,
    pub registration: RegistrationParams,
}

impl Default for CodecOptions {
    fn default() -> Self {
        CodecOptions {
            predictor: QspacePredictor::Lh,
            ordering: OrderingStrategy::Furthest,
            motion: MotionMode::Off,
            lambda: DEFAULT_LAMBDA,
            spatial_split: None,
            spatial_only: false,
            registration: RegistrationParams::default(),
        }
    }
}

impl CodecOptions {
    fn split(&self) -> Result<Option<usize>> {
        match (self.predictor, self.spatial_split) {
            (QspacePredictor::Dti, Some(s)) if s < DTI_MIN_KNOWN => Err(Error::Options(format!(
                "DTI needs at least {DTI_MIN_KNOWN} image-space volumes per shell, got {s}"
            ))),
            (QspacePredictor::Dti, None) => Ok(Some(DTI_MIN_KNOWN)),
            (_, Some(0)) => Err(Error::Options("spatial split must be at least 1".into())),
            (_, s) => Ok(s),
        }
    }
}

/// A 4D diffusion dataset: volumes, the verbatim NIfTI header and the
/// gradient table with its verbatim ASCII sources.
#[derive(Debug, Clone, PartialEq)]
pub struct DwiDataset {
    pub header: NiftiHeaderBlob,
    pub volumes: Vec<Volume>,
    pub gradients: GradientTable,
}

fn utf8(bytes: &[u8], what: &str) -> Result<String> {
    String::from_utf8(bytes.to_vec()).map_err(|_| Error::Gradients(format!("{what} file is not UTF-8")))
}

impl DwiDataset {
    pub fn new(header: NiftiHeaderBlob, volumes: Vec<Volume>, gradients: GradientTable) -> Result<Self> {
        if volumes.len() != header.nvol() || volumes.iter().any(|v| v.dims != header.dims()) {
            return Err(Error::DimensionMismatch("volumes do not match the NIfTI header".into()));
        }
        if gradients.len() != volumes.len() {
            return Err(Error::Gradients(format!(
                "{} gradient entries for {} volumes",
                gradients.len(),
                volumes.len()
            )));
        }
        Ok(DwiDataset { header, volumes, gradients })
    }

    pub fn from_bytes(nifti: &[u8], bval: &[u8], bvec: &[u8], b0_threshold: f64) -> Result<Self> {
        let (header, volumes) = read_nifti(nifti)?;
        let gradients = read_gradients(&utf8(bval, "bval")?, &utf8(bvec, "bvec")?, b0_threshold)?;
        Self::new(header, volumes, gradients)
    }

    pub fn dims(&self) -> Dims {
        self.header.dims()
    }

    pub fn nifti_bytes(&self) -> Result<Vec<u8>> {
        write_nifti(&self.header, &self.volumes)
    }

    pub fn bval_bytes(&self) -> &[u8] {
        &self.gradients.bval_ascii
    }

    pub fn bvec_bytes(&self) -> &[u8] {
        &self.gradients.bvec_ascii
    }
}

/// Prediction state shared by encoder and decoder. Everything here is
/// derived from data the decoder has too.
struct Predictor<'a> {
    gradients: &'a GradientTable,
    transforms: Option<Vec<AffineTransform>>,
    reference: Option<usize>,
    /// Mesh over all directions of each shell, for the no-motion case.
    static_meshes: Vec<Option<Option<(SphereMesh, FemOperators)>>>,
}

impl<'a> Predictor<'a> {
    fn new(gradients: &'a GradientTable, transforms: Option<Vec<AffineTransform>>) -> Self {
        Predictor {
            gradients,
            transforms,
            reference: gradients.b0.first().copied(),
            static_meshes: vec![None; gradients.shells.len()],
        }
    }

    /// Transform taking volume `x` into the space of volume `p`.
    fn to_space_of(&self, x: usize, p: usize) -> Result<Option<AffineTransform>> {
        match &self.transforms {
            None => Ok(None),
            Some(t) => compose_to_target(&t[x], &t[p]).map(Some),
        }
    }

    fn in_space_of(&self, volume: &Volume, x: usize, p: usize) -> Result<Volume> {
        match self.to_space_of(x, p)? {
            Some(t) if !t.is_identity() => resample_quantized(volume, &t),
            _ => Ok(volume.clone()),
        }
    }

    fn predict_b0(&self, target: usize, decoded: &[Option<&Volume>], lo: u16, hi: u16) -> Result<Volume> {
        let r = self.reference.ok_or_else(|| Error::Dataset("no b=0 reference volume".into()))?;
        let v = decoded[r].ok_or_else(|| Error::Container("b=0 reference not decoded yet".into()))?;
        Ok(clamp(self.in_space_of(v, r, target)?, lo, hi))
    }

    fn static_mesh(&mut self, shell: usize) -> Option<&(SphereMesh, FemOperators)> {
        if self.static_meshes[shell].is_none() {
            let dirs: Vec<[f64; 3]> =
                self.gradients.shells[shell].indices.iter().map(|&i| self.gradients.bvecs[i]).collect();
            let built = build_sphere_mesh(&dirs).and_then(|m| assemble_operators(&m).map(|o| (m, o)));
            self.static_meshes[shell] = Some(built.ok());
        }
        self.static_meshes[shell].as_ref().unwrap().as_ref()
    }

    /// q-space prediction of `target` from `known` (volume indices of the
    /// same shell, in coding order). `None` when the configuration admits
    /// no prediction: a degenerate mesh, or too few directions for DTI.
    #[allow(clippy::too_many_arguments)]
    fn predict_qspace(
        &mut self,
        kind: QspacePredictor,
        shell: usize,
        target: usize,
        known: &[usize],
        decoded: &[Option<&Volume>],
        lo: u16,
        hi: u16,
    ) -> Result<Option<Volume>> {
        if known.is_empty() {
            return Ok(None);
        }
        let get = |i: usize| decoded[i].ok_or_else(|| Error::Container(format!("volume {i} not decoded yet")));
        let motion = self.transforms.is_some();
        let mut known_vols = Vec::with_capacity(known.len());
        let mut known_dirs = Vec::with_capacity(known.len());
        for &x in known {
            let v = get(x)?;
            let g = self.gradients.bvecs[x];
            match self.to_space_of(x, target)? {
                Some(t) if motion => {
                    known_vols.push(if t.is_identity() { v.clone() } else { resample_quantized(v, &t)? });
                    known_dirs.push(reorient_gradient(g, &t)?);
                }
                _ => {
                    known_vols.push(v.clone());
                    known_dirs.push(g);
                }
            }
        }
        let refs: Vec<&Volume> = known_vols.iter().collect();
        let target_dir = self.gradients.bvecs[target];

        let pde = match kind {
            QspacePredictor::Dti => {
                if known.len() < DTI_MIN_KNOWN {
                    return Ok(None);
                }
                let Ok(p) = DtiPredictor::new(&known_dirs, target_dir) else {
                    return Ok(None);
                };
                let r = self.reference.ok_or_else(|| Error::Dataset("DTI needs a b=0 volume".into()))?;
                let s0 = self.in_space_of(get(r)?, r, target)?;
                return p.predict_volume(&s0, &refs, lo, hi).map(Some);
            }
            QspacePredictor::Lh => PdeKind::Lh,
            QspacePredictor::Bh => PdeKind::Bh,
        };

        let row = if motion {
            let mut dirs = known_dirs;
            dirs.push(target_dir);
            let Ok(mesh) = build_sphere_mesh(&dirs) else {
                return Ok(None);
            };
            let Ok(ops) = assemble_operators(&mesh) else {
                return Ok(None);
            };
            let channels: Vec<usize> = (0..known.len()).collect();
            weights_on_mesh(&mesh, &ops, &channels, &[known.len()], pde)?.fixed.remove(0)
        } else {
            let indices = &self.gradients.shells[shell].indices;
            let local = |v: usize| indices.iter().position(|&i| i == v).unwrap();
            let channels: Vec<usize> = known.iter().map(|&x| local(x)).collect();
            let t = local(target);
            let Some((mesh, ops)) = self.static_mesh(shell) else {
                return Ok(None);
            };
            weights_on_mesh(mesh, ops, &channels, &[t], pde)?.fixed.remove(0)
        };
        Ok(Some(clamp(predict_volume(&refs, &row)?, lo, hi)))
    }
}

fn clamp(mut v: Volume, lo: u16, hi: u16) -> Volume {
    for s in &mut v.samples {
        *s = (*s).clamp(lo, hi);
    }
    v
}

fn residual_record(original: &Volume, prediction: &Volume, code: PredictorCode, index: usize) -> Result<Vec<u8>> {
    let (min, max) = original.min_max();
    let stream = choose_stream(&residuals(&original.samples, &prediction.samples)?);
    let header =
        QspaceRecordHeader { min, max, predictor: code, residual_coder: stream.coder, original_index: index as u16 };
    let mut out = Vec::with_capacity(QspaceRecordHeader::LEN + stream.len());
    header.write(&mut out);
    out.extend_from_slice(&stream.bytes);
    Ok(out)
}

fn motion_texts(dataset: &DwiDataset, options: &CodecOptions) -> Result<Option<Vec<String>>> {
    let n = dataset.volumes.len();
    match &options.motion {
        MotionMode::Off => Ok(None),
        MotionMode::Import(texts) => {
            if texts.len() != n {
                return Err(Error::Options(format!("{} imported transforms for {n} volumes", texts.len())));
            }
            Ok(Some(texts.clone()))
        }
        MotionMode::Builtin => {
            let r = *dataset
                .gradients
                .b0
                .first()
                .ok_or_else(|| Error::Dataset("motion correction needs a b=0 volume".into()))?;
            let reference = &dataset.volumes[r];
            let transforms: Vec<AffineTransform> = (0..n)
                .into_par_iter()
                .map(|i| {
                    if i == r {
                        Ok(AffineTransform::identity())
                    } else {
                        register_affine(&dataset.volumes[i], reference, &options.registration)
                    }
                })
                .collect::<Result<_>>()?;
            Ok(Some(transforms.iter().map(write_affine_flirt).collect()))
        }
    }
}

fn parse_transforms(texts: &[Vec<u8>]) -> Result<Vec<AffineTransform>> {
    texts
        .iter()
        .map(|t| read_affine_ascii(std::str::from_utf8(t).map_err(|_| Error::Affine("transform is not UTF-8".into()))?))
        .collect()
}

/// Compresses a dataset into the single-file container format.
pub fn compress(dataset: &DwiDataset, options: &CodecOptions) -> Result<Vec<u8>> {
    let n = dataset.volumes.len();
    if n == 0 {
        return Err(Error::Dataset("dataset has no volumes".into()));
    }
    if n > u16::MAX as usize {
        return Err(Error::Dataset(format!("{n} volumes exceed the format limit")));
    }
    let split = options.split()?;
    let g = &dataset.gradients;
    if options.predictor == QspacePredictor::Dti && g.b0.is_empty() && !options.spatial_only {
        return Err(Error::Dataset("DTI prediction needs a b=0 volume".into()));
    }

    let texts = motion_texts(dataset, options)?;
    let blobs: Option<Vec<Vec<u8>>> = texts.map(|t| t.into_iter().map(String::into_bytes).collect());
    let transforms = blobs.as_deref().map(parse_transforms).transpose()?;
    let mut predictor = Predictor::new(g, transforms);

    let mut records: Vec<Option<Record>> = vec![None; n];
    let mut decoded: Vec<Option<&Volume>> = vec![None; n];
    let mut position = 0u16;
    let mut emit = |records: &mut Vec<Option<Record>>, i: usize, kind: RecordKind, payload: Vec<u8>| {
        records[i] = Some(Record { kind, position, payload });
        position += 1;
    };

    for (k, &i) in g.b0.iter().enumerate() {
        let v = &dataset.volumes[i];
        if k == 0 || options.spatial_only {
            emit(&mut records, i, RecordKind::Reference, encode_volume_spatial(v, options.lambda)?);
        } else {
            let (lo, hi) = v.min_max();
            let p = predictor.predict_b0(i, &decoded, lo, hi)?;
            emit(&mut records, i, RecordKind::B0Diff, residual_record(v, &p, PredictorCode::B0Diff, i)?);
        }
        decoded[i] = Some(v);
    }

    for (s, shell) in g.shells.iter().enumerate() {
        let dirs: Vec<[f64; 3]> = shell.indices.iter().map(|&i| g.bvecs[i]).collect();
        let order: Vec<usize> =
            order_volumes(&dirs, options.ordering, 0).into_iter().map(|k| shell.indices[k]).collect();
        let mut trial = split.is_none();
        let mut known: Vec<usize> = Vec::new();
        for (k, &i) in order.iter().enumerate() {
            let v = &dataset.volumes[i];
            let image_space = options.spatial_only || k == 0 || split.is_some_and(|s| k < s);
            let prediction = if image_space {
                None
            } else {
                let (lo, hi) = v.min_max();
                predictor.predict_qspace(options.predictor, s, i, &known, &decoded, lo, hi)?
            };
            match prediction {
                None => emit(&mut records, i, RecordKind::Spatial, encode_volume_spatial(v, options.lambda)?),
                Some(p) => {
                    let q = residual_record(v, &p, options.predictor.code(), i)?;
                    if trial {
                        let sp = encode_volume_spatial(v, options.lambda)?;
                        if sp.len() < q.len() {
                            emit(&mut records, i, RecordKind::Spatial, sp);
                        } else {
                            trial = false;
                            emit(&mut records, i, RecordKind::Qspace, q);
                        }
                    } else {
                        emit(&mut records, i, RecordKind::Qspace, q);
                    }
                }
            }
            decoded[i] = Some(v);
            known.push(i);
        }
    }

    let c = Container {
        nifti_header: dataset.header.raw().to_vec(),
        bval_ascii: g.bval_ascii.clone(),
        bvec_ascii: g.bvec_ascii.clone(),
        affines: blobs,
        records: records.into_iter().map(|r| r.expect("every volume is coded")).collect(),
    };
    container::serialize(&c)
}

fn b0_group(c: &Container) -> Vec<usize> {
    (0..c.records.len()).filter(|&i| matches!(c.records[i].kind, RecordKind::Reference | RecordKind::B0Diff)).collect()
}

/// Restores the dataset from a container.
pub fn decompress(bytes: &[u8]) -> Result<DwiDataset> {
    let c = container::parse(bytes)?;
    let header = NiftiHeaderBlob::from_raw(&c.nifti_header)?;
    let (dims, n) = (header.dims(), header.nvol());
    if n != c.records.len() {
        return Err(Error::Container(format!("header declares {n} volumes, container holds {}", c.records.len())));
    }
    let b0 = b0_group(&c);
    let g = table_with_b0_group(&utf8(&c.bval_ascii, "bval")?, &utf8(&c.bvec_ascii, "bvec")?, b0)?;
    if g.len() != n {
        return Err(Error::Container(format!("{} gradient entries for {n} volumes", g.len())));
    }
    if let Some(&r) = g.b0.first() {
        if c.records[r].kind != RecordKind::Reference {
            return Err(Error::Container("first b=0 volume is not image-space coded".into()));
        }
    }
    let transforms = c.affines.as_deref().map(parse_transforms).transpose()?;
    let mut predictor = Predictor::new(&g, transforms);

    let mut volumes: Vec<Option<Volume>> = vec![None; n];
    let mut known: Vec<Vec<usize>> = vec![Vec::new(); g.shells.len()];
    for i in c.coding_order() {
        let rec = &c.records[i];
        let volume = match rec.kind {
            RecordKind::Spatial | RecordKind::Reference => decode_volume_spatial(&rec.payload, dims)?,
            RecordKind::B0Diff | RecordKind::Qspace => {
                let h = QspaceRecordHeader::read(&rec.payload)?;
                if h.original_index as usize != i {
                    return Err(Error::Container(format!("record {i} claims original index {}", h.original_index)));
                }
                let view: Vec<Option<&Volume>> = volumes.iter().map(Option::as_ref).collect();
                let prediction = if rec.kind == RecordKind::B0Diff {
                    if h.predictor != PredictorCode::B0Diff {
                        return Err(Error::Container("b=0 difference record with a q-space predictor".into()));
                    }
                    predictor.predict_b0(i, &view, h.min, h.max)?
                } else {
                    let kind = QspacePredictor::from_code(h.predictor)?;
                    let s = g.shell_of(i).ok_or_else(|| Error::Container(format!("volume {i} is in no shell")))?;
                    predictor
                        .predict_qspace(kind, s, i, &known[s], &view, h.min, h.max)?
                        .ok_or_else(|| Error::Container(format!("no q-space prediction possible for volume {i}")))?
                };
                let r = decode_stream(h.residual_coder, &rec.payload[QspaceRecordHeader::LEN..], dims.len())?;
                Volume::new(dims, crate::coding::apply_residuals(&prediction.samples, &r)?)?
            }
        };
        if let Some(s) = g.shell_of(i) {
            known[s].push(i);
        }
        volumes[i] = Some(volume);
    }
    DwiDataset::new(header, volumes.into_iter().map(Option::unwrap).collect(), g)
}

/// Per-record entry of a [`Report`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordInfo {
    pub index: usize,
    pub position: usize,
    pub kind: RecordKind,
    /// `spatial`, `reference`, `b0diff`, `lh`, `bh` or `dti`.
    pub method: &'static str,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub records: Vec<RecordInfo>,
    pub sizes: SizeBreakdown,
    pub total: usize,
    pub motion: bool,
    pub qspace: usize,
    pub spatial_dwi: usize,
    pub spatial_b0: usize,
    pub b0diff: usize,
    pub raw_size: Option<usize>,
    pub deflate_raw_size: Option<usize>,
}

impl Report {
    pub fn ratio_vs_deflate(&self) -> Option<f64> {
        self.deflate_raw_size.map(|d| self.total as f64 / d as f64)
    }

    /// Same content as the `Display` form, as a JSON object.
    pub fn to_json(&self) -> String {
        let opt = |v: Option<usize>| v.map_or("null".to_string(), |v| v.to_string());
        let records: Vec<String> = self
            .records
            .iter()
            .map(|r| {
                format!(
                    "{{\"index\":{},\"position\":{},\"kind\":\"{}\",\"method\":\"{}\",\"bytes\":{}}}",
                    r.index,
                    r.position,
                    r.kind.name(),
                    r.method,
                    r.bytes
                )
            })
            .collect();
        format!(
            "{{\"total_bytes\":{},\"overhead_bytes\":{},\"motion\":{},\"qspace\":{},\"spatial_dwi\":{},\"spatial_b0\":{},\"b0diff\":{},\"raw_bytes\":{},\"deflate_raw_bytes\":{},\"records\":[{}]}}",
            self.total,
            self.sizes.overhead(),
            self.motion,
            self.qspace,
            self.spatial_dwi,
            self.spatial_b0,
            self.b0diff,
            opt(self.raw_size),
            opt(self.deflate_raw_size),
            records.join(",")
        )
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "total_bytes={}", self.total)?;
        writeln!(f, "overhead_bytes={}", self.sizes.overhead())?;
        writeln!(f, "record_bytes={}", self.sizes.records.iter().sum::<usize>())?;
        writeln!(f, "motion={}", self.motion)?;
        writeln!(f, "split_dwi={}/{}", self.qspace, self.spatial_dwi)?;
        writeln!(f, "split_with_b0={}/{}", self.qspace, self.spatial_dwi + self.spatial_b0)?;
        writeln!(f, "b0diff={}", self.b0diff)?;
        if let Some(raw) = self.raw_size {
            writeln!(f, "raw_bytes={raw}")?;
        }
        if let (Some(d), Some(r)) = (self.deflate_raw_size, self.ratio_vs_deflate()) {
            writeln!(f, "deflate_raw_bytes={d}")?;
            writeln!(f, "size_vs_deflate={r:.6}")?;
        }
        for r in &self.records {
            writeln!(
                f,
                "record index={} position={} kind={} method={} bytes={}",
                r.index,
                r.position,
                r.kind.name(),
                r.method,
                r.bytes
            )?;
        }
        Ok(())
    }
}

/// Sizes and coding decisions of a container. With `raw`, also compares
/// against DEFLATE of those bytes.
pub fn stats(bytes: &[u8], raw: Option<&[u8]>) -> Result<Report> {
    let c = container::parse(bytes)?;
    let sizes = c.size_breakdown();
    let mut records = Vec::with_capacity(c.records.len());
    let (mut qspace, mut spatial_dwi, mut spatial_b0, mut b0diff) = (0, 0, 0, 0);
    for (i, r) in c.records.iter().enumerate() {
        let method = match r.kind {
            RecordKind::Spatial => {
                spatial_dwi += 1;
                "spatial"
            }
            RecordKind::Reference => {
                spatial_b0 += 1;
                "reference"
            }
            RecordKind::B0Diff => {
                b0diff += 1;
                "b0diff"
            }
            RecordKind::Qspace => {
                qspace += 1;
                match QspaceRecordHeader::read(&r.payload)?.predictor {
                    PredictorCode::Lh => "lh",
                    PredictorCode::Bh => "bh",
                    PredictorCode::Dti => "dti",
                    PredictorCode::B0Diff => "b0diff",
                }
            }
        };
        records.push(RecordInfo {
            index: i,
            position: r.position as usize,
            kind: r.kind,
            method,
            bytes: r.payload.len(),
        });
    }
    records.sort_by_key(|r| r.position);
    Ok(Report {
        records,
        total: sizes.total(),
        sizes,
        motion: c.motion(),
        qspace,
        spatial_dwi,
        spatial_b0,
        b0diff,
        raw_size: raw.map(<[u8]>::len),
        deflate_raw_size: raw.map(|r| crate::coding::deflate_encode(r).len()),
    })
}

/// Default b=0 threshold, re-exported for front ends.
pub const B0_THRESHOLD: f64 = DEFAULT_B0_THRESHOLD;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::gradients::format_fsl;
    use crate::io::write_affine_ascii;

    /// Small single-shell dataset with smooth anisotropic signal.
    fn dataset(d: Dims, n_b0: usize, dirs: &[[f64; 3]], bval: f64) -> DwiDataset {
        let mut bvals = vec![0.0; n_b0];
        let mut bvecs = vec![[0.0; 3]; n_b0];
        for &g in dirs {
            bvals.push(bval);
            bvecs.push(g);
        }
        let n = bvals.len();
        let volumes: Vec<Volume> = (0..n)
            .map(|k| {
                let g = bvecs[k];
                let samples = (0..d.len())
                    .map(|i| {
                        let (x, y, z) = d.coords(i);
                        let s0 = 800.0 + 30.0 * x as f64 + 20.0 * y as f64 + 10.0 * z as f64;
                        let dxx = 1.5e-3 * (1.0 + 0.1 * x as f64 / d.nx as f64);
                        let q = dxx * g[0] * g[0] + 0.4e-3 * g[1] * g[1] + 0.6e-3 * g[2] * g[2];
                        (s0 * (-bvals[k] * q).exp()).round() as u16
                    })
                    .collect();
                Volume::new(d, samples).unwrap()
            })
            .collect();
        let (bval_text, bvec_text) = format_fsl(&bvals, &bvecs);
        let header = NiftiHeaderBlob::new_u16(d, n, [2.0; 3]).unwrap();
        let g = read_gradients(&bval_text, &bvec_text, DEFAULT_B0_THRESHOLD).unwrap();
        DwiDataset::new(header, volumes, g).unwrap()
    }

    fn dirs(n: usize) -> Vec<[f64; 3]> {
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        (0..n)
            .map(|i| {
                let z = 1.0 - (i as f64 + 0.5) / n as f64;
                let r = (1.0 - z * z).sqrt();
                [r * (golden * i as f64).cos(), r * (golden * i as f64).sin(), z]
            })
            .collect()
    }

    fn roundtrip(ds: &DwiDataset, o: &CodecOptions) -> Vec<u8> {
        let bytes = compress(ds, o).unwrap();
        let back = decompress(&bytes).unwrap();
        assert_eq!(back.nifti_bytes().unwrap(), ds.nifti_bytes().unwrap());
        assert_eq!(back.bval_bytes(), ds.bval_bytes());
        assert_eq!(back.bvec_bytes(), ds.bvec_bytes());
        bytes
    }

    #[test]
    fn predictors_roundtrip() {
        let ds = dataset(Dims::new(6, 5, 4), 2, &dirs(9), 1000.0);
        for predictor in [QspacePredictor::Lh, QspacePredictor::Bh, QspacePredictor::Dti] {
            for ordering in [OrderingStrategy::Furthest, OrderingStrategy::Closest, OrderingStrategy::Original] {
                roundtrip(&ds, &CodecOptions { predictor, ordering, ..Default::default() });
            }
        }
    }

    #[test]
    fn single_volume() {
        let ds = dataset(Dims::new(4, 4, 4), 1, &[], 0.0);
        let bytes = roundtrip(&ds, &CodecOptions::default());
        let r = stats(&bytes, None).unwrap();
        assert_eq!(r.records.len(), 1);
        assert_eq!(r.records[0].kind, RecordKind::Reference);
    }

    #[test]
    fn identical_dwis_switch_immediately() {
        let mut ds = dataset(Dims::new(8, 8, 6), 1, &dirs(6), 1000.0);
        let first = ds.volumes[1].clone();
        for v in &mut ds.volumes[1..] {
            *v = first.clone();
        }
        let bytes = roundtrip(&ds, &CodecOptions::default());
        let r = stats(&bytes, None).unwrap();
        assert_eq!(r.qspace, 5);
        assert_eq!(r.spatial_dwi, 1);
    }

    #[test]
    fn motion_modes_roundtrip() {
        let ds = dataset(Dims::new(10, 9, 8), 2, &dirs(7), 700.0);
        let fast = RegistrationParams { max_iterations: 10, ..Default::default() };
        roundtrip(&ds, &CodecOptions { motion: MotionMode::Builtin, registration: fast, ..Default::default() });
        let texts: Vec<String> =
            (0..9).map(|i| write_affine_ascii(&AffineTransform::translation([0.1 * i as f64, -0.3, 0.05]))).collect();
        for predictor in [QspacePredictor::Lh, QspacePredictor::Dti] {
            let bytes = roundtrip(
                &ds,
                &CodecOptions { predictor, motion: MotionMode::Import(texts.clone()), ..Default::default() },
            );
            assert!(stats(&bytes, None).unwrap().motion);
        }
    }

    #[test]
    fn stats_accounting() {
        let ds = dataset(Dims::new(6, 6, 5), 2, &dirs(8), 1000.0);
        let bytes = compress(&ds, &CodecOptions::default()).unwrap();
        let raw = ds.nifti_bytes().unwrap();
        let r = stats(&bytes, Some(&raw)).unwrap();
        assert_eq!(r.total, bytes.len());
        assert_eq!(r.records.iter().map(|x| x.bytes).sum::<usize>() + r.sizes.overhead(), bytes.len());
        assert_eq!(r.qspace + r.spatial_dwi + r.spatial_b0 + r.b0diff, 10);
        let text = r.to_string();
        assert!(text.contains("split_dwi=") && text.contains("split_with_b0="));
        assert!(r.to_json().starts_with('{'));
    }

    #[test]
    fn deterministic_containers() {
        let ds = dataset(Dims::new(6, 5, 4), 1, &dirs(7), 1000.0);
        let o = CodecOptions { ordering: OrderingStrategy::Original, ..Default::default() };
        assert_eq!(compress(&ds, &o).unwrap(), compress(&ds, &o).unwrap());
    }

    #[test]
    fn switch_is_monotone() {
        let ds = dataset(Dims::new(8, 8, 6), 1, &dirs(12), 1000.0);
        let bytes = compress(&ds, &CodecOptions::default()).unwrap();
        let r = stats(&bytes, None).unwrap();
        let dwi: Vec<RecordKind> = r.records.iter().filter(|x| x.index >= 1).map(|x| x.kind).collect();
        if let Some(first_q) = dwi.iter().position(|&k| k == RecordKind::Qspace) {
            assert!(dwi[first_q..].iter().all(|&k| k == RecordKind::Qspace));
        }
    }

    #[test]
    fn missing_transform_blob_rejected() {
        let ds = dataset(Dims::new(5, 5, 4), 1, &dirs(6), 1000.0);
        let texts = vec![write_affine_ascii(&AffineTransform::identity()); 7];
        let bytes = compress(&ds, &CodecOptions { motion: MotionMode::Import(texts), ..Default::default() }).unwrap();
        let mut c = container::parse(&bytes).unwrap();
        c.affines.as_mut().unwrap().pop();
        assert!(container::serialize(&c).is_err());
        let short = CodecOptions { motion: MotionMode::Import(vec![String::new(); 3]), ..Default::default() };
        assert!(compress(&ds, &short).is_err());
    }

    #[test]
    fn dti_requires_split_of_six() {
        let ds = dataset(Dims::new(4, 4, 4), 1, &dirs(8), 1000.0);
        let o = CodecOptions { predictor: QspacePredictor::Dti, spatial_split: Some(3), ..Default::default() };
        assert!(compress(&ds, &o).is_err());
        let bytes = roundtrip(&ds, &CodecOptions { predictor: QspacePredictor::Dti, ..Default::default() });
        let r = stats(&bytes, None).unwrap();
        assert_eq!(r.spatial_dwi, 6);
        assert_eq!(r.qspace, 2);
    }
}
