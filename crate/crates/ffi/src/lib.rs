//! C ABI for the qdmr codec.
//!
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `*_free` function. Every fallible call returns a
//! [`QdmrStatus`]; on failure a description is available from
//! [`qdmr_last_error`] on the same thread until the next failing call.
//! Panics never unwind into C; they surface as [`QdmrStatus::Internal`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use qdmr_core::qspace::OrderingStrategy;
use qdmr_core::{CodecOptions, DwiDataset, Error, MotionMode, QspacePredictor};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QdmrStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// An argument was out of range or not valid UTF-8.
    InvalidArgument = 2,
    /// A file could not be read or written.
    Io = 3,
    /// Malformed NIfTI, gradient table, transform or container data.
    InvalidData = 4,
    /// Valid input that the codec cannot handle.
    Unsupported = 5,
    /// A numerical step failed (mesh, factorization, registration).
    Numerical = 6,
    /// Container checksum mismatch.
    Checksum = 7,
    /// A bug in the library; the panic message is kept as the last error.
    Internal = 8,
}

/// q-space predictor selector for [`qdmr_options_set_predictor`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QdmrPredictor {
    Lh = 0,
    Bh = 1,
    Dti = 2,
}

/// Direction ordering selector for [`qdmr_options_set_ordering`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QdmrOrdering {
    Furthest = 0,
    Closest = 1,
    Original = 2,
}

/// Opaque dataset: image volumes, verbatim NIfTI header and gradient files.
pub struct QdmrDataset(DwiDataset);

/// Opaque codec settings.
pub struct QdmrOptions(CodecOptions);

/// Opaque owned byte buffer.
pub struct QdmrBuffer(Vec<u8>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> QdmrStatus {
    match e {
        Error::Io(_) => QdmrStatus::Io,
        Error::Nifti(_) | Error::Gradients(_) | Error::Affine(_) | Error::Stream(_) | Error::Container(_) => {
            QdmrStatus::InvalidData
        }
        Error::DimensionMismatch(_) | Error::Options(_) => QdmrStatus::InvalidArgument,
        Error::UnsupportedDatatype(_) | Error::Dataset(_) => QdmrStatus::Unsupported,
        Error::Mesh(_) | Error::Singular(_) | Error::RankDeficient(_) => QdmrStatus::Numerical,
        Error::Checksum { .. } => QdmrStatus::Checksum,
        #[allow(unreachable_patterns)]
        _ => QdmrStatus::Internal,
    }
}

/// Runs `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (QdmrStatus, String)>) -> QdmrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QdmrStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            QdmrStatus::Internal
        }
    }
}

fn core_err(e: Error) -> (QdmrStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (QdmrStatus, String) {
    (QdmrStatus::NullArgument, format!("{what} is null"))
}

/// # Safety
/// `data` must be null (with `len == 0`) or point to `len` readable bytes.
unsafe fn slice<'a>(data: *const u8, len: usize, what: &str) -> Result<&'a [u8], (QdmrStatus, String)> {
    if data.is_null() {
        return if len == 0 { Ok(&[]) } else { Err(null(what)) };
    }
    Ok(std::slice::from_raw_parts(data, len))
}

/// # Safety
/// `p` must be null or a NUL-terminated string.
unsafe fn path<'a>(p: *const c_char, what: &str) -> Result<&'a str, (QdmrStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (QdmrStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

fn read_file(p: &str) -> Result<Vec<u8>, (QdmrStatus, String)> {
    std::fs::read(p).map_err(|e| (QdmrStatus::Io, format!("{p}: {e}")))
}

/// Stores `value` behind `out` as a new handle.
///
/// # Safety
/// `out` must be null or valid for a pointer write.
unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), (QdmrStatus, String)> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn qdmr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn qdmr_status_string(status: QdmrStatus) -> *const c_char {
    let s: &'static CStr = match status {
        QdmrStatus::Ok => c"ok",
        QdmrStatus::NullArgument => c"null argument",
        QdmrStatus::InvalidArgument => c"invalid argument",
        QdmrStatus::Io => c"i/o error",
        QdmrStatus::InvalidData => c"invalid data",
        QdmrStatus::Unsupported => c"unsupported input",
        QdmrStatus::Numerical => c"numerical failure",
        QdmrStatus::Checksum => c"checksum mismatch",
        QdmrStatus::Internal => c"internal error",
    };
    s.as_ptr()
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn qdmr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default codec settings: LH prediction, furthest ordering, no motion
/// compensation, lambda 8.
#[no_mangle]
pub extern "C" fn qdmr_options_new() -> *mut QdmrOptions {
    Box::into_raw(Box::new(QdmrOptions(CodecOptions::default())))
}

/// # Safety
/// `options` must be null or a handle from [`qdmr_options_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qdmr_options_free(options: *mut QdmrOptions) {
    if !options.is_null() {
        drop(Box::from_raw(options));
    }
}

/// # Safety
/// `options` must be null or a live options handle.
#[no_mangle]
pub unsafe extern "C" fn qdmr_options_set_predictor(options: *mut QdmrOptions, predictor: QdmrPredictor) -> QdmrStatus {
    guard(|| {
        let o = options.as_mut().ok_or_else(|| null("options"))?;
        o.0.predictor = match predictor {
            QdmrPredictor::Lh => QspacePredictor::Lh,
            QdmrPredictor::Bh => QspacePredictor::Bh,
            QdmrPredictor::Dti => QspacePredictor::Dti,
        };
        Ok(())
    })
}

/// # Safety
/// `options` must be null or a live options handle.
#[no_mangle]
pub unsafe extern "C" fn qdmr_options_set_ordering(options: *mut QdmrOptions, ordering: QdmrOrdering) -> QdmrStatus {
    guard(|| {
        let o = options.as_mut().ok_or_else(|| null("options"))?;
        o.0.ordering = match ordering {
            QdmrOrdering::Furthest => OrderingStrategy::Furthest,
            QdmrOrdering::Closest => OrderingStrategy::Closest,
            QdmrOrdering::Original => OrderingStrategy::Original,
        };
        Ok(())
    })
}

/// Positive, finite EED contrast parameter.
///
/// # Safety
/// `options` must be null or a live options handle.
#[no_mangle]
pub unsafe extern "C" fn qdmr_options_set_lambda(options: *mut QdmrOptions, lambda: f32) -> QdmrStatus {
    guard(|| {
        let o = options.as_mut().ok_or_else(|| null("options"))?;
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err((QdmrStatus::InvalidArgument, format!("lambda must be positive, got {lambda}")));
        }
        o.0.lambda = lambda;
        Ok(())
    })
}

/// Enables or disables built-in motion compensation.
///
/// # Safety
/// `options` must be null or a live options handle.
#[no_mangle]
pub unsafe extern "C" fn qdmr_options_set_motion(options: *mut QdmrOptions, enabled: bool) -> QdmrStatus {
    guard(|| {
        let o = options.as_mut().ok_or_else(|| null("options"))?;
        o.0.motion = if enabled { MotionMode::Builtin } else { MotionMode::Off };
        Ok(())
    })
}

/// Codes every volume in image space when `enabled`.
///
/// # Safety
/// `options` must be null or a live options handle.
#[no_mangle]
pub unsafe extern "C" fn qdmr_options_set_spatial_only(options: *mut QdmrOptions, enabled: bool) -> QdmrStatus {
    guard(|| {
        let o = options.as_mut().ok_or_else(|| null("options"))?;
        o.0.spatial_only = enabled;
        Ok(())
    })
}

/// Builds a dataset from in-memory NIfTI, bval and bvec files. Volumes with
/// a b-value at or below `b0_threshold` form the b=0 group.
///
/// # Safety
/// Each data pointer must be null with length 0 or point to that many
/// readable bytes; `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn qdmr_dataset_from_memory(
    nifti: *const u8,
    nifti_len: usize,
    bval: *const u8,
    bval_len: usize,
    bvec: *const u8,
    bvec_len: usize,
    b0_threshold: f64,
    out: *mut *mut QdmrDataset,
) -> QdmrStatus {
    guard(|| {
        let ds = DwiDataset::from_bytes(
            slice(nifti, nifti_len, "nifti")?,
            slice(bval, bval_len, "bval")?,
            slice(bvec, bvec_len, "bvec")?,
            b0_threshold,
        )
        .map_err(core_err)?;
        emit(out, QdmrDataset(ds))
    })
}

/// Reads a dataset from three files.
///
/// # Safety
/// Paths must be NUL-terminated strings; `out` must be valid for a pointer
/// write.
#[no_mangle]
pub unsafe extern "C" fn qdmr_dataset_from_files(
    nifti_path: *const c_char,
    bval_path: *const c_char,
    bvec_path: *const c_char,
    b0_threshold: f64,
    out: *mut *mut QdmrDataset,
) -> QdmrStatus {
    guard(|| {
        let nifti = read_file(path(nifti_path, "nifti path")?)?;
        let bval = read_file(path(bval_path, "bval path")?)?;
        let bvec = read_file(path(bvec_path, "bvec path")?)?;
        let ds = DwiDataset::from_bytes(&nifti, &bval, &bvec, b0_threshold).map_err(core_err)?;
        emit(out, QdmrDataset(ds))
    })
}

/// # Safety
/// `dataset` must be null or a dataset handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qdmr_dataset_free(dataset: *mut QdmrDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Number of 3D volumes, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn qdmr_dataset_volume_count(dataset: *const QdmrDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.volumes.len())
}

/// Writes the grid size of each volume.
///
/// # Safety
/// `dataset` must be null or a live handle; the outputs must be valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn qdmr_dataset_dims(
    dataset: *const QdmrDataset,
    nx: *mut usize,
    ny: *mut usize,
    nz: *mut usize,
) -> QdmrStatus {
    guard(|| {
        let d = dataset.as_ref().ok_or_else(|| null("dataset"))?.0.dims();
        if nx.is_null() || ny.is_null() || nz.is_null() {
            return Err(null("dimension output"));
        }
        (*nx, *ny, *nz) = (d.nx, d.ny, d.nz);
        Ok(())
    })
}

/// Which file of a dataset to serialize.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QdmrFile {
    Nifti = 0,
    Bval = 1,
    Bvec = 2,
}

/// Serializes one of the dataset's files, byte-identical to its source.
///
/// # Safety
/// `dataset` must be null or a live handle; `out` must be valid for a
/// pointer write.
#[no_mangle]
pub unsafe extern "C" fn qdmr_dataset_file(
    dataset: *const QdmrDataset,
    file: QdmrFile,
    out: *mut *mut QdmrBuffer,
) -> QdmrStatus {
    guard(|| {
        let d = &dataset.as_ref().ok_or_else(|| null("dataset"))?.0;
        let bytes = match file {
            QdmrFile::Nifti => d.nifti_bytes().map_err(core_err)?,
            QdmrFile::Bval => d.bval_bytes().to_vec(),
            QdmrFile::Bvec => d.bvec_bytes().to_vec(),
        };
        emit(out, QdmrBuffer(bytes))
    })
}

/// Compresses `dataset`. A null `options` means defaults.
///
/// # Safety
/// Handles must be null or live; `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn qdmr_compress(
    dataset: *const QdmrDataset,
    options: *const QdmrOptions,
    out: *mut *mut QdmrBuffer,
) -> QdmrStatus {
    guard(|| {
        let d = &dataset.as_ref().ok_or_else(|| null("dataset"))?.0;
        let defaults = CodecOptions::default();
        let o = options.as_ref().map_or(&defaults, |o| &o.0);
        let bytes = qdmr_core::compress(d, o).map_err(core_err)?;
        emit(out, QdmrBuffer(bytes))
    })
}

/// Restores a dataset from container bytes.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be valid for a
/// pointer write.
#[no_mangle]
pub unsafe extern "C" fn qdmr_decompress(data: *const u8, len: usize, out: *mut *mut QdmrDataset) -> QdmrStatus {
    guard(|| {
        let ds = qdmr_core::decompress(slice(data, len, "data")?).map_err(core_err)?;
        emit(out, QdmrDataset(ds))
    })
}

/// Pointer to the buffer's bytes, valid until the buffer is freed.
///
/// # Safety
/// `buffer` must be null or a live buffer handle.
#[no_mangle]
pub unsafe extern "C" fn qdmr_buffer_data(buffer: *const QdmrBuffer) -> *const u8 {
    buffer.as_ref().map_or(ptr::null(), |b| b.0.as_ptr())
}

/// # Safety
/// `buffer` must be null or a live buffer handle.
#[no_mangle]
pub unsafe extern "C" fn qdmr_buffer_len(buffer: *const QdmrBuffer) -> usize {
    buffer.as_ref().map_or(0, |b| b.0.len())
}

/// # Safety
/// `buffer` must be null or a buffer handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qdmr_buffer_free(buffer: *mut QdmrBuffer) {
    if !buffer.is_null() {
        drop(Box::from_raw(buffer));
    }
}

/// Writes a buffer to a file.
///
/// # Safety
/// `buffer` must be null or live; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn qdmr_buffer_write(buffer: *const QdmrBuffer, file_path: *const c_char) -> QdmrStatus {
    guard(|| {
        let b = buffer.as_ref().ok_or_else(|| null("buffer"))?;
        let p = path(file_path, "path")?;
        std::fs::write(p, &b.0).map_err(|e| (QdmrStatus::Io, format!("{p}: {e}")))
    })
}
