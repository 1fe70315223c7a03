use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("invalid NIfTI data: {0}")]
    Nifti(String),

    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),

    #[error("invalid gradient table: {0}")]
    Gradients(String),

    #[error("invalid affine matrix: {0}")]
    Affine(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate sphere mesh: {0}")]
    Mesh(String),

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("rank-deficient DTI design (condition number {0:.3e})")]
    RankDeficient(f64),

    #[error("corrupt entropy stream: {0}")]
    Stream(String),

    #[error("invalid container: {0}")]
    Container(String),

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("invalid codec options: {0}")]
    Options(String),

    #[error("invalid dataset: {0}")]
    Dataset(String),
}
