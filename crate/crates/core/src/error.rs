use std::path::PathBuf;

use crate::volume::Dims;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("not a NIfTI-1 file (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("truncated file: need {expected} bytes, got {actual}")]
    TruncatedFile { expected: usize, actual: usize },
    #[error("invalid NIfTI header: {0}")]
    InvalidHeader(String),
    #[error("invalid volume: {0}")]
    InvalidVolume(String),
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimMismatch { expected: Dims, found: Dims },
    #[error("resampling would produce an empty axis")]
    DegenerateOutput,
    #[error("click {0:?} lies outside the volume")]
    ClickOutOfBounds([usize; 3]),
    #[error("scribbles are missing the {0} class")]
    MissingClass(&'static str),
    #[error("histogram needs at least 2 bins, got {0}")]
    BadBins(usize),
    #[error("probability outside [0, 1]: {0}")]
    BadProbability(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("unknown image {0:?}")]
    UnknownImage(String),
    #[error("the unlabeled pool is empty")]
    EmptyPool,
    #[error("datastore has no labeled images")]
    EmptyDatastore,
    #[error("memory budget of {0} bytes is below the smallest plan")]
    InsufficientBudget(u64),
    #[error("corrupt datastore index: {0}")]
    CorruptIndex(String),
    #[error("index references missing file {0}")]
    MissingFile(PathBuf),
    #[error("image does not parse: {0}")]
    BadImage(String),
    #[error("invalid label: {0}")]
    BadLabel(String),
    #[error("unknown label tag {0:?}")]
    BadTag(String),
    #[error("invalid model checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
