use std::io;
use std::path::PathBuf;

use crate::volume::Label;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("voxel count {actual} does not match dims product {expected}")]
    VoxelCount { expected: usize, actual: usize },

    #[error("incompatible grids: {0}")]
    IncompatibleGrids(String),

    #[error("malformed NIfTI header: {0}")]
    MalformedHeader(String),

    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),

    #[error("non-identity scaling (scl_slope = {slope}, scl_inter = {inter})")]
    NonIdentityScaling { slope: f32, inter: f32 },

    #[error("negative label value {0}")]
    NegativeLabel(i64),

    #[error("oblique orientation is not supported: {0}")]
    ObliqueOrientation(String),

    #[error("code overflow: label {code} does not fit in {datatype}")]
    CodeOverflow { code: Label, datatype: &'static str },

    #[error("label {0} has no entry in the remap table")]
    UnmappedCode(Label),

    #[error("overlay code {0} collides with a base code")]
    CodeCollision(Label),

    #[error("recipe error: {0}")]
    Recipe(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("empty class in cohort: {0}")]
    EmptyClass(&'static str),

    #[error("empty mask")]
    EmptyMask,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
