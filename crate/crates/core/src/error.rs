// SPDX-License-Identifier: MIT OR Apache-2.0

//! Error type shared by every module of the workbench.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Shape(String),

    #[error("input too short: need at least {needed} samples, got {got}")]
    InputTooShort { needed: usize, got: usize },

    #[error("empty axis")]
    EmptyAxis,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("checkpoint: missing tensor `{0}`")]
    MissingTensor(String),

    #[error("checkpoint: tensor `{name}` has shape {actual:?}, expected {expected:?}")]
    TensorShape {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("checkpoint: {0}")]
    Load(String),

    #[error("config: {0}")]
    Config(String),

    #[error("sample rate mismatch: model expects {expected} Hz, audio is {got} Hz")]
    SampleRate { expected: u32, got: u32 },

    #[error("alignment: {0}")]
    Alignment(String),

    #[error("intervention: {0}")]
    Intervention(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("probe: {0}")]
    Probe(String),

    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("audio: {0}")]
    Audio(String),

    #[error("assembly: segments exceed the target duration by {overflow_samples} samples ({overflow_ms:.1} ms)")]
    AssemblyOverflow { overflow_samples: usize, overflow_ms: f64 },

    #[error("assembly: {0}")]
    Assembly(String),

    #[error("statistics: {0}")]
    Stats(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Regex(#[from] regex::Error),
}

impl Error {
    /// Stable machine-readable tag, used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::InputTooShort { .. } => "input_too_short",
            Error::EmptyAxis => "empty_axis",
            Error::NonFinite(_) => "non_finite",
            Error::MissingTensor(_) | Error::TensorShape { .. } | Error::Load(_) => "load",
            Error::Config(_) => "config",
            Error::SampleRate { .. } => "sample_rate",
            Error::Alignment(_) => "alignment",
            Error::Intervention(_) => "intervention",
            Error::Dataset(_) => "dataset",
            Error::Probe(_) => "probe",
            Error::Parse { .. } => "parse",
            Error::Audio(_) => "audio",
            Error::AssemblyOverflow { .. } | Error::Assembly(_) => "assembly",
            Error::Stats(_) => "statistics",
            Error::Invalid(_) => "invalid_argument",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Regex(_) => "regex",
        }
    }
}
