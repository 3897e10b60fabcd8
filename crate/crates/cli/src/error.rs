use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("input is not valid UTF-8")]
    NotUtf8,

    #[error("malformed CSV at line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("header must contain the columns stage, arm and value (found: {0})")]
    Header(String),

    #[error("line {line}: {column} `{value}` is not a finite decimal number")]
    NonNumeric {
        line: u64,
        column: &'static str,
        value: String,
    },

    #[error("line {line}: stage must be 1 or 2, found `{value}`")]
    InvalidStage { line: u64, value: String },

    #[error("line {line}: stage-{stage} arm label `{value}` is not allowed")]
    InvalidArm { line: u64, stage: u8, value: String },

    #[error("ragged stage-1 arms: arm 1 has {arm1} values, arm 2 has {arm2}")]
    RaggedArms { arm1: usize, arm2: usize },

    #[error("stage-2 rows are present for both arms (line {line}); only the selected arm continues")]
    StageTwoBothArms { line: u64 },

    #[error("stage-2 rows are labelled arm {labelled} but stage 1 selects arm {selected}")]
    StageTwoWrongArm { labelled: u8, selected: u8 },

    #[error("no {0} values")]
    Empty(&'static str),

    #[error("metadata line {line} is not of the form `# key: value`")]
    Metadata { line: u64 },

    #[error("metadata entry `{0}` cannot be written on a single comment line")]
    MetadataValue(String),

    #[error("sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),

    #[error("pooled stage-1 standard deviation needs at least two subjects per arm (n1 = {0})")]
    PooledSdUndefined(usize),

    #[error(transparent)]
    Core(#[from] selmean_core::Error),

    #[error("JSON encoding failed: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;
