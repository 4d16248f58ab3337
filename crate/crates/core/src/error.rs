use std::path::PathBuf;

use thiserror::Error;

/// Failures raised while loading, validating or compiling bot definitions.
#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("validation failed: {0}")]
    Validation(String),
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("bot `{0}` has no training utterances")]
    NoUtterances(String),
}

/// Response table problems: malformed CSV, or rows missing for reachable intents.
#[derive(Debug, Error)]
pub enum ResponseError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed response table: {0}")]
    Csv(String),
    #[error("empty response text for ({intent}, {service})")]
    EmptyText { intent: String, service: String },
    #[error("duplicate response row ({intent}, {service})")]
    Duplicate { intent: String, service: String },
    #[error("missing response for ({intent}, {service})")]
    Missing { intent: String, service: String },
    #[error("missing responses: {}", format_pairs(.0))]
    MissingMany(Vec<(String, String)>),
}

fn format_pairs(pairs: &[(String, String)]) -> String {
    pairs
        .iter()
        .map(|(i, s)| format!("({i}, {s})"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Errors surfaced by the conversation engine.
#[derive(Debug, Error)]
pub enum EngineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("internal engine error: {0}")]
    Internal(String),
}

impl From<ResponseError> for EngineError {
    fn from(e: ResponseError) -> Self {
        EngineError::Config(e.to_string())
    }
}

#[derive(Debug, Error)]
pub enum SinkError {
    #[error("sink unavailable: {0}")]
    Unavailable(String),
    #[error("lead rejected: {0}")]
    InvalidLead(String),
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{file}: {message}")]
    Format { file: PathBuf, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("malformed curation file: {0}")]
    Curation(String),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed regression file: {0}")]
    Csv(String),
    #[error("script {script}: {message}")]
    Script { script: String, message: String },
    #[error("transport: {0}")]
    Transport(String),
}
