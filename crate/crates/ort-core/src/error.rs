//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised while parsing triple files or building/loading the store.
#[derive(Debug, Error)]
pub enum KgError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("line {line}: malformed triple ({reason})")]
    MalformedLine { line: u64, reason: String },

    #[error("relation {relation:?} has fewer than two non-empty dotted segments")]
    LabelExtraction { relation: String },

    #[error("index cache: bad magic bytes (expected \"ORTK\")")]
    BadMagic,

    #[error("index cache: unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u8, expected: u8 },

    #[error("index cache is corrupt: {0}")]
    CorruptIndex(String),
}

/// Errors raised by reverse/forward label reasoning.
#[derive(Debug, Error)]
pub enum ReasonError {
    #[error("labels not present in the neighbor dictionary: {labels:?}")]
    UnknownLabel { labels: Vec<String> },

    #[error("no label path connects the aim labels to a condition label within {max_pop} hops")]
    EmptyPathSet { max_pop: usize },
}

/// Errors raised by the LLM gateway.
#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("unparseable model output after {attempts} attempt(s): {raw:?}")]
    Parse { attempts: u32, raw: String },

    #[error("model produced labels outside the label list after a corrective re-prompt: {labels:?}")]
    LabelVocabulary { labels: Vec<String> },

    #[error("template binding {name:?} is missing")]
    MissingBinding { name: String },

    #[error("template {name:?} is invalid: {reason}")]
    BadTemplate { name: String, reason: String },

    #[error("mock backend has no fixture for key {key:?}")]
    MockMiss { key: String },
}

/// Errors raised by dataset loading and evaluation.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("dataset line {line}: {reason}")]
    BadDataset { line: u64, reason: String },
}

/// Configuration errors (bad file, bad value, bad override).
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("i/o error reading config: {0}")]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("invalid config value for {field}: {reason}")]
    BadValue { field: String, reason: String },
}

/// Umbrella error for pipeline runs; carries the failing stage's error.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Kg(#[from] KgError),

    #[error(transparent)]
    Reason(#[from] ReasonError),

    #[error(transparent)]
    Gateway(#[from] GatewayError),

    #[error(transparent)]
    Eval(#[from] EvalError),
}
