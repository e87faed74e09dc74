use thiserror::Error;

/// Where in the decoding pipeline a failure happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Stage {
    Redundancy,
    MarkerChain,
    Level(usize),
    Reassembly,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Stage::Redundancy => write!(f, "redundancy recovery"),
            Stage::MarkerChain => write!(f, "marker chain"),
            Stage::Level(l) => write!(f, "level {l}"),
            Stage::Reassembly => write!(f, "reassembly"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("index out of range: {0}")]
    Range(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("length {len} is not a multiple of symbol width {k}")]
    Alignment { len: usize, k: u32 },
    #[error("decoding failed at {stage}: {reason}")]
    Decode { stage: Stage, reason: String },
    #[error("reed-solomon decoding failed: {0}")]
    RsDecode(String),
    #[error("sampling budget exhausted after {attempts} draws; most frequent failure: {dominant}")]
    Sampling { attempts: u64, dominant: String },
    #[error("structure violation: {0}")]
    Structure(String),
    #[error("encoding failed: {0}")]
    Encode(String),
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn decode(stage: Stage, reason: impl Into<String>) -> Self {
        Error::Decode { stage, reason: reason.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
