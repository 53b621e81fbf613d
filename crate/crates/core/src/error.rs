use crate::hpo::HyperParams;
use crate::measurements::{SeedMap, VarianceSource};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("row {row}: value {value:?} is not finite")]
    NonFinite { row: usize, value: String },

    #[error("invalid score set: {0}")]
    InvalidScores(String),

    #[error("record {record} has no seed for source `{source_name}`")]
    MissingSeed { record: String, source_name: VarianceSource },

    #[error("pairing failed, unmatched records: {}", .orphans.join(", "))]
    Unmatched { orphans: Vec<String> },

    #[error("pairing is ambiguous: seeds {key} match more than one record in group {group}")]
    Ambiguous { key: String, group: String },

    #[error("groups have unequal replicate counts ({a} vs {b})")]
    UnequalGroups { a: usize, b: usize },

    #[error(
        "out-of-bootstrap complement is empty (source size {source_size}, {draws} draws); retry with a different stream"
    )]
    EmptyComplement { source_size: usize, draws: usize },

    #[error("bootstrap resample {index} (stream {seed:#018x}) produced a non-finite statistic")]
    NonFiniteStatistic { index: usize, seed: u64 },

    #[error("{0}")]
    Domain(String),

    #[error("variance protocol violated: {0}")]
    Protocol(String),

    #[error("pipeline failed: {0}")]
    Pipeline(String),

    #[error("replicate {replicate} failed (seeds {seeds:?}): {source}")]
    Replicate {
        replicate: usize,
        seeds: SeedMap,
        #[source]
        source: Box<Error>,
    },

    #[error("candidate {index} ({params}) failed: {source}")]
    Candidate {
        index: usize,
        params: HyperParams,
        #[source]
        source: Box<Error>,
    },

    #[error("{0} is not implemented")]
    Unsupported(&'static str),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
