use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid probability space: {0}")]
    InvalidSpace(String),

    #[error("invalid pool: {0}")]
    InvalidPool(String),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("random variables live on different probability spaces")]
    SpaceMismatch,

    #[error("scenario index {index} out of range for a space with {atoms} atoms")]
    ScenarioOutOfRange { index: usize, atoms: usize },

    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    #[error("invalid rule: {0}")]
    InvalidRule(String),

    /// The rule's defining denominator vanishes on this pool and the rule's
    /// policy is to refuse rather than fall back.
    #[error("degenerate pool for {rule}: {condition}")]
    DegeneratePool { rule: String, condition: String },

    #[error("metric {metric} has not been audited as {required}")]
    UnauditedMetric { metric: String, required: String },

    #[error("invalid battery: {0}")]
    InvalidBattery(String),
}
