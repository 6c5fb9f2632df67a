use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("question id is empty")]
    EmptyId,
    #[error("question {0} has an empty ground truth")]
    EmptyGroundTruth(String),
    #[error("question {0} lists the same answer twice")]
    DuplicateGroundTruth(String),
    #[error("answer count {0} is not one of 1, 2, 4, 6")]
    InvalidAnswerCount(usize),
    #[error("answer_count {declared} does not match {actual} ground-truth answers")]
    AnswerCountMismatch { declared: u32, actual: usize },
    #[error("unknown domain `{0}`")]
    UnknownDomain(String),
    #[error("unknown method `{0}`")]
    UnknownMethod(String),
    #[error("logprob {0} is not finite or exceeds 0 (probability > 1)")]
    InvalidLogprob(f64),
    #[error("{what} = {value} lies outside [0, 1]")]
    OutOfUnitInterval { what: &'static str, value: f64 },
    #[error("sample has no token logprobs")]
    EmptyTokens,
    #[error("sample batch is empty")]
    EmptyBatch,
    #[error("chosen index {index} out of range for {len} samples")]
    ChosenOutOfRange { index: usize, len: usize },
    #[error("clusters do not partition the batch: {0}")]
    NotAPartition(String),
    #[error("no cluster member carries logprobs")]
    NoProbabilisticMembers,
}
