use thiserror::Error;

/// Errors raised by the loss and the critical-point diagnostics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("weight vector is empty")]
    Empty,
    #[error("weight vector has no non-zero element (L2 norm is zero)")]
    AllZero,
    #[error("weight vector contains a non-finite value at index {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TheoryError {
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PruneError {
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("pruning would remove every weight")]
    PrunedEverything,
    #[error("structure mismatch: {0}")]
    Structure(String),
}

/// Which stream of a compressed artifact an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Header,
    Mask,
    Labels,
    Centroids,
}

impl std::fmt::Display for StreamKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StreamKind::Header => "header",
            StreamKind::Mask => "mask_stream",
            StreamKind::Labels => "label_stream",
            StreamKind::Centroids => "centroid_stream",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error("inconsistent encoder input: {0}")]
    Structure(String),
    #[error("{stream}: {reason}")]
    Decode { stream: StreamKind, reason: String },
    #[error("unknown encoding scheme `{0}`")]
    UnknownScheme(String),
    #[error("invalid argument: {0}")]
    Argument(String),
}

impl CodecError {
    pub(crate) fn decode(stream: StreamKind, reason: impl Into<String>) -> Self {
        CodecError::Decode {
            stream,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum TensorIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed tensor file: {0}")]
    Format(String),
    #[error("tensor `{0}` not found")]
    Missing(String),
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Tensor(#[from] TensorIoError),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model/data mismatch: {0}")]
    Shape(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error("unknown penalty mode `{0}`")]
    UnknownPenalty(String),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] TensorIoError),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Prune(#[from] PruneError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Train(#[from] TrainError),
}
