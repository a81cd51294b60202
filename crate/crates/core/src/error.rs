use std::io;

use thiserror::Error;

use crate::generative::TrainReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Index extents, lengths or geometries do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// A value lies outside the domain of the function (e.g. a pixel outside [0, 1]).
    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("malformed file: {0}")]
    Format(String),

    /// Two inputs that must describe the same thing disagree.
    #[error("inconsistent input: {0}")]
    Consistency(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("state has zero norm")]
    DegenerateState,

    /// A training sample has exactly zero amplitude, so its log-likelihood
    /// and gradient contribution are singular.
    #[error("sample {sample} has zero amplitude under the model")]
    ZeroAmplitude { sample: usize },

    /// The cost became NaN or infinite; the report covers the sweeps run so far.
    #[error("training diverged after {} sweeps: {reason}", report.sweeps_run)]
    Diverged {
        reason: String,
        report: Box<TrainReport>,
    },

    #[error("numerical routine failed: {0}")]
    Numerical(String),

    /// Failure while training the model of one class.
    #[error("class {class}: {source}")]
    Class {
        class: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
