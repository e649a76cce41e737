use thiserror::Error;

use crate::bayes_opt::BoError;
use crate::dataset::DatasetError;
use crate::fairness::MetricError;
use crate::gbt::ModelError;
use crate::report::ReportError;
use crate::shap::ShapError;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERICAL: i32 = 4;
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Search(#[from] BoError),
    #[error(transparent)]
    Shap(#[from] ShapError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) => exit::USAGE,
            Error::Dataset(DatasetError::InvalidArgument(_)) => exit::USAGE,
            Error::Model(m) => model_code(m),
            Error::Search(b) => match b {
                BoError::InvalidArgument(_) => exit::USAGE,
                BoError::Model(m) => model_code(m),
                BoError::SingularKernel | BoError::Numerical(_) | BoError::Metric(_) => {
                    exit::NUMERICAL
                }
            },
            Error::Metric(_) => exit::NUMERICAL,
            Error::Dataset(_) | Error::Shap(_) | Error::Report(_) | Error::Io(_) => exit::DATA,
        }
    }
}

fn model_code(m: &ModelError) -> i32 {
    match m {
        ModelError::InvalidConfig(_) => exit::USAGE,
        ModelError::Numerical(_) => exit::NUMERICAL,
        ModelError::Dataset(DatasetError::InvalidArgument(_)) => exit::USAGE,
        _ => exit::DATA,
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
