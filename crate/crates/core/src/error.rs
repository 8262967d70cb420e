use thiserror::Error;

use crate::infra::{ProvisionError, VmError};
use crate::kernel::KernelError;
use crate::mapreduce::MapReduceError;
use crate::metrics::MetricError;
use crate::scenario::ScenarioError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Provision(#[from] ProvisionError),
    #[error(transparent)]
    Vm(#[from] VmError),
    #[error(transparent)]
    MapReduce(#[from] MapReduceError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("sweep point {point} failed: {source}")]
    SweepPoint {
        point: String,
        #[source]
        source: Box<Error>,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("report encoding error: {0}")]
    Encode(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
