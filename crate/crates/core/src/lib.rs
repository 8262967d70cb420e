//! Discrete-event simulation of MapReduce jobs running on provisioned cloud VMs.
//!
//! The crate is layered bottom-up:
//!
//! * [`kernel`] – clock, future-event list and entity dispatch.
//! * [`infra`] – datacenter capacity, VM provisioning and time-shared execution.
//! * [`storage_net`] – storage-fetch/shuffle delay and network cost.
//! * [`mapreduce`] – job splitting, placement, tracker entities and a full run.
//! * [`metrics`] – execution-time, makespan, delay and cost metrics per job.
//! * [`scenario`] – scenario files, experiment groups and report emission.

pub mod error;
pub mod ids;
pub mod infra;
pub mod kernel;
pub mod mapreduce;
pub mod metrics;
pub mod scenario;
pub mod storage_net;

pub use error::{Error, Result};
