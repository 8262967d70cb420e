//! Storage-fetch and shuffle delays, and the network cost they incur.
//!
//! In network-delay mode every task's share of the job data is
//! `data_size / (nm + nr)` MB, moved at the storage bandwidth. All maps fetch
//! their input in parallel before starting, and reduces read an equally sized
//! intermediate share after the last map finishes, so
//!
//! ```text
//! fetch   = data_size / ((nm + nr) * bandwidth)
//! shuffle = data_size / ((nm + nr) * bandwidth)
//! cost    = (fetch + shuffle) * network_cost_per_unit
//! ```

use serde::{Deserialize, Serialize};

use crate::mapreduce::JobSpec;

/// Cost per second of delay that reproduces the reference network-cost table
/// for the Small job (`2 * 200000 / 2000 * c = 2125`).
pub const DEFAULT_NETWORK_COST_PER_UNIT: f64 = 10.625;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DelayMode {
    #[default]
    NoDelay,
    NetworkDelay,
}

impl DelayMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DelayMode::NoDelay => "no-delay",
            DelayMode::NetworkDelay => "network-delay",
        }
    }
}

impl std::fmt::Display for DelayMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayModel {
    pub mode: DelayMode,
    /// MB/s
    pub storage_bandwidth: f64,
    /// Currency per second of delay.
    pub network_cost_per_unit: f64,
}

impl Default for DelayModel {
    fn default() -> Self {
        Self::new(DelayMode::NoDelay)
    }
}

impl DelayModel {
    pub fn new(mode: DelayMode) -> Self {
        Self { mode, storage_bandwidth: 1000.0, network_cost_per_unit: DEFAULT_NETWORK_COST_PER_UNIT }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.storage_bandwidth > 0.0 && self.storage_bandwidth.is_finite()) {
            return Err(format!("storage_bandwidth must be positive, got {}", self.storage_bandwidth));
        }
        if !(self.network_cost_per_unit >= 0.0 && self.network_cost_per_unit.is_finite()) {
            return Err(format!("network_cost_per_unit must be non-negative, got {}", self.network_cost_per_unit));
        }
        Ok(())
    }

    fn share_transfer(&self, job: &JobSpec) -> f64 {
        match self.mode {
            DelayMode::NoDelay => 0.0,
            DelayMode::NetworkDelay => job.task_share() / self.storage_bandwidth,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DelayBreakdown {
    /// Seconds between job submission and map start.
    pub fetch_delay: f64,
    /// Seconds between the last map finish and reduce start.
    pub shuffle_delay: f64,
    pub delay_time: f64,
}

pub fn fetch_delay(job: &JobSpec, model: &DelayModel) -> f64 {
    model.share_transfer(job)
}

pub fn shuffle_delay(job: &JobSpec, model: &DelayModel) -> f64 {
    model.share_transfer(job)
}

pub fn breakdown(job: &JobSpec, model: &DelayModel) -> DelayBreakdown {
    let fetch_delay = fetch_delay(job, model);
    let shuffle_delay = shuffle_delay(job, model);
    DelayBreakdown { fetch_delay, shuffle_delay, delay_time: fetch_delay + shuffle_delay }
}

/// Network cost of one job. Does not depend on VM count or type.
pub fn network_cost(job: &JobSpec, model: &DelayModel) -> f64 {
    if model.mode == DelayMode::NoDelay {
        log::warn!("network cost requested for job {} in no-delay mode", job.job_id);
        return 0.0;
    }
    breakdown(job, model).delay_time * model.network_cost_per_unit
}
