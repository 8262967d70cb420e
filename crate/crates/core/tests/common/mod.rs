//! Brute-force reference for single-job runs without delay.
//!
//! Every task of a phase arrives at its VM at the same instant, so each VM is
//! a processor-sharing queue with simultaneous arrivals: sort the lengths,
//! and the i-th shortest of k tasks finishes once all k have been served at
//! capacity / (k - j) between consecutive completions.

#![allow(dead_code)]

pub struct OracleJob {
    pub length: u64,
    pub nm: usize,
    pub nr: usize,
    pub reduce_ratio: f64,
}

pub struct OracleResult {
    pub map_finish: Vec<f64>,
    pub reduce_start: f64,
    pub reduce_finish: Vec<f64>,
}

/// Finish offsets for tasks that all start together on one VM.
fn shared_finish(lengths: &[f64], capacity: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.sort_by(|&a, &b| lengths[a].partial_cmp(&lengths[b]).unwrap());
    let mut finish = vec![0.0; lengths.len()];
    let mut clock = 0.0;
    let mut served = 0.0;
    let n = lengths.len();
    for (rank, &i) in order.iter().enumerate() {
        let active = (n - rank) as f64;
        clock += (lengths[i] - served) * active / capacity;
        served = lengths[i];
        finish[i] = clock;
    }
    finish
}

/// Runs one phase: task `i` on VM `i % vms`, all starting at `start`.
fn phase(lengths: &[f64], vms: usize, capacity: f64, start: f64) -> Vec<f64> {
    let mut finish = vec![0.0; lengths.len()];
    for vm in 0..vms {
        let idx: Vec<usize> = (vm..lengths.len()).step_by(vms).collect();
        let lens: Vec<f64> = idx.iter().map(|&i| lengths[i]).collect();
        for (k, f) in idx.iter().zip(shared_finish(&lens, capacity)) {
            finish[*k] = start + f;
        }
    }
    finish
}

pub fn simulate(job: &OracleJob, vms: usize, capacity: f64) -> OracleResult {
    let per_map = job.length as f64 / job.nm as f64;
    let mut maps = vec![per_map; job.nm];
    maps[job.nm - 1] = job.length as f64 - per_map * (job.nm - 1) as f64;
    let reduce_total = job.reduce_ratio * job.length as f64 / job.nm as f64;
    let each = reduce_total / job.nr as f64;
    let mut reduces = vec![each; job.nr];
    reduces[job.nr - 1] = reduce_total - each * (job.nr - 1) as f64;

    let map_finish = phase(&maps, vms, capacity, 0.0);
    let reduce_start = map_finish.iter().cloned().fold(0.0, f64::max);
    let reduce_finish = phase(&reduces, vms, capacity, reduce_start);
    OracleResult { map_finish, reduce_start, reduce_finish }
}
