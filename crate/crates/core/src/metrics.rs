//! Per-job metrics computed from completed task records.
//!
//! With `et_m` / `et_r` the execution times of the maps / reduces:
//!
//! * average = mean(et_m) + mean(et_r)
//! * max     = max(et_m) + max(et_r)
//! * min     = min(et_m) + min(et_r)
//! * makespan = finish time of the last reduce, measured from submission
//! * delay   = first map start + (first reduce start - last map finish)
//! * VM cost = sum of execution times, each times its VM's cost per second
//! * network cost = delay * cost per delay-second

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{JobId, TaskId, TaskKind, VmId};
use crate::mapreduce::{JobOutcome, JobType, MrCombination, Task, VmUsage};
use crate::storage_net::{DelayBreakdown, DelayMode, DelayModel};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("no completed {0} tasks")]
    MissingPhase(TaskKind),
    #[error("task {0} is not complete")]
    Incomplete(TaskId),
    #[error("task {task} ran on VM {vm}, which has no cost entry")]
    UnknownVm { task: TaskId, vm: VmId },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_id: TaskId,
    pub job_id: JobId,
    pub kind: TaskKind,
    pub vm_id: VmId,
    pub start_time: f64,
    pub finish_time: f64,
    /// Processing time only; fetch and shuffle delays are excluded.
    pub exec_time: f64,
}

impl TaskRecord {
    pub fn new(task_id: TaskId, vm_id: VmId, start_time: f64, finish_time: f64) -> Self {
        Self {
            task_id,
            job_id: task_id.job,
            kind: task_id.kind,
            vm_id,
            start_time,
            finish_time,
            exec_time: finish_time - start_time,
        }
    }

    pub fn from_task(task: &Task) -> Result<Self, MetricError> {
        match (task.vm_id, task.start_time, task.finish_time) {
            (Some(vm), Some(start), Some(finish)) => Ok(Self::new(task.id, vm, start.seconds(), finish.seconds())),
            _ => Err(MetricError::Incomplete(task.id)),
        }
    }
}

fn phase(records: &[TaskRecord], kind: TaskKind) -> Result<Vec<f64>, MetricError> {
    let times: Vec<f64> = records.iter().filter(|r| r.kind == kind).map(|r| r.exec_time).collect();
    if times.is_empty() {
        Err(MetricError::MissingPhase(kind))
    } else {
        Ok(times)
    }
}

fn combine(records: &[TaskRecord], f: impl Fn(&[f64]) -> f64) -> Result<f64, MetricError> {
    Ok(f(&phase(records, TaskKind::Map)?) + f(&phase(records, TaskKind::Reduce)?))
}

// Shifted by the minimum so identical inputs give exactly that value, and
// clamped so rounding never pushes the mean outside [min, max].
fn mean(xs: &[f64]) -> f64 {
    let lo = min(xs);
    let m = lo + xs.iter().map(|x| x - lo).sum::<f64>() / xs.len() as f64;
    m.clamp(lo, max(xs))
}

fn max(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn min(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn average_execution_time(records: &[TaskRecord]) -> Result<f64, MetricError> {
    combine(records, mean)
}

pub fn max_execution_time(records: &[TaskRecord]) -> Result<f64, MetricError> {
    combine(records, max)
}

pub fn min_execution_time(records: &[TaskRecord]) -> Result<f64, MetricError> {
    combine(records, min)
}

/// Finish time of the last reduce relative to `submitted_at`.
pub fn makespan(records: &[TaskRecord], submitted_at: f64) -> Result<f64, MetricError> {
    let last = records
        .iter()
        .filter(|r| r.kind == TaskKind::Reduce)
        .map(|r| r.finish_time)
        .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.max(t))));
    last.map(|t| t - submitted_at).ok_or(MetricError::MissingPhase(TaskKind::Reduce))
}

/// Sum over tasks of exec time times the cost rate of the VM it ran on.
pub fn vm_computation_cost(records: &[TaskRecord], cost_per_sec: &BTreeMap<VmId, f64>) -> Result<f64, MetricError> {
    records.iter().try_fold(0.0, |acc, r| {
        let rate = cost_per_sec.get(&r.vm_id).ok_or(MetricError::UnknownVm { task: r.task_id, vm: r.vm_id })?;
        Ok(acc + r.exec_time * rate)
    })
}

/// Delay measured from the trace: time from submission to the first map
/// start plus the gap between the last map finish and the first reduce start.
pub fn delay_time(records: &[TaskRecord], submitted_at: f64) -> Result<f64, MetricError> {
    let maps: Vec<&TaskRecord> = records.iter().filter(|r| r.kind == TaskKind::Map).collect();
    let reduces: Vec<&TaskRecord> = records.iter().filter(|r| r.kind == TaskKind::Reduce).collect();
    if maps.is_empty() {
        return Err(MetricError::MissingPhase(TaskKind::Map));
    }
    if reduces.is_empty() {
        return Err(MetricError::MissingPhase(TaskKind::Reduce));
    }
    let map_start = maps.iter().map(|r| r.start_time).fold(f64::INFINITY, f64::min);
    let map_finish = maps.iter().map(|r| r.finish_time).fold(f64::NEG_INFINITY, f64::max);
    let reduce_start = reduces.iter().map(|r| r.start_time).fold(f64::INFINITY, f64::min);
    Ok((map_start - submitted_at) + (reduce_start - map_finish))
}

/// Metrics and configuration echo for one job in one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobReport {
    pub job_id: JobId,
    pub job_type: JobType,
    pub mr_combination: MrCombination,
    pub vm_count: u32,
    pub vm_type: String,
    pub mode: DelayMode,
    pub avg_exec: f64,
    pub max_exec: f64,
    pub min_exec: f64,
    pub makespan: f64,
    pub delay_time: f64,
    pub vm_cost: f64,
    pub network_cost: f64,
    pub breakdown: DelayBreakdown,
    pub task_records: Vec<TaskRecord>,
}

impl JobReport {
    pub fn build(job: &JobOutcome, vms: &[VmUsage], delay: &DelayModel) -> Result<Self, MetricError> {
        let records = job.tasks.iter().map(TaskRecord::from_task).collect::<Result<Vec<_>, _>>()?;
        let rates: BTreeMap<VmId, f64> = vms.iter().map(|v| (v.id, v.spec.cost_per_sec)).collect();
        let delay_time = delay_time(&records, 0.0)?;
        let network_cost = match delay.mode {
            DelayMode::NoDelay => 0.0,
            DelayMode::NetworkDelay => delay_time * delay.network_cost_per_unit,
        };
        let vm_type = vms.first().map(|v| v.spec.name.clone()).unwrap_or_default();
        Ok(Self {
            job_id: job.spec.job_id,
            job_type: job.spec.job_type,
            mr_combination: job.spec.mr,
            vm_count: vms.len() as u32,
            vm_type,
            mode: delay.mode,
            avg_exec: average_execution_time(&records)?,
            max_exec: max_execution_time(&records)?,
            min_exec: min_execution_time(&records)?,
            makespan: makespan(&records, 0.0)?,
            delay_time,
            vm_cost: vm_computation_cost(&records, &rates)?,
            network_cost,
            breakdown: job.breakdown,
            task_records: records,
        })
    }
}
