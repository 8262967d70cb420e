//! MapReduce job model: job types, splitting into map and reduce tasks, task
//! placement, and the tracker entities that drive a job through the kernel.

mod entities;
mod run;
mod tracker;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{JobId, TaskId, TaskKind, VmId};
use crate::kernel::SimTime;

pub use entities::{Payload, StatusUpdate};
pub use run::{run, JobOutcome, RunConfig, RunOutcome, VmUsage};
pub use tracker::{JobProgress, ReduceLaunch, SequentialBroker};

#[derive(Debug, Error, PartialEq)]
pub enum MapReduceError {
    #[error("invalid job {job}: {reason}")]
    InvalidJob { job: JobId, reason: String },
    #[error("invalid MR combination `{0}`: expected MxRy with x, y >= 1")]
    InvalidMr(String),
    #[error("unknown job type `{0}`")]
    UnknownJobType(String),
    #[error("no VMs available for placement")]
    NoVms,
    #[error("job {job} refers to VM index {index}, but only {available} VMs exist")]
    VmOutOfRange { job: JobId, index: usize, available: usize },
    #[error("duplicate completion of task {0}")]
    DuplicateCompletion(TaskId),
    #[error("completion of unknown task {0}")]
    UnknownTask(TaskId),
    #[error("duplicate job id {0}")]
    DuplicateJob(JobId),
    #[error("unexpected event: {0}")]
    Protocol(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum JobType {
    Small,
    Medium,
    Big,
}

impl JobType {
    pub const ALL: [JobType; 3] = [JobType::Small, JobType::Medium, JobType::Big];

    /// MI
    pub fn length(self) -> u64 {
        match self {
            JobType::Small => 362_880,
            JobType::Medium => 725_760,
            JobType::Big => 1_451_520,
        }
    }

    /// MB
    pub fn data_size(self) -> f64 {
        match self {
            JobType::Small => 200_000.0,
            JobType::Medium => 400_000.0,
            JobType::Big => 800_000.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            JobType::Small => "Small",
            JobType::Medium => "Medium",
            JobType::Big => "Big",
        }
    }
}

impl fmt::Display for JobType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for JobType {
    type Err = MapReduceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        JobType::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| MapReduceError::UnknownJobType(s.to_string()))
    }
}

/// Number of map and reduce tasks a job is split into, written `MxRy`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MrCombination {
    pub maps: u32,
    pub reduces: u32,
}

impl MrCombination {
    pub fn new(maps: u32, reduces: u32) -> Self {
        Self { maps, reduces }
    }
}

impl fmt::Display for MrCombination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "M{}R{}", self.maps, self.reduces)
    }
}

impl FromStr for MrCombination {
    type Err = MapReduceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || MapReduceError::InvalidMr(s.to_string());
        let rest = s.strip_prefix(['M', 'm']).ok_or_else(err)?;
        let (maps, reduces) = rest.split_once(['R', 'r']).ok_or_else(err)?;
        let maps: u32 = maps.parse().map_err(|_| err())?;
        let reduces: u32 = reduces.parse().map_err(|_| err())?;
        if maps == 0 || reduces == 0 {
            return Err(err());
        }
        Ok(Self { maps, reduces })
    }
}

impl Serialize for MrCombination {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MrCombination {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A submitted MapReduce job.
#[derive(Clone, Debug, PartialEq)]
pub struct JobSpec {
    pub job_id: JobId,
    pub job_type: JobType,
    /// MI
    pub length: u64,
    /// MB
    pub data_size: f64,
    pub mr: MrCombination,
    /// Total reduce work is `reduce_ratio * length / nm`.
    pub reduce_ratio: f64,
    /// Indices into the provisioned VM list this job may use; all VMs if unset.
    pub vm_pool: Option<Vec<usize>>,
}

impl JobSpec {
    pub fn preset(job_id: JobId, job_type: JobType, mr: MrCombination) -> Self {
        Self {
            job_id,
            job_type,
            length: job_type.length(),
            data_size: job_type.data_size(),
            mr,
            reduce_ratio: 1.0,
            vm_pool: None,
        }
    }

    pub fn nm(&self) -> u32 {
        self.mr.maps
    }

    pub fn nr(&self) -> u32 {
        self.mr.reduces
    }

    /// MB of data moved per task (map input or reduce intermediate).
    pub fn task_share(&self) -> f64 {
        self.data_size / f64::from(self.nm() + self.nr())
    }

    /// Total MI of all reduce tasks.
    pub fn reduce_work(&self) -> f64 {
        self.reduce_ratio * self.length as f64 / f64::from(self.nm())
    }

    pub fn validate(&self) -> Result<(), MapReduceError> {
        let bad = |reason: &str| Err(MapReduceError::InvalidJob { job: self.job_id, reason: reason.to_string() });
        if self.mr.maps == 0 || self.mr.reduces == 0 {
            return bad("map and reduce counts must be at least 1");
        }
        if self.length == 0 {
            return bad("length must be positive");
        }
        if !(self.data_size > 0.0 && self.data_size.is_finite()) {
            return bad("data_size must be positive");
        }
        if !(self.reduce_ratio > 0.0 && self.reduce_ratio.is_finite()) {
            return bad("reduce_ratio must be positive");
        }
        if let Some(pool) = &self.vm_pool {
            if pool.is_empty() {
                return bad("vm pool must not be empty");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskStatus {
    Pending,
    Fetching,
    Running,
    Done,
}

/// A map or reduce task with its lifecycle timestamps.
#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub id: TaskId,
    /// MI
    pub length: f64,
    /// MB
    pub input_share: f64,
    pub status: TaskStatus,
    pub vm_id: Option<VmId>,
    pub start_time: Option<SimTime>,
    pub finish_time: Option<SimTime>,
}

impl Task {
    fn new(id: TaskId, length: f64, input_share: f64) -> Self {
        Self { id, length, input_share, status: TaskStatus::Pending, vm_id: None, start_time: None, finish_time: None }
    }

    pub fn kind(&self) -> TaskKind {
        self.id.kind
    }
}

/// Splits a job into `nm` maps of `length / nm` MI and `nr` reduces sharing
/// `reduce_ratio * length / nm` MI. The last task of each phase absorbs the
/// rounding of the division so phase totals are conserved.
pub fn split_job(job: &JobSpec) -> Result<(Vec<Task>, Vec<Task>), MapReduceError> {
    job.validate()?;
    let nm = job.nm();
    let nr = job.nr();
    let share = job.task_share();

    let maps = divide(job.length as f64, nm)
        .map(|(i, len)| Task::new(TaskId::map(job.job_id, i), len, share))
        .collect();
    let reduces = divide(job.reduce_work(), nr)
        .map(|(j, len)| Task::new(TaskId::reduce(job.job_id, j), len, share))
        .collect();
    Ok((maps, reduces))
}

fn divide(total: f64, parts: u32) -> impl Iterator<Item = (u32, f64)> {
    let each = total / f64::from(parts);
    let last = total - each * f64::from(parts - 1);
    (0..parts).map(move |i| (i, if i + 1 == parts { last } else { each }))
}

/// Round-robin placement: task `i` goes to `vms[i % vms.len()]`.
pub fn place_tasks(tasks: &[TaskId], vms: &[VmId]) -> Result<BTreeMap<TaskId, VmId>, MapReduceError> {
    if vms.is_empty() {
        return Err(MapReduceError::NoVms);
    }
    Ok(tasks.iter().enumerate().map(|(i, &t)| (t, vms[i % vms.len()])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(mr: &str) -> JobSpec {
        JobSpec::preset(JobId(1), JobType::Small, mr.parse().unwrap())
    }

    #[test]
    fn mr_combination_parsing() {
        assert_eq!("M3R1".parse::<MrCombination>().unwrap(), MrCombination::new(3, 1));
        assert_eq!("m20r2".parse::<MrCombination>().unwrap(), MrCombination::new(20, 2));
        assert_eq!(MrCombination::new(40, 1).to_string(), "M40R1");
        for bad in ["M0R1", "M1R0", "MR1", "3R1", "M3", "M-1R1", ""] {
            assert!(bad.parse::<MrCombination>().is_err(), "{bad}");
        }
    }

    #[test]
    fn job_types() {
        assert_eq!(JobType::Medium.length(), 2 * JobType::Small.length());
        assert_eq!(JobType::Big.length(), 2 * JobType::Medium.length());
        assert_eq!("big".parse::<JobType>().unwrap(), JobType::Big);
        assert!("Huge".parse::<JobType>().is_err());
    }

    #[test]
    fn split_m3r1() {
        let (maps, reduces) = split_job(&small("M3R1")).unwrap();
        assert_eq!(maps.iter().map(|t| t.length).collect::<Vec<_>>(), vec![120960.0; 3]);
        assert_eq!(reduces.iter().map(|t| t.length).collect::<Vec<_>>(), vec![120960.0]);
        assert!(maps.iter().chain(&reduces).all(|t| t.input_share == 50000.0));
        assert!(maps.iter().all(|t| t.status == TaskStatus::Pending && t.kind() == TaskKind::Map));
    }

    #[test]
    fn split_m1r1() {
        let (maps, reduces) = split_job(&small("M1R1")).unwrap();
        assert_eq!(maps.len(), 1);
        assert_eq!(maps[0].length, 362880.0);
        assert_eq!(reduces[0].length, 362880.0);
        assert_eq!(maps[0].input_share, 100000.0);
    }

    #[test]
    fn split_rejects_zero_maps() {
        let mut job = small("M1R1");
        job.mr.maps = 0;
        assert!(matches!(split_job(&job), Err(MapReduceError::InvalidJob { .. })));
        job.mr = MrCombination::new(1, 0);
        assert!(split_job(&job).is_err());
    }

    #[test]
    fn split_conserves_non_divisible_lengths() {
        let (maps, reduces) = split_job(&small("M11R1")).unwrap();
        let each = 362880.0 / 11.0;
        assert!(maps.iter().all(|t| (t.length - each).abs() < 1e-9));
        assert!((maps.iter().map(|t| t.length).sum::<f64>() - 362880.0).abs() < 1e-9);
        assert!((reduces[0].length - each).abs() < 1e-9);
    }

    #[test]
    fn doubling_length_doubles_every_task_exactly() {
        for nm in 1..=20 {
            let mr = MrCombination::new(nm, 3);
            let (a, ar) = split_job(&JobSpec::preset(JobId(0), JobType::Small, mr)).unwrap();
            let (b, br) = split_job(&JobSpec::preset(JobId(0), JobType::Medium, mr)).unwrap();
            for (x, y) in a.iter().chain(&ar).zip(b.iter().chain(&br)) {
                assert_eq!(2.0 * x.length, y.length);
            }
        }
    }

    #[test]
    fn split_reduce_ratio() {
        let mut job = small("M4R2");
        job.reduce_ratio = 0.5;
        let (_, reduces) = split_job(&job).unwrap();
        // 0.5 * 362880 / (4 * 2)
        assert_eq!(reduces.iter().map(|t| t.length).collect::<Vec<_>>(), vec![22680.0, 22680.0]);
    }

    fn ids(n: u32) -> Vec<TaskId> {
        (0..n).map(|i| TaskId::map(JobId(0), i)).collect()
    }

    fn loads(n: u32, vms: u32) -> Vec<usize> {
        let vm_ids: Vec<VmId> = (0..vms).map(VmId).collect();
        let placed = place_tasks(&ids(n), &vm_ids).unwrap();
        vm_ids.iter().map(|v| placed.values().filter(|p| *p == v).count()).collect()
    }

    #[test]
    fn round_robin_placement() {
        assert_eq!(loads(3, 3), vec![1, 1, 1]);
        assert_eq!(loads(5, 3), vec![2, 2, 1]);
        assert_eq!(loads(1, 3), vec![1, 0, 0]);
        assert_eq!(place_tasks(&ids(1), &[]), Err(MapReduceError::NoVms));
    }
}
