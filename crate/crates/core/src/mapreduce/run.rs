use std::collections::BTreeSet;

use crate::ids::{TaskKind, VmId};
use crate::infra::{Datacenter, DatacenterConfig, PeSharing, Usage, VmSpec};
use crate::kernel::{EntityId, SimTime, Simulation, TraceRecord};
use crate::storage_net::{DelayBreakdown, DelayModel};

use super::entities::{DatacenterEntity, JobTracker, Payload, StatusUpdate, TaskTracker, UserBroker};
use super::{JobSpec, MapReduceError, Task};

/// Everything needed for one simulation run.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub datacenter: DatacenterConfig,
    pub vm_spec: VmSpec,
    pub vm_count: u32,
    pub pe_sharing: PeSharing,
    pub jobs: Vec<JobSpec>,
    pub delay: DelayModel,
    pub trace: bool,
}

impl RunConfig {
    pub fn new(vm_spec: VmSpec, vm_count: u32, jobs: Vec<JobSpec>, delay: DelayModel) -> Self {
        Self {
            datacenter: DatacenterConfig::default(),
            vm_spec,
            vm_count,
            pe_sharing: PeSharing::default(),
            jobs,
            delay,
            trace: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct JobOutcome {
    pub spec: JobSpec,
    /// Maps in index order, then reduces in index order.
    pub tasks: Vec<Task>,
    pub breakdown: DelayBreakdown,
    pub completed_at: SimTime,
}

impl JobOutcome {
    pub fn maps(&self) -> impl Iterator<Item = &Task> {
        self.tasks.iter().filter(|t| t.kind() == TaskKind::Map)
    }

    pub fn reduces(&self) -> impl Iterator<Item = &Task> {
        self.tasks.iter().filter(|t| t.kind() == TaskKind::Reduce)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VmUsage {
    pub id: VmId,
    pub spec: VmSpec,
    /// MI/s
    pub capacity: f64,
    pub busy_time: f64,
    /// MI
    pub completed_work: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub final_time: SimTime,
    pub jobs: Vec<JobOutcome>,
    pub vms: Vec<VmUsage>,
    pub provisioned: Usage,
    pub status_log: Vec<StatusUpdate>,
    pub trace: Vec<TraceRecord>,
}

const DATACENTER: EntityId = EntityId(0);
const TASK_TRACKER: EntityId = EntityId(1);
const JOB_TRACKER: EntityId = EntityId(2);
const USER: EntityId = EntityId(3);

/// Provisions the VMs, runs every job to completion and collects the results.
pub fn run(config: &RunConfig) -> crate::Result<RunOutcome> {
    let mut seen = BTreeSet::new();
    for job in &config.jobs {
        job.validate()?;
        if !seen.insert(job.job_id) {
            return Err(MapReduceError::DuplicateJob(job.job_id).into());
        }
        if let Some(pool) = &job.vm_pool {
            if let Some(&index) = pool.iter().find(|&&i| i >= config.vm_count as usize) {
                return Err(MapReduceError::VmOutOfRange {
                    job: job.job_id,
                    index,
                    available: config.vm_count as usize,
                }
                .into());
            }
        }
    }
    config.delay.validate().map_err(MapReduceError::Protocol)?;

    let mut dc = Datacenter::new(config.datacenter.clone())?;
    let vms = dc.provision(&config.vm_spec, config.vm_count, config.pe_sharing)?;
    let vm_ids: Vec<VmId> = vms.iter().map(|v| v.id()).collect();

    let mut sim = Simulation::<Payload>::new();
    if config.trace {
        sim.enable_trace();
    }
    let ids = [
        sim.register(DatacenterEntity::new(TASK_TRACKER, vms))?,
        sim.register(TaskTracker::new(JOB_TRACKER, DATACENTER))?,
        sim.register(JobTracker::new(TASK_TRACKER, USER, vm_ids, config.delay, config.jobs.clone()))?,
        sim.register(UserBroker::new(JOB_TRACKER, config.jobs.iter().map(|j| j.job_id).collect()))?,
    ];
    debug_assert_eq!(ids, [DATACENTER, TASK_TRACKER, JOB_TRACKER, USER]);

    let final_time = sim.run()?;

    let user = sim.entity::<UserBroker>(USER).expect("user broker");
    let tracker = sim.entity::<JobTracker>(JOB_TRACKER).expect("job tracker");
    let mut jobs = Vec::with_capacity(config.jobs.len());
    for spec in &config.jobs {
        let state = &tracker.jobs[&spec.job_id];
        let completed_at = *user
            .finished
            .get(&spec.job_id)
            .ok_or_else(|| MapReduceError::Protocol(format!("job {} never completed", spec.job_id)))?;
        jobs.push(JobOutcome {
            spec: spec.clone(),
            tasks: state.tasks.values().cloned().collect(),
            breakdown: state.breakdown,
            completed_at,
        });
    }
    let vms = sim
        .entity::<DatacenterEntity>(DATACENTER)
        .expect("datacenter")
        .vms()
        .map(|vm| VmUsage {
            id: vm.id(),
            spec: vm.spec().clone(),
            capacity: vm.capacity(),
            busy_time: vm.busy_time(),
            completed_work: vm.completed_work(),
        })
        .collect();
    let status_log = sim.entity::<TaskTracker>(TASK_TRACKER).expect("task tracker").log.clone();

    Ok(RunOutcome { final_time, jobs, vms, provisioned: dc.used(), status_log, trace: sim.take_trace() })
}
