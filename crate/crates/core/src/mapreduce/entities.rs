//! Kernel entities for one MapReduce run.
//!
//! Message flow for a job:
//!
//! ```text
//! UserBroker --job-submit--> JobTracker
//! JobTracker --data-fetch-complete--> JobTracker          (network delay only)
//! JobTracker --task-submit--> TaskTracker --task-submit--> Datacenter
//! Datacenter --task-complete--> TaskTracker --task-complete--> JobTracker
//! JobTracker --shuffle-complete--> JobTracker             (network delay only)
//! JobTracker --acknowledge--> UserBroker                  (job finished)
//! ```
//!
//! The datacenter also sends itself `task-complete` events tagged with a VM
//! epoch to wake up at the next projected completion on a VM; an epoch that no
//! longer matches the VM means the run queue changed since and the wake-up is
//! ignored.

use std::collections::BTreeMap;

use crate::ids::{JobId, TaskId, TaskKind, VmId};
use crate::infra::VmInstance;
use crate::kernel::{Entity, EntityId, EventTag, Scheduler, SimEvent, SimTime};
use crate::storage_net::{self, DelayBreakdown, DelayModel};

use super::{place_tasks, split_job, JobProgress, JobSpec, MapReduceError, SequentialBroker, Task, TaskStatus};

#[derive(Clone, Debug, Default, PartialEq)]
pub enum Payload {
    #[default]
    Empty,
    Job(JobId),
    Submit {
        task: TaskId,
        vm: VmId,
        length: f64,
    },
    VmCheck {
        vm: VmId,
        epoch: u64,
    },
    Completed {
        task: TaskId,
        vm: VmId,
        start: SimTime,
        finish: SimTime,
    },
    JobDone(JobId),
}

fn unexpected(entity: &str, ev: &SimEvent<Payload>) -> crate::Error {
    MapReduceError::Protocol(format!("{entity} got {} with {:?}", ev.tag(), ev.payload())).into()
}

/// Submits every job at creation and records when each one finishes.
pub(super) struct UserBroker {
    job_tracker: EntityId,
    jobs: Vec<JobId>,
    pub(super) finished: BTreeMap<JobId, SimTime>,
}

impl UserBroker {
    pub(super) fn new(job_tracker: EntityId, jobs: Vec<JobId>) -> Self {
        Self { job_tracker, jobs, finished: BTreeMap::new() }
    }
}

impl Entity<Payload> for UserBroker {
    fn name(&self) -> &str {
        "broker"
    }

    fn handle(&mut self, ev: &SimEvent<Payload>, s: &mut Scheduler<Payload>) -> crate::Result<()> {
        match (ev.tag(), ev.payload()) {
            (EventTag::EntityCreation, _) => {
                for &job in &self.jobs {
                    s.schedule(self.job_tracker, 0.0, EventTag::JobSubmit, Payload::Job(job))?;
                }
            }
            (EventTag::Acknowledge, Payload::JobDone(job)) => {
                self.finished.insert(*job, s.now());
            }
            (EventTag::Termination, _) => {}
            _ => return Err(unexpected(self.name(), ev)),
        }
        Ok(())
    }
}

pub(super) struct JobState {
    pub(super) tasks: BTreeMap<TaskId, Task>,
    placement: BTreeMap<TaskId, VmId>,
    progress: JobProgress,
    broker: SequentialBroker,
    pub(super) breakdown: DelayBreakdown,
}

/// Splits jobs, places their tasks and enforces the map/reduce barrier.
pub(super) struct JobTracker {
    task_tracker: EntityId,
    user: EntityId,
    vms: Vec<VmId>,
    delay: DelayModel,
    pending: BTreeMap<JobId, JobSpec>,
    pub(super) jobs: BTreeMap<JobId, JobState>,
}

impl JobTracker {
    pub(super) fn new(
        task_tracker: EntityId,
        user: EntityId,
        vms: Vec<VmId>,
        delay: DelayModel,
        jobs: Vec<JobSpec>,
    ) -> Self {
        let pending = jobs.into_iter().map(|j| (j.job_id, j)).collect();
        Self { task_tracker, user, vms, delay, pending, jobs: BTreeMap::new() }
    }

    fn accept(&mut self, job: JobId, s: &mut Scheduler<Payload>) -> crate::Result<()> {
        let spec = self
            .pending
            .remove(&job)
            .ok_or_else(|| MapReduceError::Protocol(format!("job {job} submitted twice or unknown")))?;
        let (maps, reduces) = split_job(&spec)?;
        let pool: Vec<VmId> = match &spec.vm_pool {
            Some(idx) => idx.iter().map(|&i| self.vms[i]).collect(),
            None => self.vms.clone(),
        };
        let map_ids: Vec<TaskId> = maps.iter().map(|t| t.id).collect();
        let reduce_ids: Vec<TaskId> = reduces.iter().map(|t| t.id).collect();
        let mut placement = place_tasks(&map_ids, &pool)?;
        placement.extend(place_tasks(&reduce_ids, &pool)?);

        let breakdown = storage_net::breakdown(&spec, &self.delay);
        let mut state = JobState {
            progress: JobProgress::new(job, spec.nm(), spec.nr()),
            broker: SequentialBroker::new([map_ids, reduce_ids]),
            tasks: maps.into_iter().chain(reduces).map(|t| (t.id, t)).collect(),
            placement,
            breakdown,
        };
        if breakdown.fetch_delay > 0.0 {
            for t in state.tasks.values_mut().filter(|t| t.kind() == TaskKind::Map) {
                t.status = TaskStatus::Fetching;
            }
            s.schedule(s.current().unwrap(), breakdown.fetch_delay, EventTag::DataFetchComplete, Payload::Job(job))?;
            self.jobs.insert(job, state);
        } else {
            self.jobs.insert(job, state);
            self.release(job, s)?;
        }
        Ok(())
    }

    fn release(&mut self, job: JobId, s: &mut Scheduler<Payload>) -> crate::Result<()> {
        let state = self.jobs.get_mut(&job).expect("released job exists");
        let Some(batch) = state.broker.next_batch() else {
            return Ok(());
        };
        for id in batch {
            let task = state.tasks.get_mut(&id).expect("task in batch");
            task.status = TaskStatus::Running;
            let vm = state.placement[&id];
            task.vm_id = Some(vm);
            let payload = Payload::Submit { task: id, vm, length: task.length };
            s.schedule(self.task_tracker, 0.0, EventTag::TaskSubmit, payload)?;
        }
        Ok(())
    }

    fn completed(
        &mut self,
        task: TaskId,
        vm: VmId,
        start: SimTime,
        finish: SimTime,
        s: &mut Scheduler<Payload>,
    ) -> crate::Result<()> {
        let job = task.job;
        let state = self.jobs.get_mut(&job).ok_or(MapReduceError::UnknownTask(task))?;
        let record = state.tasks.get_mut(&task).ok_or(MapReduceError::UnknownTask(task))?;
        if record.status == TaskStatus::Done {
            return Err(MapReduceError::DuplicateCompletion(task).into());
        }
        record.status = TaskStatus::Done;
        record.vm_id = Some(vm);
        record.start_time = Some(start);
        record.finish_time = Some(finish);
        state.broker.complete(task)?;
        match task.kind {
            TaskKind::Map => {
                if state.progress.on_map_complete(task)?.is_some() {
                    let shuffle = state.breakdown.shuffle_delay;
                    if shuffle > 0.0 {
                        s.schedule(s.current().unwrap(), shuffle, EventTag::ShuffleComplete, Payload::Job(job))?;
                    } else {
                        self.release(job, s)?;
                    }
                }
            }
            TaskKind::Reduce => {
                if state.progress.on_reduce_complete(task)? {
                    log::debug!("t={} job {job} complete", s.now());
                    s.schedule(self.user, 0.0, EventTag::Acknowledge, Payload::JobDone(job))?;
                }
            }
        }
        Ok(())
    }
}

impl Entity<Payload> for JobTracker {
    fn name(&self) -> &str {
        "job-tracker"
    }

    fn handle(&mut self, ev: &SimEvent<Payload>, s: &mut Scheduler<Payload>) -> crate::Result<()> {
        match (ev.tag(), ev.payload()) {
            (EventTag::EntityCreation | EventTag::Termination, _) => Ok(()),
            (EventTag::JobSubmit, Payload::Job(job)) => self.accept(*job, s),
            (EventTag::DataFetchComplete | EventTag::ShuffleComplete, Payload::Job(job)) => self.release(*job, s),
            (EventTag::TaskComplete, &Payload::Completed { task, vm, start, finish }) => {
                self.completed(task, vm, start, finish, s)
            }
            _ => Err(unexpected(self.name(), ev)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StatusUpdate {
    pub time: SimTime,
    pub task: TaskId,
    pub vm: VmId,
    pub status: TaskStatus,
}

/// Relays tasks to the datacenter and reports their status back.
pub(super) struct TaskTracker {
    job_tracker: EntityId,
    datacenter: EntityId,
    pub(super) log: Vec<StatusUpdate>,
}

impl TaskTracker {
    pub(super) fn new(job_tracker: EntityId, datacenter: EntityId) -> Self {
        Self { job_tracker, datacenter, log: Vec::new() }
    }
}

impl Entity<Payload> for TaskTracker {
    fn name(&self) -> &str {
        "task-tracker"
    }

    fn handle(&mut self, ev: &SimEvent<Payload>, s: &mut Scheduler<Payload>) -> crate::Result<()> {
        match (ev.tag(), ev.payload()) {
            (EventTag::EntityCreation | EventTag::Termination, _) => {}
            (EventTag::TaskSubmit, p @ &Payload::Submit { task, vm, .. }) => {
                self.log.push(StatusUpdate { time: s.now(), task, vm, status: TaskStatus::Running });
                s.schedule(self.datacenter, 0.0, EventTag::TaskSubmit, p.clone())?;
            }
            (EventTag::TaskComplete, p @ &Payload::Completed { task, vm, .. }) => {
                self.log.push(StatusUpdate { time: s.now(), task, vm, status: TaskStatus::Done });
                s.schedule(self.job_tracker, 0.0, EventTag::TaskComplete, p.clone())?;
            }
            _ => return Err(unexpected(self.name(), ev)),
        }
        Ok(())
    }
}

struct VmSlot {
    vm: VmInstance,
    last_update: SimTime,
    epoch: u64,
}

/// Hosts the provisioned VMs and executes tasks on them.
pub(super) struct DatacenterEntity {
    task_tracker: EntityId,
    slots: Vec<VmSlot>,
    starts: BTreeMap<TaskId, SimTime>,
}

impl DatacenterEntity {
    pub(super) fn new(task_tracker: EntityId, vms: Vec<VmInstance>) -> Self {
        let slots = vms.into_iter().map(|vm| VmSlot { vm, last_update: SimTime::ZERO, epoch: 0 }).collect();
        Self { task_tracker, slots, starts: BTreeMap::new() }
    }

    pub(super) fn vms(&self) -> impl Iterator<Item = &VmInstance> {
        self.slots.iter().map(|s| &s.vm)
    }

    fn slot_index(&self, vm: VmId) -> crate::Result<usize> {
        self.slots
            .iter()
            .position(|s| s.vm.id() == vm)
            .ok_or_else(|| MapReduceError::Protocol(format!("unknown VM {vm}")).into())
    }

    /// Brings a VM up to the current clock and reports finished tasks.
    fn catch_up(&mut self, idx: usize, s: &mut Scheduler<Payload>) -> crate::Result<()> {
        let now = s.now();
        let slot = &mut self.slots[idx];
        let dt = now.seconds() - slot.last_update.seconds();
        slot.last_update = now;
        let vm = slot.vm.id();
        for task in slot.vm.advance(dt) {
            let start = self.starts.remove(&task).expect("started task");
            let payload = Payload::Completed { task, vm, start, finish: now };
            s.schedule(self.task_tracker, 0.0, EventTag::TaskComplete, payload)?;
        }
        Ok(())
    }

    fn rearm(&mut self, idx: usize, s: &mut Scheduler<Payload>) -> crate::Result<()> {
        let me = s.current().unwrap();
        let slot = &mut self.slots[idx];
        slot.epoch += 1;
        if let Some(dt) = slot.vm.next_completion_in() {
            let payload = Payload::VmCheck { vm: slot.vm.id(), epoch: slot.epoch };
            s.schedule(me, dt, EventTag::TaskComplete, payload)?;
        }
        Ok(())
    }
}

impl Entity<Payload> for DatacenterEntity {
    fn name(&self) -> &str {
        "datacenter"
    }

    fn handle(&mut self, ev: &SimEvent<Payload>, s: &mut Scheduler<Payload>) -> crate::Result<()> {
        match (ev.tag(), ev.payload()) {
            (EventTag::EntityCreation | EventTag::Termination, _) => {}
            (EventTag::TaskSubmit, &Payload::Submit { task, vm, length }) => {
                let idx = self.slot_index(vm)?;
                self.catch_up(idx, s)?;
                self.slots[idx].vm.assign_task(task, length)?;
                self.starts.insert(task, s.now());
                self.rearm(idx, s)?;
            }
            (EventTag::TaskComplete, &Payload::VmCheck { vm, epoch }) => {
                let idx = self.slot_index(vm)?;
                if self.slots[idx].epoch == epoch {
                    self.catch_up(idx, s)?;
                    self.rearm(idx, s)?;
                }
            }
            _ => return Err(unexpected(self.name(), ev)),
        }
        Ok(())
    }
}
