//! Datacenter capacity, VM provisioning and time-shared task execution.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{TaskId, VmId};

/// Remaining work below this many MI counts as finished. Absorbs the rounding
/// left over when a VM is advanced to a completion instant computed in f64.
pub const COMPLETION_EPSILON_MI: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum ProvisionError {
    #[error("VM count must be at least 1")]
    InvalidCount,
    #[error("invalid {what}: {reason}")]
    InvalidConfig { what: &'static str, reason: String },
    #[error("capacity exceeded: {}", format_violations(.0))]
    CapacityExceeded(Vec<Violation>),
}

#[derive(Debug, Error, PartialEq)]
pub enum VmError {
    #[error("task {task} already queued on VM {vm}")]
    DuplicateTask { vm: VmId, task: TaskId },
    #[error("task {task} has invalid length {length}")]
    InvalidLength { task: TaskId, length: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Pes,
    Ram,
    Storage,
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dimension::Pes => "pes",
            Dimension::Ram => "ram",
            Dimension::Storage => "storage",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub dimension: Dimension,
    pub requested: u64,
    pub available: u64,
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| format!("{} (requested {}, available {})", v.dimension, v.requested, v.available))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Total capacity of the (single) datacenter resource pool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatacenterConfig {
    pub pes_total: u64,
    /// MB
    pub ram_total: u64,
    /// MB
    pub storage_total: u64,
    /// MB/s
    pub bandwidth: f64,
    /// MI/s
    pub mips_per_pe: f64,
}

impl Default for DatacenterConfig {
    fn default() -> Self {
        Self { pes_total: 500, ram_total: 20480, storage_total: 1_000_000, bandwidth: 1000.0, mips_per_pe: 1000.0 }
    }
}

impl DatacenterConfig {
    pub fn validate(&self) -> Result<(), ProvisionError> {
        let bad = |reason: &str| {
            Err(ProvisionError::InvalidConfig { what: "datacenter", reason: reason.to_string() })
        };
        if self.pes_total == 0 || self.ram_total == 0 || self.storage_total == 0 {
            return bad("pes_total, ram_total and storage_total must be positive");
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return bad("bandwidth must be positive");
        }
        if !(self.mips_per_pe > 0.0 && self.mips_per_pe.is_finite()) {
            return bad("mips_per_pe must be positive");
        }
        Ok(())
    }
}

/// One VM type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VmSpec {
    pub name: String,
    /// MB
    pub image_size: u64,
    /// MB
    pub ram: u64,
    /// MI/s
    pub mips: f64,
    /// MB/s
    pub bandwidth: f64,
    pub pes: u32,
    pub cost_per_sec: f64,
}

impl VmSpec {
    pub fn small() -> Self {
        Self::preset("Small", 10000, 512, 250.0, 1, 1.0)
    }

    pub fn medium() -> Self {
        Self::preset("Medium", 20000, 1024, 500.0, 2, 2.0)
    }

    pub fn large() -> Self {
        Self::preset("Large", 40000, 2048, 1000.0, 4, 4.0)
    }

    /// The three built-in VM types, in ascending order of size.
    pub fn catalog() -> Vec<VmSpec> {
        vec![Self::small(), Self::medium(), Self::large()]
    }

    fn preset(name: &str, image_size: u64, ram: u64, mips: f64, pes: u32, cost_per_sec: f64) -> Self {
        Self { name: name.to_string(), image_size, ram, mips, bandwidth: 1000.0, pes, cost_per_sec }
    }

    pub fn validate(&self) -> Result<(), ProvisionError> {
        let bad = |reason: String| Err(ProvisionError::InvalidConfig { what: "vm spec", reason });
        if !(self.mips > 0.0 && self.mips.is_finite()) {
            return bad(format!("{}: mips must be positive", self.name));
        }
        if self.pes == 0 {
            return bad(format!("{}: pes must be at least 1", self.name));
        }
        if !(self.cost_per_sec >= 0.0 && self.cost_per_sec.is_finite()) {
            return bad(format!("{}: cost_per_sec must be non-negative", self.name));
        }
        Ok(())
    }
}

/// How a VM's processing capacity is derived from its spec.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PeSharing {
    /// The VM processes `mips` MI/s in total.
    #[default]
    VmMips,
    /// The VM processes `mips * pes` MI/s in total.
    Aggregate,
}

impl PeSharing {
    pub fn capacity(self, spec: &VmSpec) -> f64 {
        match self {
            PeSharing::VmMips => spec.mips,
            PeSharing::Aggregate => spec.mips * f64::from(spec.pes),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Usage {
    pub pes: u64,
    pub ram: u64,
    pub storage: u64,
}

/// Capacity pool that VMs are provisioned against.
#[derive(Debug)]
pub struct Datacenter {
    config: DatacenterConfig,
    used: Usage,
    next_vm: u32,
}

impl Datacenter {
    pub fn new(config: DatacenterConfig) -> Result<Self, ProvisionError> {
        config.validate()?;
        Ok(Self { config, used: Usage::default(), next_vm: 0 })
    }

    pub fn config(&self) -> &DatacenterConfig {
        &self.config
    }

    pub fn used(&self) -> Usage {
        self.used
    }

    /// Provisions `count` VMs of one type. Either all are admitted or none.
    pub fn provision(
        &mut self,
        spec: &VmSpec,
        count: u32,
        sharing: PeSharing,
    ) -> Result<Vec<VmInstance>, ProvisionError> {
        if count == 0 {
            return Err(ProvisionError::InvalidCount);
        }
        spec.validate()?;
        let n = u64::from(count);
        let want = Usage {
            pes: self.used.pes + n * u64::from(spec.pes),
            ram: self.used.ram + n * spec.ram,
            storage: self.used.storage + n * spec.image_size,
        };
        let checks = [
            (Dimension::Pes, want.pes, self.config.pes_total),
            (Dimension::Ram, want.ram, self.config.ram_total),
            (Dimension::Storage, want.storage, self.config.storage_total),
        ];
        let violations: Vec<Violation> = checks
            .into_iter()
            .filter(|&(_, requested, available)| requested > available)
            .map(|(dimension, requested, available)| Violation { dimension, requested, available })
            .collect();
        if !violations.is_empty() {
            return Err(ProvisionError::CapacityExceeded(violations));
        }
        self.used = want;
        let vms = (0..count)
            .map(|i| VmInstance::new(VmId(self.next_vm + i), spec.clone(), sharing))
            .collect();
        self.next_vm += count;
        Ok(vms)
    }
}

/// Provisions against a fresh pool built from `config`.
pub fn provision(
    config: &DatacenterConfig,
    spec: &VmSpec,
    count: u32,
    sharing: PeSharing,
) -> Result<Vec<VmInstance>, ProvisionError> {
    Datacenter::new(config.clone())?.provision(spec, count, sharing)
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueuedTask {
    pub task: TaskId,
    pub length: f64,
    pub remaining: f64,
}

/// A provisioned VM. Co-resident tasks share the VM capacity equally.
#[derive(Clone, Debug)]
pub struct VmInstance {
    id: VmId,
    spec: VmSpec,
    sharing: PeSharing,
    run_queue: Vec<QueuedTask>,
    busy_time: f64,
    completed_work: f64,
}

impl VmInstance {
    pub fn new(id: VmId, spec: VmSpec, sharing: PeSharing) -> Self {
        Self { id, spec, sharing, run_queue: Vec::new(), busy_time: 0.0, completed_work: 0.0 }
    }

    pub fn id(&self) -> VmId {
        self.id
    }

    pub fn spec(&self) -> &VmSpec {
        &self.spec
    }

    /// Total MI/s available to the run queue.
    pub fn capacity(&self) -> f64 {
        self.sharing.capacity(&self.spec)
    }

    pub fn run_queue(&self) -> &[QueuedTask] {
        &self.run_queue
    }

    pub fn is_idle(&self) -> bool {
        self.run_queue.is_empty()
    }

    /// Seconds this VM has spent with a non-empty run queue.
    pub fn busy_time(&self) -> f64 {
        self.busy_time
    }

    /// Sum of the lengths of all tasks that have left the queue.
    pub fn completed_work(&self) -> f64 {
        self.completed_work
    }

    /// MI/s each queued task currently receives.
    pub fn share(&self) -> f64 {
        if self.run_queue.is_empty() {
            0.0
        } else {
            self.capacity() / self.run_queue.len() as f64
        }
    }

    pub fn assign_task(&mut self, task: TaskId, length: f64) -> Result<(), VmError> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(VmError::InvalidLength { task, length });
        }
        if self.run_queue.iter().any(|q| q.task == task) {
            return Err(VmError::DuplicateTask { vm: self.id, task });
        }
        self.run_queue.push(QueuedTask { task, length, remaining: length });
        Ok(())
    }

    /// Seconds until the next queued task finishes under the current share.
    pub fn next_completion_in(&self) -> Option<f64> {
        let share = self.share();
        self.run_queue
            .iter()
            .map(|q| q.remaining)
            .min_by(f64::total_cmp)
            .map(|r| (r / share).max(0.0))
    }

    /// Projected finish time offsets (seconds from now) of every queued task,
    /// assuming no further arrivals.
    pub fn projected_finish(&self) -> Vec<(TaskId, f64)> {
        let mut order: Vec<&QueuedTask> = self.run_queue.iter().collect();
        order.sort_by(|a, b| a.remaining.total_cmp(&b.remaining));
        let cap = self.capacity();
        let n = order.len();
        let mut t = 0.0;
        let mut done = 0.0;
        order
            .into_iter()
            .enumerate()
            .map(|(i, q)| {
                t += (q.remaining - done) * (n - i) as f64 / cap;
                done = q.remaining;
                (q.task, t)
            })
            .collect()
    }

    /// Advances the VM by `dt` seconds, integrating the equal-share rate
    /// piecewise across every completion inside the interval. Returns the
    /// completed tasks in completion order (ties in arrival order).
    pub fn advance(&mut self, dt: f64) -> Vec<TaskId> {
        assert!(dt >= 0.0, "negative advance {dt}");
        let mut left = dt;
        let mut completed = Vec::new();
        self.collect_finished(&mut completed);
        while left > 0.0 && !self.run_queue.is_empty() {
            let share = self.share();
            let min_rem = self.run_queue.iter().map(|q| q.remaining).fold(f64::INFINITY, f64::min);
            let to_next = min_rem / share;
            let step = to_next.min(left);
            let work = step * share;
            for q in &mut self.run_queue {
                q.remaining = (q.remaining - work).max(0.0);
            }
            self.busy_time += step;
            left -= step;
            self.collect_finished(&mut completed);
        }
        completed
    }

    fn collect_finished(&mut self, out: &mut Vec<TaskId>) {
        let mut i = 0;
        while i < self.run_queue.len() {
            if self.run_queue[i].remaining <= COMPLETION_EPSILON_MI {
                let q = self.run_queue.remove(i);
                self.completed_work += q.length;
                out.push(q.task);
            } else {
                i += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::JobId;

    fn t(i: u32) -> TaskId {
        TaskId::map(JobId(0), i)
    }

    fn small() -> VmInstance {
        VmInstance::new(VmId(0), VmSpec::small(), PeSharing::VmMips)
    }

    #[test]
    fn table_defaults() {
        let dc = DatacenterConfig::default();
        assert_eq!((dc.pes_total, dc.ram_total, dc.storage_total), (500, 20480, 1_000_000));
        assert_eq!((dc.bandwidth, dc.mips_per_pe), (1000.0, 1000.0));
        let rows: Vec<_> = VmSpec::catalog()
            .into_iter()
            .map(|s| (s.image_size, s.ram, s.mips, s.bandwidth, s.pes, s.cost_per_sec))
            .collect();
        assert_eq!(
            rows,
            vec![
                (10000, 512, 250.0, 1000.0, 1, 1.0),
                (20000, 1024, 500.0, 1000.0, 2, 2.0),
                (40000, 2048, 1000.0, 1000.0, 4, 4.0),
            ]
        );
    }

    #[test]
    fn provision_three_small() {
        let mut dc = Datacenter::new(DatacenterConfig::default()).unwrap();
        let vms = dc.provision(&VmSpec::small(), 3, PeSharing::VmMips).unwrap();
        assert_eq!(vms.iter().map(|v| v.id().0).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(dc.used(), Usage { pes: 3, ram: 1536, storage: 30000 });
    }

    #[test]
    fn provision_zero_is_invalid() {
        let err = provision(&DatacenterConfig::default(), &VmSpec::small(), 0, PeSharing::VmMips).unwrap_err();
        assert_eq!(err, ProvisionError::InvalidCount);
    }

    fn violated(count: u32) -> Vec<Dimension> {
        match provision(&DatacenterConfig::default(), &VmSpec::small(), count, PeSharing::VmMips) {
            Ok(_) => vec![],
            Err(ProvisionError::CapacityExceeded(v)) => v.into_iter().map(|v| v.dimension).collect(),
            Err(e) => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn provision_limits_follow_multiply_and_compare() {
        // 40 * 512 = 20480 fits exactly; 41 * 512 = 20992 does not.
        assert!(violated(40).is_empty());
        assert_eq!(violated(41), vec![Dimension::Ram]);
        // 101 * 10000 = 1010000 > 1000000 on storage as well.
        assert_eq!(violated(101), vec![Dimension::Ram, Dimension::Storage]);
        assert_eq!(violated(600), vec![Dimension::Pes, Dimension::Ram, Dimension::Storage]);
    }

    #[test]
    fn provisioning_accumulates_across_calls() {
        let mut dc = Datacenter::new(DatacenterConfig::default()).unwrap();
        dc.provision(&VmSpec::large(), 9, PeSharing::VmMips).unwrap();
        // 9 * 2048 = 18432; one more Large pushes ram to 20480 (ok), two more overflow.
        dc.provision(&VmSpec::large(), 1, PeSharing::VmMips).unwrap();
        let err = dc.provision(&VmSpec::small(), 1, PeSharing::VmMips).unwrap_err();
        assert!(matches!(err, ProvisionError::CapacityExceeded(ref v) if v[0].dimension == Dimension::Ram));
        assert_eq!(dc.used().ram, 20480);
    }

    #[test]
    fn idle_small_vm_single_task() {
        let mut vm = small();
        vm.assign_task(t(0), 120960.0).unwrap();
        assert!((vm.next_completion_in().unwrap() - 483.84).abs() < 1e-9);
    }

    #[test]
    fn two_tasks_share_equally() {
        let mut vm = small();
        vm.assign_task(t(0), 120960.0).unwrap();
        vm.assign_task(t(1), 120960.0).unwrap();
        assert_eq!(vm.share(), 125.0);
        for (_, f) in vm.projected_finish() {
            assert!((f - 967.68).abs() < 1e-9);
        }
        let done = vm.advance(967.68);
        assert_eq!(done, vec![t(0), t(1)]);
    }

    #[test]
    fn large_vm_single_task() {
        let mut vm = VmInstance::new(VmId(0), VmSpec::large(), PeSharing::VmMips);
        vm.assign_task(t(0), 362880.0).unwrap();
        assert!((vm.next_completion_in().unwrap() - 362.88).abs() < 1e-9);
        let mut agg = VmInstance::new(VmId(0), VmSpec::large(), PeSharing::Aggregate);
        agg.assign_task(t(0), 362880.0).unwrap();
        assert!((agg.next_completion_in().unwrap() - 90.72).abs() < 1e-9);
    }

    #[test]
    fn advance_zero_is_noop() {
        let mut vm = small();
        vm.assign_task(t(0), 10.0).unwrap();
        assert!(vm.advance(0.0).is_empty());
        assert_eq!(vm.run_queue()[0].remaining, 10.0);
    }

    #[test]
    fn advance_completes_exact_boundary() {
        let mut vm = small();
        vm.assign_task(t(0), 125.0).unwrap();
        assert_eq!(vm.advance(0.5), vec![t(0)]);
        assert!(vm.is_idle());
    }

    #[test]
    fn advance_two_tasks_half_each() {
        let mut vm = small();
        vm.assign_task(t(0), 250.0).unwrap();
        vm.assign_task(t(1), 250.0).unwrap();
        assert!(vm.advance(1.0).is_empty());
        for q in vm.run_queue() {
            assert_eq!(q.remaining, 125.0);
        }
    }

    #[test]
    fn advance_crosses_boundaries_piecewise() {
        let mut vm = small();
        vm.assign_task(t(0), 100.0).unwrap();
        vm.assign_task(t(1), 300.0).unwrap();
        // Both at 125 MI/s until t0 finishes at 0.8 s; t1 then has 200 left at 250 MI/s.
        let done = vm.advance(1.0);
        assert_eq!(done, vec![t(0)]);
        assert!((vm.run_queue()[0].remaining - 150.0).abs() < 1e-9);
        assert_eq!(vm.advance(0.6), vec![t(1)]);
        assert!((vm.busy_time() - 1.6).abs() < 1e-12);
        assert_eq!(vm.completed_work(), 400.0);
    }

    #[test]
    fn duplicate_and_invalid_tasks_rejected() {
        let mut vm = small();
        vm.assign_task(t(0), 1.0).unwrap();
        assert_eq!(vm.assign_task(t(0), 1.0), Err(VmError::DuplicateTask { vm: VmId(0), task: t(0) }));
        assert!(matches!(vm.assign_task(t(1), 0.0), Err(VmError::InvalidLength { .. })));
        assert!(matches!(vm.assign_task(t(1), f64::NAN), Err(VmError::InvalidLength { .. })));
    }

    #[test]
    fn k_identical_tasks_finish_together() {
        for k in 1..=7u32 {
            let mut vm = small();
            for i in 0..k {
                vm.assign_task(t(i), 1000.0).unwrap();
            }
            let expected = f64::from(k) * 1000.0 / 250.0;
            let done = vm.advance(expected);
            assert_eq!(done.len(), k as usize);
        }
    }
}
