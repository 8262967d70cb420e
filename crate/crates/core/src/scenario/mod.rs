//! Scenario files, experiment-group presets and report emission.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! [datacenter]              # optional; defaults to the built-in pool
//! pes_total = 500
//!
//! [[vm_types]]              # optional; adds to / overrides Small, Medium, Large
//! name = "XLarge"
//! image_size = 80000
//! ram = 4096
//! mips = 2000.0
//! bandwidth = 1000.0
//! pes = 8
//! cost_per_sec = 8.0
//!
//! [vm]
//! type = "Small"
//! count = 3
//! pe_sharing = "vm-mips"    # or "aggregate"
//!
//! [[jobs]]
//! job_type = "Small"        # Small | Medium | Big
//! mr = "M1R1"
//! # id, length, data_size, reduce_ratio, vms = [0, 1] are optional
//!
//! [delay]
//! mode = "network-delay"    # or "no-delay"
//!
//! [sweep]                   # optional
//! maps = [1, 20]            # inclusive range of map counts
//! vm_count = [3, 6, 9]      # at most one of vm_count / vm_type / job_type
//!
//! [output]
//! path = "report.csv"
//! format = "csv"            # or "json"
//! trace = "trace.csv"
//! ```

mod groups;
mod report;

use std::ops::RangeInclusive;
use std::path::PathBuf;

use serde::Deserialize;
use thiserror::Error;

use crate::ids::JobId;
use crate::infra::{Datacenter, DatacenterConfig, PeSharing, ProvisionError, VmSpec};
use crate::mapreduce::{JobSpec, JobType, MrCombination, RunConfig};
use crate::storage_net::{DelayMode, DelayModel};

pub use groups::{run_group, run_points, run_scenario, ExperimentGroup, PointResult, SweepOutput};
pub use report::{
    emit_report, parse_json, plot_series, render, resolve_output_path, ReportFormat, ReportRow, ResultTable,
    CSV_COLUMNS, OUT_DIR_ENV,
};

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("{field}: {source}")]
    Provision {
        field: String,
        #[source]
        source: ProvisionError,
    },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { field: field.into(), message: message.into() }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default)]
    datacenter: DatacenterConfig,
    #[serde(default)]
    vm_types: Vec<VmSpec>,
    vm: RawVm,
    jobs: Vec<RawJob>,
    #[serde(default)]
    delay: RawDelay,
    sweep: Option<RawSweep>,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVm {
    #[serde(rename = "type")]
    vm_type: String,
    count: u32,
    #[serde(default)]
    pe_sharing: PeSharing,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJob {
    id: Option<u32>,
    job_type: JobType,
    mr: MrCombination,
    length: Option<u64>,
    data_size: Option<f64>,
    reduce_ratio: Option<f64>,
    vms: Option<Vec<usize>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDelay {
    #[serde(default)]
    mode: DelayMode,
    storage_bandwidth: Option<f64>,
    network_cost_per_unit: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    maps: Option<[u32; 2]>,
    vm_count: Option<Vec<u32>>,
    vm_type: Option<Vec<String>>,
    job_type: Option<Vec<JobType>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    path: Option<PathBuf>,
    format: Option<ReportFormat>,
    trace: Option<PathBuf>,
}

/// The categorical variable a sweep varies besides the map count.
#[derive(Clone, Debug, PartialEq)]
pub enum SweepAxis {
    VmCount(Vec<u32>),
    VmType(Vec<VmSpec>),
    JobType(Vec<JobType>),
}

impl SweepAxis {
    fn len(&self) -> usize {
        match self {
            SweepAxis::VmCount(v) => v.len(),
            SweepAxis::VmType(v) => v.len(),
            SweepAxis::JobType(v) => v.len(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Sweep {
    /// Map counts to run; every job keeps its reduce count.
    pub maps: Option<RangeInclusive<u32>>,
    pub axis: Option<SweepAxis>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OutputSpec {
    pub path: Option<PathBuf>,
    pub format: Option<ReportFormat>,
    pub trace: Option<PathBuf>,
}

/// A validated scenario with defaults applied.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub datacenter: DatacenterConfig,
    pub catalog: Vec<VmSpec>,
    pub vm: VmSpec,
    pub vm_count: u32,
    pub pe_sharing: PeSharing,
    pub jobs: Vec<JobSpec>,
    pub delay: DelayModel,
    pub sweep: Option<Sweep>,
    pub output: OutputSpec,
}

/// One concrete run produced by expanding a scenario's sweep.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub index: usize,
    pub label: String,
    pub config: RunConfig,
}

impl Scenario {
    /// Single Small job on three Small VMs, everything else at defaults.
    pub fn baseline(job_type: JobType, mr: MrCombination, mode: DelayMode) -> Self {
        Self {
            datacenter: DatacenterConfig::default(),
            catalog: VmSpec::catalog(),
            vm: VmSpec::small(),
            vm_count: 3,
            pe_sharing: PeSharing::default(),
            jobs: vec![JobSpec::preset(JobId(0), job_type, mr)],
            delay: DelayModel::new(mode),
            sweep: None,
            output: OutputSpec::default(),
        }
    }

    /// Expands the sweep into runs, ordered by axis value then map count.
    pub fn points(&self) -> Vec<SweepPoint> {
        let sweep = self.sweep.clone().unwrap_or_default();
        let maps: Vec<Option<u32>> = match &sweep.maps {
            Some(r) => r.clone().map(Some).collect(),
            None => vec![None],
        };
        let axis_len = sweep.axis.as_ref().map_or(1, SweepAxis::len);
        let mut out = Vec::with_capacity(axis_len * maps.len());
        for a in 0..axis_len {
            for &nm in &maps {
                let mut config = RunConfig {
                    datacenter: self.datacenter.clone(),
                    vm_spec: self.vm.clone(),
                    vm_count: self.vm_count,
                    pe_sharing: self.pe_sharing,
                    jobs: self.jobs.clone(),
                    delay: self.delay,
                    trace: false,
                };
                let mut label = Vec::new();
                match &sweep.axis {
                    Some(SweepAxis::VmCount(v)) => {
                        config.vm_count = v[a];
                        label.push(format!("vm_count={}", v[a]));
                    }
                    Some(SweepAxis::VmType(v)) => {
                        config.vm_spec = v[a].clone();
                        label.push(format!("vm_type={}", v[a].name));
                    }
                    Some(SweepAxis::JobType(v)) => {
                        for job in &mut config.jobs {
                            job.job_type = v[a];
                            job.length = v[a].length();
                            job.data_size = v[a].data_size();
                        }
                        label.push(format!("job_type={}", v[a]));
                    }
                    None => {}
                }
                if let Some(nm) = nm {
                    for job in &mut config.jobs {
                        job.mr.maps = nm;
                    }
                    label.push(format!("maps={nm}"));
                }
                let index = out.len();
                if label.is_empty() {
                    label.push("base".to_string());
                }
                out.push(SweepPoint { index, label: label.join(","), config });
            }
        }
        out
    }

    /// Checks that every sweep point's VM request fits the datacenter.
    fn check_capacity(&self) -> Result<(), ScenarioError> {
        for point in self.points() {
            let c = &point.config;
            Datacenter::new(c.datacenter.clone())
                .and_then(|mut dc| dc.provision(&c.vm_spec, c.vm_count, c.pe_sharing).map(|_| ()))
                .map_err(|source| ScenarioError::Provision { field: format!("vm ({})", point.label), source })?;
        }
        Ok(())
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

fn lookup_vm(catalog: &[VmSpec], name: &str, field: &str) -> Result<VmSpec, ScenarioError> {
    catalog
        .iter()
        .find(|s| s.name.eq_ignore_ascii_case(name))
        .cloned()
        .ok_or_else(|| invalid(field, format!("unknown VM type `{name}`")))
}

/// Parses and validates a scenario, applying defaults for everything omitted.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        ScenarioError::Syntax { line, column, message: e.message().to_string() }
    })?;

    raw.datacenter
        .validate()
        .map_err(|source| ScenarioError::Provision { field: "datacenter".into(), source })?;

    let mut catalog = VmSpec::catalog();
    for (i, spec) in raw.vm_types.into_iter().enumerate() {
        spec.validate().map_err(|e| invalid(format!("vm_types[{i}]"), e.to_string()))?;
        match catalog.iter_mut().find(|s| s.name.eq_ignore_ascii_case(&spec.name)) {
            Some(slot) => *slot = spec,
            None => catalog.push(spec),
        }
    }

    let vm = lookup_vm(&catalog, &raw.vm.vm_type, "vm.type")?;
    if raw.vm.count == 0 {
        return Err(invalid("vm.count", "must be at least 1"));
    }

    if raw.jobs.is_empty() {
        return Err(invalid("jobs", "at least one job is required"));
    }
    let mut jobs = Vec::with_capacity(raw.jobs.len());
    for (i, rj) in raw.jobs.into_iter().enumerate() {
        let field = format!("jobs[{i}]");
        let id = JobId(rj.id.unwrap_or(i as u32));
        if jobs.iter().any(|j: &JobSpec| j.job_id == id) {
            return Err(invalid(format!("{field}.id"), format!("duplicate job id {id}")));
        }
        let mut job = JobSpec::preset(id, rj.job_type, rj.mr);
        if let Some(length) = rj.length {
            job.length = length;
        }
        if let Some(data_size) = rj.data_size {
            job.data_size = data_size;
        }
        if let Some(ratio) = rj.reduce_ratio {
            job.reduce_ratio = ratio;
        }
        if let Some(vms) = rj.vms {
            if let Some(&bad) = vms.iter().find(|&&v| v >= raw.vm.count as usize) {
                return Err(invalid(format!("{field}.vms"), format!("VM index {bad} out of range")));
            }
            job.vm_pool = Some(vms);
        }
        job.validate().map_err(|e| invalid(&field, e.to_string()))?;
        jobs.push(job);
    }

    let mut delay = DelayModel::new(raw.delay.mode);
    if let Some(bw) = raw.delay.storage_bandwidth {
        delay.storage_bandwidth = bw;
    }
    if let Some(c) = raw.delay.network_cost_per_unit {
        delay.network_cost_per_unit = c;
    }
    delay.validate().map_err(|m| invalid("delay", m))?;

    let sweep = raw.sweep.map(|s| parse_sweep(s, &catalog)).transpose()?;

    let scenario = Scenario {
        datacenter: raw.datacenter,
        catalog,
        vm,
        vm_count: raw.vm.count,
        pe_sharing: raw.vm.pe_sharing,
        jobs,
        delay,
        sweep,
        output: OutputSpec { path: raw.output.path, format: raw.output.format, trace: raw.output.trace },
    };
    if let Some(SweepAxis::VmCount(counts)) = scenario.sweep.as_ref().and_then(|s| s.axis.as_ref()) {
        for job in &scenario.jobs {
            if let Some(&bad) = job.vm_pool.iter().flatten().find(|&&v| counts.iter().any(|&c| v >= c as usize)) {
                return Err(invalid("sweep.vm_count", format!("job {} uses VM index {bad}", job.job_id)));
            }
        }
    }
    scenario.check_capacity()?;
    Ok(scenario)
}

fn parse_sweep(raw: RawSweep, catalog: &[VmSpec]) -> Result<Sweep, ScenarioError> {
    let maps = match raw.maps {
        Some([lo, hi]) if lo >= 1 && lo <= hi => Some(lo..=hi),
        Some(_) => return Err(invalid("sweep.maps", "expected [first, last] with 1 <= first <= last")),
        None => None,
    };
    let mut axes = Vec::new();
    if let Some(mut counts) = raw.vm_count {
        if counts.contains(&0) {
            return Err(invalid("sweep.vm_count", "VM counts must be at least 1"));
        }
        counts.sort_unstable();
        counts.dedup();
        axes.push(("vm_count", SweepAxis::VmCount(counts)));
    }
    if let Some(names) = raw.vm_type {
        let mut specs = Vec::with_capacity(names.len());
        for name in &names {
            let spec = lookup_vm(catalog, name, "sweep.vm_type")?;
            if !specs.iter().any(|s: &VmSpec| s.name == spec.name) {
                specs.push(spec);
            }
        }
        specs.sort_by(|a, b| a.mips.total_cmp(&b.mips));
        axes.push(("vm_type", SweepAxis::VmType(specs)));
    }
    if let Some(mut types) = raw.job_type {
        types.sort();
        types.dedup();
        axes.push(("job_type", SweepAxis::JobType(types)));
    }
    if axes.len() > 1 {
        let names: Vec<_> = axes.iter().map(|(n, _)| *n).collect();
        return Err(invalid("sweep", format!("only one of vm_count, vm_type, job_type may be swept, got {names:?}")));
    }
    let axis = axes.pop().map(|(_, a)| a);
    if let Some(a) = &axis {
        if a.len() == 0 {
            return Err(invalid("sweep", "sweep axis has no values"));
        }
    }
    if maps.is_none() && axis.is_none() {
        return Err(invalid("sweep", "a sweep needs `maps` or one axis"));
    }
    Ok(Sweep { maps, axis })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[vm]
type = "Small"
count = 3

[[jobs]]
job_type = "Small"
mr = "M1R1"
"#;

    #[test]
    fn minimal_scenario_gets_defaults() {
        let s = parse_scenario(MINIMAL).unwrap();
        assert_eq!(s.datacenter, DatacenterConfig::default());
        assert_eq!(s.vm, VmSpec::small());
        assert_eq!(s.vm_count, 3);
        assert_eq!(s.jobs, vec![JobSpec::preset(JobId(0), JobType::Small, MrCombination::new(1, 1))]);
        assert_eq!(s.delay, DelayModel::new(DelayMode::NoDelay));
        assert_eq!(s.catalog, VmSpec::catalog());
        assert!(s.sweep.is_none());
        assert_eq!(s.points().len(), 1);
    }

    #[test]
    fn zero_vm_count_is_rejected() {
        let err = parse_scenario(&MINIMAL.replace("count = 3", "count = 0")).unwrap_err();
        assert_eq!(err, invalid("vm.count", "must be at least 1"));
    }

    #[test]
    fn oversized_request_fails_before_running() {
        let err = parse_scenario(&MINIMAL.replace("count = 3", "count = 600")).unwrap_err();
        match err {
            ScenarioError::Provision { source: ProvisionError::CapacityExceeded(v), .. } => {
                assert_eq!(v[0].dimension, crate::infra::Dimension::Pes);
                assert_eq!(v[0].requested, 600);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_reports_location() {
        let text = MINIMAL.replace("count = 3", "count = 3\ncolour = \"red\"");
        match parse_scenario(&text).unwrap_err() {
            ScenarioError::Syntax { line, message, .. } => {
                assert_eq!(line, 5);
                assert!(message.contains("colour"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_field_and_bad_values() {
        assert!(matches!(parse_scenario("[vm]\ntype = \"Small\"\ncount = 3\n"), Err(ScenarioError::Syntax { .. })));
        assert!(matches!(
            parse_scenario(&MINIMAL.replace("M1R1", "M0R1")),
            Err(ScenarioError::Syntax { line: 8, .. })
        ));
        assert!(matches!(
            parse_scenario(&MINIMAL.replacen("type = \"Small\"", "type = \"Tiny\"", 1)),
            Err(ScenarioError::Invalid { ref field, .. }) if field == "vm.type"
        ));
    }

    #[test]
    fn custom_catalog_and_overrides() {
        let text = r#"
[[vm_types]]
name = "XLarge"
image_size = 80000
ram = 4096
mips = 2000.0
bandwidth = 1000.0
pes = 8
cost_per_sec = 8.0

[vm]
type = "xlarge"
count = 2
pe_sharing = "aggregate"

[[jobs]]
id = 7
job_type = "Big"
mr = "M4R2"
reduce_ratio = 0.5
vms = [1]

[delay]
mode = "network-delay"
network_cost_per_unit = 2.0
"#;
        let s = parse_scenario(text).unwrap();
        assert_eq!(s.vm.name, "XLarge");
        assert_eq!(s.pe_sharing, PeSharing::Aggregate);
        assert_eq!(s.catalog.len(), 4);
        let job = &s.jobs[0];
        assert_eq!((job.job_id, job.length, job.reduce_ratio), (JobId(7), 1_451_520, 0.5));
        assert_eq!(job.vm_pool, Some(vec![1]));
        assert_eq!(s.delay.mode, DelayMode::NetworkDelay);
        assert_eq!(s.delay.network_cost_per_unit, 2.0);
    }

    #[test]
    fn sweep_expansion_order() {
        let text = format!("{MINIMAL}\n[sweep]\nmaps = [1, 3]\nvm_count = [9, 3, 6]\n");
        let s = parse_scenario(&text).unwrap();
        let labels: Vec<String> = s.points().into_iter().map(|p| p.label).collect();
        assert_eq!(labels.len(), 9);
        assert_eq!(labels[0], "vm_count=3,maps=1");
        assert_eq!(labels[2], "vm_count=3,maps=3");
        assert_eq!(labels[8], "vm_count=9,maps=3");
    }

    #[test]
    fn sweep_rejects_two_axes_and_oversize_points() {
        let two = format!("{MINIMAL}\n[sweep]\nvm_count = [3]\njob_type = [\"Small\"]\n");
        assert!(matches!(parse_scenario(&two), Err(ScenarioError::Invalid { ref field, .. }) if field == "sweep"));
        let big = format!("{MINIMAL}\n[sweep]\nvm_count = [3, 600]\n");
        assert!(matches!(parse_scenario(&big), Err(ScenarioError::Provision { .. })));
        let empty = format!("{MINIMAL}\n[sweep]\n");
        assert!(parse_scenario(&empty).is_err());
        let backwards = format!("{MINIMAL}\n[sweep]\nmaps = [5, 2]\n");
        assert!(parse_scenario(&backwards).is_err());
    }

    #[test]
    fn job_type_sweep_rewrites_size() {
        let text = format!("{MINIMAL}\n[sweep]\njob_type = [\"Big\", \"Small\"]\n");
        let s = parse_scenario(&text).unwrap();
        let lengths: Vec<u64> = s.points().iter().map(|p| p.config.jobs[0].length).collect();
        assert_eq!(lengths, vec![362_880, 1_451_520]);
    }
}
