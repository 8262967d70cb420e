use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::infra::VmSpec;
use crate::kernel::TraceRecord;
use crate::mapreduce::{self, JobType, MrCombination, RunOutcome};
use crate::metrics::JobReport;
use crate::storage_net::DelayMode;

use super::{ResultTable, Scenario, ScenarioError, Sweep, SweepAxis, SweepPoint};

/// Largest map count in the preset MR sweep (M1R1..M20R1).
pub const MAX_PRESET_MAPS: u32 = 20;

/// The four preset experiments. All use one Small job and sweep M1R1..M20R1;
/// groups 2-4 additionally vary one variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExperimentGroup {
    /// Small job, 3 Small VMs.
    MrCombination,
    /// As group 1 with 3, 6 and 9 VMs.
    VmCount,
    /// 3 VMs of type Small, Medium and Large.
    VmType,
    /// Small, Medium and Big jobs on 3 Small VMs.
    JobType,
}

impl ExperimentGroup {
    pub const ALL: [ExperimentGroup; 4] =
        [ExperimentGroup::MrCombination, ExperimentGroup::VmCount, ExperimentGroup::VmType, ExperimentGroup::JobType];

    pub fn number(self) -> u8 {
        match self {
            ExperimentGroup::MrCombination => 1,
            ExperimentGroup::VmCount => 2,
            ExperimentGroup::VmType => 3,
            ExperimentGroup::JobType => 4,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.number() == n)
    }

    pub fn scenario(self, mode: DelayMode) -> Scenario {
        let mut s = Scenario::baseline(JobType::Small, MrCombination::new(1, 1), mode);
        let axis = match self {
            ExperimentGroup::MrCombination => None,
            ExperimentGroup::VmCount => Some(SweepAxis::VmCount(vec![3, 6, 9])),
            ExperimentGroup::VmType => Some(SweepAxis::VmType(VmSpec::catalog())),
            ExperimentGroup::JobType => Some(SweepAxis::JobType(JobType::ALL.to_vec())),
        };
        s.sweep = Some(Sweep { maps: Some(1..=MAX_PRESET_MAPS), axis });
        s
    }
}

impl fmt::Display for ExperimentGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "group {}", self.number())
    }
}

impl FromStr for ExperimentGroup {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim_start_matches(['G', 'g'])
            .parse()
            .ok()
            .and_then(Self::from_number)
            .ok_or_else(|| ScenarioError::Invalid { field: "group".into(), message: format!("unknown group `{s}`") })
    }
}

/// Outcome of one sweep point.
#[derive(Clone, Debug)]
pub struct PointResult {
    pub point: SweepPoint,
    pub outcome: RunOutcome,
    pub reports: Vec<JobReport>,
}

#[derive(Clone, Debug)]
pub struct SweepOutput {
    pub points: Vec<PointResult>,
    pub table: ResultTable,
}

impl SweepOutput {
    /// Dispatch traces of every point, each preceded by a `# <label>` line.
    pub fn trace_text(&self) -> String {
        let mut out = String::new();
        for p in &self.points {
            out.push_str(&format!("# {}\n", p.point.label));
            for rec in &p.outcome.trace {
                out.push_str(&rec.to_string());
                out.push('\n');
            }
        }
        out
    }

    pub fn traces(&self) -> impl Iterator<Item = (&str, &[TraceRecord])> {
        self.points.iter().map(|p| (p.point.label.as_str(), p.outcome.trace.as_slice()))
    }
}

fn run_point(mut point: SweepPoint, trace: bool) -> crate::Result<PointResult> {
    point.config.trace = trace;
    let outcome = mapreduce::run(&point.config)?;
    let reports = outcome
        .jobs
        .iter()
        .map(|job| JobReport::build(job, &outcome.vms, &point.config.delay))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PointResult { point, outcome, reports })
}

/// Runs every sweep point (in parallel) and returns results in sweep order.
/// The first failing point, in sweep order, aborts the whole sweep.
pub fn run_points(scenario: &Scenario, trace: bool) -> crate::Result<Vec<PointResult>> {
    let results: Vec<crate::Result<PointResult>> =
        scenario.points().into_par_iter().map(|p| run_point(p, trace)).collect();
    let labels: Vec<String> = scenario.points().into_iter().map(|p| p.label).collect();
    results
        .into_iter()
        .zip(labels)
        .map(|(r, label)| r.map_err(|e| crate::Error::SweepPoint { point: label, source: Box::new(e) }))
        .collect()
}

pub fn run_scenario(scenario: &Scenario, trace: bool) -> crate::Result<SweepOutput> {
    let points = run_points(scenario, trace)?;
    let table = ResultTable::from_reports(points.iter().flat_map(|p| p.reports.iter()));
    Ok(SweepOutput { points, table })
}

pub fn run_group(group: ExperimentGroup, mode: DelayMode) -> crate::Result<ResultTable> {
    Ok(run_scenario(&group.scenario(mode), false)?.table)
}
