use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::metrics::JobReport;
use crate::storage_net::DelayMode;

use super::{ExperimentGroup, ScenarioError};

pub const CSV_COLUMNS: [&str; 12] = [
    "job_id",
    "mr_combination",
    "vm_count",
    "vm_type",
    "job_type",
    "avg_exec_s",
    "max_exec_s",
    "min_exec_s",
    "makespan_s",
    "delay_s",
    "vm_cost",
    "network_cost",
];

/// Relative output paths are resolved against this directory when set.
pub const OUT_DIR_ENV: &str = "MRSIM_OUT_DIR";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(ScenarioError::Invalid { field: "format".into(), message: format!("unknown format `{s}`") }),
        }
    }
}

fn round3(x: f64) -> f64 {
    let r = (x * 1000.0).round() / 1000.0;
    // no negative zero in reports
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// One row of a result table. Numbers are rounded to 3 decimals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportRow {
    pub job_id: u32,
    pub mr_combination: String,
    pub vm_count: u32,
    pub vm_type: String,
    pub job_type: String,
    pub avg_exec_s: f64,
    pub max_exec_s: f64,
    pub min_exec_s: f64,
    pub makespan_s: f64,
    pub delay_s: f64,
    pub vm_cost: f64,
    pub network_cost: f64,
    pub mode: DelayMode,
}

impl From<&JobReport> for ReportRow {
    fn from(r: &JobReport) -> Self {
        Self {
            job_id: r.job_id.0,
            mr_combination: r.mr_combination.to_string(),
            vm_count: r.vm_count,
            vm_type: r.vm_type.clone(),
            job_type: r.job_type.to_string(),
            avg_exec_s: round3(r.avg_exec),
            max_exec_s: round3(r.max_exec),
            min_exec_s: round3(r.min_exec),
            makespan_s: round3(r.makespan),
            delay_s: round3(r.delay_time),
            vm_cost: round3(r.vm_cost),
            network_cost: round3(r.network_cost),
            mode: r.mode,
        }
    }
}

impl ReportRow {
    fn csv_fields(&self) -> [String; 12] {
        [
            self.job_id.to_string(),
            self.mr_combination.clone(),
            self.vm_count.to_string(),
            self.vm_type.clone(),
            self.job_type.clone(),
            format!("{:.3}", self.avg_exec_s),
            format!("{:.3}", self.max_exec_s),
            format!("{:.3}", self.min_exec_s),
            format!("{:.3}", self.makespan_s),
            format!("{:.3}", self.delay_s),
            format!("{:.3}", self.vm_cost),
            format!("{:.3}", self.network_cost),
        ]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResultTable {
    pub rows: Vec<ReportRow>,
}

impl ResultTable {
    pub fn from_reports<'a>(reports: impl IntoIterator<Item = &'a JobReport>) -> Self {
        Self { rows: reports.into_iter().map(ReportRow::from).collect() }
    }
}

/// Renders a table in the given format.
pub fn render(table: &ResultTable, format: ReportFormat) -> crate::Result<String> {
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let encode = |e: csv::Error| crate::Error::Encode(e.to_string());
            w.write_record(CSV_COLUMNS).map_err(encode)?;
            for row in &table.rows {
                w.write_record(row.csv_fields()).map_err(encode)?;
            }
            let bytes = w.into_inner().map_err(|e| crate::Error::Encode(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| crate::Error::Encode(e.to_string()))
        }
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(table).map_err(|e| crate::Error::Encode(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
    }
}

pub fn parse_json(text: &str) -> crate::Result<ResultTable> {
    serde_json::from_str(text).map_err(|e| crate::Error::Encode(e.to_string()))
}

/// Resolves a relative path against `$MRSIM_OUT_DIR` when that is set.
pub fn resolve_output_path(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

/// Writes the table to `path` and returns the resolved location.
pub fn emit_report(table: &ResultTable, format: ReportFormat, path: &Path) -> crate::Result<PathBuf> {
    let path = resolve_output_path(path);
    let text = render(table, format)?;
    std::fs::write(&path, text).map_err(|e| crate::Error::io(path.display().to_string(), e))?;
    Ok(path)
}

/// x/y series behind each group's chart, as CSV. The x axis is the MR
/// combination; every other column is one plotted series.
pub fn plot_series(group: ExperimentGroup, table: &ResultTable) -> String {
    type Metric = fn(&ReportRow) -> f64;
    type Key = fn(&ReportRow) -> String;
    let (key, metrics): (Key, Vec<(&str, Metric)>) = match group {
        ExperimentGroup::MrCombination => (
            |_| String::new(),
            vec![
                ("avg_exec_s", |r| r.avg_exec_s),
                ("max_exec_s", |r| r.max_exec_s),
                ("min_exec_s", |r| r.min_exec_s),
                ("makespan_s", |r| r.makespan_s),
            ],
        ),
        ExperimentGroup::VmCount => (
            |r| format!("vm{}", r.vm_count),
            vec![("avg_exec_s", |r| r.avg_exec_s), ("network_cost", |r| r.network_cost)],
        ),
        ExperimentGroup::VmType => (|r| r.vm_type.clone(), vec![("avg_exec_s", |r| r.avg_exec_s)]),
        ExperimentGroup::JobType => (|r| r.job_type.clone(), vec![("vm_cost", |r| r.vm_cost)]),
    };

    let mut series: Vec<String> = Vec::new();
    let mut xs: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, String), f64> = BTreeMap::new();
    for row in &table.rows {
        if !xs.contains(&row.mr_combination) {
            xs.push(row.mr_combination.clone());
        }
        let k = key(row);
        for (name, f) in &metrics {
            let col = if k.is_empty() { name.to_string() } else { format!("{name}_{k}") };
            if !series.contains(&col) {
                series.push(col.clone());
            }
            cells.insert((row.mr_combination.clone(), col), f(row));
        }
    }
    let mut out = String::from("mr_combination");
    for s in &series {
        let _ = write!(out, ",{s}");
    }
    out.push('\n');
    for x in &xs {
        out.push_str(x);
        for s in &series {
            match cells.get(&(x.clone(), s.clone())) {
                Some(v) => {
                    let _ = write!(out, ",{v:.3}");
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}
