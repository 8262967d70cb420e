use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mrsim::scenario::{
    self, parse_scenario, plot_series, render, resolve_output_path, ExperimentGroup, ReportFormat, Scenario,
    ScenarioError,
};
use mrsim::storage_net::DelayMode;
use mrsim::Error;

#[derive(Parser)]
#[command(name = "mrsim", version, about = "MapReduce-on-cloud discrete-event simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct OutputArgs {
    /// Report format.
    #[arg(long, value_parser = ["csv", "json"])]
    format: Option<String>,
    /// Report file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the dispatch trace (time,sequence,source,destination,tag) here.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run one of the four preset experiment groups.
    Group {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=4))]
        group: u8,
        /// Use network-delay mode instead of no-delay.
        #[arg(long)]
        delay: bool,
        /// Also write the chart series for this group as CSV.
        #[arg(long)]
        series: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Parse and validate a scenario file without running it.
    Validate { scenario: PathBuf },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Scenario(ScenarioError::Provision { .. }) | Error::Provision(_) => 4,
        Error::Scenario(_) => 3,
        Error::Io { .. } | Error::Encode(_) => 6,
        Error::SweepPoint { source, .. } => exit_code(source),
        Error::Kernel(_) | Error::Vm(_) | Error::MapReduce(_) | Error::Metric(_) => 5,
    }
}

fn load(path: &Path) -> mrsim::Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(parse_scenario(&text)?)
}

fn write_out(path: Option<&Path>, text: &str) -> mrsim::Result<()> {
    match path {
        Some(p) => {
            let p = resolve_output_path(p);
            std::fs::write(&p, text).map_err(|e| Error::io(p.display().to_string(), e))?;
            log::info!("wrote {}", p.display());
        }
        None => {
            std::io::stdout().write_all(text.as_bytes()).map_err(|e| Error::io("stdout", e))?;
        }
    }
    Ok(())
}

fn execute(
    scenario: &Scenario,
    output: &OutputArgs,
    group: Option<ExperimentGroup>,
    series: Option<&Path>,
) -> mrsim::Result<()> {
    let format = match &output.format {
        Some(f) => f.parse()?,
        None => scenario.output.format.unwrap_or(ReportFormat::Csv),
    };
    let trace_path = output.trace.as_deref().or(scenario.output.trace.as_deref());
    let out_path = output.out.as_deref().or(scenario.output.path.as_deref());

    let result = scenario::run_scenario(scenario, trace_path.is_some())?;
    write_out(out_path, &render(&result.table, format)?)?;
    if let Some(p) = trace_path {
        write_out(Some(p), &result.trace_text())?;
    }
    if let (Some(g), Some(p)) = (group, series) {
        write_out(Some(p), &plot_series(g, &result.table))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { scenario, output } => load(scenario).and_then(|s| execute(&s, output, None, None)),
        Command::Group { group, delay, series, output } => {
            let group = ExperimentGroup::from_number(*group).expect("clap restricts the range");
            let mode = if *delay { DelayMode::NetworkDelay } else { DelayMode::NoDelay };
            execute(&group.scenario(mode), output, Some(group), series.as_deref())
        }
        Command::Validate { scenario } => load(scenario).map(|s| {
            println!(
                "ok: {} job(s), {} x {} VM, {} run(s), {}",
                s.jobs.len(),
                s.vm_count,
                s.vm.name,
                s.points().len(),
                s.delay.mode
            );
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
