//! Command-line front end: `run`, `calibrate`, `loadability`, `report`.
//!
//! Each subcommand is a thin wrapper over the library — the same entry
//! points the examples walk through — plus file emission. Exit codes are
//! part of the contract: 0 success, 2 invalid input or configuration,
//! 3 solver or search failure, 4 file-system failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::LoadabilityError;
use crate::dispatch::DispatchError;
use crate::io::{self, IoError, WideProfile};
use crate::report::{self, ReportError, ReportFormat, ReportSpec};
use crate::scenario::{
    self, load_batch, standard_scenarios, RunOptions, ScenarioError, ScenarioResult, ScenarioSpec,
};
use crate::storage::CalibrationError;
use crate::taker::{PriceMode, PriceSignal, TakerError};

const EXIT_VALIDATION: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(
    name = "gridflex",
    version,
    about = "Multi-region economic dispatch with aggregated PV-battery demand response"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenarios day by day and write metrics, loadability margins,
    /// demand profiles and a summary report
    Run(RunArgs),
    /// Size each scenario's aggregate battery and write calibration CSVs
    Calibrate(CalibrateArgs),
    /// Sweep hour-by-hour loadability margins (reuses persisted day runs)
    Loadability(LoadabilityArgs),
    /// Render the summary table and time-series charts from a finished run
    Report(ReportArgs),
}

/// Flags shared by every scenario-running subcommand.
#[derive(Args)]
struct CommonArgs {
    /// Scenario batch file (TOML, one or more [[scenario]] tables); the
    /// built-in eight-scenario suite when omitted
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Output directory; persisted day results live here, so re-running
    /// with the same directory resumes instead of recomputing
    #[arg(long)]
    out: PathBuf,
    /// Restrict the run to days a..b (end exclusive), e.g. 0..30
    #[arg(long, value_parser = parse_day_range)]
    days: Option<(usize, usize)>,
    /// Worker threads for day-level parallelism; 0 uses every core
    #[arg(long, default_value_t = 0)]
    parallel: usize,
    /// How posted prices are derived for price-taker scenarios
    #[arg(long, value_enum, default_value_t = PriceModeArg::Nodal)]
    price_mode: PriceModeArg,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dump each day's dispatch program in MPS format next to its summary
    #[arg(long)]
    dump_lp: bool,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Scenario batch file (TOML); the built-in suite when omitted
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Directory for `<scenario>/calibration.csv` files
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LoadabilityArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Override the swept region for every scenario
    #[arg(long)]
    region: Option<String>,
    /// Override the probe step size in MW
    #[arg(long)]
    step: Option<f64>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Scenario names to include, comma-separated (default: all)
    #[arg(long, value_delimiter = ',')]
    scenarios: Vec<String>,
    /// Series to render, comma-separated: demand, flexible_demand, pv,
    /// battery_power, soc, prices (default: all)
    #[arg(long, value_delimiter = ',')]
    series: Vec<String>,
    /// Output formats, comma-separated (default: all)
    #[arg(long, value_enum, value_delimiter = ',')]
    formats: Vec<FormatArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PriceModeArg {
    Nodal,
    System,
}

impl PriceModeArg {
    fn to_mode(self) -> PriceMode {
        match self {
            PriceModeArg::Nodal => PriceMode::Nodal,
            PriceModeArg::System => PriceMode::System,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Txt,
    Svg,
}

impl FormatArg {
    fn to_format(self) -> ReportFormat {
        match self {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Txt => ReportFormat::Txt,
            FormatArg::Svg => ReportFormat::Svg,
        }
    }
}

fn parse_day_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected a..b (end exclusive), got {s:?}"))?;
    let start: usize = a
        .trim()
        .parse()
        .map_err(|_| format!("day range start {a:?} is not an integer"))?;
    let end: usize = b
        .trim()
        .parse()
        .map_err(|_| format!("day range end {b:?} is not an integer"))?;
    if end <= start {
        return Err(format!("day range {s:?} is empty"));
    }
    Ok((start, end))
}

/// Everything a subcommand can fail with, tagged for exit-code mapping.
#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Io(#[from] IoError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Scenario(e) => scenario_exit(e),
            CliError::Report(e) => report_exit(e),
            CliError::Io(e) => io_exit(e),
        }
    }
}

fn io_exit(e: &IoError) -> u8 {
    match e {
        // Unreadable numbers are bad input, not a failed write.
        IoError::Malformed { .. } => EXIT_VALIDATION,
        _ => EXIT_IO,
    }
}

fn dispatch_exit(e: &DispatchError) -> u8 {
    match e {
        DispatchError::Build(_) => EXIT_VALIDATION,
        DispatchError::Infeasible(_) | DispatchError::SolverFailure(_) => EXIT_SOLVER,
    }
}

fn calibration_exit(e: &CalibrationError) -> u8 {
    match e {
        CalibrationError::Dispatch(d) => dispatch_exit(d),
        CalibrationError::UnknownAggregator(_) => EXIT_VALIDATION,
        CalibrationError::LossNonConvergence { .. } => EXIT_SOLVER,
    }
}

fn taker_exit(e: &TakerError) -> u8 {
    match e {
        TakerError::Dispatch(d) => dispatch_exit(d),
        // A budget no response can meet is an infeasibility, not bad input.
        TakerError::BudgetUnsatisfiable { .. } => EXIT_SOLVER,
        _ => EXIT_VALIDATION,
    }
}

fn loadability_exit(e: &LoadabilityError) -> u8 {
    let _ = e;
    EXIT_VALIDATION
}

fn scenario_exit(e: &ScenarioError) -> u8 {
    match e {
        ScenarioError::Io(io) => io_exit(io),
        ScenarioError::Calibration { source, .. } => calibration_exit(source),
        ScenarioError::Dispatch { source, .. } => dispatch_exit(source),
        ScenarioError::Taker { source, .. } => taker_exit(source),
        ScenarioError::Loadability { source, .. } => loadability_exit(source),
        _ => EXIT_VALIDATION,
    }
}

fn report_exit(e: &ReportError) -> u8 {
    match e {
        ReportError::Io(io) => io_exit(io),
        _ => EXIT_VALIDATION,
    }
}

pub fn run() -> ExitCode {
    let outcome = match Cli::parse().command {
        Command::Run(args) => run_cmd(args),
        Command::Calibrate(args) => calibrate_cmd(args),
        Command::Loadability(args) => loadability_cmd(args),
        Command::Report(args) => report_cmd(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(err.exit_code())
        }
    }
}

fn load_specs(path: &Option<PathBuf>) -> Result<Vec<ScenarioSpec>, CliError> {
    match path {
        Some(p) => Ok(load_batch(p)?.scenarios),
        None => Ok(standard_scenarios()),
    }
}

fn run_options(common: &CommonArgs, dump_lp: bool) -> RunOptions {
    RunOptions {
        out_dir: Some(common.out.clone()),
        day_window: common.days,
        parallel: common.parallel,
        dump_lp,
        price_mode: common.price_mode.to_mode(),
    }
}

fn run_scenarios(
    specs: &[ScenarioSpec],
    options: &RunOptions,
) -> Result<Vec<ScenarioResult>, CliError> {
    let mut results = Vec::with_capacity(specs.len());
    for spec in specs {
        eprintln!("running {} ...", spec.name);
        results.push(scenario::run_scenario(spec, options)?);
    }
    Ok(results)
}

fn run_cmd(args: RunArgs) -> Result<(), CliError> {
    let specs = load_specs(&args.common.scenario)?;
    let options = run_options(&args.common, args.dump_lp);
    let results = run_scenarios(&specs, &options)?;
    write_run_artifacts(&args.common.out, &results)?;
    print!("{}", report::render_table_txt(&results));
    Ok(())
}

/// The run command's file outputs: summary table (CSV and text),
/// hour-by-hour loadability, per-region demand profiles, calibration
/// summaries, and posted prices where a scenario produced them.
fn write_run_artifacts(out: &Path, results: &[ScenarioResult]) -> Result<(), CliError> {
    io::atomic_write(
        &out.join("metrics.csv"),
        report::render_table_csv(results).as_bytes(),
    )?;
    io::atomic_write(
        &out.join("report.txt"),
        report::render_table_txt(results).as_bytes(),
    )?;
    io::atomic_write(
        &out.join("loadability.csv"),
        report::render_loadability_csv(results).as_bytes(),
    )?;
    for result in results {
        let dir = out.join(&result.name);
        if !result.calibration.aggregators.is_empty() {
            io::write_calibration_csv(&dir.join("calibration.csv"), &result.calibration)?;
        }
        for (region, profile) in region_profiles(result) {
            io::write_wide_profile_csv(
                &dir.join("profiles").join(format!("{region}.csv")),
                &profile,
            )?;
        }
        if let Some(signal) = concatenated_signal(result) {
            io::write_price_csv(&dir.join("prices.csv"), &signal)?;
        }
    }
    Ok(())
}

/// Per-region demand decomposition over the whole run, days concatenated:
/// critical load, responsive appliance load, PV, and the realized draw.
fn region_profiles(result: &ScenarioResult) -> BTreeMap<String, WideProfile> {
    let mut profiles: BTreeMap<String, WideProfile> = BTreeMap::new();
    for day in &result.days {
        for (a, ctx) in day.solution.aggregators.iter().enumerate() {
            let profile = profiles
                .entry(ctx.region.clone())
                .or_insert_with(|| WideProfile {
                    flexible: Some(Vec::new()),
                    ..WideProfile::default()
                });
            profile.inflexible.extend_from_slice(&ctx.inflexible_load);
            profile.responsive.extend_from_slice(&ctx.responsive_load);
            profile.pv.extend_from_slice(&ctx.pv);
            profile
                .flexible
                .as_mut()
                .expect("constructed with a flexible column")
                .extend_from_slice(&day.solution.flexible_demand[a]);
        }
    }
    profiles
}

/// Posted prices across the run, day signals joined in order; `None` when
/// the scenario never posted one (anticipator and rigid scenarios).
fn concatenated_signal(result: &ScenarioResult) -> Option<PriceSignal> {
    let mut joined: Option<PriceSignal> = None;
    for day in &result.days {
        let Some(signal) = &day.signal else { continue };
        let acc = joined.get_or_insert_with(|| PriceSignal {
            steps: 0,
            prices: BTreeMap::new(),
        });
        for (region, series) in &signal.prices {
            acc.prices
                .entry(region.clone())
                .or_default()
                .extend_from_slice(series);
        }
        acc.steps += signal.steps;
    }
    joined
}

fn calibrate_cmd(args: CalibrateArgs) -> Result<(), CliError> {
    let specs = load_specs(&args.scenario)?;
    for spec in &specs {
        match scenario::calibrate_only(spec)? {
            None => println!("{}: rigid demand, nothing to calibrate", spec.name),
            Some(calibration) => {
                let path = args.out.join(&spec.name).join("calibration.csv");
                io::write_calibration_csv(&path, &calibration)?;
                for (region, c) in &calibration.aggregators {
                    println!(
                        "{}: {region} charge_cap {:.1} MW, loss {:.1} MWh, {} steps{}",
                        spec.name,
                        c.charge_cap,
                        c.battery_loss,
                        c.iterations,
                        if c.converged {
                            ""
                        } else {
                            " (iteration cap hit)"
                        },
                    );
                }
            }
        }
    }
    Ok(())
}

fn loadability_cmd(args: LoadabilityArgs) -> Result<(), CliError> {
    let mut specs = load_specs(&args.common.scenario)?;
    for spec in &mut specs {
        if let Some(region) = &args.region {
            spec.loadability_region = region.clone();
        }
        if let Some(step) = args.step {
            spec.loadability_step = step;
        }
    }
    let options = run_options(&args.common, false);
    let results = run_scenarios(&specs, &options)?;
    io::atomic_write(
        &args.common.out.join("loadability.csv"),
        report::render_loadability_csv(&results).as_bytes(),
    )?;
    for result in &results {
        println!(
            "{}: average loadability {:.2} GW over {} hours ({}, {} MW steps)",
            result.name,
            result.loadability.average / 1e3,
            result.loadability.per_hour.len(),
            result.loadability.target_region,
            result.loadability.step_size,
        );
    }
    Ok(())
}

fn report_cmd(args: ReportArgs) -> Result<(), CliError> {
    let specs = load_specs(&args.common.scenario)?;
    let options = run_options(&args.common, false);
    let results = run_scenarios(&specs, &options)?;
    let defaults = ReportSpec::default();
    let spec = ReportSpec {
        scenarios: args.scenarios.clone(),
        series: if args.series.is_empty() {
            defaults.series
        } else {
            args.series.clone()
        },
        formats: if args.formats.is_empty() {
            defaults.formats
        } else {
            args.formats.iter().map(|f| f.to_format()).collect()
        },
    };
    let written = report::render_report(&results, &spec, &args.common.out)?;
    for path in &written {
        eprintln!("wrote {}", path.display());
    }
    let selected: Vec<ScenarioResult> = results
        .into_iter()
        .filter(|r| spec.scenarios.is_empty() || spec.scenarios.contains(&r.name))
        .collect();
    print!("{}", report::render_table_txt(&selected));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn argument_definitions_are_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn day_ranges_parse_and_reject_garbage() {
        assert_eq!(parse_day_range("0..30").unwrap(), (0, 30));
        assert_eq!(parse_day_range("7 .. 8").unwrap(), (7, 8));
        assert!(parse_day_range("30..30").is_err());
        assert!(parse_day_range("5").is_err());
        assert!(parse_day_range("a..b").is_err());
    }

    #[test]
    fn exit_codes_partition_the_error_space() {
        let validation = CliError::Scenario(ScenarioError::Config {
            path: "x.toml".into(),
            message: "bad".into(),
        });
        assert_eq!(validation.exit_code(), EXIT_VALIDATION);

        let solver = CliError::Scenario(ScenarioError::Dispatch {
            scenario: "S".into(),
            day: 0,
            source: DispatchError::SolverFailure("pivot".into()),
        });
        assert_eq!(solver.exit_code(), EXIT_SOLVER);

        let io = CliError::Io(IoError::File {
            path: "missing.csv".into(),
            source: std::io::Error::from(std::io::ErrorKind::NotFound),
        });
        assert_eq!(io.exit_code(), EXIT_IO);

        let malformed = CliError::Io(IoError::Malformed {
            path: "bad.csv".into(),
            line: 3,
            message: "not a number".into(),
        });
        assert_eq!(malformed.exit_code(), EXIT_VALIDATION);
    }
}
