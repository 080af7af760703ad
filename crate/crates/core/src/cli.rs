//! Command-line front end. The binary only forwards its arguments to [`main_with_args`].
//!
//! Exit codes: 0 success, 1 bad arguments or configuration, 2 model cannot be
//! built or does not support the request, 3 numerical failure, 4 oracle
//! verification above tolerance.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::baselines::parse_baselines;
use crate::blocks::{EstimatorMode, ExpectationEstimator};
use crate::config::{ConfigError, LoadedModel, ModelConfig};
use crate::error::PcrbError;
use crate::models::{AnyModel, MaTrackingModel, RangeBearingModel};
use crate::noise::SystemModel;
use crate::oracle::{verify, MAX_ORACLE_HORIZON};
use crate::recursion::{run, FaultInjection, PcrbTrace};
use crate::selection::{min_sensors, sweep, SensorCount, AVERAGE_WINDOW};

/// Samples used when a model needs sampling and none were requested.
pub const DEFAULT_SAMPLES: usize = 100_000;

#[derive(Debug, Parser)]
#[command(name = "pcrb", version, about = "Posterior Cramér-Rao bounds with finite-step correlated noises")]
pub struct Cli {
    /// Worker threads for sampling and sweeps (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bound trace of one model.
    Run(RunArgs),
    /// Exact bound next to the approximate baselines.
    Compare(CompareArgs),
    /// Recursion against the brute-force joint information matrix.
    OracleVerify(VerifyArgs),
    /// Average bound against sensor count.
    Sensors(SensorArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BuiltinName {
    Example1,
    Example2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Analytic,
    MonteCarlo,
    FiniteDifferenceMc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Built-in model.
    #[arg(long, value_enum, conflicts_with = "config", required_unless_present = "config")]
    pub model: Option<BuiltinName>,
    /// JSON model configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// How block expectations are evaluated (default: closed form when available).
    #[arg(long, value_enum)]
    pub estimator: Option<EstimatorArg>,
    /// Monte-Carlo sample count.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Monte-Carlo seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 40)]
    pub horizon: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 40)]
    pub horizon: usize,
    /// Comma-separated subset of i (ignore), a (augmented), p (prewhiten).
    #[arg(long, default_value = "i,a,p")]
    pub baselines: String,
    /// State component whose standard-deviation bound is reported.
    #[arg(long, default_value_t = 0)]
    pub component: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 12)]
    pub horizon: usize,
    /// Largest accepted elementwise relative deviation.
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
    /// Perturbs the D assembly so the check must fail.
    #[arg(long, hide = true)]
    pub corrupt_d_assembly: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SensorArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 16)]
    pub max_m: usize,
    /// Accuracy target for the averaged bound, in state units.
    #[arg(long)]
    pub target: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub component: usize,
    /// Steps averaged per sensor count.
    #[arg(long, default_value_t = AVERAGE_WINDOW)]
    pub horizon: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::usage(format!("configuration: {e}"))
    }
}

impl From<PcrbError> for CliError {
    fn from(e: PcrbError) -> Self {
        let code = if e.is_numerical() {
            3
        } else if matches!(e, PcrbError::InvalidArgument(_)) {
            1
        } else {
            2
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::usage(format!("output: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::usage(format!("output: {e}"))
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn load(args: &ModelArgs) -> CliResult<(AnyModel, ExpectationEstimator)> {
    let loaded = match (&args.model, &args.config) {
        (Some(BuiltinName::Example1), None) => LoadedModel {
            model: AnyModel::MaTracking(MaTrackingModel::example1()),
            estimator: None,
        },
        (Some(BuiltinName::Example2), None) => LoadedModel {
            model: AnyModel::RangeBearing(RangeBearingModel::example2()),
            estimator: None,
        },
        (None, Some(path)) => ModelConfig::from_file(path)?
            .build()?
            .map_err(|e| CliError { code: 2, message: format!("model: {e}") })?,
        _ => return Err(CliError::usage("give exactly one of --model or --config")),
    };
    let est = resolve_estimator(args, &loaded)?;
    Ok((loaded.model, est))
}

fn has_closed_form(model: &dyn SystemModel) -> bool {
    let k = model.profile().l_max();
    model.analytic_transition_block(k).is_some() && model.analytic_measurement_block(k).is_some()
}

/// Flags override the configuration file, which overrides the defaults.
fn resolve_estimator(args: &ModelArgs, loaded: &LoadedModel) -> CliResult<ExpectationEstimator> {
    let base = loaded.estimator.unwrap_or(if has_closed_form(loaded.model.as_model()) {
        ExpectationEstimator::analytic()
    } else {
        ExpectationEstimator::monte_carlo(DEFAULT_SAMPLES, 0)
    });
    let mode = match args.estimator {
        Some(EstimatorArg::Analytic) => EstimatorMode::Analytic,
        Some(EstimatorArg::MonteCarlo) => EstimatorMode::MonteCarlo,
        Some(EstimatorArg::FiniteDifferenceMc) => EstimatorMode::FiniteDifferenceMc,
        None if base.mode == EstimatorMode::Analytic && (args.samples.is_some() || args.seed.is_some()) => {
            EstimatorMode::MonteCarlo
        }
        None => base.mode,
    };
    let est = if mode == EstimatorMode::Analytic {
        if args.samples.is_some() || args.seed.is_some() {
            return Err(CliError::usage("--samples/--seed do not apply to the analytic estimator"));
        }
        ExpectationEstimator::analytic()
    } else {
        let default_samples = if base.is_sampling() { base.sample_count } else { DEFAULT_SAMPLES };
        ExpectationEstimator {
            mode,
            sample_count: args.samples.unwrap_or(default_samples),
            seed: args.seed.unwrap_or(if base.is_sampling() { base.seed } else { 0 }),
        }
    };
    est.validate()?;
    Ok(est)
}

fn check_horizon(h: usize) -> CliResult<()> {
    if h == 0 {
        return Err(CliError::usage("--horizon must be at least 1"));
    }
    Ok(())
}

fn open_out(output: &OutputArgs) -> CliResult<Box<dyn Write>> {
    Ok(match &output.out {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn write_json<T: Serialize>(output: &OutputArgs, value: &T) -> CliResult<()> {
    let mut w = open_out(output)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::usage(format!("output: {e}")))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Header of the trace CSV for state dimension `r`.
pub fn trace_csv_header(r: usize) -> Vec<String> {
    let mut h = vec!["k".to_string()];
    for prefix in ["J", "bound"] {
        for i in 0..r {
            for j in 0..r {
                h.push(format!("{prefix}_{i}{j}"));
            }
        }
    }
    h.extend((0..r).map(|i| format!("sqrt_bound_{i}")));
    h
}

/// Shortest decimal that parses back to the same `f64`, in exponent form
/// for very small or very large magnitudes.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

/// One CSV record per entry.
pub fn trace_csv_records(trace: &PcrbTrace) -> Vec<Vec<String>> {
    trace
        .entries
        .iter()
        .map(|e| {
            let r = e.info.nrows();
            let mut row = vec![e.k.to_string()];
            for m in [&e.info, &e.bound] {
                for i in 0..r {
                    for j in 0..r {
                        row.push(fmt_f64(m[(i, j)]));
                    }
                }
            }
            row.extend((0..r).map(|i| fmt_f64(e.sqrt_bound(i))));
            row
        })
        .collect()
}

fn write_csv(output: &OutputArgs, header: &[String], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(open_out(output)?);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn estimator_json(est: &ExpectationEstimator) -> serde_json::Value {
    if est.is_sampling() {
        json!({"mode": est.mode, "samples": est.sample_count, "seed": est.seed})
    } else {
        json!({"mode": est.mode})
    }
}

pub fn cmd_run(args: &RunArgs) -> CliResult<()> {
    check_horizon(args.horizon)?;
    let (model, est) = load(&args.model)?;
    let trace = run(&model, &est, args.horizon)?;
    match args.output.format {
        Format::Csv => write_csv(&args.output, &trace_csv_header(model.state_dim()), &trace_csv_records(&trace)),
        Format::Json => {
            let entries: Vec<_> = trace
                .entries
                .iter()
                .map(|e| {
                    let mut v = serde_json::to_value(e).expect("trace entries serialize");
                    let sqrt: Vec<f64> = (0..e.info.nrows()).map(|i| e.sqrt_bound(i)).collect();
                    v["sqrt_bound"] = json!(sqrt);
                    v
                })
                .collect();
            write_json(
                &args.output,
                &json!({
                    "model": model.name(),
                    "profile": trace.profile,
                    "case": trace.case,
                    "estimator": estimator_json(&est),
                    "mc": trace.mc,
                    "entries": entries,
                }),
            )
        }
    }
}

pub fn cmd_compare(args: &CompareArgs) -> CliResult<()> {
    check_horizon(args.horizon)?;
    let baselines = parse_baselines(&args.baselines)?;
    let (model, est) = load(&args.model)?;
    if args.component >= model.state_dim() {
        return Err(CliError::usage(format!(
            "--component {} out of range for state dimension {}",
            args.component,
            model.state_dim()
        )));
    }
    let params = match (model.ma_params(), baselines.is_empty()) {
        (Some(p), _) => Some(p.clone()),
        (None, true) => None,
        (None, false) => {
            return Err(PcrbError::Unsupported {
                baseline: "all",
                reason: format!("baselines need the MA tracking family, not {}", model.name()),
            }
            .into())
        }
    };
    let unified = run(&model, &est, args.horizon)?;
    let others: Vec<PcrbTrace> = baselines
        .par_iter()
        .map(|b| b.run(params.as_ref().expect("checked above"), args.horizon))
        .collect::<crate::Result<_>>()?;

    let mut columns = vec![("pcrb_t".to_string(), unified.sqrt_bounds(args.component))];
    for (b, t) in baselines.iter().zip(&others) {
        columns.push((b.column().to_string(), t.sqrt_bounds(args.component)));
    }
    let ks: Vec<usize> = unified.entries.iter().map(|e| e.k).collect();
    match args.output.format {
        Format::Csv => {
            let mut header = vec!["k".to_string()];
            header.extend(columns.iter().map(|(n, _)| n.clone()));
            let rows: Vec<Vec<String>> = ks
                .iter()
                .enumerate()
                .map(|(i, k)| {
                    let mut row = vec![k.to_string()];
                    row.extend(columns.iter().map(|(_, v)| fmt_f64(v[i])));
                    row
                })
                .collect();
            write_csv(&args.output, &header, &rows)
        }
        Format::Json => {
            let cols: serde_json::Map<String, serde_json::Value> =
                columns.into_iter().map(|(n, v)| (n, json!(v))).collect();
            write_json(
                &args.output,
                &json!({
                    "model": model.name(),
                    "component": args.component,
                    "estimator": estimator_json(&est),
                    "k": ks,
                    "columns": cols,
                }),
            )
        }
    }
}

/// Returns whether every deviation is within tolerance.
pub fn cmd_oracle_verify(args: &VerifyArgs) -> CliResult<bool> {
    check_horizon(args.horizon)?;
    if args.horizon > MAX_ORACLE_HORIZON {
        return Err(CliError::usage(format!("--horizon above {MAX_ORACLE_HORIZON} is not supported by the oracle")));
    }
    let (model, est) = load(&args.model)?;
    let fault = if args.corrupt_d_assembly {
        FaultInjection::CorruptDAssembly
    } else {
        FaultInjection::None
    };
    let devs = verify(&model, &est, args.horizon, fault)?;
    let worst = devs.iter().map(|d| d.max_rel).fold(0.0, f64::max);
    let ok = worst <= args.tolerance;
    match args.output.format {
        Format::Csv => {
            let rows: Vec<Vec<String>> = devs.iter().map(|d| vec![d.k.to_string(), fmt_f64(d.max_rel)]).collect();
            write_csv(&args.output, &["k".into(), "max_rel_dev".into()], &rows)?;
        }
        Format::Json => write_json(
            &args.output,
            &json!({
                "model": model.name(),
                "tolerance": args.tolerance,
                "max_rel_dev": worst,
                "pass": ok,
                "deviations": devs,
            }),
        )?,
    }
    eprintln!(
        "max relative deviation {worst:.3e} over k <= {} (tolerance {:.1e}): {}",
        args.horizon,
        args.tolerance,
        if ok { "ok" } else { "FAIL" }
    );
    Ok(ok)
}

pub fn cmd_sensors(args: &SensorArgs) -> CliResult<()> {
    check_horizon(args.horizon)?;
    if args.max_m == 0 {
        return Err(CliError::usage("--max-m must be at least 1"));
    }
    let (model, est) = load(&args.model)?;
    let result = sweep(|m| model.with_sensors(m), args.max_m, args.horizon, args.component, &est)?;
    let found = args.target.map(|t| (t, min_sensors(&result, t)));
    match args.output.format {
        Format::Csv => {
            let rows: Vec<Vec<String>> = result
                .points
                .iter()
                .map(|p| vec![p.m.to_string(), fmt_f64(p.avg_bound), fmt_f64(p.final_bound)])
                .collect();
            write_csv(&args.output, &["m".into(), "avg_bound".into(), "final_bound".into()], &rows)?;
        }
        Format::Json => write_json(
            &args.output,
            &json!({
                "model": model.name(),
                "estimator": estimator_json(&est),
                "sweep": result,
                "strictly_decreasing": result.strictly_decreasing(),
                "target": found.map(|(t, _)| t),
                "min_sensors": found.map(|(_, c)| c),
            }),
        )?,
    }
    if let Some((t, c)) = found {
        match c {
            SensorCount::Count(m) => eprintln!("target {t}: {m} sensor(s)"),
            SensorCount::Unachievable { m_max } => eprintln!("target {t}: not reached with up to {m_max} sensors"),
        }
    }
    if !result.strictly_decreasing() {
        eprintln!("warning: average bound is not strictly decreasing in the sensor count");
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> CliResult<i32> {
    match &cli.command {
        Command::Run(a) => cmd_run(a).map(|_| 0),
        Command::Compare(a) => cmd_compare(a).map(|_| 0),
        Command::OracleVerify(a) => cmd_oracle_verify(a).map(|ok| if ok { 0 } else { 4 }),
        Command::Sensors(a) => cmd_sensors(a).map(|_| 0),
    }
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => Err(CliError::usage(format!("--threads: {e}"))),
        },
        None => dispatch(&cli),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        assert_eq!(
            trace_csv_header(2),
            ["k", "J_00", "J_01", "J_10", "J_11", "bound_00", "bound_01", "bound_10", "bound_11", "sqrt_bound_0", "sqrt_bound_1"]
        );
    }

    #[test]
    fn number_formatting_round_trips() {
        for x in [0.0, 1.0, -2.5e-15, 1.0 / 3.0, 6.02e23, 1e-4, 123456.789] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(1.5e-15), "1.5e-15");
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
