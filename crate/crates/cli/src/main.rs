//! `dbcs` — command-line driver for design-based bandit inference.
//!
//! Modes:
//! * `simulate` — seeded Monte Carlo study over a configured bandit process;
//!   writes `report.csv` / `report.json` (and optionally per-round bound
//!   series and the replication-0 observation log).
//! * `analyze`  — per-round confidence bounds for an existing JSON-lines
//!   observation log.
//! * `tune-eta` — prints the recommended tuning parameter for the asymptotic
//!   confidence sequence.
//! * `rho-sweep` — CI coverage for an arm mean across a grid of AR(1)
//!   autocorrelation levels.
//!
//! Exit codes: 0 on success, 2 for configuration/input errors, 3 for
//! runtime failures.

mod settings;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, ValueEnum};
use dbcs_core::{
    bound_series, parse_log, residual_bound_series, rho_sweep, run_monte_carlo, run_trajectory,
    serialize_log, tune_eta, BoundSeries, Error, Estimand, LeastSquaresPredictor, MethodSpec,
    MonteCarloReport, ObservationLog,
};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use settings::Settings;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Simulate,
    Analyze,
    TuneEta,
    RhoSweep,
}

/// Design-based confidence intervals and confidence sequences for
/// adaptively collected bandit data.
#[derive(Debug, Parser)]
#[command(name = "dbcs", version)]
struct Cli {
    /// Flat `key = value` configuration file; flags override file keys.
    #[arg(long)]
    config: Option<PathBuf>,

    /// What to run.
    #[arg(long, value_enum)]
    mode: Option<Mode>,

    /// Master seed for all randomness.
    #[arg(long)]
    seed: Option<u64>,

    /// Number of Monte Carlo replications.
    #[arg(long)]
    reps: Option<u64>,

    /// Miscoverage level of every interval and sequence.
    #[arg(long)]
    alpha: Option<f64>,

    /// Tuning parameter of the asymptotic confidence sequence.
    #[arg(long)]
    eta: Option<f64>,

    /// A-priori bound on |reward| / p_min, required by the exact and
    /// gamma-mixture sequences.
    #[arg(long)]
    m: Option<f64>,

    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,

    /// Observation log: input for analyze, extra output for simulate.
    #[arg(long)]
    log: Option<PathBuf>,
}

enum CliError {
    Core(Error),
    Io(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn io(context: &str, e: std::io::Error) -> Self {
        CliError::Io(format!("{context}: {e}"))
    }

    fn exit_code(&self) -> u8 {
        match self {
            // Bad configuration or malformed/inconsistent input data.
            CliError::Core(
                Error::ConfigError(_)
                | Error::ParseError { .. }
                | Error::SchemaError { .. }
                | Error::PropensityViolation { .. }
                | Error::RewardBoundViolation { .. }
                | Error::OrderViolation { .. }
                | Error::DimensionMismatch { .. }
                | Error::MissingBound(_)
                | Error::OutOfRange(_)
                | Error::DomainError(_)
                | Error::EmptyState,
            ) => 2,
            // Numerical or I/O failure at run time.
            CliError::Core(_) | CliError::Io(_) => 3,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Core(e) => e.to_string(),
            CliError::Io(msg) => msg.clone(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_thread_pool()?;
    let settings = merged_settings(&cli)?;
    let mode_str = match cli.mode {
        Some(Mode::Simulate) => "simulate",
        Some(Mode::Analyze) => "analyze",
        Some(Mode::TuneEta) => "tune-eta",
        Some(Mode::RhoSweep) => "rho-sweep",
        None => settings.get("mode").ok_or_else(|| {
            Error::ConfigError("no mode given (flag --mode or config key `mode`)".into())
        })?,
    };
    match mode_str {
        "simulate" => cmd_simulate(&settings, &cli),
        "analyze" => cmd_analyze(&settings, &cli),
        "tune-eta" => cmd_tune_eta(&settings),
        "rho-sweep" => cmd_rho_sweep(&settings, &cli),
        other => Err(Error::ConfigError(format!("unknown mode `{other}`")).into()),
    }
}

/// Honors `DBCS_THREADS` for the global rayon pool.
fn init_thread_pool() -> Result<(), CliError> {
    if let Ok(raw) = std::env::var("DBCS_THREADS") {
        let n: usize = raw
            .parse()
            .map_err(|_| Error::ConfigError(format!("DBCS_THREADS: bad thread count `{raw}`")))?;
        if n == 0 {
            return Err(Error::ConfigError("DBCS_THREADS must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Io(format!("cannot build thread pool: {e}")))?;
    }
    Ok(())
}

/// Config file first, then command-line overrides.
fn merged_settings(cli: &Cli) -> Result<Settings, CliError> {
    let mut settings = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    if let Some(mode) = cli.mode {
        let label = match mode {
            Mode::Simulate => "simulate",
            Mode::Analyze => "analyze",
            Mode::TuneEta => "tune-eta",
            Mode::RhoSweep => "rho-sweep",
        };
        settings.set("mode", label);
    }
    if let Some(seed) = cli.seed {
        settings.set("seed", seed.to_string());
    }
    if let Some(reps) = cli.reps {
        settings.set("reps", reps.to_string());
    }
    if let Some(alpha) = cli.alpha {
        settings.set("alpha", alpha.to_string());
    }
    if let Some(eta) = cli.eta {
        settings.set("eta", eta.to_string());
    }
    if let Some(m) = cli.m {
        settings.set("m", m.to_string());
    }
    Ok(settings)
}

fn ensure_out_dir(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::io(&format!("cannot create {}", out.display()), e))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::io(&format!("cannot write {}", path.display()), e))
}

/// RFC 4180 quoting for fields that may contain commas (e.g. `contrast:1,0`).
fn csv_field(raw: &str) -> String {
    if raw.contains([',', '"', '\n']) {
        format!("\"{}\"", raw.replace('"', "\"\""))
    } else {
        raw.to_string()
    }
}

fn fmt_f64(x: f64) -> String {
    // Shortest representation that round-trips.
    let mut s = format!("{x}");
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}

fn report_csv(settings: &Settings, report: &MonteCarloReport) -> String {
    let mut out = settings.echo_comment();
    out.push_str(&format!("# master_seed = {}\n", report.seed));
    out.push_str("method,estimand,coverage,coverage_se,mean_width,stop_mean,stop_censored,power,n_reps\n");
    for row in &report.rows {
        let stop_mean = row.stop_mean.map(fmt_f64).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            csv_field(&row.method),
            csv_field(&row.estimand),
            fmt_f64(row.coverage),
            fmt_f64(row.coverage_se),
            fmt_f64(row.mean_width),
            stop_mean,
            row.stop_censored,
            fmt_f64(row.power),
            row.n_reps,
        ));
    }
    out
}

fn report_json(settings: &Settings, report: &MonteCarloReport) -> Result<String, CliError> {
    let value = serde_json::json!({
        "config": settings.echo_map(),
        "master_seed": report.seed,
        "report": report,
    });
    serde_json::to_string_pretty(&value)
        .map_err(|e| CliError::Io(format!("cannot serialize report: {e}")))
}

fn bounds_csv(settings: &Settings, seed: Option<u64>, series: &BoundSeries) -> String {
    let mut out = settings.echo_comment();
    if let Some(seed) = seed {
        out.push_str(&format!("# master_seed = {seed}\n"));
    }
    out.push_str(&format!("# method = {}\n", series.method.label()));
    out.push_str(&format!("# estimand = {}\n", series.estimand));
    out.push_str("t,center,lower,upper\n");
    for row in &series.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.t,
            fmt_f64(row.center),
            fmt_f64(row.lower),
            fmt_f64(row.upper)
        ));
    }
    out
}

/// Bound series for one method spec over a log: residualized when the spec
/// asks for the contextual variant.
fn series_for_spec(
    log: &ObservationLog,
    spec: &MethodSpec,
    estimand: Estimand,
    cs: &dbcs_core::CsConfig,
) -> Result<BoundSeries, CliError> {
    if spec.contextual {
        let Estimand::Contrast(w, w_prime) = estimand else {
            return Err(Error::ConfigError(
                "contextual methods require a contrast estimand".into(),
            )
            .into());
        };
        let mut predictor = LeastSquaresPredictor::default();
        Ok(residual_bound_series(
            log,
            &mut predictor,
            w,
            w_prime,
            spec.method,
            cs,
        )?)
    } else {
        Ok(bound_series(log, estimand, spec.method, cs)?)
    }
}

fn cmd_simulate(settings: &Settings, cli: &Cli) -> Result<(), CliError> {
    let config = settings::build_mc_config(settings)?;
    let report = run_monte_carlo(&config)?;
    ensure_out_dir(&cli.out)?;
    write_file(&cli.out.join("report.csv"), report_csv(settings, &report).as_bytes())?;
    write_file(
        &cli.out.join("report.json"),
        report_json(settings, &report)?.as_bytes(),
    )?;

    let emit_bounds = settings.bool_or("emit_bounds", false)?;
    let emit_log = cli.log.is_some() || settings.bool_or("emit_log", false)?;
    if emit_bounds || emit_log {
        // Reproduce replication 0 exactly: the Monte Carlo driver derives
        // its per-replication generators the same way.
        let mut dgp_rng = ChaCha12Rng::seed_from_u64(config.seed);
        dgp_rng.set_stream(0);
        let mut policy_rng = ChaCha12Rng::seed_from_u64(config.seed);
        policy_rng.set_stream(1);
        let (log, _) = run_trajectory(
            &config.dgp,
            &config.policy,
            config.policy.horizon,
            &mut dgp_rng,
            &mut policy_rng,
        )?;
        if emit_log {
            let path = cli
                .log
                .clone()
                .unwrap_or_else(|| cli.out.join("trajectory.jsonl"));
            write_file(&path, &serialize_log(&log))?;
        }
        if emit_bounds {
            for spec in &config.methods {
                let series = series_for_spec(&log, spec, config.estimand, &config.cs)?;
                let path = cli.out.join(format!(
                    "bounds_{}_{}.csv",
                    spec.label(),
                    estimand_slug(config.estimand)
                ));
                write_file(
                    &path,
                    bounds_csv(settings, Some(config.seed), &series).as_bytes(),
                )?;
            }
        }
    }

    for row in &report.rows {
        println!(
            "{} {}: coverage {:.4} (se {:.4}), width {:.4}, power {:.4}{}",
            row.method,
            row.estimand,
            row.coverage,
            row.coverage_se,
            row.mean_width,
            row.power,
            match row.stop_mean {
                Some(s) => format!(", stop {s:.1} ({} censored)", row.stop_censored),
                None => String::new(),
            }
        );
    }
    Ok(())
}

fn estimand_slug(estimand: Estimand) -> String {
    estimand.to_string().replace([':', ','], "_")
}

fn cmd_analyze(settings: &Settings, cli: &Cli) -> Result<(), CliError> {
    let path = cli
        .log
        .as_ref()
        .ok_or_else(|| Error::ConfigError("analyze requires --log PATH".into()))?;
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::io(&format!("cannot read {}", path.display()), e))?;
    let log = parse_log(&bytes)?;

    let cs = settings::build_cs_config(settings)?;
    let estimand = settings::build_estimand(settings)?;
    let methods = settings::build_methods(settings)?;
    ensure_out_dir(&cli.out)?;

    let mut summary = settings.echo_comment();
    summary.push_str("method,estimand,t,center,lower,upper\n");
    for spec in &methods {
        if spec.contextual && !log_has_context(&log) {
            return Err(Error::ConfigError(format!(
                "method {} needs context vectors, but the log has none",
                spec.label()
            ))
            .into());
        }
        let series = series_for_spec(&log, spec, estimand, &cs)?;
        let out_path = cli
            .out
            .join(format!("bounds_{}_{}.csv", spec.label(), estimand_slug(estimand)));
        write_file(&out_path, bounds_csv(settings, None, &series).as_bytes())?;
        if let Some(last) = series.rows.last() {
            let line = format!(
                "{},{},{},{},{},{}",
                csv_field(&spec.label()),
                csv_field(&estimand.to_string()),
                last.t,
                fmt_f64(last.center),
                fmt_f64(last.lower),
                fmt_f64(last.upper)
            );
            println!("{line}");
            summary.push_str(&line);
            summary.push('\n');
        }
    }
    write_file(&cli.out.join("summary.csv"), summary.as_bytes())?;
    Ok(())
}

fn cmd_tune_eta(settings: &Settings) -> Result<(), CliError> {
    let alpha = settings.f64_or("alpha", 0.05)?;
    let t_star = settings.u64_or("t_star", 10)?;
    let eta = tune_eta(alpha, t_star)?;
    println!("eta = {eta:.2}");
    println!("eta_full = {eta}");
    Ok(())
}

fn cmd_rho_sweep(settings: &Settings, cli: &Cli) -> Result<(), CliError> {
    let grid: Vec<f64> = match settings.get("rho_grid") {
        Some(raw) => raw
            .split(',')
            .map(|tok| {
                f64::from_str(tok.trim()).map_err(|_| {
                    Error::ConfigError(format!("rho_grid: bad number `{tok}`"))
                })
            })
            .collect::<Result<_, _>>()?,
        None => vec![0.0, 0.2, 0.4, 0.6, 0.8],
    };
    let base = settings::build_mc_config(settings)?;
    let rows = rho_sweep(&base, &grid)?;
    ensure_out_dir(&cli.out)?;
    let mut out = settings.echo_comment();
    out.push_str(&format!("# master_seed = {}\n", base.seed));
    out.push_str("rho,coverage,coverage_se\n");
    for row in &rows {
        out.push_str(&format!(
            "{},{},{}\n",
            fmt_f64(row.rho),
            fmt_f64(row.coverage),
            fmt_f64(row.coverage_se)
        ));
        println!(
            "rho {:.2}: coverage {:.4} (se {:.4})",
            row.rho, row.coverage, row.coverage_se
        );
    }
    write_file(&cli.out.join("rho_sweep.csv"), out.as_bytes())?;
    Ok(())
}

fn log_has_context(log: &ObservationLog) -> bool {
    log.observations().first().is_some_and(|o| o.context.is_some())
}
