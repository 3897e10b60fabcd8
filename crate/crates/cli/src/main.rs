use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{ArgAction, CommandFactory, Parser, Subcommand};

use selmean_cli::dataset::ingest_csv;
use selmean_cli::output::{figure_rows_csv, improvement_table_csv, write_atomic};
use selmean_cli::report::{estimate_command, SigmaPolicy};
use selmean_cli::verify::{run_checks, VerifyOptions};
use selmean_cli::CliError;
use selmean_core::estimators::EstimatorId;
use selmean_core::model::TrialDesign;
use selmean_core::sim::{
    figure_data, improvement_table, run_sweep, theta_grid, SweepConfig, TABLE1_DESIGNS, TABLE1_THETAS,
};

const THREADS_ENV: &str = "SELMEAN_THREADS";

#[derive(Parser)]
#[command(
    name = "selmean",
    version,
    about = "Estimate the selected treatment mean in a two-stage drop-the-losers trial",
    after_help = "\
Exit status: 0 on success, 1 on invalid input, 2 when `verify` finds a failing check.
The worker thread count defaults to $SELMEAN_THREADS, else one per core."
)]
struct Cli {
    /// Worker threads for simulation and quadrature
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Seven estimates of the selected mean from per-subject trial data
    Estimate {
        /// CSV with columns stage, arm, value
        #[arg(long)]
        data: PathBuf,

        /// Known common standard deviation (default: pooled stage-1 SD)
        #[arg(long, conflicts_with = "match_umvcue", allow_negative_numbers = true)]
        sigma: Option<f64>,

        /// Use the sigma at which the UMVCUE takes this value
        #[arg(long, value_name = "VALUE")]
        match_umvcue: Option<f64>,

        /// Print JSON instead of a table
        #[arg(long)]
        json: bool,

        /// Write the report here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Monte Carlo MSE and bias curves for one design
    Simulate {
        #[arg(long, default_value_t = 5)]
        n1: u32,
        #[arg(long, default_value_t = 5)]
        n2: u32,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0.0)]
        theta_min: f64,
        #[arg(long, default_value_t = 3.0)]
        theta_max: f64,
        #[arg(long, default_value_t = 0.1)]
        theta_step: f64,
        #[arg(long, default_value_t = 10_000)]
        reps: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Comma-separated estimator tags (default: the five plotted ones)
        #[arg(long, value_delimiter = ',')]
        estimators: Vec<EstimatorId>,
        /// Common random numbers across theta and estimators
        #[arg(long, default_value_t = true, action = ArgAction::Set)]
        crn: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Percentage risk improvement of the improved single-stage estimator
    Table1 {
        #[arg(long, default_value_t = 1_000_000)]
        reps: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// MSE and bias curves for all six plotted designs
    Figures {
        #[arg(long, default_value_t = 10_000)]
        reps: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Run the identity, dominance and equivariance checks
    Verify {
        /// Also write the JSON report here
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = VerifyOptions::default().seed)]
        seed: u64,
        /// Move the Mills-ratio branch point (negative control)
        #[arg(long, hide = true, allow_negative_numbers = true)]
        mills_crossover: Option<f64>,
    },
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(path) => write_atomic(path, bytes),
        None => std::io::stdout().write_all(bytes).map_err(|source| CliError::Write {
            path: "<stdout>".into(),
            source,
        }),
    }
}

fn configure_threads(flag: Option<usize>) -> Result<(), String> {
    let n = match flag {
        Some(n) => n,
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| format!("{THREADS_ENV} must be a positive integer, got `{v}`"))?,
            Err(_) => return Ok(()),
        },
    };
    if n == 0 {
        return Err("thread count must be positive".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

/// `Ok(true)` when every gating check passed or the command has no checks.
fn run(command: Command) -> Result<bool, CliError> {
    match command {
        Command::Estimate {
            data,
            sigma,
            match_umvcue,
            json,
            out,
        } => {
            let dataset = ingest_csv(&data)?;
            let policy = match (sigma, match_umvcue) {
                (Some(s), _) => SigmaPolicy::Fixed(s),
                (None, Some(v)) => SigmaPolicy::MatchUmvcue(v),
                (None, None) => SigmaPolicy::PooledStage1,
            };
            let report = estimate_command(&dataset, policy)?;
            let text = if json {
                serde_json::to_string_pretty(&report)? + "\n"
            } else {
                report.render()
            };
            emit(out.as_deref(), text.as_bytes())?;
        }
        Command::Simulate {
            n1,
            n2,
            sigma,
            theta_min,
            theta_max,
            theta_step,
            reps,
            seed,
            estimators,
            crn,
            out,
        } => {
            let config = SweepConfig {
                design: TrialDesign::new(n1, n2, sigma)?,
                theta_grid: theta_grid(theta_min, theta_max, theta_step)?,
                replications: reps,
                seed,
                estimators: if estimators.is_empty() {
                    EstimatorId::FIGURE_SET.to_vec()
                } else {
                    estimators
                },
                crn,
            };
            let curve = run_sweep(&config)?;
            emit(out.as_deref(), &figure_rows_csv(&curve.rows()))?;
        }
        Command::Table1 { reps, seed, out } => {
            let table = improvement_table(
                EstimatorId::SingleStage,
                EstimatorId::SingleStageImproved,
                &TABLE1_DESIGNS,
                &TABLE1_THETAS,
                reps,
                seed,
            )?;
            emit(out.as_deref(), &improvement_table_csv(&table))?;
        }
        Command::Figures { reps, seed, sigma, out } => {
            let base = SweepConfig::figures(TrialDesign::new(5, 5, sigma)?, reps, seed);
            emit(out.as_deref(), &figure_rows_csv(&figure_data(&base)?))?;
        }
        Command::Verify {
            out,
            seed,
            mills_crossover,
        } => {
            let defaults = VerifyOptions::default();
            let opts = VerifyOptions {
                seed,
                mills_crossover: mills_crossover.unwrap_or(defaults.mills_crossover),
                ..defaults
            };
            let report = run_checks(&opts)?;
            for c in &report.checks {
                let status = match (c.passed, c.gating) {
                    (true, _) => "PASS",
                    (false, true) => "FAIL",
                    (false, false) => "NOTE",
                };
                eprintln!("{status} {:<34} residual {:e} (tolerance {:e})", c.name, c.residual, c.tolerance);
            }
            let json = serde_json::to_string_pretty(&report)? + "\n";
            if let Some(path) = out.as_deref() {
                write_atomic(path, json.as_bytes())?;
            }
            emit(None, json.as_bytes())?;
            return Ok(report.passed);
        }
    }
    Ok(true)
}

fn is_usage_error(e: &CliError) -> bool {
    use selmean_core::Error as Core;
    matches!(
        e,
        CliError::InvalidSigma(_) | CliError::Core(Core::InvalidSweep(_) | Core::InvalidDesign(_) | Core::NonFinite { .. })
    )
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => {
                    if !e.to_string().contains("Usage:") {
                        eprintln!("\n{}", Cli::command().render_usage());
                    }
                    ExitCode::from(1)
                }
            };
        }
    };
    if let Err(message) = configure_threads(cli.threads) {
        eprintln!("error: {message}");
        return ExitCode::from(1);
    }
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            if is_usage_error(&e) {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            ExitCode::from(1)
        }
    }
}
