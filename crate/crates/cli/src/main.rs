//! `conewalk`: exponential rates of survival for random walks in cones.
//!
//! Exit codes: 0 success, 1 usage, 2 invalid model or hypothesis
//! violation, 3 numeric failure or mismatch against a closed form.
//! `RATE_TOL` overrides the projected-gradient tolerance (default 1e-10)
//! of every dual-cone minimization.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod error;
mod report;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use conewalk::rate::RateOptions;

use commands::{GeometryOp, Method, SurvivalArgs};
use error::{CliError, EXIT_OK, EXIT_USAGE};
use report::{Format, Report};

#[derive(Parser)]
#[command(
    name = "conewalk",
    version,
    about = "Survival rates of random walks in polyhedral cones"
)]
struct Cli {
    /// Emit a JSON document.
    #[arg(long, global = true, conflicts_with = "csv")]
    json: bool,
    /// Emit CSV.
    #[arg(long, global = true)]
    csv: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the rate for a model file.
    Rate {
        model: PathBuf,
        /// Accept walks that cannot reach the interior from the origin.
        #[arg(long)]
        no_origin_reach_check: bool,
    },
    /// Recompute the built-in quadrant models and compare with their closed forms.
    Table1,
    /// Survival curve by exact dynamic programming or Monte Carlo.
    Survival {
        model: PathBuf,
        #[arg(long, value_enum, default_value = "dp")]
        method: Method,
        /// Horizon.
        #[arg(long = "N", default_value_t = 600)]
        horizon: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        chains: u64,
        /// Write the curve CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cone operations: dual generators, extremal rays, an interior point, projection.
    Geometry {
        model: PathBuf,
        #[arg(long, value_enum)]
        op: GeometryOp,
        /// Comma-separated coordinates for `--op project`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        point: Option<Vec<f64>>,
    },
    /// Compare the Gaussian sector closed form with the numeric rate.
    Gaussian {
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, allow_hyphen_values = true)]
        beta: f64,
        #[arg(long, allow_hyphen_values = true)]
        r: f64,
    },
}

fn rate_options() -> Result<RateOptions, CliError> {
    let mut opts = RateOptions::default();
    if let Ok(v) = std::env::var("RATE_TOL") {
        opts.tolerance = match v.trim().parse::<f64>() {
            Ok(t) if t > 0.0 && t.is_finite() => t,
            _ => {
                return Err(CliError::usage(format!(
                    "RATE_TOL must be a positive number, got {v:?}"
                )))
            }
        };
    }
    Ok(opts)
}

fn run(cli: &Cli) -> Result<(Report, Option<&PathBuf>), CliError> {
    let mut opts = rate_options()?;
    Ok(match &cli.command {
        Command::Rate {
            model,
            no_origin_reach_check,
        } => {
            opts.require_reach_from_origin = !no_origin_reach_check;
            (commands::rate(model, &opts)?, None)
        }
        Command::Table1 => (commands::table(&opts)?, None),
        Command::Survival {
            model,
            method,
            horizon,
            seed,
            chains,
            out,
        } => {
            let args = SurvivalArgs {
                path: model,
                method: *method,
                horizon: *horizon,
                seed: *seed,
                chains: *chains,
            };
            (commands::survival(&args, &opts)?, out.as_ref())
        }
        Command::Geometry { model, op, point } => {
            (commands::geometry(model, *op, point.as_deref())?, None)
        }
        Command::Gaussian { alpha, beta, r } => {
            (commands::gaussian(*alpha, *beta, *r, &opts)?, None)
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::from(EXIT_OK),
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    let format = match (cli.json, cli.csv) {
        (true, _) => Format::Json,
        (_, true) => Format::Csv,
        _ => Format::Text,
    };
    match run(&cli) {
        Ok((report, out)) => {
            if let Some(path) = out {
                if let Err(e) = std::fs::write(path, report.render(Format::Csv)) {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    return ExitCode::from(EXIT_USAGE);
                }
            }
            let _ = std::io::stdout().write_all(report.render(format).as_bytes());
            ExitCode::from(report.status)
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            if format == Format::Json {
                let doc = serde_json::json!({
                    "tool": "conewalk",
                    "version": conewalk::VERSION,
                    "error": e,
                });
                println!(
                    "{}",
                    serde_json::to_string_pretty(&doc).expect("errors serialize")
                );
            }
            ExitCode::from(e.code)
        }
    }
}
