use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use demailly::cli::run::{parse_sweep_values, EXIT_BREAKDOWN, EXIT_CONFIG, EXIT_OK};
use demailly::cli::{run_solve, run_sweep, run_verify, RunConfig, SweepAxis};

#[derive(Parser)]
#[command(
    name = "demailly",
    about = "Continuation solver for the direct-sum Demailly system"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Construct the t=0 solution and march to t=1.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output.dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute residual and diagnostics for a stored snapshot.
    Verify {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Repeat `solve` over values of one parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// One of alpha0, lambda, n, degrees.
        #[arg(long)]
        axis: String,
        /// Comma-separated values; for degrees, `;`-separated tuples such as "1,3;2,2".
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn config_error(reason: impl std::fmt::Display) -> ExitCode {
    eprintln!(
        "{}",
        json!({ "status": "error", "exit_code": EXIT_CONFIG, "reason": reason.to_string() })
    );
    ExitCode::from(EXIT_CONFIG as u8)
}

fn output_dir(cli_out: Option<PathBuf>, cfg: &RunConfig) -> Option<PathBuf> {
    cli_out.or_else(|| cfg.output_dir.clone())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Solve { config, out } => {
            let cfg = match RunConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return config_error(e),
            };
            let Some(out) = output_dir(out, &cfg) else {
                return config_error("no output directory: pass --out or set output.dir");
            };
            let outcome = run_solve(&cfg, &out);
            let t_star = outcome
                .report
                .as_ref()
                .and_then(|r| r.breakdown.as_ref().map(|b| b.t_star));
            let doc = json!({
                "exit_code": outcome.exit_code,
                "reason": outcome.reason,
                "t_star": t_star,
                "accepted_steps": outcome.report.as_ref().map(|r| r.steps.len()),
                "closed_form_max_error": outcome.closed_form_error,
                "out": out,
            });
            if outcome.exit_code == EXIT_OK || outcome.exit_code == EXIT_BREAKDOWN {
                println!("{doc}");
            } else {
                eprintln!("{doc}");
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Command::Verify { snapshot, config } => {
            let cfg = match RunConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return config_error(e),
            };
            let outcome = run_verify(&snapshot, &cfg);
            println!(
                "{}",
                serde_json::to_string_pretty(&outcome).expect("verify outcome serializes")
            );
            ExitCode::from(outcome.exit_code as u8)
        }
        Command::Sweep {
            config,
            axis,
            values,
            out,
        } => {
            let cfg = match RunConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return config_error(e),
            };
            let axis: SweepAxis = match axis.parse() {
                Ok(a) => a,
                Err(e) => return config_error(e),
            };
            let values = match parse_sweep_values(axis, &values) {
                Ok(v) => v,
                Err(e) => return config_error(e),
            };
            let Some(out) = output_dir(out, &cfg) else {
                return config_error("no output directory: pass --out or set output.dir");
            };
            match run_sweep(&cfg, axis, &values, &out) {
                Ok(summary) => {
                    print!("{}", summary.to_csv());
                    ExitCode::from(EXIT_OK as u8)
                }
                Err(e) => config_error(e),
            }
        }
    }
}
