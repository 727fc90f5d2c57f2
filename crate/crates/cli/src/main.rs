//! Config-driven entry point for exact tabular-MDP regret experiments.
//!
//! Exit codes: 0 success (and verify pass), 1 verify check failure,
//! 2 configuration or I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use regretlab::{cmd_run, cmd_solve, cmd_sweep, cmd_verify, parse_overrides};

#[derive(Parser)]
#[command(name = "regretlab", version, about = "Exact tabular-MDP regret experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one seeded run and emit its CSV ledger.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override a config value, e.g. --set run.episodes=500 (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Execute the [sweep] seeds, one CSV per run plus an aggregate.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; the output bytes do not depend on this.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Print the exact oracle report for the configured instance.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Machine-readable JSON instead of text.
        #[arg(long)]
        json: bool,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run with all diagnostics on; exit 0 iff every check passes.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, set } => parse_overrides(&set).and_then(|ov| {
            let ledger = cmd_run(&config, &out, &ov)?;
            println!(
                "run: {} episodes, final cumulative regret {:.6}, ledger in {}",
                ledger.summary.episodes,
                ledger.summary.final_cum_regret,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }),
        Command::Sweep { config, out, parallel, set } => parse_overrides(&set).and_then(|ov| {
            let agg = cmd_sweep(&config, &out, parallel, &ov)?;
            println!(
                "sweep: {} runs ({} failed), mean final regret {:.6}, outputs in {}",
                agg.completed_runs + agg.failed_runs,
                agg.failed_runs,
                agg.mean_final_cum_regret,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }),
        Command::Solve { config, json, set } => parse_overrides(&set).and_then(|ov| {
            let (_, rendered) = cmd_solve(&config, json, &ov)?;
            print!("{rendered}");
            Ok(ExitCode::SUCCESS)
        }),
        Command::Verify { config, set } => parse_overrides(&set).and_then(|ov| {
            let (outcome, line) = cmd_verify(&config, &ov)?;
            println!("{line}");
            Ok(if outcome.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
