//! `eswp`: run evolved-sampling experiments and analyses.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 bad flags/config/input,
//! 3 numeric failure during training.

mod analyze;
mod config;
mod failure;
mod output;
mod plot;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use failure::Failure;
use train::Axis;

#[derive(Parser)]
#[command(name = "eswp", version, about = "Evolved sampling experiments and analyses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every run in an experiment file and write per-epoch metrics.
    Train {
        /// Experiment file (TOML, schema "eswp-experiment/1").
        config: PathBuf,
        /// Overrides: `key=value` sets a key on every run; `dataset.key=value`
        /// and `output.key=value` address those tables.
        overrides: Vec<String>,
        /// Only train the run with this name.
        #[arg(long)]
        run: Option<String>,
        /// Continue from a checkpoint (needs a single run).
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop once this many epochs are complete (the schedule still spans
        /// the configured epochs), leaving a checkpoint to resume from.
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Rerun one base run over a list of values for one parameter.
    Sweep {
        config: PathBuf,
        /// One of beta1, beta2, b_over_B, prune_ratio, anneal_ratio.
        #[arg(long)]
        axis: Axis,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        values: Vec<f64>,
        /// Base run (default: the first run in the file).
        #[arg(long)]
        run: Option<String>,
        /// Output CSV (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        overrides: Vec<String>,
    },
    /// Continuous, discrete and simulated gain of the weight filter.
    Freq {
        #[arg(long, default_value_t = 0.2)]
        beta1: f64,
        #[arg(long, default_value_t = 0.9)]
        beta2: f64,
        /// Comma-separated frequencies in (0, pi].
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        omegas: Vec<f64>,
        /// Periods averaged by the simulated measurement.
        #[arg(long, default_value_t = 20)]
        cycles: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recursion versus explicit expansion on a random loss trace.
    Oracle {
        #[arg(long, default_value_t = 0.2)]
        beta1: f64,
        #[arg(long, default_value_t = 0.9)]
        beta2: f64,
        #[arg(long)]
        trace_len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Initial score.
        #[arg(long, default_value_t = 0.001)]
        s0: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a metrics CSV as accuracy versus cumulative BP samples.
    Plot { metrics: PathBuf, out: PathBuf },
    /// Backward passes per update when batches are split into micro-batches.
    Bpcount {
        #[arg(long, default_value_t = 32)]
        meta_batch: usize,
        #[arg(long, default_value_t = 8)]
        mini_batch: usize,
        #[arg(long, default_value_t = 8)]
        micro_batch: usize,
    },
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Train { config, overrides, run, resume, stop_after } => {
            train::cmd_train(&config, &overrides, run.as_deref(), resume.as_deref(), stop_after)
        }
        Command::Sweep { config, axis, values, run, out, overrides } => {
            train::cmd_sweep(&config, &overrides, run.as_deref(), axis, &values, out)
        }
        Command::Freq { beta1, beta2, omegas, cycles, out } => {
            analyze::cmd_freq(beta1, beta2, &omegas, cycles, out.as_deref())
        }
        Command::Oracle { beta1, beta2, trace_len, seed, s0, out } => {
            analyze::cmd_oracle(beta1, beta2, trace_len, seed, s0, out.as_deref())
        }
        Command::Plot { metrics, out } => plot::cmd_plot(&metrics, &out),
        Command::Bpcount { meta_batch, mini_batch, micro_batch } => {
            analyze::cmd_bpcount(meta_batch, mini_batch, micro_batch)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("eswp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
