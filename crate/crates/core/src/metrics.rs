//! Run metrics and the per-epoch CSV schema.

use std::fmt::Write as _;
use std::io::{self, Write};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str =
    "run_id,strategy,epoch,train_loss,test_acc,epoch_seconds,cum_fp_samples,cum_bp_samples,cum_updates";

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Samples in the epoch pool after optional pruning.
    pub pool_size: usize,
    /// Whether selection was disabled (annealing) in this epoch.
    pub annealing: bool,
    /// Mean of the scoring-pass losses over the epoch.
    pub train_loss: f64,
    pub test_acc: f64,
    pub test_loss: f64,
    pub seconds: f64,
    pub cum_fp_samples: u64,
    pub cum_bp_samples: u64,
    pub cum_updates: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    pub epochs: Vec<EpochRecord>,
    /// Samples given a scoring forward pass.
    pub fp_samples: u64,
    /// Samples whose gradients were computed.
    pub bp_samples: u64,
    /// Optimizer steps.
    pub updates: u64,
}

impl RunMetrics {
    pub fn final_test_acc(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.test_acc)
    }

    pub fn total_seconds(&self) -> f64 {
        self.epochs.iter().map(|e| e.seconds).sum()
    }
}

/// Whether measured wall-clock time goes into the CSV. With `false` the
/// `epoch_seconds` column is written as `0`, making the file a pure function of
/// the configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CsvOptions {
    pub wall_clock: bool,
}

pub fn write_csv_header(out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")
}

pub fn write_csv_rows(
    out: &mut impl Write,
    run_id: &str,
    strategy: &str,
    metrics: &RunMetrics,
    opts: CsvOptions,
) -> io::Result<()> {
    let mut line = String::new();
    for e in &metrics.epochs {
        line.clear();
        let secs = if opts.wall_clock { e.seconds } else { 0.0 };
        write!(
            line,
            "{run_id},{strategy},{},{},{},{},{},{},{}",
            e.epoch, e.train_loss, e.test_acc, secs, e.cum_fp_samples, e.cum_bp_samples, e.cum_updates
        )
        .expect("write to String");
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Renders a complete CSV (header plus rows) for one or more runs.
pub fn to_csv_string<'a>(
    runs: impl IntoIterator<Item = (&'a str, &'a str, &'a RunMetrics)>,
    opts: CsvOptions,
) -> String {
    let mut buf = Vec::new();
    write_csv_header(&mut buf).expect("write to Vec");
    for (id, strategy, m) in runs {
        write_csv_rows(&mut buf, id, strategy, m, opts).expect("write to Vec");
    }
    String::from_utf8(buf).expect("ASCII csv")
}

/// One parsed row of a metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub run_id: String,
    pub strategy: String,
    pub epoch: usize,
    pub train_loss: f64,
    pub test_acc: f64,
    pub epoch_seconds: f64,
    pub cum_fp_samples: u64,
    pub cum_bp_samples: u64,
    pub cum_updates: u64,
}

/// Parses a metrics CSV. Errors name the 1-based line number.
pub fn parse_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == CSV_HEADER => {}
        Some((_, h)) => return Err(Error::Format(format!("line 1: unexpected header {h:?}"))),
        None => return Err(Error::Format("empty metrics file".into())),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(Error::Format(format!("line {lineno}: expected 9 fields, found {}", f.len())));
        }
        let bad = |col: &str| Error::Format(format!("line {lineno}: cannot parse {col}"));
        rows.push(MetricsRow {
            run_id: f[0].to_string(),
            strategy: f[1].to_string(),
            epoch: f[2].parse().map_err(|_| bad("epoch"))?,
            train_loss: f[3].parse().map_err(|_| bad("train_loss"))?,
            test_acc: f[4].parse().map_err(|_| bad("test_acc"))?,
            epoch_seconds: f[5].parse().map_err(|_| bad("epoch_seconds"))?,
            cum_fp_samples: f[6].parse().map_err(|_| bad("cum_fp_samples"))?,
            cum_bp_samples: f[7].parse().map_err(|_| bad("cum_bp_samples"))?,
            cum_updates: f[8].parse().map_err(|_| bad("cum_updates"))?,
        });
    }
    if rows.is_empty() {
        return Err(Error::Format("metrics file has a header but no rows".into()));
    }
    Ok(rows)
}
