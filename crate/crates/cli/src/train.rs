//! `train` and `sweep`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use evolved_sampling::metrics::{write_csv_header, write_csv_rows, CsvOptions};
use evolved_sampling::trainer::Trainer;
use evolved_sampling::{Checkpoint, IndexedDataset, RunMetrics, TrainConfig};

use crate::config::{ExperimentFile, RunSpec};
use crate::failure::{io_err, Failure};
use crate::output::Sink;

fn train_one(
    name: &str,
    cfg: TrainConfig,
    train: &IndexedDataset,
    test: &IndexedDataset,
    resume: Option<&Path>,
    checkpoint_dir: Option<&Path>,
    stop_after: Option<usize>,
) -> Result<RunMetrics, Failure> {
    let lib = |e| Failure::from_lib(&format!("run {name:?}"), e);
    let mut trainer = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path).map_err(|e| match e {
                evolved_sampling::Error::Io(io) => Failure::Io(format!("cannot read {}: {io}", path.display())),
                other => Failure::Usage(format!("resume: {}: {other}", path.display())),
            })?;
            Trainer::resume(cfg, train, Some(test), ck).map_err(|e| Failure::from_lib("resume", e))?
        }
        None => Trainer::new(cfg, train, Some(test)).map_err(lib)?,
    };
    let ckpt_path = checkpoint_dir.map(|d| d.join(format!("{name}.ckpt")));
    if let Some(dir) = checkpoint_dir {
        fs::create_dir_all(dir).map_err(io_err(format!("cannot create {}", dir.display())))?;
    }
    while !trainer.is_finished() && stop_after.is_none_or(|k| trainer.epoch() < k) {
        trainer.run_epoch().map_err(lib)?;
        if let Some(p) = &ckpt_path {
            trainer.checkpoint().save(p).map_err(|e| Failure::Io(format!("cannot write {}: {e}", p.display())))?;
        }
    }
    Ok(trainer.into_outcome().metrics)
}

pub fn cmd_train(
    config: &Path,
    overrides: &[String],
    run: Option<&str>,
    resume: Option<&Path>,
    stop_after: Option<usize>,
) -> Result<(), Failure> {
    let file = ExperimentFile::load(config, overrides)?;
    let runs = file.select_run(run)?;
    if resume.is_some() && runs.len() != 1 {
        return Err(Failure::Usage("resume: the config has several runs; pick one with --run".into()));
    }
    let (train, test) = file.dataset.materialize()?;
    // Validate every run before training any of them.
    let cfgs = runs.iter().map(|r| r.build(&train)).collect::<Result<Vec<_>, _>>()?;

    let opts = CsvOptions { wall_clock: file.output.wall_clock };
    let mut sink = Sink::open(file.output.metrics_csv.as_deref())?;
    write_csv_header(&mut sink).map_err(io_err("cannot write metrics"))?;
    for (spec, cfg) in runs.iter().zip(cfgs) {
        let strategy = cfg.kind().name();
        let metrics =
            train_one(&spec.name, cfg, &train, &test, resume, file.output.checkpoint_dir.as_deref(), stop_after)?;
        write_csv_rows(&mut sink, &spec.name, strategy, &metrics, opts).map_err(io_err("cannot write metrics"))?;
    }
    sink.finish()
}

/// Parameters a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Beta1,
    Beta2,
    BOverB,
    PruneRatio,
    AnnealRatio,
}

impl std::str::FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "beta1" => Axis::Beta1,
            "beta2" => Axis::Beta2,
            "b_over_B" => Axis::BOverB,
            "prune_ratio" => Axis::PruneRatio,
            "anneal_ratio" => Axis::AnnealRatio,
            _ => return Err(format!("unknown axis {s:?} (beta1, beta2, b_over_B, prune_ratio, anneal_ratio)")),
        })
    }
}

impl Axis {
    fn apply(self, spec: &RunSpec, value: f64) -> RunSpec {
        let mut s = spec.clone();
        match self {
            Axis::Beta1 => s.beta1 = Some(value),
            Axis::Beta2 => s.beta2 = Some(value),
            Axis::BOverB => {
                s.mini_batch = None;
                s.b_over_b = Some(value);
            }
            Axis::PruneRatio => s.prune_ratio = Some(value),
            Axis::AnnealRatio => s.anneal_ratio = Some(value),
        }
        s
    }
}

struct SweepRow {
    value: f64,
    acc: f64,
    bp: u64,
    seconds: f64,
}

fn worker_count(jobs: usize) -> usize {
    let cap = std::env::var("ESWP_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    cap.min(jobs).max(1)
}

/// Rows are emitted in value order; each is written as soon as it and all
/// earlier rows are done.
struct OrderedWriter {
    next: usize,
    pending: Vec<Option<SweepRow>>,
    sink: Sink,
    wall_clock: bool,
}

impl OrderedWriter {
    fn put(&mut self, i: usize, row: SweepRow) -> Result<(), Failure> {
        self.pending[i] = Some(row);
        while let Some(Some(r)) = self.pending.get(self.next) {
            let secs = if self.wall_clock { r.seconds } else { 0.0 };
            writeln!(self.sink, "{},{},{},{}", r.value, r.acc, r.bp, secs).map_err(io_err("cannot write sweep"))?;
            self.next += 1;
        }
        Ok(())
    }
}

pub fn cmd_sweep(
    config: &Path,
    overrides: &[String],
    run: Option<&str>,
    axis: Axis,
    values: &[f64],
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    if values.is_empty() {
        return Err(Failure::Usage("values: at least one value is required".into()));
    }
    let file = ExperimentFile::load(config, overrides)?;
    let base = *file.select_run(run)?.first().expect("at least one run");
    let (train, test) = file.dataset.materialize()?;
    let specs: Vec<RunSpec> = values.iter().map(|&v| axis.apply(base, v)).collect();
    let cfgs = specs.iter().map(|s| s.build(&train)).collect::<Result<Vec<_>, _>>()?;

    let mut sink = Sink::open(out.as_deref())?;
    writeln!(sink, "axis_value,final_test_acc,cum_bp_samples,total_seconds").map_err(io_err("cannot write sweep"))?;
    let writer = Mutex::new(OrderedWriter {
        next: 0,
        pending: (0..values.len()).map(|_| None).collect(),
        sink,
        wall_clock: file.output.wall_clock,
    });
    let next_job = AtomicUsize::new(0);
    let first_error: Mutex<Option<(usize, Failure)>> = Mutex::new(None);

    std::thread::scope(|scope| {
        for _ in 0..worker_count(values.len()) {
            scope.spawn(|| loop {
                let i = next_job.fetch_add(1, Ordering::Relaxed);
                if i >= values.len() {
                    break;
                }
                let name = format!("{}-{}", base.name, values[i]);
                let result = train_one(&name, cfgs[i].clone(), &train, &test, None, None, None).and_then(|m| {
                    let row = SweepRow {
                        value: values[i],
                        acc: m.final_test_acc().unwrap_or(f64::NAN),
                        bp: m.bp_samples,
                        seconds: m.total_seconds(),
                    };
                    writer.lock().expect("writer lock").put(i, row)
                });
                if let Err(e) = result {
                    let mut slot = first_error.lock().expect("error lock");
                    // Report the failure of the lowest value index so the
                    // message does not depend on thread timing.
                    if slot.as_ref().is_none_or(|(j, _)| i < *j) {
                        *slot = Some((i, e));
                    }
                }
            });
        }
    });
    if let Some((_, e)) = first_error.into_inner().expect("error lock") {
        return Err(e);
    }
    writer.into_inner().expect("writer lock").sink.finish()
}
