//! `freq`, `oracle` and `bpcount`.

use std::io::Write;
use std::path::Path;

use evolved_sampling::analysis::{frequency_rows, oracle_rows, LossTrace};
use evolved_sampling::rng::{seeded, streams};
use evolved_sampling::trainer::bp_pass_count;
use evolved_sampling::BetaParams;
use rand::Rng;

use crate::failure::{io_err, Failure};
use crate::output::Sink;

fn betas(beta1: f64, beta2: f64) -> Result<BetaParams, Failure> {
    BetaParams::new(beta1, beta2).map_err(|e| Failure::from_lib("--beta1/--beta2", e))
}

pub fn cmd_freq(beta1: f64, beta2: f64, omegas: &[f64], cycles: usize, out: Option<&Path>) -> Result<(), Failure> {
    let rows = frequency_rows(&betas(beta1, beta2)?, omegas, cycles).map_err(|e| Failure::from_lib("--omegas", e))?;
    let mut sink = Sink::open(out)?;
    let w = io_err("cannot write output");
    let mut text = String::from("omega,continuous_gain,discrete_gain,empirical_gain\n");
    for r in rows {
        text.push_str(&format!("{},{},{},{}\n", r.omega, r.continuous, r.discrete, r.empirical));
    }
    sink.write_all(text.as_bytes()).map_err(w)?;
    sink.finish()
}

/// Losses are drawn uniformly from `[0, 2]`.
pub fn cmd_oracle(
    beta1: f64,
    beta2: f64,
    trace_len: usize,
    seed: u64,
    s0: f64,
    out: Option<&Path>,
) -> Result<(), Failure> {
    if trace_len == 0 {
        return Err(Failure::Usage("--trace-len must be positive".into()));
    }
    let mut rng = seeded(seed, streams::DATA);
    let losses = (0..trace_len).map(|_| rng.gen_range(0.0..=2.0)).collect();
    let trace = LossTrace::new(losses, s0).map_err(|e| Failure::from_lib("--s0", e))?;
    let rows = oracle_rows(&trace, &betas(beta1, beta2)?).map_err(|e| Failure::from_lib("--beta2", e))?;
    let mut text = String::from("t,recursion_w,expansion_w,gap\n");
    for r in rows {
        text.push_str(&format!("{},{},{},{}\n", r.t, r.recursion, r.expansion, r.gap));
    }
    let mut sink = Sink::open(out)?;
    sink.write_all(text.as_bytes()).map_err(io_err("cannot write output"))?;
    sink.finish()
}

pub fn cmd_bpcount(meta_batch: usize, mini_batch: usize, micro_batch: usize) -> Result<(), Failure> {
    let (base, es) =
        bp_pass_count(meta_batch, mini_batch, micro_batch).map_err(|e| Failure::from_lib("batch sizes", e))?;
    let mut sink = Sink::open(None)?;
    writeln!(sink, "baseline_passes,es_passes\n{base},{es}").map_err(io_err("cannot write output"))?;
    sink.finish()
}
