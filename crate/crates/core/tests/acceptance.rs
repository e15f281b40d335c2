//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Runs without the libtest harness so the
//! report is always visible.

use std::time::{Duration, Instant};

use evolved_sampling::analysis::{
    continuous_gain, discrete_gain, dro_identity_residual, empirical_gain, lw_gd_run, recursion_expansion_gap,
    LeastSquaresProblem, LossTrace, Weighting,
};
use evolved_sampling::data::{gen_gaussian_mixture, split};
use evolved_sampling::metrics::{to_csv_string, CsvOptions, RunMetrics};
use evolved_sampling::rng::seeded;
use evolved_sampling::trainer::{bp_pass_count, run_training, Trainer};
use evolved_sampling::{AnnealWindow, Architecture, BetaParams, IndexedDataset, Strategy, StrategyKind, TrainConfig};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

struct Report {
    lines: Vec<String>,
    failed: usize,
}

impl Report {
    fn run(&mut self, id: u32, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let o = f();
        let took = start.elapsed();
        let in_time = took <= budget;
        let pass = o.pass && in_time;
        if !pass {
            self.failed += 1;
        }
        let line = format!(
            "[{}] criterion {id} {name}: {} ({:.2}s, budget {}s{})",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
        println!("{line}");
        self.lines.push(line);
    }
}

fn random_trace(rng: &mut impl Rng, len: usize) -> (LossTrace<f64>, BetaParams) {
    let losses = (0..len).map(|_| rng.gen_range(0.0..=2.0)).collect();
    let trace = LossTrace::new(losses, 1.0 / 1000.0).unwrap();
    let betas = BetaParams::new(rng.gen_range(1e-9..0.999), rng.gen_range(1e-9..0.999)).unwrap();
    (trace, betas)
}

fn oracle_equivalence() -> Outcome {
    let mut rng = seeded(1, 100);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (trace, betas) = random_trace(&mut rng, 1000);
        worst = worst.max(recursion_expansion_gap(&trace, &betas).unwrap());
    }
    outcome(worst <= 1e-10, format!("max |recursion - expansion| = {worst:.3e} (tol 1e-10)"))
}

fn reduction_identities() -> Outcome {
    let full = gen_gaussian_mixture(3000, 20, 5, 2.0, 7).unwrap();
    let (train, _) = split(&full, 0.2, 7).unwrap();
    let arch = Architecture::Logistic { dim: 20, classes: 5 };
    let make = |kind, betas: Option<(f64, f64)>| {
        let mut cfg = TrainConfig::defaults(kind, arch, 4).unwrap();
        if let Some((b1, b2)) = betas {
            cfg.strategy = Strategy::new(kind, BetaParams::new(b1, b2).unwrap()).unwrap();
        }
        cfg.anneal = AnnealWindow::new(1, 0, 4).unwrap();
        cfg.seed = 3;
        cfg
    };
    let selections = |cfg| {
        let mut t = Trainer::new(cfg, &train, None).unwrap();
        t.record_selections();
        t.run().unwrap();
        t.selections().unwrap().to_vec()
    };
    let es = selections(make(StrategyKind::Es, Some((0.0, 0.0))));
    let loss = selections(make(StrategyKind::Loss, None));
    let same = es == loss;

    let mut t = Trainer::new(make(StrategyKind::Es, Some((1.0, 1.0))), &train, None).unwrap();
    let uniform = 1.0 / train.len() as f64;
    let mut worst = 0.0f64;
    while !t.is_finished() {
        t.run_epoch().unwrap();
        for &w in t.state().weights() {
            worst = worst.max((w - uniform).abs());
        }
    }
    outcome(
        same && worst <= 1e-15,
        format!("ES(0,0) == Loss over {} steps: {same}; ES(1,1) max |w - 1/n| = {worst:.1e} (tol 1e-15)", es.len()),
    )
}

fn transfer_function() -> Outcome {
    let betas = BetaParams::new(0.2, 0.9).unwrap();
    let limit = continuous_gain(&betas, 1e9).unwrap().gain;
    let limit_ok = (limit - 0.7).abs() <= 1e-6;

    let omegas: Vec<f64> = (0..50).map(|k| 10f64.powf(-3.0 + 6.0 * k as f64 / 49.0)).collect();
    let mut max_gain = 0.0f64;
    for i in 0..100 {
        for j in 0..100 {
            let b = BetaParams::new((i as f64 + 0.5) / 100.0, (j as f64 + 0.5) / 100.0).unwrap();
            for &w in &omegas {
                max_gain = max_gain.max(continuous_gain(&b, w).unwrap().gain);
            }
        }
    }
    let bounded = max_gain <= 1.0;

    let mut worst_rel = 0.0f64;
    for w in [0.01, 0.1, 0.5, 1.0, 2.0, std::f64::consts::PI] {
        let emp = empirical_gain(&betas, w, 20).unwrap().gain;
        let exact = discrete_gain(&betas, w).gain;
        worst_rel = worst_rel.max((emp - exact).abs() / exact);
    }
    let empirical_ok = worst_rel <= 0.02;
    outcome(
        limit_ok && bounded && empirical_ok,
        format!(
            "gain(1e9) = {limit:.9} (0.7 +- 1e-6); max |H| on grid = {max_gain:.6} (<= 1); \
             empirical vs discrete worst rel err = {:.3}% (tol 2%)",
            worst_rel * 100.0
        ),
    )
}

fn dro_identity() -> Outcome {
    let mut rng = seeded(2, 100);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (trace, betas) = random_trace(&mut rng, 1000);
        worst = worst.max(dro_identity_residual(&trace, &betas).unwrap());
    }
    outcome(worst <= 1e-10, format!("max residual = {worst:.3e} (tol 1e-10)"))
}

fn gradient_correctness() -> Outcome {
    use evolved_sampling::data::{Batch, Targets};
    use evolved_sampling::models::{backward, forward_losses, ModelParams};
    use rand_distr::{Distribution, StandardNormal};

    let h = 1e-5;
    let cls = gen_gaussian_mixture(60, 5, 3, 1.5, 9).unwrap();
    let mut rng = seeded(9, 101);
    let x: Vec<f64> = (0..60 * 5).map(|_| StandardNormal.sample(&mut rng)).collect();
    let y: Vec<f64> = (0..60 * 2).map(|_| StandardNormal.sample(&mut rng)).collect();
    let reg = IndexedDataset::new("reg", 5, x, Targets::Values { dim: 2, values: y }).unwrap();
    let cases = [
        (Architecture::Linear { dim: 5, outputs: 2 }, &reg),
        (Architecture::Logistic { dim: 5, classes: 3 }, &cls),
        (Architecture::Mlp { dim: 5, hidden: 8, classes: 3 }, &cls),
    ];
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (arch, ds) in cases {
        for _ in 0..20 {
            let vals =
                (0..arch.param_count()).map(|_| 0.5 * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
            let mut p = ModelParams::from_values(arch, vals).unwrap();
            let mut ids: Vec<usize> = (0..6).map(|_| rng.gen_range(0..ds.len())).collect();
            ids.sort_unstable();
            ids.dedup();
            let batch = Batch::new(ds, &ids).unwrap();
            let mean = |p: &ModelParams<f64>| {
                let l = forward_losses(p, &batch).unwrap();
                l.iter().sum::<f64>() / l.len() as f64
            };
            let g = backward(&p, &batch).unwrap();
            let (mut d2, mut n2) = (0.0, 0.0);
            for (k, &gk) in g.iter().enumerate() {
                let orig = p.values()[k];
                p.values_mut()[k] = orig + h;
                let up = mean(&p);
                p.values_mut()[k] = orig - h;
                let down = mean(&p);
                p.values_mut()[k] = orig;
                let fd = (up - down) / (2.0 * h);
                d2 += (gk - fd) * (gk - fd);
                n2 += fd * fd;
            }
            worst = worst.max(d2.sqrt() / (n2.sqrt() + 1e-12));
            checked += 1;
        }
    }
    outcome(worst < 1e-5, format!("{checked} instances, worst relative error = {worst:.3e} (tol 1e-5)"))
}

fn convergence_lab() -> Outcome {
    let problem = LeastSquaresProblem::<f64>::random_consistent(20, 5, 0).unwrap();
    match lw_gd_run(&problem, &[0.0; 5], 0.01, 100_000, 1e-8, Weighting::Loss) {
        Ok(r) => {
            let last = r.trajectory.last().unwrap();
            let delta_ok = r.delta_positive_when_non_degenerate();
            outcome(
                r.converged && last.mean_loss < 1e-8 && delta_ok,
                format!(
                    "mean loss {:.3e} after {} steps (tol 1e-8); Delta > 0 at every non-degenerate step: {delta_ok}",
                    last.mean_loss, last.step
                ),
            )
        }
        Err(e) => outcome(false, format!("run failed: {e}")),
    }
}

const SEEDS: [u64; 3] = [0, 1, 2];
const KINDS: [StrategyKind; 3] = [StrategyKind::Uniform, StrategyKind::Es, StrategyKind::Eswp];

/// Mixture standing in for the 10000/2000 image split.
fn desk_data() -> (IndexedDataset, IndexedDataset) {
    let full = gen_gaussian_mixture(12_000, 50, 10, 3.0, 2024).unwrap();
    split(&full, 1.0 / 6.0, 2024).unwrap()
}

fn desk_config(kind: StrategyKind, seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::defaults(kind, Architecture::Logistic { dim: 50, classes: 10 }, 20).unwrap();
    cfg.seed = seed;
    cfg
}

struct DeskRuns {
    metrics: Vec<(StrategyKind, u64, RunMetrics)>,
}

impl DeskRuns {
    fn run(train: &IndexedDataset, test: &IndexedDataset) -> Self {
        let mut metrics = Vec::new();
        for kind in KINDS {
            for seed in SEEDS {
                let out = run_training(desk_config(kind, seed), train, Some(test)).unwrap();
                metrics.push((kind, seed, out.metrics));
            }
        }
        Self { metrics }
    }

    fn mean_acc(&self, kind: StrategyKind) -> f64 {
        let accs: Vec<f64> =
            self.metrics.iter().filter(|m| m.0 == kind).map(|m| m.2.final_test_acc().unwrap()).collect();
        accs.iter().sum::<f64>() / accs.len() as f64
    }

    fn bp(&self, kind: StrategyKind) -> u64 {
        self.metrics.iter().find(|m| m.0 == kind).unwrap().2.bp_samples
    }

    fn csv(&self) -> String {
        let ids: Vec<String> = self.metrics.iter().map(|(k, s, _)| format!("{}-s{s}", k.name())).collect();
        to_csv_string(
            self.metrics.iter().zip(&ids).map(|((k, _, m), id)| (id.as_str(), k.name(), m)),
            CsvOptions::default(),
        )
    }
}

fn lossless_acceleration(runs: &DeskRuns) -> Outcome {
    let base = runs.mean_acc(StrategyKind::Uniform);
    let base_bp = runs.bp(StrategyKind::Uniform) as f64;
    let es = runs.mean_acc(StrategyKind::Es);
    let eswp = runs.mean_acc(StrategyKind::Eswp);
    let es_ratio = runs.bp(StrategyKind::Es) as f64 / base_bp;
    let eswp_ratio = runs.bp(StrategyKind::Eswp) as f64 / base_bp;
    let es_gap = (base - es) * 100.0;
    let eswp_gap = (base - eswp) * 100.0;
    let pass = es_gap <= 0.5 && es_ratio <= 0.35 && eswp_gap <= 0.8 && eswp_ratio <= 0.30;
    outcome(
        pass,
        format!(
            "uniform {:.2}%; ES {:.2}% (gap {es_gap:+.2}pp, tol 0.5) at {es_ratio:.3}x BP (<= 0.35); \
             ESWP {:.2}% (gap {eswp_gap:+.2}pp, tol 0.8) at {eswp_ratio:.3}x BP (<= 0.30)",
            base * 100.0,
            es * 100.0,
            eswp * 100.0
        ),
    )
}

fn budget_accounting(runs: &DeskRuns, n: usize) -> Outcome {
    let mut mismatches = Vec::new();
    for (kind, seed, m) in &runs.metrics {
        let cfg = desk_config(*kind, *seed);
        let (meta, mini) = (cfg.meta_batch, cfg.mini_batch);
        let mut expected = 0u64;
        for (e, rec) in m.epochs.iter().enumerate() {
            let pool = cfg.pool_size(e, n).unwrap();
            expected += if rec.annealing || !kind.selects_minibatch() {
                pool as u64
            } else {
                ((pool / meta) * mini + (pool % meta).min(mini)) as u64
            };
            if rec.cum_bp_samples != expected || rec.pool_size != pool {
                mismatches.push(format!("{}-s{seed} epoch {e}", kind.name()));
            }
        }
    }
    outcome(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            format!("{} runs match the closed-form budget exactly", runs.metrics.len())
        } else {
            format!("mismatch at {}", mismatches.join(", "))
        },
    )
}

fn main() {
    let mut report = Report { lines: Vec::new(), failed: 0 };
    let secs = Duration::from_secs;

    report.run(1, "oracle equivalence", secs(5), oracle_equivalence);
    report.run(2, "reduction identities", secs(30), reduction_identities);
    report.run(3, "transfer function", secs(10), transfer_function);
    report.run(4, "DRO identity", secs(5), dro_identity);
    report.run(5, "gradient correctness", secs(30), gradient_correctness);
    report.run(6, "convergence lab", secs(60), convergence_lab);

    let (train, test) = desk_data();
    let mut runs = None;
    report.run(7, "desk-scale lossless acceleration", secs(600), || {
        let r = DeskRuns::run(&train, &test);
        let o = lossless_acceleration(&r);
        runs = Some(r);
        o
    });
    let runs = runs.unwrap();
    report.run(8, "budget accounting", secs(1), || budget_accounting(&runs, train.len()));
    report.run(9, "bp_pass_count", secs(1), || {
        let got = bp_pass_count(32, 8, 8).unwrap();
        outcome(got == (4, 1), format!("bp_pass_count(32, 8, 8) = {got:?} (expected (4, 1))"))
    });
    report.run(10, "determinism", secs(600), || {
        let again = DeskRuns::run(&train, &test);
        let (a, b) = (runs.csv(), again.csv());
        outcome(a == b, format!("repeat CSVs identical: {} ({} bytes)", a == b, a.len()))
    });

    println!("acceptance: {} of {} criteria passed", report.lines.len() - report.failed, report.lines.len());
    if report.failed > 0 {
        std::process::exit(1);
    }
}
