use evolved_sampling::data::{gen_gaussian_mixture, split};
use evolved_sampling::metrics::{to_csv_string, CsvOptions, RunMetrics};
use evolved_sampling::trainer::{run_training, Trainer};
use evolved_sampling::{
    AnnealWindow, Architecture, BetaParams, Checkpoint, IndexedDataset, PruneConfig, Schedule, Strategy, StrategyKind,
    TrainConfig,
};

fn data() -> (IndexedDataset, IndexedDataset) {
    let full = gen_gaussian_mixture(1200, 6, 4, 2.0, 11).unwrap();
    split(&full, 1.0 / 6.0, 11).unwrap()
}

fn config(kind: StrategyKind, epochs: usize) -> TrainConfig {
    let mut cfg = TrainConfig::defaults(kind, Architecture::Mlp { dim: 6, hidden: 8, classes: 4 }, epochs).unwrap();
    cfg.meta_batch = 64;
    cfg.mini_batch = if kind.selects_minibatch() { 16 } else { 64 };
    cfg.anneal = AnnealWindow::new(1, 1, epochs).unwrap();
    cfg.seed = 5;
    cfg
}

fn without_seconds(m: &RunMetrics) -> RunMetrics {
    let mut m = m.clone();
    m.epochs.iter_mut().for_each(|e| e.seconds = 0.0);
    m
}

#[test]
fn resume_from_checkpoint_is_bit_exact() {
    let (train, test) = data();
    for kind in [StrategyKind::Es, StrategyKind::Eswp, StrategyKind::Uniform] {
        let full = run_training(config(kind, 5), &train, Some(&test)).unwrap();

        let mut first = Trainer::new(config(kind, 5), &train, Some(&test)).unwrap();
        for _ in 0..3 {
            first.run_epoch().unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        first.checkpoint().save(&path).unwrap();
        drop(first);

        let ck = Checkpoint::load(&path).unwrap();
        assert_eq!(ck.epoch, 3);
        let mut resumed = Trainer::resume(config(kind, 5), &train, Some(&test), ck).unwrap();
        resumed.run().unwrap();
        let out = resumed.into_outcome();
        assert_eq!(without_seconds(&out.metrics), without_seconds(&full.metrics), "{kind:?}");
        assert_eq!(out.params, full.params);
        assert_eq!(out.state, full.state);
    }
}

#[test]
fn save_load_save_is_byte_identical() {
    let (train, test) = data();
    let mut t = Trainer::new(config(StrategyKind::Eswp, 4), &train, Some(&test)).unwrap();
    t.run_epoch().unwrap();
    t.run_epoch().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.bin");
    let b = dir.path().join("b.bin");
    t.checkpoint().save(&a).unwrap();
    Checkpoint::load(&a).unwrap().save(&b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn resume_rejects_mismatched_config() {
    let (train, test) = data();
    let mut t = Trainer::new(config(StrategyKind::Es, 4), &train, Some(&test)).unwrap();
    t.run_epoch().unwrap();
    let ck = t.checkpoint();
    let mut other = config(StrategyKind::Es, 4);
    other.arch = Architecture::Logistic { dim: 6, classes: 4 };
    assert!(Trainer::resume(other, &train, Some(&test), ck).is_err());
}

#[test]
fn zero_betas_reproduce_loss_strategy() {
    let (train, _) = data();
    let mut es = config(StrategyKind::Es, 4);
    es.strategy = Strategy::new(StrategyKind::Es, BetaParams::new(0.0, 0.0).unwrap()).unwrap();
    let loss = config(StrategyKind::Loss, 4);

    let mut a = Trainer::new(es, &train, None).unwrap();
    a.record_selections();
    a.run().unwrap();
    let mut b = Trainer::new(loss, &train, None).unwrap();
    b.record_selections();
    b.run().unwrap();
    assert_eq!(a.selections(), b.selections());
    assert_eq!(a.params(), b.params());
}

#[test]
fn unit_betas_keep_weights_uniform() {
    let (train, _) = data();
    let mut cfg = config(StrategyKind::Es, 3);
    cfg.strategy = Strategy::new(StrategyKind::Es, BetaParams::new(1.0, 1.0).unwrap()).unwrap();
    let n = train.len() as f64;
    let mut t = Trainer::new(cfg, &train, None).unwrap();
    while !t.is_finished() {
        t.run_epoch().unwrap();
        for &w in t.state().weights() {
            assert!((w - 1.0 / n).abs() <= 1e-15);
        }
    }
}

#[test]
fn identical_configs_give_identical_metrics() {
    let (train, test) = data();
    for kind in [StrategyKind::Es, StrategyKind::Eswp, StrategyKind::Order, StrategyKind::RandomPrune] {
        let a = run_training(config(kind, 3), &train, Some(&test)).unwrap();
        let b = run_training(config(kind, 3), &train, Some(&test)).unwrap();
        let opts = CsvOptions::default();
        assert_eq!(
            to_csv_string([("r", kind.name(), &a.metrics)], opts),
            to_csv_string([("r", kind.name(), &b.metrics)], opts)
        );
    }
}

#[test]
fn bp_budget_matches_closed_form() {
    let (train, test) = data();
    let n = train.len();
    for kind in [StrategyKind::Uniform, StrategyKind::Es, StrategyKind::Eswp, StrategyKind::NonDif] {
        let cfg = config(kind, 6);
        let (meta, mini) = (cfg.meta_batch, cfg.mini_batch);
        let out = run_training(cfg.clone(), &train, Some(&test)).unwrap();
        let mut expected = 0u64;
        for (e, rec) in out.metrics.epochs.iter().enumerate() {
            let pool = cfg.pool_size(e, n).unwrap();
            assert_eq!(rec.pool_size, pool);
            let epoch_bp = if rec.annealing || !kind.selects_minibatch() {
                pool
            } else {
                (pool / meta) * mini + (pool % meta).min(mini)
            };
            expected += epoch_bp as u64;
            assert_eq!(rec.cum_bp_samples, expected, "{kind:?} epoch {e}");
        }
        assert!(out.metrics.bp_samples <= out.metrics.fp_samples);
    }
}

#[test]
fn counters_are_monotone() {
    let (train, test) = data();
    let out = run_training(config(StrategyKind::Eswp, 5), &train, Some(&test)).unwrap();
    for w in out.metrics.epochs.windows(2) {
        assert!(w[1].cum_fp_samples >= w[0].cum_fp_samples);
        assert!(w[1].cum_bp_samples >= w[0].cum_bp_samples);
        assert!(w[1].cum_updates > w[0].cum_updates);
    }
}

#[test]
fn well_separated_mixture_is_learned() {
    let full = gen_gaussian_mixture(1250, 2, 2, 10.0, 3).unwrap();
    let (train, test) = split(&full, 0.2, 3).unwrap();
    let mut cfg =
        TrainConfig::defaults(StrategyKind::Uniform, Architecture::Logistic { dim: 2, classes: 2 }, 10).unwrap();
    cfg.meta_batch = 50;
    cfg.mini_batch = 50;
    let out = run_training(cfg, &train, Some(&test)).unwrap();
    assert!(out.metrics.final_test_acc().unwrap() > 0.99);
}

#[test]
fn inseparable_mixture_stays_at_chance() {
    let full = gen_gaussian_mixture(6000, 5, 5, 0.0, 4).unwrap();
    let (train, test) = split(&full, 1.0 / 6.0, 4).unwrap();
    let mut cfg =
        TrainConfig::defaults(StrategyKind::Uniform, Architecture::Logistic { dim: 5, classes: 5 }, 5).unwrap();
    cfg.optimizer.schedule = Schedule::Constant;
    cfg.optimizer.base_lr = 0.01;
    let out = run_training(cfg, &train, Some(&test)).unwrap();
    let acc = out.metrics.final_test_acc().unwrap();
    assert!((acc - 0.2).abs() <= 0.05, "accuracy {acc}");
}

#[test]
fn invalid_configs_fail_before_training() {
    let (train, _) = data();
    let mut cfg = config(StrategyKind::Es, 3);
    cfg.mini_batch = 65;
    let err = run_training(cfg, &train, None).unwrap_err();
    assert!(err.to_string().contains("mini_batch"), "{err}");

    let mut cfg = config(StrategyKind::Es, 3);
    cfg.meta_batch = train.len() + 1;
    cfg.mini_batch = 1;
    assert!(run_training(cfg, &train, None).is_err());

    let mut cfg = config(StrategyKind::Eswp, 3);
    cfg.prune = PruneConfig::new(0.9999).unwrap();
    assert!(run_training(cfg, &train, None).is_err());
}
