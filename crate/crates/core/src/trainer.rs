//! The training loop: optional weighted pruning per epoch, uniform meta-batches,
//! scoring forward pass, sampler update, mini-batch selection, SGD step.
//!
//! Per epoch `e`:
//!
//! 1. If the strategy prunes and `e` is not an annealing epoch, draw the epoch
//!    pool (`floor((1 - r) n)` ids); otherwise the pool is the whole dataset.
//! 2. Shuffle the pool and cut it into meta-batches of size `B` (the last one
//!    may be short).
//! 3. For each meta-batch: score it with a forward pass, update the sampler
//!    state of its members, pick the mini-batch (`min(b, |meta|)` ids) unless
//!    annealing, backpropagate on it and take one optimizer step.

use std::time::Instant;

use rand::seq::SliceRandom;

use crate::checkpoint::Checkpoint;
use crate::data::{Batch, IndexedDataset};
use crate::error::{invalid, Result};
use crate::metrics::{EpochRecord, RunMetrics};
use crate::models::{accuracy, backward, forward_losses, Architecture, ModelParams};
use crate::optim::{lr_at, sgd_step, SgdConfig};
use crate::rng::{seeded, streams, RngPosition, StreamRng};
use crate::sampler::{BetaParams, SamplerState, Strategy, StrategyKind, DEFAULT_PROB_FLOOR};
use crate::scalar::Scalar;
use crate::selection::{
    annealing_active, prune_epoch, prune_uniform, select_minibatch, select_top_losses, AnnealWindow, PruneConfig,
};

/// Everything that defines a training run apart from the data.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<T> {
    pub strategy: Strategy<T>,
    /// Meta-batch size `B`.
    pub meta_batch: usize,
    /// Mini-batch size `b <= B`.
    pub mini_batch: usize,
    pub prune: PruneConfig,
    pub anneal: AnnealWindow,
    pub epochs: usize,
    pub optimizer: SgdConfig<T>,
    pub seed: u64,
    pub arch: Architecture,
    /// Lower clamp on weights before they are normalized into probabilities.
    pub prob_floor: T,
}

impl<T: Scalar> TrainConfig<T> {
    /// Defaults for `kind`: `B = 128`, `b/B = 25%` when selecting, 5% annealing
    /// on each side, pruning ratio 0.2 for the pruning strategies, betas
    /// `(0.2, 0.9)` for ES and `(0.2, 0.8)` for ESWP, SGD with momentum 0.9,
    /// weight decay 5e-4 and a cosine schedule.
    pub fn defaults(kind: StrategyKind, arch: Architecture, epochs: usize) -> Result<Self> {
        let betas = match kind {
            StrategyKind::Es => BetaParams::new(T::lit(0.2), T::lit(0.9))?,
            StrategyKind::Eswp => BetaParams::new(T::lit(0.2), T::lit(0.8))?,
            StrategyKind::NonDif => BetaParams::new(T::lit(0.9), T::lit(0.9))?,
            _ => BetaParams::loss(),
        };
        let meta_batch = 128;
        let mini_batch = if kind.selects_minibatch() { meta_batch / 4 } else { meta_batch };
        let anneal = if kind == StrategyKind::Uniform {
            AnnealWindow::none(epochs)?
        } else {
            AnnealWindow::from_ratio(0.05, epochs)?
        };
        let prune = if kind.prunes() { PruneConfig::new(0.2)? } else { PruneConfig::none() };
        Ok(Self {
            strategy: Strategy::new(kind, betas)?,
            meta_batch,
            mini_batch,
            prune,
            anneal,
            epochs,
            optimizer: SgdConfig::standard(T::lit(0.05)),
            seed: 0,
            arch,
            prob_floor: T::lit(DEFAULT_PROB_FLOOR),
        })
    }

    pub fn kind(&self) -> StrategyKind {
        self.strategy.kind()
    }

    /// Checks internal consistency and compatibility with `train`.
    pub fn validate(&self, train: &IndexedDataset<T>) -> Result<()> {
        let n = train.len();
        if self.epochs == 0 {
            return Err(invalid("epochs must be positive"));
        }
        if self.anneal.total_epochs() != self.epochs {
            return Err(invalid(format!(
                "annealing window spans {} epochs but epochs = {}",
                self.anneal.total_epochs(),
                self.epochs
            )));
        }
        if self.meta_batch == 0 {
            return Err(invalid("meta_batch must be positive"));
        }
        if self.mini_batch == 0 {
            return Err(invalid("mini_batch must be positive"));
        }
        if self.mini_batch > self.meta_batch {
            return Err(invalid(format!("mini_batch ({}) exceeds meta_batch ({})", self.mini_batch, self.meta_batch)));
        }
        if self.meta_batch > n {
            return Err(invalid(format!("meta_batch ({}) exceeds the training set size ({n})", self.meta_batch)));
        }
        if self.kind().prunes() && self.prune.retained(n) == 0 {
            return Err(invalid(format!("prune_ratio {} leaves no samples", self.prune.ratio())));
        }
        if !(self.prob_floor > T::zero()) {
            return Err(invalid("probability floor must be positive"));
        }
        self.optimizer.validate()?;
        self.arch.check_dataset(train)?;
        Ok(())
    }

    /// Size of the epoch pool for a dataset of `n` samples.
    pub fn pool_size(&self, epoch: usize, n: usize) -> Result<usize> {
        let anneal = annealing_active(epoch, &self.anneal)?;
        Ok(if self.kind().prunes() && !anneal { self.prune.retained(n) } else { n })
    }

    /// Optimizer steps over the whole run.
    pub fn total_steps(&self, n: usize) -> Result<usize> {
        (0..self.epochs).map(|e| Ok(self.pool_size(e, n)?.div_ceil(self.meta_batch))).sum()
    }
}

/// Per-update backpropagation passes `(ceil(B / b_micro), ceil(b / b_micro))`
/// when a batch is processed in micro-batches of `b_micro`.
pub fn bp_pass_count(meta_batch: usize, mini_batch: usize, micro_batch: usize) -> Result<(usize, usize)> {
    if meta_batch == 0 || mini_batch == 0 || micro_batch == 0 {
        return Err(invalid("batch sizes must be positive"));
    }
    Ok((meta_batch.div_ceil(micro_batch), mini_batch.div_ceil(micro_batch)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation<T> {
    pub accuracy: T,
    pub mean_loss: T,
}

/// Accuracy and mean loss over the whole dataset.
pub fn evaluate<T: Scalar>(params: &ModelParams<T>, dataset: &IndexedDataset<T>) -> Result<Evaluation<T>> {
    let ids: Vec<usize> = dataset.ids().collect();
    let losses = forward_losses(params, &Batch::new(dataset, &ids)?)?;
    let mean_loss = losses.iter().copied().sum::<T>() / T::from_usize_lossy(losses.len().max(1));
    Ok(Evaluation { accuracy: accuracy(params, dataset), mean_loss })
}

/// Final artifacts of a run.
#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub metrics: RunMetrics,
    pub params: ModelParams<T>,
    pub state: SamplerState<T>,
}

/// Resumable training state machine; one call to [`Trainer::run_epoch`] per epoch.
pub struct Trainer<'a, T> {
    cfg: TrainConfig<T>,
    train: &'a IndexedDataset<T>,
    test: Option<&'a IndexedDataset<T>>,
    all_ids: Vec<usize>,
    params: ModelParams<T>,
    velocity: Vec<T>,
    state: SamplerState<T>,
    rng: StreamRng,
    epoch: usize,
    step: u64,
    total_steps: usize,
    metrics: RunMetrics,
    selection_log: Option<Vec<Vec<usize>>>,
}

impl<'a, T: Scalar> Trainer<'a, T> {
    pub fn new(cfg: TrainConfig<T>, train: &'a IndexedDataset<T>, test: Option<&'a IndexedDataset<T>>) -> Result<Self> {
        cfg.validate(train)?;
        let params = ModelParams::init(cfg.arch, cfg.seed)?;
        let state = SamplerState::new(train.len())?;
        let rng = seeded(cfg.seed, streams::TRAINING);
        Self::assemble(cfg, train, test, params, None, state, rng, 0, 0, RunMetrics::default())
    }

    /// Continues a run from a checkpoint taken with the same configuration.
    pub fn resume(
        cfg: TrainConfig<T>,
        train: &'a IndexedDataset<T>,
        test: Option<&'a IndexedDataset<T>>,
        ckpt: Checkpoint<T>,
    ) -> Result<Self> {
        cfg.validate(train)?;
        if ckpt.params.arch() != cfg.arch {
            return Err(invalid("checkpoint architecture differs from the configuration"));
        }
        if ckpt.state.len() != train.len() {
            return Err(invalid(format!(
                "checkpoint tracks {} samples, training set has {}",
                ckpt.state.len(),
                train.len()
            )));
        }
        if ckpt.epoch > cfg.epochs {
            return Err(invalid(format!(
                "checkpoint at epoch {} is past the configured {} epochs",
                ckpt.epoch, cfg.epochs
            )));
        }
        Self::assemble(
            cfg,
            train,
            test,
            ckpt.params,
            Some(ckpt.velocity),
            ckpt.state,
            ckpt.rng.restore(),
            ckpt.epoch,
            ckpt.step,
            ckpt.metrics,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        cfg: TrainConfig<T>,
        train: &'a IndexedDataset<T>,
        test: Option<&'a IndexedDataset<T>>,
        params: ModelParams<T>,
        velocity: Option<Vec<T>>,
        state: SamplerState<T>,
        rng: StreamRng,
        epoch: usize,
        step: u64,
        metrics: RunMetrics,
    ) -> Result<Self> {
        if let Some(test) = test {
            cfg.arch.check_dataset(test)?;
        }
        let velocity = velocity.unwrap_or_else(|| vec![T::zero(); params.values().len()]);
        if velocity.len() != params.values().len() {
            return Err(invalid("velocity length differs from parameter count"));
        }
        let total_steps = cfg.total_steps(train.len())?;
        Ok(Self {
            all_ids: train.ids().collect(),
            cfg,
            train,
            test,
            params,
            velocity,
            state,
            rng,
            epoch,
            step,
            total_steps,
            metrics,
            selection_log: None,
        })
    }

    /// Starts recording the ids used for each backward pass.
    pub fn record_selections(&mut self) {
        self.selection_log.get_or_insert_with(Vec::new);
    }

    /// Ids backpropagated at each step since recording started.
    pub fn selections(&self) -> Option<&[Vec<usize>]> {
        self.selection_log.as_deref()
    }

    pub fn config(&self) -> &TrainConfig<T> {
        &self.cfg
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn is_finished(&self) -> bool {
        self.epoch >= self.cfg.epochs
    }

    pub fn metrics(&self) -> &RunMetrics {
        &self.metrics
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn state(&self) -> &SamplerState<T> {
        &self.state
    }

    /// Snapshot sufficient to continue the run bit-exactly.
    pub fn checkpoint(&self) -> Checkpoint<T> {
        Checkpoint {
            epoch: self.epoch,
            step: self.step,
            rng: RngPosition::capture(&self.rng),
            params: self.params.clone(),
            velocity: self.velocity.clone(),
            state: self.state.clone(),
            metrics: self.metrics.clone(),
        }
    }

    fn epoch_pool(&mut self, annealing: bool) -> Result<Vec<usize>> {
        let kind = self.cfg.kind();
        if !kind.prunes() || annealing {
            return Ok(self.all_ids.clone());
        }
        match kind {
            StrategyKind::Eswp => {
                prune_epoch(&self.state, &self.all_ids, &self.cfg.prune, self.cfg.prob_floor, &mut self.rng)
            }
            _ => prune_uniform(&self.all_ids, &self.cfg.prune, &mut self.rng),
        }
    }

    fn update_state(&mut self, meta: &[usize], losses: &[T]) -> Result<()> {
        let step = self.step + 1;
        let kind = self.cfg.kind();
        let betas = self.cfg.strategy.betas();
        for (&id, &loss) in meta.iter().zip(losses) {
            match kind {
                StrategyKind::Loss | StrategyKind::Order => self.state.record_loss(id, loss, step)?,
                _ => {
                    self.state.update_sample(id, loss, &betas, step)?;
                }
            }
        }
        Ok(())
    }

    /// Runs one epoch and returns its record.
    pub fn run_epoch(&mut self) -> Result<&EpochRecord> {
        if self.is_finished() {
            return Err(invalid("training already finished"));
        }
        let e = self.epoch;
        let kind = self.cfg.kind();
        let annealing = annealing_active(e, &self.cfg.anneal)?;
        let selecting = kind.selects_minibatch() && !annealing;

        let started = Instant::now();
        let mut pool = self.epoch_pool(annealing)?;
        let pool_size = pool.len();
        pool.shuffle(&mut self.rng);

        let mut loss_sum = T::zero();
        for meta in pool.chunks(self.cfg.meta_batch) {
            let losses = forward_losses(&self.params, &Batch::new(self.train, meta)?)?;
            loss_sum += losses.iter().copied().sum::<T>();
            self.metrics.fp_samples += meta.len() as u64;

            if kind.tracks_state() {
                self.update_state(meta, &losses)?;
            }
            let chosen = if selecting {
                let b = self.cfg.mini_batch.min(meta.len());
                if kind == StrategyKind::Order {
                    select_top_losses(meta, &losses, b)?
                } else {
                    select_minibatch(&self.state, meta, b, self.cfg.prob_floor, &mut self.rng)?
                }
            } else {
                meta.to_vec()
            };

            let grad = backward(&self.params, &Batch::new(self.train, &chosen)?)?;
            let lr = lr_at(&self.cfg.optimizer, self.step as usize, self.total_steps)?;
            sgd_step(self.params.values_mut(), &grad, &mut self.velocity, &self.cfg.optimizer, lr)?;
            self.metrics.bp_samples += chosen.len() as u64;
            self.metrics.updates += 1;
            self.step += 1;
            if let Some(log) = self.selection_log.as_mut() {
                log.push(chosen);
            }
        }
        let seconds = started.elapsed().as_secs_f64();

        let (test_acc, test_loss) = match self.test {
            Some(test) => {
                let ev = evaluate(&self.params, test)?;
                (ev.accuracy.as_f64(), ev.mean_loss.as_f64())
            }
            None => (f64::NAN, f64::NAN),
        };
        self.metrics.epochs.push(EpochRecord {
            epoch: e,
            pool_size,
            annealing,
            train_loss: loss_sum.as_f64() / pool_size as f64,
            test_acc,
            test_loss,
            seconds,
            cum_fp_samples: self.metrics.fp_samples,
            cum_bp_samples: self.metrics.bp_samples,
            cum_updates: self.metrics.updates,
        });
        self.epoch += 1;
        Ok(self.metrics.epochs.last().expect("just pushed"))
    }

    /// Runs every remaining epoch.
    pub fn run(&mut self) -> Result<()> {
        while !self.is_finished() {
            self.run_epoch()?;
        }
        Ok(())
    }

    pub fn into_outcome(self) -> TrainOutcome<T> {
        TrainOutcome { metrics: self.metrics, params: self.params, state: self.state }
    }
}

/// Trains from scratch to completion.
pub fn run_training<T: Scalar>(
    cfg: TrainConfig<T>,
    train: &IndexedDataset<T>,
    test: Option<&IndexedDataset<T>>,
) -> Result<TrainOutcome<T>> {
    let mut trainer = Trainer::new(cfg, train, test)?;
    trainer.run()?;
    Ok(trainer.into_outcome())
}
