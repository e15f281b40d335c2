//! Per-sample score/weight state and the two-EMA update.
//!
//! Every sample `i` carries a slow score `s_i` (an EMA of its observed losses
//! with rate `beta2`) and a selection weight `w_i` that mixes the *previous*
//! score with the freshly observed loss at rate `beta1`:
//!
//! ```text
//! w_i <- beta1 * s_i + (1 - beta1) * loss
//! s_i <- beta2 * s_i + (1 - beta2) * loss
//! ```
//!
//! Unrolled, the weight equals an EMA of past losses plus a `(beta2 - beta1)`
//! scaled EMA of their step-to-step differences, without storing any history.
//! `beta1 = beta2 = 0` gives plain loss weighting; `beta1 = beta2 = 1` freezes
//! the state at its uniform initialization.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

/// Default lower clamp applied to weights before normalization.
pub const DEFAULT_PROB_FLOOR: f64 = 1e-12;

/// Decay pair `(beta1, beta2)`, both in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaParams<T> {
    beta1: T,
    beta2: T,
}

impl<T: Scalar> BetaParams<T> {
    pub fn new(beta1: T, beta2: T) -> Result<Self> {
        for (name, b) in [("beta1", beta1), ("beta2", beta2)] {
            if !(b >= T::zero() && b <= T::one()) {
                return Err(invalid(format!("{name} must lie in [0, 1], got {b}")));
            }
        }
        Ok(Self { beta1, beta2 })
    }

    /// Betas that reduce the update to pure loss weighting.
    pub fn loss() -> Self {
        Self { beta1: T::zero(), beta2: T::zero() }
    }

    pub fn beta1(&self) -> T {
        self.beta1
    }

    pub fn beta2(&self) -> T {
        self.beta2
    }

    /// Rejects `beta2 = 1`, for which the unrolled form is undefined.
    pub fn require_expandable(&self) -> Result<()> {
        if self.beta2 == T::one() {
            return Err(invalid("beta2 = 1 has no history expansion"));
        }
        Ok(())
    }
}

/// One step of the recursion for a single sample: returns `(w_new, s_new)`.
///
/// `w_new` reads the score from *before* this step.
#[inline]
pub fn ema_update<T: Scalar>(s_old: T, loss: T, betas: &BetaParams<T>) -> (T, T) {
    let w = betas.beta1 * s_old + (T::one() - betas.beta1) * loss;
    let s = betas.beta2 * s_old + (T::one() - betas.beta2) * loss;
    (w, s)
}

/// Which data-selection rule a training run follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    /// Standard batched training, no selection.
    Uniform,
    /// Weight equals the current loss.
    Loss,
    /// Deterministic top-b by current loss.
    Order,
    /// Two-EMA weighting with mini-batch selection.
    Es,
    /// `Es` plus weighted set-level pruning each epoch.
    Eswp,
    /// Two-EMA weighting with `beta1 = beta2`.
    NonDif,
    /// Uniform set-level pruning, no mini-batch selection.
    RandomPrune,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 7] = [
        StrategyKind::Uniform,
        StrategyKind::Loss,
        StrategyKind::Order,
        StrategyKind::Es,
        StrategyKind::Eswp,
        StrategyKind::NonDif,
        StrategyKind::RandomPrune,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Uniform => "uniform",
            StrategyKind::Loss => "loss",
            StrategyKind::Order => "order",
            StrategyKind::Es => "es",
            StrategyKind::Eswp => "eswp",
            StrategyKind::NonDif => "nondif",
            StrategyKind::RandomPrune => "random_prune",
        }
    }

    /// Whether a mini-batch is chosen out of each meta-batch.
    pub fn selects_minibatch(self) -> bool {
        matches!(
            self,
            StrategyKind::Loss | StrategyKind::Order | StrategyKind::Es | StrategyKind::Eswp | StrategyKind::NonDif
        )
    }

    /// Whether the dataset is pruned at the start of selection epochs.
    pub fn prunes(self) -> bool {
        matches!(self, StrategyKind::Eswp | StrategyKind::RandomPrune)
    }

    /// Whether the per-sample state is maintained at all.
    pub fn tracks_state(self) -> bool {
        self.selects_minibatch()
    }

    /// Whether the configured betas are honored.
    pub fn uses_betas(self) -> bool {
        matches!(self, StrategyKind::Es | StrategyKind::Eswp | StrategyKind::NonDif)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| invalid(format!("unknown strategy {s:?}")))
    }
}

/// A strategy together with the betas it runs with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Strategy<T> {
    kind: StrategyKind,
    betas: BetaParams<T>,
}

impl<T: Scalar> Strategy<T> {
    pub fn new(kind: StrategyKind, betas: BetaParams<T>) -> Result<Self> {
        if kind == StrategyKind::NonDif && betas.beta1 != betas.beta2 {
            return Err(invalid(format!("nondif requires beta1 == beta2, got ({}, {})", betas.beta1, betas.beta2)));
        }
        Ok(Self { kind, betas })
    }

    pub fn non_dif(beta: T) -> Result<Self> {
        Self::new(StrategyKind::NonDif, BetaParams::new(beta, beta)?)
    }

    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    /// Betas as configured (meaningful for ES, ESWP and NonDif only).
    pub fn betas(&self) -> BetaParams<T> {
        self.betas
    }
}

/// Evolving per-sample memory of the sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerState<T> {
    scores: Vec<T>,
    weights: Vec<T>,
    last_update_step: Vec<u64>,
}

impl<T: Scalar> SamplerState<T> {
    /// Uniform initialization `s_i = w_i = 1/n`.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("sampler state needs at least one sample"));
        }
        let init = T::one() / T::from_usize_lossy(n);
        Ok(Self { scores: vec![init; n], weights: vec![init; n], last_update_step: vec![0; n] })
    }

    /// Rebuilds a state from raw parts, e.g. when loading a checkpoint.
    pub fn from_parts(scores: Vec<T>, weights: Vec<T>, last_update_step: Vec<u64>) -> Result<Self> {
        let n = scores.len();
        if n == 0 || weights.len() != n || last_update_step.len() != n {
            return Err(invalid(format!(
                "inconsistent sampler state lengths ({}, {}, {})",
                n,
                weights.len(),
                last_update_step.len()
            )));
        }
        Ok(Self { scores, weights, last_update_step })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[T] {
        &self.scores
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn last_update_steps(&self) -> &[u64] {
        &self.last_update_step
    }

    fn check(&self, id: usize, loss: T) -> Result<()> {
        if id >= self.len() {
            return Err(invalid(format!("sample id {id} out of range (n = {})", self.len())));
        }
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss {loss} for sample {id}")));
        }
        if loss < T::zero() {
            return Err(invalid(format!("negative loss {loss} for sample {id}")));
        }
        Ok(())
    }

    /// Applies the two-EMA update to sample `id` and returns `(w_new, s_new)`.
    pub fn update_sample(&mut self, id: usize, loss: T, betas: &BetaParams<T>, step: u64) -> Result<(T, T)> {
        self.check(id, loss)?;
        let (w, s) = ema_update(self.scores[id], loss, betas);
        self.weights[id] = w;
        self.scores[id] = s;
        self.last_update_step[id] = step;
        Ok((w, s))
    }

    /// Plain loss weighting: both score and weight become the observed loss.
    pub fn record_loss(&mut self, id: usize, loss: T, step: u64) -> Result<()> {
        self.check(id, loss)?;
        self.weights[id] = loss;
        self.scores[id] = loss;
        self.last_update_step[id] = step;
        Ok(())
    }

    /// Normalized probabilities over `ids`, with weights clamped below at `floor`.
    pub fn probability_snapshot(&self, ids: &[usize], floor: T) -> Result<Vec<T>> {
        if ids.is_empty() {
            return Err(invalid("probability snapshot over an empty id set"));
        }
        if !(floor > T::zero()) {
            return Err(invalid(format!("probability floor must be positive, got {floor}")));
        }
        let mut clamped = Vec::with_capacity(ids.len());
        for &id in ids {
            let w = *self
                .weights
                .get(id)
                .ok_or_else(|| invalid(format!("sample id {id} out of range (n = {})", self.len())))?;
            clamped.push(w.max(floor));
        }
        normalize(&mut clamped)?;
        Ok(clamped)
    }
}

/// Divides in place by the sum. Fails on a non-positive or non-finite total.
pub(crate) fn normalize<T: Scalar>(v: &mut [T]) -> Result<()> {
    let total: T = v.iter().copied().sum();
    if !(total > T::zero()) || !total.is_finite() {
        return Err(Error::Numeric(format!("cannot normalize weights with total {total}")));
    }
    v.iter_mut().for_each(|x| *x /= total);
    Ok(())
}
