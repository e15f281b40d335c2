//! Weighted sampling without replacement, mini-batch selection, epoch pruning
//! and the annealing window.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{invalid, Result};
use crate::rng::{open_unit, StreamRng};
use crate::sampler::SamplerState;
use crate::scalar::Scalar;

/// First/last epochs during which no data selection happens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnnealWindow {
    start_epochs: usize,
    end_epochs: usize,
    total_epochs: usize,
}

impl AnnealWindow {
    pub fn new(start_epochs: usize, end_epochs: usize, total_epochs: usize) -> Result<Self> {
        if total_epochs == 0 {
            return Err(invalid("epochs must be positive"));
        }
        if start_epochs + end_epochs > total_epochs {
            return Err(invalid(format!(
                "annealing epochs ({start_epochs} + {end_epochs}) exceed total epochs {total_epochs}"
            )));
        }
        Ok(Self { start_epochs, end_epochs, total_epochs })
    }

    /// No annealing at all.
    pub fn none(total_epochs: usize) -> Result<Self> {
        Self::new(0, 0, total_epochs)
    }

    /// Symmetric window of `floor(ratio * total)` epochs on each side.
    pub fn from_ratio(ratio: f64, total_epochs: usize) -> Result<Self> {
        if !(0.0..=0.5).contains(&ratio) {
            return Err(invalid(format!("anneal_ratio must lie in [0, 0.5], got {ratio}")));
        }
        let each = (ratio * total_epochs as f64 + 1e-9).floor() as usize;
        Self::new(each, each, total_epochs)
    }

    pub fn start_epochs(&self) -> usize {
        self.start_epochs
    }

    pub fn end_epochs(&self) -> usize {
        self.end_epochs
    }

    pub fn total_epochs(&self) -> usize {
        self.total_epochs
    }

    /// Number of epochs in which selection is disabled.
    pub fn annealing_epochs(&self) -> usize {
        self.start_epochs + self.end_epochs
    }
}

/// True when `epoch` is an annealing epoch (standard training, no selection).
pub fn annealing_active(epoch: usize, window: &AnnealWindow) -> Result<bool> {
    if epoch >= window.total_epochs {
        return Err(invalid(format!("epoch {epoch} out of range (total {})", window.total_epochs)));
    }
    Ok(epoch < window.start_epochs || epoch >= window.total_epochs - window.end_epochs)
}

/// Fraction of the dataset removed at each selection epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneConfig {
    ratio: f64,
}

impl PruneConfig {
    pub fn new(ratio: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&ratio) {
            return Err(invalid(format!("prune_ratio must lie in [0, 1), got {ratio}")));
        }
        Ok(Self { ratio })
    }

    pub fn none() -> Self {
        Self { ratio: 0.0 }
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    /// Retained pool size `floor((1 - r) * n)`.
    pub fn retained(&self, n: usize) -> usize {
        if self.ratio == 0.0 {
            return n;
        }
        ((1.0 - self.ratio) * n as f64 + 1e-9).floor() as usize
    }
}

#[derive(Debug, Clone, Copy)]
struct Keyed {
    key: f64,
    index: usize,
}

// Max-heap order: the "worst" candidate (largest key, then largest index) on top.
impl Ord for Keyed {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.total_cmp(&other.key).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Keyed {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Keyed {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Keyed {}

fn check_distribution<T: Scalar>(probabilities: &[T]) -> Result<()> {
    let mut total = 0.0f64;
    for (i, p) in probabilities.iter().enumerate() {
        let p = p.as_f64();
        if !p.is_finite() || p < 0.0 {
            return Err(invalid(format!("probability {i} is {p}")));
        }
        total += p;
    }
    let tol = 1e-9f64.max(4.0 * probabilities.len() as f64 * T::epsilon().as_f64());
    if (total - 1.0).abs() > tol {
        return Err(invalid(format!("probabilities sum to {total}, not 1")));
    }
    Ok(())
}

/// Draws `k` distinct indices from `0..m` with exponential keys.
///
/// Each item gets key `-ln(u) / p` with `u ~ U(0, 1]`; the `k` smallest keys
/// win, equal keys going to the lower index. The result lists indices in draw
/// order (ascending key). One uniform is consumed per item.
pub fn weighted_sample_without_replacement<T: Scalar>(
    probabilities: &[T],
    k: usize,
    rng: &mut StreamRng,
) -> Result<Vec<usize>> {
    let m = probabilities.len();
    if k == 0 {
        return Err(invalid("sample size must be positive"));
    }
    if k > m {
        return Err(invalid(format!("cannot draw {k} items from {m}")));
    }
    check_distribution(probabilities)?;

    let mut heap: BinaryHeap<Keyed> = BinaryHeap::with_capacity(k + 1);
    for (index, p) in probabilities.iter().enumerate() {
        let u = open_unit(rng);
        let p = p.as_f64();
        let key = if p > 0.0 { -u.ln() / p } else { f64::INFINITY };
        let cand = Keyed { key, index };
        if heap.len() < k {
            heap.push(cand);
        } else if let Some(top) = heap.peek() {
            if cand < *top {
                heap.pop();
                heap.push(cand);
            }
        }
    }
    Ok(heap.into_sorted_vec().into_iter().map(|c| c.index).collect())
}

/// Chooses `b` of the meta-batch ids proportionally to their current weights.
///
/// When `b` covers the whole meta-batch the ids are returned as given and no
/// randomness is consumed.
pub fn select_minibatch<T: Scalar>(
    state: &SamplerState<T>,
    meta_ids: &[usize],
    b: usize,
    floor: T,
    rng: &mut StreamRng,
) -> Result<Vec<usize>> {
    if b > meta_ids.len() {
        return Err(invalid(format!("mini_batch {b} exceeds meta-batch size {}", meta_ids.len())));
    }
    if b == meta_ids.len() {
        return Ok(meta_ids.to_vec());
    }
    let probs = state.probability_snapshot(meta_ids, floor)?;
    let picks = weighted_sample_without_replacement(&probs, b, rng)?;
    Ok(picks.into_iter().map(|j| meta_ids[j]).collect())
}

/// Top-`b` meta-batch ids by loss, ties to the lower id.
pub fn select_top_losses<T: Scalar>(meta_ids: &[usize], losses: &[T], b: usize) -> Result<Vec<usize>> {
    if meta_ids.len() != losses.len() {
        return Err(invalid("ids and losses differ in length"));
    }
    if b > meta_ids.len() {
        return Err(invalid(format!("mini_batch {b} exceeds meta-batch size {}", meta_ids.len())));
    }
    let mut order: Vec<usize> = (0..meta_ids.len()).collect();
    order.sort_by(|&a, &c| {
        losses[c].partial_cmp(&losses[a]).unwrap_or(Ordering::Equal).then(meta_ids[a].cmp(&meta_ids[c]))
    });
    Ok(order.into_iter().take(b).map(|j| meta_ids[j]).collect())
}

/// Weighted epoch pruning: keeps `floor((1 - r) n)` ids drawn by current weight.
///
/// The retained ids come back sorted ascending. `r = 0` returns `all_ids`
/// without touching the generator.
pub fn prune_epoch<T: Scalar>(
    state: &SamplerState<T>,
    all_ids: &[usize],
    cfg: &PruneConfig,
    floor: T,
    rng: &mut StreamRng,
) -> Result<Vec<usize>> {
    let keep = cfg.retained(all_ids.len());
    if keep == all_ids.len() {
        return Ok(all_ids.to_vec());
    }
    if keep == 0 {
        return Err(invalid(format!("prune_ratio {} leaves no samples out of {}", cfg.ratio(), all_ids.len())));
    }
    let probs = state.probability_snapshot(all_ids, floor)?;
    let mut kept: Vec<usize> =
        weighted_sample_without_replacement(&probs, keep, rng)?.into_iter().map(|j| all_ids[j]).collect();
    kept.sort_unstable();
    Ok(kept)
}

/// Uniform epoch pruning used by the random-pruning baseline.
pub fn prune_uniform(all_ids: &[usize], cfg: &PruneConfig, rng: &mut StreamRng) -> Result<Vec<usize>> {
    let keep = cfg.retained(all_ids.len());
    if keep == all_ids.len() {
        return Ok(all_ids.to_vec());
    }
    if keep == 0 {
        return Err(invalid(format!("prune_ratio {} leaves no samples out of {}", cfg.ratio(), all_ids.len())));
    }
    let m = all_ids.len();
    let probs = vec![1.0 / m as f64; m];
    let mut kept: Vec<usize> =
        weighted_sample_without_replacement(&probs, keep, rng)?.into_iter().map(|j| all_ids[j]).collect();
    kept.sort_unstable();
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;

    #[test]
    fn concentrated_mass() {
        let eps = 1e-12;
        let p = [1.0 - 2.0 * eps, eps, eps];
        let mut rng = seeded(3, 0);
        for _ in 0..1000 {
            assert_eq!(weighted_sample_without_replacement(&p, 1, &mut rng).unwrap(), vec![0]);
        }
    }

    #[test]
    fn exhaustive_draw() {
        let p = [0.1, 0.2, 0.3, 0.15, 0.25];
        let mut rng = seeded(0, 0);
        let mut got = weighted_sample_without_replacement(&p, 5, &mut rng).unwrap();
        got.sort_unstable();
        assert_eq!(got, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn uniform_inclusion_frequency() {
        // Exact inclusion probability under symmetry is k/m = 0.5.
        let p = [0.25; 4];
        let mut rng = seeded(11, 0);
        let mut counts = [0usize; 4];
        let trials = 100_000;
        for _ in 0..trials {
            for i in weighted_sample_without_replacement(&p, 2, &mut rng).unwrap() {
                counts[i] += 1;
            }
        }
        for c in counts {
            let f = c as f64 / trials as f64;
            assert!((f - 0.5).abs() < 0.01, "frequency {f}");
        }
    }

    #[test]
    fn uniform_subsets_equiprobable() {
        // Chi-square over the C(5,2)=10 subsets; 9 dof, critical value at
        // p = 0.001 is 27.877.
        let p = [0.2; 5];
        let mut rng = seeded(5, 0);
        let mut counts = std::collections::BTreeMap::new();
        let trials = 100_000;
        for _ in 0..trials {
            let mut s = weighted_sample_without_replacement(&p, 2, &mut rng).unwrap();
            s.sort_unstable();
            *counts.entry(s).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 10);
        let expected = trials as f64 / 10.0;
        let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 27.877, "chi2 = {chi2}");
    }

    #[test]
    fn invalid_inputs() {
        let mut rng = seeded(0, 0);
        assert!(weighted_sample_without_replacement(&[0.5, 0.5], 3, &mut rng).is_err());
        assert!(weighted_sample_without_replacement(&[0.5, 0.6], 1, &mut rng).is_err());
        assert!(weighted_sample_without_replacement(&[1.5, -0.5], 1, &mut rng).is_err());
        assert!(weighted_sample_without_replacement(&[1.0], 0, &mut rng).is_err());
    }

    #[test]
    fn zero_probability_ties_break_low() {
        let mut rng = seeded(0, 0);
        let got = weighted_sample_without_replacement(&[0.0, 1.0, 0.0, 0.0], 3, &mut rng).unwrap();
        assert_eq!(got, vec![1, 0, 2]);
    }

    #[test]
    fn minibatch_full_selection_is_identity() {
        let st = SamplerState::<f64>::new(10).unwrap();
        let meta = vec![7, 3, 9, 1];
        let mut rng = seeded(0, 0);
        assert_eq!(select_minibatch(&st, &meta, 4, 1e-12, &mut rng).unwrap(), meta);
        assert!(select_minibatch(&st, &meta, 5, 1e-12, &mut rng).is_err());
    }

    #[test]
    fn minibatch_follows_weights() {
        let st = SamplerState::from_parts(vec![0.0; 4], vec![10.0, 1e-12, 1e-12, 1e-12], vec![0; 4]).unwrap();
        let mut rng = seeded(9, 0);
        let trials = 10_000;
        let hits = (0..trials)
            .filter(|_| select_minibatch(&st, &[0, 1, 2, 3], 1, 1e-12, &mut rng).unwrap() == vec![0])
            .count();
        assert!(hits as f64 / trials as f64 >= 0.999);
    }

    #[test]
    fn minibatch_size_quarter() {
        let st = SamplerState::<f64>::new(1000).unwrap();
        let meta: Vec<usize> = (100..228).collect();
        let mut rng = seeded(2, 0);
        let mb = select_minibatch(&st, &meta, 32, 1e-12, &mut rng).unwrap();
        assert_eq!(mb.len(), 32);
        assert!(mb.iter().all(|i| meta.contains(i)));
    }

    #[test]
    fn top_losses_ties_to_lower_id() {
        let got = select_top_losses(&[5, 2, 9, 4], &[1.0, 3.0, 3.0, 0.5], 2).unwrap();
        assert_eq!(got, vec![2, 9]);
        let got = select_top_losses(&[9, 2], &[1.0, 1.0], 1).unwrap();
        assert_eq!(got, vec![2]);
    }

    #[test]
    fn prune_sizes() {
        let mut rng = seeded(0, 0);
        let st = SamplerState::<f64>::new(10).unwrap();
        let ids: Vec<usize> = (0..10).collect();
        assert_eq!(prune_epoch(&st, &ids, &PruneConfig::none(), 1e-12, &mut rng).unwrap(), ids);
        let kept = prune_epoch(&st, &ids, &PruneConfig::new(0.2).unwrap(), 1e-12, &mut rng).unwrap();
        assert_eq!(kept.len(), 8);
        assert_eq!(PruneConfig::new(0.5).unwrap().retained(50_000), 25_000);
        assert_eq!(PruneConfig::new(0.7).unwrap().retained(10), 3);
        assert!(PruneConfig::new(1.0).is_err());
        assert!(PruneConfig::new(-0.1).is_err());
    }

    #[test]
    fn annealing_examples() {
        let w = AnnealWindow::new(10, 10, 200).unwrap();
        assert!(annealing_active(0, &w).unwrap());
        assert!(!annealing_active(100, &w).unwrap());
        assert!(annealing_active(190, &w).unwrap());
        assert!(!annealing_active(189, &w).unwrap());
        let none = AnnealWindow::none(20).unwrap();
        assert!((0..20).all(|e| !annealing_active(e, &none).unwrap()));
        assert!(annealing_active(20, &none).is_err());
        assert!(AnnealWindow::new(11, 10, 20).is_err());
        assert_eq!(AnnealWindow::from_ratio(0.05, 200).unwrap(), w);
        assert_eq!(AnnealWindow::from_ratio(0.05, 20).unwrap().start_epochs(), 1);
    }

    proptest! {
        #[test]
        fn draws_are_distinct_and_deterministic(
            ws in prop::collection::vec(0.0f64..5.0, 1..60),
            seed in any::<u64>(),
            kfrac in 0.0f64..1.0,
        ) {
            let n = ws.len();
            let st = SamplerState::from_parts(vec![0.0; n], ws, vec![0; n]).unwrap();
            let ids: Vec<usize> = (0..n).collect();
            let p = st.probability_snapshot(&ids, 1e-12).unwrap();
            let k = 1 + ((n - 1) as f64 * kfrac) as usize;
            let a = weighted_sample_without_replacement(&p, k, &mut seeded(seed, 0)).unwrap();
            let b = weighted_sample_without_replacement(&p, k, &mut seeded(seed, 0)).unwrap();
            prop_assert_eq!(&a, &b);
            let mut s = a.clone();
            s.sort_unstable();
            s.dedup();
            prop_assert_eq!(s.len(), k);
            prop_assert!(a.iter().all(|&i| i < n));
        }
    }
}
