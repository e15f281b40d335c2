//! Explicit history expansion of the two-EMA weight.
//!
//! For `beta2 != 1` and `t >= 1`:
//!
//! ```text
//! w(t) = (1 - b2) * sum_{k=1..t}   b2^(t-k)   l(k)
//!      + (b2 - b1) * sum_{k=1..t-1} b2^(t-1-k) (l(k+1) - l(k))
//!      + b2^(t-1) * (b1 * s0 + (b2 - b1) * l(1))
//! ```
//!
//! The last line is the initialization term; it decays geometrically and is
//! what separates the recursion from the bare two-sum expansion.

use crate::error::{invalid, Result};
use crate::sampler::{ema_update, BetaParams};
use crate::scalar::Scalar;

/// Loss history `l(1..=T)` of one sample and its initial score.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTrace<T> {
    losses: Vec<T>,
    s0: T,
}

impl<T: Scalar> LossTrace<T> {
    pub fn new(losses: Vec<T>, s0: T) -> Result<Self> {
        if let Some(i) = losses.iter().position(|l| !l.is_finite() || *l < T::zero()) {
            return Err(invalid(format!(
                "loss {} at position {} is not a finite non-negative value",
                losses[i],
                i + 1
            )));
        }
        if !s0.is_finite() || s0 < T::zero() {
            return Err(invalid(format!("initial score {s0} must be finite and non-negative")));
        }
        Ok(Self { losses, s0 })
    }

    pub fn losses(&self) -> &[T] {
        &self.losses
    }

    pub fn s0(&self) -> T {
        self.s0
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    /// `l(t)` with 1-based `t`.
    #[inline]
    pub fn at(&self, t: usize) -> T {
        self.losses[t - 1]
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.len() {
            return Err(invalid(format!("step {t} outside 1..={}", self.len())));
        }
        Ok(())
    }
}

/// `w(1..=T)` by running the recursion.
pub fn recursion_weights<T: Scalar>(trace: &LossTrace<T>, betas: &BetaParams<T>) -> Vec<T> {
    let mut s = trace.s0;
    trace
        .losses
        .iter()
        .map(|&l| {
            let (w, s_new) = ema_update(s, l, betas);
            s = s_new;
            w
        })
        .collect()
}

/// `b2^k` for `k < len`, each evaluated directly rather than by repeated
/// multiplication.
fn powers<T: Scalar>(b2: T, len: usize) -> Vec<T> {
    (0..len).map(|k| b2.powi(k as i32)).collect()
}

fn truncated_with<T: Scalar>(trace: &LossTrace<T>, betas: &BetaParams<T>, t: usize, pow: &[T]) -> T {
    let (b1, b2) = (betas.beta1(), betas.beta2());
    let mut level = T::zero();
    for k in 1..=t {
        level += pow[t - k] * trace.at(k);
    }
    let mut diff = T::zero();
    for k in 1..t {
        diff += pow[t - 1 - k] * (trace.at(k + 1) - trace.at(k));
    }
    (T::one() - b2) * level + (b2 - b1) * diff
}

fn init_with<T: Scalar>(trace: &LossTrace<T>, betas: &BetaParams<T>, t: usize, pow: &[T]) -> T {
    let (b1, b2) = (betas.beta1(), betas.beta2());
    pow[t - 1] * (b1 * trace.s0 + (b2 - b1) * trace.at(1))
}

/// The two explicit sums without the initialization term.
pub fn expansion_weight_truncated<T: Scalar>(trace: &LossTrace<T>, betas: &BetaParams<T>, t: usize) -> Result<T> {
    betas.require_expandable()?;
    trace.check_step(t)?;
    Ok(truncated_with(trace, betas, t, &powers(betas.beta2(), t)))
}

/// `b2^(t-1) * (b1 * s0 + (b2 - b1) * l(1))`.
pub fn initialization_term<T: Scalar>(trace: &LossTrace<T>, betas: &BetaParams<T>, t: usize) -> Result<T> {
    betas.require_expandable()?;
    trace.check_step(t)?;
    Ok(init_with(trace, betas, t, &powers(betas.beta2(), t)))
}

/// Exact `w(t)` from the explicit expansion.
pub fn expansion_weight<T: Scalar>(trace: &LossTrace<T>, betas: &BetaParams<T>, t: usize) -> Result<T> {
    betas.require_expandable()?;
    trace.check_step(t)?;
    let pow = powers(betas.beta2(), t);
    Ok(truncated_with(trace, betas, t, &pow) + init_with(trace, betas, t, &pow))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleRow<T> {
    pub t: usize,
    pub recursion: T,
    pub expansion: T,
    pub gap: T,
}

/// Recursion and expansion side by side for every step of the trace.
pub fn oracle_rows<T: Scalar>(trace: &LossTrace<T>, betas: &BetaParams<T>) -> Result<Vec<OracleRow<T>>> {
    betas.require_expandable()?;
    let pow = powers(betas.beta2(), trace.len());
    Ok(recursion_weights(trace, betas)
        .into_iter()
        .enumerate()
        .map(|(i, recursion)| {
            let t = i + 1;
            let expansion = truncated_with(trace, betas, t, &pow) + init_with(trace, betas, t, &pow);
            OracleRow { t, recursion, expansion, gap: (recursion - expansion).abs() }
        })
        .collect())
}

/// Largest `|recursion - expansion|` over the trace.
pub fn recursion_expansion_gap<T: Scalar>(trace: &LossTrace<T>, betas: &BetaParams<T>) -> Result<T> {
    Ok(oracle_rows(trace, betas)?.into_iter().map(|r| r.gap).fold(T::zero(), T::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng;

    fn b(b1: f64, b2: f64) -> BetaParams<f64> {
        BetaParams::new(b1, b2).unwrap()
    }

    #[test]
    fn hand_evaluated_two_steps() {
        // s1 = 0.9*0.25 + 0.1*1.0 = 0.325; w2 = 0.2*0.325 + 0.8*0.5 = 0.465.
        let tr = LossTrace::new(vec![1.0, 0.5], 0.25).unwrap();
        let betas = b(0.2, 0.9);
        assert!((expansion_weight(&tr, &betas, 2).unwrap() - 0.465).abs() < 1e-15);
        assert!((recursion_weights(&tr, &betas)[1] - 0.465).abs() < 1e-15);
        // First-step weight: 0.2*0.25 + 0.8*1.0.
        assert!((expansion_weight(&tr, &betas, 1).unwrap() - 0.85).abs() < 1e-15);
        assert!(oracle_rows(&tr, &betas).unwrap()[0].gap < 1e-15);
    }

    #[test]
    fn zero_betas_collapse_to_current_loss() {
        let tr = LossTrace::new(vec![0.3, 1.7, 0.9, 0.1], 0.25).unwrap();
        for t in 1..=4 {
            assert_eq!(expansion_weight(&tr, &b(0.0, 0.0), t).unwrap(), tr.at(t));
        }
    }

    #[test]
    fn constant_trace_reaches_steady_state() {
        let tr = LossTrace::new(vec![0.7; 400], 0.01).unwrap();
        let w = expansion_weight(&tr, &b(0.2, 0.9), 400).unwrap();
        assert!((w - 0.7).abs() < 1e-12);
    }

    #[test]
    fn beta2_one_rejected() {
        let tr = LossTrace::new(vec![1.0], 0.5).unwrap();
        assert!(expansion_weight(&tr, &b(0.5, 1.0), 1).is_err());
        assert!(expansion_weight(&tr, &b(0.5, 0.5), 2).is_err());
        assert!(LossTrace::new(vec![-1.0], 0.5).is_err());
    }

    #[test]
    fn truncation_error_is_the_geometric_remainder() {
        let mut rng = seeded(3, 0);
        let losses: Vec<f64> = (0..200).map(|_| rng.gen_range(0.0..2.0)).collect();
        let tr = LossTrace::new(losses, 0.25).unwrap();
        let betas = b(0.2, 0.9);
        let rec = recursion_weights(&tr, &betas);
        let trunc = expansion_weight_truncated(&tr, &betas, 200).unwrap();
        let k = 0.2 * 0.25 + 0.7 * tr.at(1);
        assert!((rec[199] - trunc).abs() <= 0.9f64.powi(199) * k + 1e-12);
    }

    #[test]
    fn long_trace_high_beta2() {
        let mut rng = seeded(8, 0);
        let losses: Vec<f64> = (0..10_000).map(|_| rng.gen_range(0.0..2.0)).collect();
        let tr = LossTrace::new(losses, 1e-4).unwrap();
        assert!(recursion_expansion_gap(&tr, &b(0.3, 0.999)).unwrap() <= 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn recursion_matches_expansion(
            losses in prop::collection::vec(0.0f64..5.0, 1..300),
            s0 in 0.0f64..1.0,
            b1 in 0.0f64..=1.0,
            b2 in 0.0f64..0.999,
        ) {
            let tr = LossTrace::new(losses, s0).unwrap();
            prop_assert!(recursion_expansion_gap(&tr, &b(b1, b2)).unwrap() <= 1e-10);
        }
    }
}
