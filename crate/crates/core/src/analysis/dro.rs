//! Reference-loss form of the weight update.
//!
//! The weight increment can be written as a gradient-ascent step on a
//! minimax objective with step `1 - beta1`:
//!
//! ```text
//! w(t+1) - w(t) = (1 - b1) * (l(t+1) - ref(t))
//! ref(t) = (1 - 2 b1 + b1 b2) / (1 - b1) * l(t)
//!        + b1 (1 - b2)^2 / (1 - b1) * sum_{k=1..t-1} b2^(t-1-k) l(k)
//!        + b1 (1 - b2) b2^(t-1) / (1 - b1) * s0
//! ```

use crate::analysis::expansion::{recursion_weights, LossTrace};
use crate::error::{invalid, Result};
use crate::sampler::BetaParams;
use crate::scalar::Scalar;

/// `ref(t)` for 1-based `t`.
pub fn dro_reference_loss<T: Scalar>(trace: &LossTrace<T>, betas: &BetaParams<T>, t: usize) -> Result<T> {
    let (b1, b2) = (betas.beta1(), betas.beta2());
    if b1 == T::one() {
        return Err(invalid("beta1 = 1 makes the reference loss undefined"));
    }
    if t == 0 || t > trace.len() {
        return Err(invalid(format!("step {t} outside 1..={}", trace.len())));
    }
    let one = T::one();
    let denom = one - b1;
    let mut hist = T::zero();
    for k in 1..t {
        hist += b2.powi((t - 1 - k) as i32) * trace.at(k);
    }
    Ok((one - T::lit(2.0) * b1 + b1 * b2) / denom * trace.at(t)
        + b1 * (one - b2) * (one - b2) / denom * hist
        + b1 * (one - b2) * b2.powi((t - 1) as i32) / denom * trace.s0())
}

/// Largest `|(w(t+1) - w(t)) - (1 - b1)(l(t+1) - ref(t))|` over `t = 1..T-1`,
/// with `w` from the recursion.
pub fn dro_identity_residual<T: Scalar>(trace: &LossTrace<T>, betas: &BetaParams<T>) -> Result<T> {
    let w = recursion_weights(trace, betas);
    let mut worst = T::zero();
    for t in 1..trace.len() {
        let lhs = w[t] - w[t - 1];
        let rhs = (T::one() - betas.beta1()) * (trace.at(t + 1) - dro_reference_loss(trace, betas, t)?);
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    fn b(b1: f64, b2: f64) -> BetaParams<f64> {
        BetaParams::new(b1, b2).unwrap()
    }

    #[test]
    fn random_trace_identity() {
        let mut rng = seeded(21, 0);
        let losses: Vec<f64> = (0..50).map(|_| rng.gen_range(0.0..2.0)).collect();
        let tr = LossTrace::new(losses, 0.02).unwrap();
        assert!(dro_identity_residual(&tr, &b(0.2, 0.9)).unwrap() <= 1e-10);
    }

    #[test]
    fn zero_beta1_reference_is_current_loss() {
        let tr = LossTrace::new(vec![0.4, 1.1, 0.2], 0.3).unwrap();
        for t in 1..=3 {
            assert_eq!(dro_reference_loss(&tr, &b(0.0, 0.7), t).unwrap(), tr.at(t));
        }
        assert!(dro_identity_residual(&tr, &b(0.0, 0.7)).unwrap() <= 1e-15);
    }

    #[test]
    fn constant_trace_reference_converges() {
        let tr = LossTrace::new(vec![0.8; 500], 0.1).unwrap();
        let r = dro_reference_loss(&tr, &b(0.2, 0.9), 500).unwrap();
        assert!((r - 0.8).abs() < 1e-10);
    }

    #[test]
    fn beta1_one_rejected() {
        let tr = LossTrace::new(vec![0.4, 1.1], 0.3).unwrap();
        assert!(dro_reference_loss(&tr, &b(1.0, 0.5), 1).is_err());
        assert!(dro_reference_loss(&tr, &b(0.5, 0.5), 3).is_err());
    }
}
