//! Frequency response of the weight signal relative to the loss signal.
//!
//! Continuous idealization (`s' = (1 - b2)(l - s)`):
//!
//! ```text
//! |H(i w)| = sqrt(((b2 - b1)^2 w^2 + (1 - b2)^2) / (w^2 + (1 - b2)^2))
//! ```
//!
//! which is 1 at DC and tends to `|b2 - b1|` at high frequency.
//!
//! The recursion itself is a discrete filter. With `z = e^{i w}` its exact
//! response is
//!
//! ```text
//! H(z) = (1 - b1) + b1 (1 - b2) z^-1 / (1 - b2 z^-1)
//! ```
//!
//! and the two agree for `w << 1 - b2`.

use num_complex::Complex;

use crate::error::{invalid, Result};
use crate::sampler::{ema_update, BetaParams};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferPoint<T> {
    pub omega: T,
    pub gain: T,
}

/// Magnitude of the continuous transfer function at angular frequency `omega0`.
pub fn continuous_gain<T: Scalar>(betas: &BetaParams<T>, omega0: T) -> Result<TransferPoint<T>> {
    if !(omega0 >= T::zero()) {
        return Err(invalid(format!("frequency must be non-negative, got {omega0}")));
    }
    betas.require_expandable()?;
    let (b1, b2) = (betas.beta1(), betas.beta2());
    let a = T::one() - b2;
    let d = b2 - b1;
    let w2 = omega0 * omega0;
    let gain = ((d * d * w2 + a * a) / (w2 + a * a)).sqrt();
    Ok(TransferPoint { omega: omega0, gain })
}

/// Exact magnitude response of the discrete recursion at `omega` rad/step.
pub fn discrete_gain<T: Scalar>(betas: &BetaParams<T>, omega: T) -> TransferPoint<T> {
    let (b1, b2) = (betas.beta1(), betas.beta2());
    let one = T::one();
    let zinv = Complex::from_polar(one, -omega);
    let h = Complex::new(one - b1, T::zero()) + zinv * (b1 * (one - b2)) / (Complex::new(one, T::zero()) - zinv * b2);
    TransferPoint { omega, gain: h.norm() }
}

/// Complex amplitude of `signal` at `omega` after removing its mean.
fn lock_in<T: Scalar>(signal: &[T], start: usize, omega: T) -> Complex<T> {
    let n = T::from_usize_lossy(signal.len());
    let mean = signal.iter().copied().sum::<T>() / n;
    let mut acc = Complex::new(T::zero(), T::zero());
    for (j, &x) in signal.iter().enumerate() {
        let phase = -omega * T::from_usize_lossy(start + j);
        acc += Complex::from_polar(x - mean, phase);
    }
    acc / n
}

/// Gain measured by simulation.
///
/// Drives the recursion with `l(t) = 1 + sin(omega t + pi/4) / 2` (the phase
/// offset keeps the input visible at the Nyquist frequency), discards a
/// burn-in of `ceil(10 / (1 - b2))` steps plus a few more, then compares the
/// output and input amplitudes at `omega` over `cycles` full periods.
pub fn empirical_gain<T: Scalar>(betas: &BetaParams<T>, omega: T, cycles: usize) -> Result<TransferPoint<T>> {
    if !(omega > T::zero() && omega <= T::PI()) {
        return Err(invalid(format!("frequency must lie in (0, pi], got {omega}")));
    }
    if cycles == 0 {
        return Err(invalid("cycles must be positive"));
    }
    betas.require_expandable()?;
    let settle = T::lit(10.0) / (T::one() - betas.beta2());
    let burn_in = settle.ceil().to_usize().unwrap_or(usize::MAX).saturating_add(16);
    let period = T::TAU() / omega;
    let window = (T::from_usize_lossy(cycles) * period).round().to_usize().unwrap_or(1).max(1);

    let half = T::lit(0.5);
    let quarter_pi = T::FRAC_PI_4();
    let input = |t: usize| T::one() + half * (omega * T::from_usize_lossy(t) + quarter_pi).sin();

    let mut s = T::one();
    for t in 0..burn_in {
        s = ema_update(s, input(t), betas).1;
    }
    let mut xs = Vec::with_capacity(window);
    let mut ws = Vec::with_capacity(window);
    for t in burn_in..burn_in + window {
        let l = input(t);
        let (w, s_new) = ema_update(s, l, betas);
        s = s_new;
        xs.push(l);
        ws.push(w);
    }
    let amp_in = lock_in(&xs, burn_in, omega).norm();
    let amp_out = lock_in(&ws, burn_in, omega).norm();
    Ok(TransferPoint { omega, gain: amp_out / amp_in })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyRow<T> {
    pub omega: T,
    pub continuous: T,
    pub discrete: T,
    pub empirical: T,
}

/// All three gains at each frequency.
pub fn frequency_rows<T: Scalar>(betas: &BetaParams<T>, omegas: &[T], cycles: usize) -> Result<Vec<FrequencyRow<T>>> {
    omegas
        .iter()
        .map(|&omega| {
            Ok(FrequencyRow {
                omega,
                continuous: continuous_gain(betas, omega)?.gain,
                discrete: discrete_gain(betas, omega).gain,
                empirical: empirical_gain(betas, omega, cycles)?.gain,
            })
        })
        .collect()
}
