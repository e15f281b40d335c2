//! SGD with heavy-ball momentum, additive L2 weight decay and an optional
//! cosine learning-rate schedule.

use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    Constant,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig<T> {
    pub base_lr: T,
    pub momentum: T,
    pub weight_decay: T,
    pub schedule: Schedule,
}

impl<T: Scalar> SgdConfig<T> {
    /// Momentum 0.9, weight decay 5e-4, cosine schedule.
    pub fn standard(base_lr: T) -> Self {
        Self { base_lr, momentum: T::lit(0.9), weight_decay: T::lit(5e-4), schedule: Schedule::Cosine }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > T::zero()) || !self.base_lr.is_finite() {
            return Err(invalid(format!("lr must be positive, got {}", self.base_lr)));
        }
        if !(self.momentum >= T::zero() && self.momentum < T::one()) {
            return Err(invalid(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.weight_decay >= T::zero()) || !self.weight_decay.is_finite() {
            return Err(invalid(format!("weight_decay must be non-negative, got {}", self.weight_decay)));
        }
        Ok(())
    }
}

/// Learning rate at `step` of `total_steps`.
pub fn lr_at<T: Scalar>(cfg: &SgdConfig<T>, step: usize, total_steps: usize) -> Result<T> {
    if step >= total_steps {
        return Err(invalid(format!("step {step} out of range (total {total_steps})")));
    }
    Ok(match cfg.schedule {
        Schedule::Constant => cfg.base_lr,
        Schedule::Cosine => {
            let phase = T::PI() * T::from_usize_lossy(step) / T::from_usize_lossy(total_steps);
            cfg.base_lr * T::lit(0.5) * (T::one() + phase.cos())
        }
    })
}

/// `v <- momentum * v + (grad + wd * params)`, then `params <- params - lr * v`.
pub fn sgd_step<T: Scalar>(params: &mut [T], grad: &[T], velocity: &mut [T], cfg: &SgdConfig<T>, lr: T) -> Result<()> {
    if params.len() != grad.len() || params.len() != velocity.len() {
        return Err(invalid(format!(
            "shape mismatch: params {}, grad {}, velocity {}",
            params.len(),
            grad.len(),
            velocity.len()
        )));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!("non-finite gradient at index {i}")));
    }
    for ((p, &g), v) in params.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = cfg.momentum * *v + (g + cfg.weight_decay * *p);
        *p -= lr * *v;
    }
    Ok(())
}
