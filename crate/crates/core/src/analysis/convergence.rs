//! Loss-weighted gradient descent on interpolable least-squares problems.
//!
//! Each row `a_i` of a consistent system `A theta* = y` defines the convex
//! per-sample loss `l_i(theta) = (a_i . theta - y_i)^2 / 2`. Loss weighting
//! replaces the uniform average of per-sample gradients by one weighted with
//! `p_i = l_i / sum_j l_j`.
//!
//! The slack in the loss-weighted convergence bound is
//!
//! ```text
//! Delta = delta * sum_{i in I+} (p_i - 1/n),   I+ = { i : p_i > 1/n }
//! delta = min_{i in I+} l_i - max_{i not in I+} l_i
//! ```
//!
//! which is strictly positive whenever the losses are not all equal.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::rng::{seeded, streams};
use crate::scalar::Scalar;

/// Steps of consecutive loss increase after which a run counts as diverged.
const DIVERGENCE_WINDOW: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresProblem<T> {
    rows: usize,
    dim: usize,
    a: Vec<T>,
    y: Vec<T>,
    theta_star: Vec<T>,
}

impl<T: Scalar> LeastSquaresProblem<T> {
    /// Validates that `theta_star` interpolates every row.
    pub fn new(rows: usize, dim: usize, a: Vec<T>, y: Vec<T>, theta_star: Vec<T>) -> Result<Self> {
        if rows == 0 || dim == 0 || a.len() != rows * dim || y.len() != rows || theta_star.len() != dim {
            return Err(invalid(format!(
                "inconsistent shapes: {rows}x{dim} system with {} entries, {} targets, {} unknowns",
                a.len(),
                y.len(),
                theta_star.len()
            )));
        }
        let p = Self { rows, dim, a, y, theta_star };
        for i in 0..rows {
            let r = p.residual(&p.theta_star, i);
            let scale = T::one() + p.y[i].abs();
            if !(r.abs() <= T::lit(1e-9) * scale) {
                return Err(invalid(format!(
                    "theta* does not interpolate row {i} (residual {r}); the system has no zero-loss point"
                )));
            }
        }
        Ok(p)
    }

    /// Gaussian `A` and `theta*`, with `y = A theta*`.
    pub fn random_consistent(rows: usize, dim: usize, seed: u64) -> Result<Self> {
        let mut rng = seeded(seed, streams::DATA);
        let mut draw = || T::lit(StandardNormal.sample(&mut rng));
        let a: Vec<T> = (0..rows * dim).map(|_| draw()).collect();
        let theta_star: Vec<T> = (0..dim).map(|_| draw()).collect();
        let y =
            (0..rows).map(|i| a[i * dim..(i + 1) * dim].iter().zip(&theta_star).map(|(x, t)| *x * *t).sum()).collect();
        Self::new(rows, dim, a, y, theta_star)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn theta_star(&self) -> &[T] {
        &self.theta_star
    }

    fn residual(&self, theta: &[T], i: usize) -> T {
        let row = &self.a[i * self.dim..(i + 1) * self.dim];
        row.iter().zip(theta).map(|(x, t)| *x * *t).sum::<T>() - self.y[i]
    }

    /// Per-sample losses `(a_i . theta - y_i)^2 / 2`.
    pub fn losses(&self, theta: &[T]) -> Vec<T> {
        (0..self.rows)
            .map(|i| {
                let r = self.residual(theta, i);
                T::lit(0.5) * r * r
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    /// Plain gradient descent on the mean loss.
    Uniform,
    /// Per-sample gradients weighted by normalized current losses.
    Loss,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LwGdPoint<T> {
    pub step: usize,
    pub mean_loss: T,
    /// Slack of the convergence bound at this iterate; zero when all losses
    /// are equal.
    pub delta: T,
    pub distance: T,
    /// Whether the per-sample losses differ at this iterate.
    pub non_degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LwGdReport<T> {
    /// One point per iterate, starting with the initial parameters.
    pub trajectory: Vec<LwGdPoint<T>>,
    pub final_theta: Vec<T>,
    pub converged: bool,
    /// Largest `|sum p - 1|` seen over all steps.
    pub max_weight_sum_error: T,
    /// Smallest weight seen; never negative.
    pub min_weight: T,
}

impl<T: Scalar> LwGdReport<T> {
    /// True when `delta > 0` at every iterate whose losses are not all equal.
    pub fn delta_positive_when_non_degenerate(&self) -> bool {
        self.trajectory.iter().all(|p| !p.non_degenerate || p.delta > T::zero())
    }
}

/// `Delta` for the given per-sample losses (see module docs).
pub fn delta_slack<T: Scalar>(losses: &[T]) -> T {
    let n = losses.len();
    let total: T = losses.iter().copied().sum();
    if n == 0 || !(total > T::zero()) {
        return T::zero();
    }
    let uniform = T::one() / T::from_usize_lossy(n);
    let mut min_above = T::infinity();
    let mut max_below = T::neg_infinity();
    let mut excess = T::zero();
    for &l in losses {
        let p = l / total;
        if p > uniform {
            min_above = min_above.min(l);
            excess += p - uniform;
        } else {
            max_below = max_below.max(l);
        }
    }
    if min_above == T::infinity() || max_below == T::neg_infinity() {
        return T::zero();
    }
    (min_above - max_below) * excess
}

fn distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| (*x - *y) * (*x - *y)).sum::<T>().sqrt()
}

/// Runs up to `steps` iterations of (loss-weighted) gradient descent from
/// `theta0`, stopping once the mean loss drops below `tol`.
///
/// Fails with [`Error::Diverged`] if the mean loss increases on
/// `DIVERGENCE_WINDOW` consecutive steps.
pub fn lw_gd_run<T: Scalar>(
    problem: &LeastSquaresProblem<T>,
    theta0: &[T],
    step_size: T,
    steps: usize,
    tol: T,
    weighting: Weighting,
) -> Result<LwGdReport<T>> {
    if theta0.len() != problem.dim {
        return Err(invalid(format!("theta0 has {} entries, problem has {}", theta0.len(), problem.dim)));
    }
    if !(step_size > T::zero()) {
        return Err(invalid(format!("step size must be positive, got {step_size}")));
    }
    let n = problem.rows;
    let inv_n = T::one() / T::from_usize_lossy(n);
    let mut theta = theta0.to_vec();
    let mut trajectory = Vec::new();
    let mut max_weight_sum_error = T::zero();
    let mut min_weight = T::infinity();
    let mut rising = 0usize;
    let mut prev_mean = T::infinity();
    let mut converged = false;
    let mut weights = vec![T::zero(); n];

    for step in 0..=steps {
        let losses = problem.losses(&theta);
        let total: T = losses.iter().copied().sum();
        let mean_loss = total * inv_n;
        if !mean_loss.is_finite() {
            return Err(Error::Diverged { step, detail: format!("mean loss became {mean_loss}") });
        }
        let non_degenerate = losses.iter().any(|&l| l != losses[0]);
        trajectory.push(LwGdPoint {
            step,
            mean_loss,
            delta: delta_slack(&losses),
            distance: distance(&theta, &problem.theta_star),
            non_degenerate,
        });
        if mean_loss < tol || total == T::zero() {
            converged = true;
            break;
        }
        if step == steps {
            break;
        }
        if mean_loss > prev_mean {
            rising += 1;
            if rising >= DIVERGENCE_WINDOW {
                return Err(Error::Diverged {
                    step,
                    detail: format!("mean loss rose for {DIVERGENCE_WINDOW} consecutive steps to {mean_loss}"),
                });
            }
        } else {
            rising = 0;
        }
        prev_mean = mean_loss;

        match weighting {
            Weighting::Uniform => weights.iter_mut().for_each(|w| *w = inv_n),
            Weighting::Loss => {
                for (w, &l) in weights.iter_mut().zip(&losses) {
                    *w = l / total;
                }
            }
        }
        let sum_w: T = weights.iter().copied().sum();
        max_weight_sum_error = max_weight_sum_error.max((sum_w - T::one()).abs());
        min_weight = weights.iter().copied().fold(min_weight, T::min);

        let mut grad = vec![T::zero(); problem.dim];
        for (i, &w) in weights.iter().enumerate() {
            let coef = w * problem.residual(&theta, i);
            for (g, x) in grad.iter_mut().zip(&problem.a[i * problem.dim..(i + 1) * problem.dim]) {
                *g += coef * *x;
            }
        }
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= step_size * *g;
        }
    }
    if min_weight == T::infinity() {
        min_weight = T::zero();
    }
    Ok(LwGdReport { trajectory, final_theta: theta, converged, max_weight_sum_error, min_weight })
}
