//! Small differentiable models with per-sample losses and batch-mean gradients.
//!
//! Parameters live in one flat buffer. Layout per architecture:
//!
//! * `Linear`, `Logistic`: `W` (`out x d`, row-major) then `b` (`out`).
//! * `Mlp`: `W1` (`h x d`), `b1` (`h`), `W2` (`C x h`), `b2` (`C`).

use rand::Rng;

use crate::data::{Batch, IndexedDataset, Targets};
use crate::error::{invalid, Error, Result};
use crate::rng::{seeded, streams};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Architecture {
    /// Affine map with squared loss `1/2 * mean_j (f_j - y_j)^2`. Class labels
    /// are regressed as one-hot vectors.
    Linear { dim: usize, outputs: usize },
    /// Multinomial logistic regression (softmax cross-entropy).
    Logistic { dim: usize, classes: usize },
    /// One ReLU hidden layer followed by softmax cross-entropy.
    Mlp { dim: usize, hidden: usize, classes: usize },
}

impl Architecture {
    pub fn input_dim(&self) -> usize {
        match *self {
            Architecture::Linear { dim, .. } | Architecture::Logistic { dim, .. } | Architecture::Mlp { dim, .. } => {
                dim
            }
        }
    }

    pub fn output_dim(&self) -> usize {
        match *self {
            Architecture::Linear { outputs, .. } => outputs,
            Architecture::Logistic { classes, .. } | Architecture::Mlp { classes, .. } => classes,
        }
    }

    pub fn param_count(&self) -> usize {
        match *self {
            Architecture::Linear { dim, outputs: c } | Architecture::Logistic { dim, classes: c } => c * (dim + 1),
            Architecture::Mlp { dim, hidden, classes } => hidden * (dim + 1) + classes * (hidden + 1),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Architecture::Linear { .. } => "linear",
            Architecture::Logistic { .. } => "logistic",
            Architecture::Mlp { .. } => "mlp",
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Architecture::Linear { dim, outputs } => dim > 0 && outputs > 0,
            Architecture::Logistic { dim, classes } => dim > 0 && classes >= 2,
            Architecture::Mlp { dim, hidden, classes } => dim > 0 && hidden > 0 && classes >= 2,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("degenerate architecture {self:?}")))
        }
    }

    /// Checks that `dataset` can be fed to this architecture.
    pub fn check_dataset<T: Scalar>(&self, dataset: &IndexedDataset<T>) -> Result<()> {
        if dataset.dim() != self.input_dim() {
            return Err(invalid(format!("dataset has {} features, model expects {}", dataset.dim(), self.input_dim())));
        }
        let compatible = match (self, dataset.targets()) {
            (Architecture::Linear { outputs, .. }, Targets::Values { dim, .. }) => dim == outputs,
            (_, Targets::Classes { classes, .. }) => *classes <= self.output_dim(),
            _ => false,
        };
        if !compatible {
            return Err(invalid(format!(
                "{} model with {} outputs cannot fit dataset {}",
                self.name(),
                self.output_dim(),
                dataset.name()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    arch: Architecture,
    values: Vec<T>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        Ok(Self { arch, values: vec![T::zero(); arch.param_count()] })
    }

    /// Default initialization: zeros for the convex models; for the MLP every
    /// entry of a layer is uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        if let Architecture::Mlp { dim, hidden, .. } = arch {
            let mut rng = seeded(seed, streams::MODEL_INIT);
            let first = hidden * (dim + 1);
            let bound1 = 1.0 / (dim as f64).sqrt();
            let bound2 = 1.0 / (hidden as f64).sqrt();
            for (i, v) in p.values.iter_mut().enumerate() {
                let bound = if i < first { bound1 } else { bound2 };
                *v = T::lit(rng.gen_range(-bound..=bound));
            }
        }
        Ok(p)
    }

    pub fn from_values(arch: Architecture, values: Vec<T>) -> Result<Self> {
        arch.validate()?;
        if values.len() != arch.param_count() {
            return Err(invalid(format!(
                "{} parameters given, architecture needs {}",
                values.len(),
                arch.param_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        Ok(Self { arch, values })
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }
}

/// Per-sample scratch for forward/backward.
struct Scratch<T> {
    hidden_pre: Vec<T>,
    hidden: Vec<T>,
    out: Vec<T>,
    grad_out: Vec<T>,
    grad_hidden: Vec<T>,
}

impl<T: Scalar> Scratch<T> {
    fn new(arch: &Architecture) -> Self {
        let h = match *arch {
            Architecture::Mlp { hidden, .. } => hidden,
            _ => 0,
        };
        let c = arch.output_dim();
        Self {
            hidden_pre: vec![T::zero(); h],
            hidden: vec![T::zero(); h],
            out: vec![T::zero(); c],
            grad_out: vec![T::zero(); c],
            grad_hidden: vec![T::zero(); h],
        }
    }
}

enum Target<'a, T> {
    Class(usize),
    Values(&'a [T]),
}

fn target_of<T: Scalar>(ds: &IndexedDataset<T>, id: usize) -> Target<'_, T> {
    match ds.targets() {
        Targets::Classes { labels, .. } => Target::Class(labels[id] as usize),
        Targets::Values { dim, values } => Target::Values(&values[id * dim..(id + 1) * dim]),
    }
}

/// `out = W x + b` with `W` row-major `rows x x.len()` followed by `b`.
fn affine<T: Scalar>(wb: &[T], x: &[T], out: &mut [T]) {
    let d = x.len();
    let (w, b) = wb.split_at(out.len() * d);
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * d..(r + 1) * d];
        let mut acc = b[r];
        for (wi, xi) in row.iter().zip(x) {
            acc += *wi * *xi;
        }
        *o = acc;
    }
}

/// `grad_wb += scale * (g x^T, g)`.
fn affine_grad<T: Scalar>(grad_wb: &mut [T], x: &[T], g: &[T], scale: T) {
    let d = x.len();
    let (gw, gb) = grad_wb.split_at_mut(g.len() * d);
    for (r, &gr) in g.iter().enumerate() {
        let gr = gr * scale;
        if gr == T::zero() {
            continue;
        }
        for (gwi, xi) in gw[r * d..(r + 1) * d].iter_mut().zip(x) {
            *gwi += gr * *xi;
        }
        gb[r] += gr;
    }
}

fn logits<T: Scalar>(params: &ModelParams<T>, x: &[T], s: &mut Scratch<T>) {
    match params.arch {
        Architecture::Linear { .. } | Architecture::Logistic { .. } => affine(&params.values, x, &mut s.out),
        Architecture::Mlp { dim, hidden, .. } => {
            let (l1, l2) = params.values.split_at(hidden * (dim + 1));
            affine(l1, x, &mut s.hidden_pre);
            for (h, a) in s.hidden.iter_mut().zip(&s.hidden_pre) {
                *h = a.max(T::zero());
            }
            affine(l2, &s.hidden, &mut s.out);
        }
    }
}

/// Loss of the current `s.out` against `target`; fills `s.grad_out` with
/// d loss / d out when `want_grad`.
fn head_loss<T: Scalar>(arch: &Architecture, target: &Target<'_, T>, s: &mut Scratch<T>, want_grad: bool) -> T {
    match arch {
        Architecture::Linear { outputs, .. } => {
            let inv = T::one() / T::from_usize_lossy(*outputs);
            let mut loss = T::zero();
            for j in 0..*outputs {
                let y = match target {
                    Target::Class(c) => {
                        if j == *c {
                            T::one()
                        } else {
                            T::zero()
                        }
                    }
                    Target::Values(v) => v[j],
                };
                let r = s.out[j] - y;
                loss += r * r;
                if want_grad {
                    s.grad_out[j] = r * inv;
                }
            }
            loss * inv * T::lit(0.5)
        }
        Architecture::Logistic { .. } | Architecture::Mlp { .. } => {
            let Target::Class(label) = *target else { unreachable!("checked by check_dataset") };
            let max = s.out.iter().copied().fold(T::neg_infinity(), T::max);
            let mut sum = T::zero();
            for &z in &s.out {
                sum += (z - max).exp();
            }
            let lse = max + sum.ln();
            if want_grad {
                for (g, &z) in s.grad_out.iter_mut().zip(&s.out) {
                    *g = (z - lse).exp();
                }
                s.grad_out[label] -= T::one();
            }
            // Rounding can leave a tiny negative value when the label dominates.
            (lse - s.out[label]).max(T::zero())
        }
    }
}

fn check_finite<T: Scalar>(s: &Scratch<T>, id: usize) -> Result<()> {
    if s.out.iter().chain(&s.hidden_pre).any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite activation for sample {id}")));
    }
    Ok(())
}

/// Per-sample losses in batch order.
pub fn forward_losses<T: Scalar>(params: &ModelParams<T>, batch: &Batch<'_, T>) -> Result<Vec<T>> {
    let ds = batch.dataset();
    params.arch.check_dataset(ds)?;
    let mut s = Scratch::new(&params.arch);
    batch
        .ids()
        .iter()
        .map(|&id| {
            logits(params, ds.row(id), &mut s);
            check_finite(&s, id)?;
            let loss = head_loss(&params.arch, &target_of(ds, id), &mut s, false);
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss for sample {id}")));
            }
            Ok(loss)
        })
        .collect()
}

/// Gradient of the unweighted mean loss over the batch.
///
/// Sample contributions are accumulated in ascending id order regardless of
/// the order of `batch.ids()`.
pub fn backward<T: Scalar>(params: &ModelParams<T>, batch: &Batch<'_, T>) -> Result<Vec<T>> {
    let ds = batch.dataset();
    params.arch.check_dataset(ds)?;
    let mut grad = vec![T::zero(); params.values.len()];
    if batch.is_empty() {
        return Ok(grad);
    }
    let mut ids = batch.ids().to_vec();
    ids.sort_unstable();
    let scale = T::one() / T::from_usize_lossy(ids.len());
    let mut s = Scratch::new(&params.arch);
    for id in ids {
        let x = ds.row(id);
        logits(params, x, &mut s);
        check_finite(&s, id)?;
        head_loss(&params.arch, &target_of(ds, id), &mut s, true);
        match params.arch {
            Architecture::Linear { .. } | Architecture::Logistic { .. } => {
                affine_grad(&mut grad, x, &s.grad_out, scale);
            }
            Architecture::Mlp { dim, hidden, classes } => {
                let split = hidden * (dim + 1);
                let w2 = &params.values[split..split + classes * hidden];
                for (j, gh) in s.grad_hidden.iter_mut().enumerate() {
                    let mut acc = T::zero();
                    for (c, &go) in s.grad_out.iter().enumerate() {
                        acc += w2[c * hidden + j] * go;
                    }
                    *gh = if s.hidden_pre[j] > T::zero() { acc } else { T::zero() };
                }
                let (g1, g2) = grad.split_at_mut(split);
                affine_grad(g2, &s.hidden, &s.grad_out, scale);
                affine_grad(g1, x, &s.grad_hidden, scale);
            }
        }
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    Ok(grad)
}

fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Argmax of the model outputs for every row of `features`; ties go to the
/// lower class id.
pub fn predict<T: Scalar>(params: &ModelParams<T>, features: &[T]) -> Vec<usize> {
    let d = params.arch.input_dim();
    let mut s = Scratch::new(&params.arch);
    features
        .chunks_exact(d)
        .map(|x| {
            logits(params, x, &mut s);
            argmax(&s.out)
        })
        .collect()
}

/// Fraction of correctly predicted samples.
///
/// For real-valued targets a sample counts as correct when every output lies
/// within 0.5 of its target.
pub fn accuracy<T: Scalar>(params: &ModelParams<T>, dataset: &IndexedDataset<T>) -> T {
    if dataset.is_empty() {
        return T::zero();
    }
    let correct = match dataset.targets() {
        Targets::Classes { labels, .. } => {
            predict(params, dataset.features()).into_iter().zip(labels).filter(|(p, &y)| *p == y as usize).count()
        }
        Targets::Values { dim, values } => {
            let mut s = Scratch::new(&params.arch);
            let half = T::lit(0.5);
            dataset
                .ids()
                .filter(|&i| {
                    logits(params, dataset.row(i), &mut s);
                    s.out.iter().zip(&values[i * dim..(i + 1) * dim]).all(|(o, y)| (*o - *y).abs() < half)
                })
                .count()
        }
    };
    T::from_usize_lossy(correct) / T::from_usize_lossy(dataset.len())
}
