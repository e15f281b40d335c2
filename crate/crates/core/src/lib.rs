//! Evolved sampling: dynamic data selection driven by an exponential moving
//! average of per-sample losses augmented with their step-to-step differences.
//!
//! The numeric core is generic over [`Scalar`] (`f32`/`f64`); the aliases at
//! the crate root fix it to `f64`, which is what the trainer and CLI use.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod metrics;
pub mod models;
pub mod optim;
pub mod rng;
pub mod sampler;
pub mod scalar;
pub mod selection;
pub mod trainer;

pub use error::{Error, Result};
pub use models::Architecture;
pub use optim::Schedule;
pub use sampler::StrategyKind;
pub use scalar::Scalar;
pub use selection::{AnnealWindow, PruneConfig};

pub type BetaParams = sampler::BetaParams<f64>;
pub type SamplerState = sampler::SamplerState<f64>;
pub type Strategy = sampler::Strategy<f64>;
pub type IndexedDataset = data::IndexedDataset<f64>;
pub type ModelParams = models::ModelParams<f64>;
pub type SgdConfig = optim::SgdConfig<f64>;
pub type TrainConfig = trainer::TrainConfig<f64>;
pub type Trainer<'a> = trainer::Trainer<'a, f64>;
pub type RunMetrics = metrics::RunMetrics;
pub type Checkpoint = checkpoint::Checkpoint<f64>;

pub type BetaParams32 = sampler::BetaParams<f32>;
pub type SamplerState32 = sampler::SamplerState<f32>;
pub type IndexedDataset32 = data::IndexedDataset<f32>;
pub type ModelParams32 = models::ModelParams<f32>;
pub type TrainConfig32 = trainer::TrainConfig<f32>;
