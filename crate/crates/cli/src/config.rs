//! Experiment files.
//!
//! A TOML document with a `schema` tag, a `[dataset]` table, an optional
//! `[output]` table and one or more `[[run]]` tables. Unknown keys are
//! rejected. See the README for every key and its default.

use std::path::{Path, PathBuf};

use evolved_sampling::data::{gen_gaussian_mixture, load_idx, split};
use evolved_sampling::{
    AnnealWindow, Architecture, BetaParams, IndexedDataset, PruneConfig, Schedule, Strategy, StrategyKind, TrainConfig,
};
use serde::Deserialize;

use crate::failure::Failure;

pub const SCHEMA: &str = "eswp-experiment/1";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub schema: String,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub output: OutputSpec,
    pub run: Vec<RunSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    GaussianMixture {
        n: usize,
        dim: usize,
        classes: usize,
        #[serde(default = "default_separation")]
        separation: f64,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: Option<PathBuf>,
        test_labels: Option<PathBuf>,
        limit: Option<usize>,
        test_limit: Option<usize>,
        /// Used only when no test files are given.
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_separation() -> f64 {
    3.0
}

fn default_test_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Per-epoch metrics; stdout when absent.
    pub metrics_csv: Option<PathBuf>,
    /// Directory receiving `<run name>.ckpt` after every epoch.
    pub checkpoint_dir: Option<PathBuf>,
    /// Write measured epoch seconds instead of 0.
    #[serde(default)]
    pub wall_clock: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub name: String,
    pub strategy: String,
    pub epochs: usize,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    pub meta_batch: Option<usize>,
    pub mini_batch: Option<usize>,
    #[serde(rename = "b_over_B")]
    pub b_over_b: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub prune_ratio: Option<f64>,
    pub anneal_ratio: Option<f64>,
    pub lr: Option<f64>,
    pub momentum: Option<f64>,
    pub weight_decay: Option<f64>,
    pub schedule: Option<String>,
    pub prob_floor: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_model() -> String {
    "logistic".into()
}

fn default_hidden() -> usize {
    64
}

/// Splits `key=value`; the value is read as a TOML literal, falling back to a
/// bare string.
fn parse_override(raw: &str) -> Result<(String, toml::Value), Failure> {
    let (key, value) =
        raw.split_once('=').ok_or_else(|| Failure::Usage(format!("override {raw:?} is not of the form key=value")))?;
    let key = key.trim().to_string();
    if key.is_empty() {
        return Err(Failure::Usage(format!("override {raw:?} has an empty key")));
    }
    let value = value.trim();
    let parsed = format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    Ok((key, parsed))
}

/// Applies overrides to the raw document. `dataset.k` and `output.k` address
/// those tables; a bare key is set on every run.
pub fn apply_overrides(doc: &mut toml::Table, overrides: &[String]) -> Result<(), Failure> {
    for raw in overrides {
        let (key, value) = parse_override(raw)?;
        match key.split_once('.') {
            Some((section @ ("dataset" | "output"), field)) => {
                let table = doc
                    .entry(section)
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| Failure::Usage(format!("`{section}` is not a table")))?;
                table.insert(field.to_string(), value);
            }
            Some(_) => return Err(Failure::Usage(format!("unknown override key `{key}`"))),
            None => {
                let runs = doc
                    .get_mut("run")
                    .and_then(|r| r.as_array_mut())
                    .ok_or_else(|| Failure::Usage("missing [[run]] tables".into()))?;
                for run in runs {
                    let t = run.as_table_mut().ok_or_else(|| Failure::Usage("`run` entries must be tables".into()))?;
                    t.insert(key.clone(), value.clone());
                }
            }
        }
    }
    Ok(())
}

impl ExperimentFile {
    pub fn from_str_with(text: &str, overrides: &[String]) -> Result<Self, Failure> {
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| Failure::Usage(e.to_string()))?;
        apply_overrides(&mut doc, overrides)?;
        let file: Self = doc.try_into().map_err(|e: toml::de::Error| Failure::Usage(e.to_string()))?;
        file.check()?;
        Ok(file)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, Failure> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))?;
        let mut file = Self::from_str_with(&text, overrides)?;
        file.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(file)
    }

    fn check(&self) -> Result<(), Failure> {
        if self.schema != SCHEMA {
            return Err(Failure::Usage(format!("schema: expected {SCHEMA:?}, found {:?}", self.schema)));
        }
        if self.run.is_empty() {
            return Err(Failure::Usage("run: at least one [[run]] table is required".into()));
        }
        let mut names: Vec<&str> = self.run.iter().map(|r| r.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Failure::Usage(format!("name: duplicate run name {:?}", w[0])));
        }
        if let Some(r) = self.run.iter().find(|r| r.name.is_empty() || r.name.contains([',', '/', '\n'])) {
            return Err(Failure::Usage(format!("name: {:?} must be non-empty without ',', '/' or newlines", r.name)));
        }
        Ok(())
    }

    /// Relative data paths are taken relative to the config file.
    fn resolve_paths(&mut self, base: &Path) {
        if let DatasetSpec::Idx { train_images, train_labels, test_images, test_labels, .. } = &mut self.dataset {
            for p in [Some(train_images), Some(train_labels), test_images.as_mut(), test_labels.as_mut()]
                .into_iter()
                .flatten()
            {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }

    pub fn select_run(&self, name: Option<&str>) -> Result<Vec<&RunSpec>, Failure> {
        match name {
            None => Ok(self.run.iter().collect()),
            Some(n) => self
                .run
                .iter()
                .find(|r| r.name == n)
                .map(|r| vec![r])
                .ok_or_else(|| Failure::Usage(format!("run: no run named {n:?}"))),
        }
    }
}

impl DatasetSpec {
    /// Loads or generates the train/test pair.
    pub fn materialize(&self) -> Result<(IndexedDataset, IndexedDataset), Failure> {
        match self {
            DatasetSpec::GaussianMixture { n, dim, classes, separation, seed, test_fraction } => {
                let full = gen_gaussian_mixture(*n, *dim, *classes, *separation, *seed)
                    .map_err(|e| Failure::from_lib("dataset", e))?;
                split(&full, *test_fraction, *seed).map_err(|e| Failure::from_lib("dataset.test_fraction", e))
            }
            DatasetSpec::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                limit,
                test_limit,
                test_fraction,
                seed,
            } => {
                let train =
                    load_idx(train_images, train_labels, *limit).map_err(|e| Failure::from_lib("dataset", e))?;
                match (test_images, test_labels) {
                    (Some(ti), Some(tl)) => {
                        let test = load_idx(ti, tl, *test_limit).map_err(|e| Failure::from_lib("dataset", e))?;
                        Ok((train, test))
                    }
                    (None, None) => {
                        split(&train, *test_fraction, *seed).map_err(|e| Failure::from_lib("dataset.test_fraction", e))
                    }
                    _ => Err(Failure::Usage("dataset: test_images and test_labels must be given together".into())),
                }
            }
        }
    }
}

impl RunSpec {
    /// Builds a validated training configuration for `train`.
    pub fn build(&self, train: &IndexedDataset) -> Result<TrainConfig, Failure> {
        let key = |k: &str| format!("run {:?}: {k}", self.name);
        let kind: StrategyKind = self
            .strategy
            .parse()
            .map_err(|e: evolved_sampling::Error| Failure::Usage(format!("{}: {e}", key("strategy"))))?;
        let (dim, outputs) = (train.dim(), train.output_dim());
        let arch = match self.model.as_str() {
            "linear" => Architecture::Linear { dim, outputs },
            "logistic" => Architecture::Logistic { dim, classes: outputs },
            "mlp" => Architecture::Mlp { dim, hidden: self.hidden, classes: outputs },
            other => {
                return Err(Failure::Usage(format!(
                    "{}: unknown model {other:?} (linear, logistic, mlp)",
                    key("model")
                )))
            }
        };
        let lib = |k: &str, e| Failure::from_lib(&key(k), e);
        let mut cfg = TrainConfig::defaults(kind, arch, self.epochs).map_err(|e| lib("epochs", e))?;
        cfg.seed = self.seed;
        if let Some(b) = self.meta_batch {
            cfg.meta_batch = b;
            if !kind.selects_minibatch() {
                cfg.mini_batch = b;
            } else {
                cfg.mini_batch = (b / 4).max(1);
            }
        }
        if self.mini_batch.is_some() && self.b_over_b.is_some() {
            return Err(Failure::Usage(format!("{}: give mini_batch or b_over_B, not both", key("mini_batch"))));
        }
        if let Some(b) = self.mini_batch {
            cfg.mini_batch = b;
        }
        if let Some(ratio) = self.b_over_b {
            if !(ratio > 0.0 && ratio <= 1.0) {
                return Err(Failure::Usage(format!("{}: must lie in (0, 1], got {ratio}", key("b_over_B"))));
            }
            cfg.mini_batch = ((ratio * cfg.meta_batch as f64).round() as usize).max(1);
        }
        if self.beta1.is_some() || self.beta2.is_some() {
            let d = cfg.strategy.betas();
            let betas = BetaParams::new(self.beta1.unwrap_or(d.beta1()), self.beta2.unwrap_or(d.beta2()))
                .map_err(|e| lib("beta1/beta2", e))?;
            cfg.strategy = Strategy::new(kind, betas).map_err(|e| lib("beta1/beta2", e))?;
        }
        if let Some(r) = self.prune_ratio {
            cfg.prune =
                if r == 0.0 { PruneConfig::none() } else { PruneConfig::new(r).map_err(|e| lib("prune_ratio", e))? };
        }
        if let Some(r) = self.anneal_ratio {
            cfg.anneal = AnnealWindow::from_ratio(r, self.epochs).map_err(|e| lib("anneal_ratio", e))?;
        }
        if let Some(v) = self.lr {
            cfg.optimizer.base_lr = v;
        }
        if let Some(v) = self.momentum {
            cfg.optimizer.momentum = v;
        }
        if let Some(v) = self.weight_decay {
            cfg.optimizer.weight_decay = v;
        }
        if let Some(s) = &self.schedule {
            cfg.optimizer.schedule = match s.as_str() {
                "cosine" => Schedule::Cosine,
                "constant" => Schedule::Constant,
                other => {
                    return Err(Failure::Usage(format!(
                        "{}: unknown schedule {other:?} (cosine, constant)",
                        key("schedule")
                    )))
                }
            };
        }
        if let Some(f) = self.prob_floor {
            cfg.prob_floor = f;
        }
        cfg.validate(train).map_err(|e| lib("config", e))?;
        Ok(cfg)
    }
}
