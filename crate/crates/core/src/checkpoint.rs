//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "ESWP1"                      magic + format version
//! u8                           scalar tag (4 = f32, 8 = f64)
//! u64 epoch, u64 step
//! [u8; 32] seed, u64 stream, u128 word_pos      generator position
//! u8 arch tag, u64 dim, u64 hidden, u64 outputs
//! vec<T> params, vec<T> velocity
//! vec<T> scores, vec<T> weights, vec<u64> last_update_step
//! u64 fp, u64 bp, u64 updates, u64 epoch count, epoch records
//! ```
//!
//! Every `vec` is a `u64` length followed by its elements.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{EpochRecord, RunMetrics};
use crate::models::{Architecture, ModelParams};
use crate::rng::RngPosition;
use crate::sampler::SamplerState;
use crate::scalar::Scalar;

const MAGIC_PREFIX: &[u8; 4] = b"ESWP";
const VERSION: u8 = b'1';

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    /// Number of completed epochs.
    pub epoch: usize,
    /// Number of completed optimizer steps.
    pub step: u64,
    pub rng: RngPosition,
    pub params: ModelParams<T>,
    pub velocity: Vec<T>,
    pub state: SamplerState<T>,
    pub metrics: RunMetrics,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn scalars<T: Scalar>(&mut self, v: &[T]) {
        self.u64(v.len() as u64);
        for &x in v {
            x.write_le(&mut self.0);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("checkpoint truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().expect("16 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("length overflows usize".into()))
    }
    fn len(&mut self, elem: usize) -> Result<usize> {
        let n = self.usize()?;
        if n.saturating_mul(elem) > self.bytes.len() - self.pos {
            return Err(Error::Format(format!("checkpoint truncated: vector of {n} elements")));
        }
        Ok(n)
    }
    fn scalars<T: Scalar>(&mut self) -> Result<Vec<T>> {
        let n = self.len(T::BYTES)?;
        let raw = self.take(n * T::BYTES)?;
        Ok(raw.chunks_exact(T::BYTES).map(T::read_le).collect())
    }
}

fn arch_fields(arch: Architecture) -> (u8, u64, u64, u64) {
    match arch {
        Architecture::Linear { dim, outputs } => (0, dim as u64, 0, outputs as u64),
        Architecture::Logistic { dim, classes } => (1, dim as u64, 0, classes as u64),
        Architecture::Mlp { dim, hidden, classes } => (2, dim as u64, hidden as u64, classes as u64),
    }
}

impl<T: Scalar> Checkpoint<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC_PREFIX);
        w.u8(VERSION);
        w.u8(T::DTYPE);
        w.u64(self.epoch as u64);
        w.u64(self.step);
        w.0.extend_from_slice(&self.rng.seed);
        w.u64(self.rng.stream);
        w.0.extend_from_slice(&self.rng.word_pos.to_le_bytes());

        let (tag, dim, hidden, out) = arch_fields(self.params.arch());
        w.u8(tag);
        w.u64(dim);
        w.u64(hidden);
        w.u64(out);
        w.scalars(self.params.values());
        w.scalars(&self.velocity);

        w.scalars(self.state.scores());
        w.scalars(self.state.weights());
        let steps = self.state.last_update_steps();
        w.u64(steps.len() as u64);
        for &s in steps {
            w.u64(s);
        }

        let m = &self.metrics;
        w.u64(m.fp_samples);
        w.u64(m.bp_samples);
        w.u64(m.updates);
        w.u64(m.epochs.len() as u64);
        for e in &m.epochs {
            w.u64(e.epoch as u64);
            w.u64(e.pool_size as u64);
            w.u8(e.annealing as u8);
            w.f64(e.train_loss);
            w.f64(e.test_acc);
            w.f64(e.test_loss);
            w.f64(e.seconds);
            w.u64(e.cum_fp_samples);
            w.u64(e.cum_bp_samples);
            w.u64(e.cum_updates);
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let head = r.take(5).map_err(|_| Error::Format("not a checkpoint (too short)".into()))?;
        if &head[..4] != MAGIC_PREFIX {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        if head[4] != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {:?}", head[4] as char)));
        }
        let dtype = r.u8()?;
        if dtype != T::DTYPE {
            return Err(Error::Format(format!("checkpoint stores {dtype}-byte scalars, expected {}", T::DTYPE)));
        }
        let epoch = r.usize()?;
        let step = r.u64()?;
        let seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let stream = r.u64()?;
        let word_pos = r.u128()?;

        let tag = r.u8()?;
        let dim = r.usize()?;
        let hidden = r.usize()?;
        let out = r.usize()?;
        let arch = match tag {
            0 => Architecture::Linear { dim, outputs: out },
            1 => Architecture::Logistic { dim, classes: out },
            2 => Architecture::Mlp { dim, hidden, classes: out },
            t => return Err(Error::Format(format!("unknown architecture tag {t}"))),
        };
        let params =
            ModelParams::from_values(arch, r.scalars()?).map_err(|e| Error::Format(format!("bad parameters: {e}")))?;
        let velocity = r.scalars()?;
        if velocity.len() != params.values().len() {
            return Err(Error::Format("velocity length differs from parameter count".into()));
        }

        let scores = r.scalars()?;
        let weights = r.scalars()?;
        let n = r.len(8)?;
        let last = (0..n).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let state = SamplerState::from_parts(scores, weights, last)
            .map_err(|e| Error::Format(format!("bad sampler state: {e}")))?;

        let fp_samples = r.u64()?;
        let bp_samples = r.u64()?;
        let updates = r.u64()?;
        let count = r.len(8 * 9 + 1)?;
        let mut epochs = Vec::with_capacity(count);
        for _ in 0..count {
            epochs.push(EpochRecord {
                epoch: r.usize()?,
                pool_size: r.usize()?,
                annealing: r.u8()? != 0,
                train_loss: r.f64()?,
                test_acc: r.f64()?,
                test_loss: r.f64()?,
                seconds: r.f64()?,
                cum_fp_samples: r.u64()?,
                cum_bp_samples: r.u64()?,
                cum_updates: r.u64()?,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes after checkpoint", bytes.len() - r.pos)));
        }
        Ok(Self {
            epoch,
            step,
            rng: RngPosition { seed, stream, word_pos },
            params,
            velocity,
            state,
            metrics: RunMetrics { epochs, fp_samples, bp_samples, updates },
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
