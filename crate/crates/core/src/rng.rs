//! Seeded random streams.
//!
//! All randomness flows through [`ChaCha8Rng`], a counter-based generator whose
//! full position is `(seed, stream, word_pos)`. That triple is what checkpoints
//! persist, so a resumed run continues the exact same draw sequence.

use rand::{Rng as _, SeedableRng};
pub use rand_chacha::ChaCha8Rng as StreamRng;

/// Stream ids used to keep independent consumers from sharing draws.
pub mod streams {
    pub const TRAINING: u64 = 0;
    pub const MODEL_INIT: u64 = 1;
    pub const DATA: u64 = 2;
    pub const SPLIT: u64 = 3;
}

/// Generator for `seed` positioned at the start of `stream`.
pub fn seeded(seed: u64, stream: u64) -> StreamRng {
    let mut rng = StreamRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform draw from the half-open interval `(0, 1]`.
#[inline]
pub fn open_unit(rng: &mut StreamRng) -> f64 {
    1.0 - rng.gen::<f64>()
}

/// Serializable position of a [`StreamRng`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngPosition {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngPosition {
    pub fn capture(rng: &StreamRng) -> Self {
        Self { seed: rng.get_seed(), stream: rng.get_stream(), word_pos: rng.get_word_pos() }
    }

    pub fn restore(&self) -> StreamRng {
        let mut rng = StreamRng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn position_restores_sequence() {
        let mut a = seeded(42, streams::TRAINING);
        for _ in 0..17 {
            a.next_u32();
        }
        let pos = RngPosition::capture(&a);
        let mut b = pos.restore();
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn streams_are_distinct() {
        let mut a = seeded(1, streams::TRAINING);
        let mut b = seeded(1, streams::MODEL_INIT);
        assert_ne!(a.next_u64(), b.next_u64());
    }
}
