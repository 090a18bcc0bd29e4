//! Counter-based random streams.
//!
//! Every draw consumes exactly four 64-bit words, so the position of any draw
//! inside a stream is known in advance. Lattice sampling lays faces out column
//! by column, which lets a partial sampler seek to a column and reproduce the
//! full-configuration values bit for bit.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 32-bit words consumed by one draw.
pub const WORDS_PER_DRAW: u128 = 8;

#[derive(Clone, Debug)]
pub struct DrawStream {
    rng: ChaCha8Rng,
}

impl DrawStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        DrawStream { rng }
    }

    /// Moves to the start of draw number `index`.
    pub fn seek(&mut self, index: u128) {
        self.rng.set_word_pos(index * WORDS_PER_DRAW);
    }

    /// Four independent uniforms in the open interval (0, 1).
    #[inline]
    pub fn uniforms(&mut self) -> [f64; 4] {
        let mut out = [0.0; 4];
        for o in out.iter_mut() {
            *o = to_open_unit(self.rng.next_u64());
        }
        out
    }
}

#[inline]
pub fn to_open_unit(x: u64) -> f64 {
    ((x >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Draws four uniforms from an arbitrary generator with the same word budget.
pub fn uniforms_from<R: RngCore + ?Sized>(rng: &mut R) -> [f64; 4] {
    [
        to_open_unit(rng.next_u64()),
        to_open_unit(rng.next_u64()),
        to_open_unit(rng.next_u64()),
        to_open_unit(rng.next_u64()),
    ]
}
