//! Counter-addressed Gaussian substreams.
//!
//! Every random quantity is addressed by `(master seed, purpose, player,
//! pulse)`. The master seed keys a ChaCha8 generator (via
//! `SeedableRng::seed_from_u64`); `purpose << 32 | player` selects the
//! ChaCha stream (nonce) and the pulse index selects the word offset, four
//! 32-bit words per pulse. Each pulse therefore owns two `u64` draws, turned
//! into a pair of standard normals by the Box–Muller transform.
//!
//! Because positions are computed rather than consumed, any partition of
//! the pulse range (threads, chunks) reproduces the same values.

use core::f64::consts::PI;
use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};

const WORDS_PER_PULSE: u128 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum Purpose {
    Symbols = 1,
    PhaseError = 2,
    ExcessNoise = 3,
    Detector = 4,
    Disclosure = 5,
}

#[derive(Clone)]
pub struct Substreams {
    seed: u64,
    base: ChaCha8Rng,
}

impl core::fmt::Debug for Substreams {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Substreams").field("seed", &self.seed).finish()
    }
}

fn stream_id(purpose: Purpose, player: usize) -> u64 {
    ((purpose as u64) << 32) | player as u64
}

/// Maps two raw draws to a pair of independent standard normals.
pub fn box_muller(a: u64, b: u64) -> (f64, f64) {
    // u1 in (0, 1], u2 in [0, 1)
    let u1 = ((a >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (2.0 * PI * u2).sin_cos();
    (r * c, r * s)
}

impl Substreams {
    pub fn new(seed: u64) -> Self {
        Self { seed, base: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Generator positioned at `first_pulse` of the given substream.
    pub fn stream(&self, purpose: Purpose, player: usize, first_pulse: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(stream_id(purpose, player));
        rng.set_word_pos(first_pulse as u128 * WORDS_PER_PULSE);
        rng
    }

    /// Fills `x[i], p[i]` with the normal pair of pulse `first_pulse + i`.
    pub fn fill_normal_pairs(&self, purpose: Purpose, player: usize, first_pulse: u64, x: &mut [f64], p: &mut [f64]) {
        debug_assert_eq!(x.len(), p.len());
        let mut rng = self.stream(purpose, player, first_pulse);
        for (xi, pi) in x.iter_mut().zip(p.iter_mut()) {
            let (a, b) = (rng.next_u64(), rng.next_u64());
            (*xi, *pi) = box_muller(a, b);
        }
    }

    /// One normal per pulse (the first of each pair).
    pub fn fill_normals(&self, purpose: Purpose, player: usize, first_pulse: u64, out: &mut [f64]) {
        let mut rng = self.stream(purpose, player, first_pulse);
        for o in out.iter_mut() {
            let (a, b) = (rng.next_u64(), rng.next_u64());
            *o = box_muller(a, b).0;
        }
    }
}
