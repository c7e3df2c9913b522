//! Seeded randomness with a pinned algorithm.
//!
//! Every random draw in the library comes through [`Stream`], a thin wrapper
//! over ChaCha8 (`rand_chacha`, keyed via `seed_from_u64`). Uniform and
//! normal variates are derived here with fixed arithmetic (53-bit mantissa
//! uniforms, Box-Muller normals) rather than through distribution crates, so
//! datasets regenerate bit-exactly across builds.
//!
//! Sub-seeds are derived with [`split_seed`], the SplitMix64 output mix of
//! `master + (index+1) * GOLDEN`. Per-sample generation is therefore
//! order-independent: sample `i` sees the same stream whether generated
//! sequentially or in parallel.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 mix of a master seed and a stream index.
pub fn split_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fixed stream labels so unrelated consumers of one master seed never
/// collide. Values are arbitrary but frozen.
pub mod labels {
    pub const DATASET_TRAIN: u64 = 0x01;
    pub const DATASET_TEST_BASE: u64 = 0x10; // + test-set index
    pub const AUGMENT: u64 = 0x20;
    pub const MODEL_INIT: u64 = 0x30; // + model index
    pub const SHUFFLE: u64 = 0x40;
}

/// A deterministic random stream.
pub struct Stream {
    rng: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in the open interval (0, 1): `(x >> 11) + 0.5` over 2^53.
    pub fn uniform_01(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform_01()
    }

    /// Standard normal via Box-Muller; pairs are consumed in order.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform_01();
        let u2 = self.uniform_01();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.normal();
        }
    }

    /// Uniform index in `0..bound`. Modulo reduction; our bounds are tiny
    /// relative to 2^64 so the bias is far below any tolerance used here.
    pub fn index(&mut self, bound: usize) -> usize {
        (self.next_u64() % bound as u64) as usize
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, slice: &mut [T]) {
        for i in (1..slice.len()).rev() {
            let j = self.index(i + 1);
            slice.swap(i, j);
        }
    }
}
