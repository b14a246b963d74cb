//! Seeded random streams.
//!
//! Every consumer derives a fresh ChaCha8 stream from (seed, stream, index),
//! so per-item work can run in any order or in parallel without changing a
//! single drawn value.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream tags keep independent uses of the same user seed decorrelated.
pub mod stream {
    pub const DATASET_TRAIN: u64 = 1;
    pub const DATASET_EVAL: u64 = 2;
    pub const NOISE_IMAGES: u64 = 3;
    pub const ADDITIVE_NOISE: u64 = 4;
    pub const LATENTS: u64 = 5;
    pub const ATTACK_INIT: u64 = 6;
    pub const ATTACK_TARGETS: u64 = 7;
    pub const TRAIN_SHUFFLE: u64 = 8;
    pub const TRAIN_INIT: u64 = 9;
    pub const TRAIN_ADV: u64 = 10;
    pub const W_BAR: u64 = 11;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic per-item RNG for (seed, stream, index).
pub fn item_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let a = splitmix(seed ^ splitmix(stream));
    let b = splitmix(a ^ splitmix(index));
    let c = splitmix(b ^ 0x5851_f42d_4c95_7f2d);
    let d = splitmix(c ^ index.rotate_left(17));
    key[0..8].copy_from_slice(&a.to_le_bytes());
    key[8..16].copy_from_slice(&b.to_le_bytes());
    key[16..24].copy_from_slice(&c.to_le_bytes());
    key[24..32].copy_from_slice(&d.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Uniform draw in [0, 1).
pub fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen::<f64>()
}

/// Uniform draw in [lo, hi).
pub fn uniform_in(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform(rng)
}

/// Standard normal via Box–Muller.
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // u1 ∈ (0, 1] so the log is finite
    let u1 = 1.0 - rng.gen::<f64>();
    let u2 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
