//! Per-frame noise stream.
//!
//! Frame `t` of a scenario with seed `s` draws from xoshiro256** whose state
//! is filled by SplitMix64 seeded with `s ^ mix64(t + 1)`. Uniforms are the
//! top 53 bits of an output scaled by 2^-53; each Gaussian sample consumes two
//! uniforms `u1, u2` and is `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`.

use rand_xoshiro::rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub struct NoiseRng(Xoshiro256StarStar);

impl NoiseRng {
    pub fn for_frame(seed: u64, t: u64) -> Self {
        NoiseRng(Xoshiro256StarStar::seed_from_u64(
            seed ^ mix64(t.wrapping_add(1)),
        ))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal sample.
    pub fn gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}
