//! Deterministic random streams.
//!
//! Uniform bits come from ChaCha8 (a counter-mode generator whose output is
//! identical on every platform); normal deviates are produced with the
//! Marsaglia polar method. Independent streams are derived from a base seed
//! with the SplitMix64 finalizer:
//!
//! ```text
//! derive_seed(base, stream, index) = mix(base ^ mix(mix(stream) ^ index))
//! ```

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream tags used when splitting seeds.
pub mod stream {
    pub const TRAJECTORY: u64 = 0x7472_616a;
    pub const NOISE_COHERENT: u64 = 0x636f_6865;
    pub const NOISE_SQUEEZED: u64 = 0x7371_7a64;
    pub const SEGMENT: u64 = 0x7365_676d;
    pub const TECHNICAL: u64 = 0x7465_6368;
    pub const BOOTSTRAP: u64 = 0x626f_6f74;
}

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    mix64(base ^ mix64(mix64(stream) ^ index))
}

/// Seeded source of uniform and standard normal deviates.
#[derive(Clone, Debug)]
pub struct GaussianStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform on [0, 1) with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n` (rejection sampling, no modulo bias).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.rng.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * f);
                return u * f;
            }
        }
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for x in out.iter_mut() {
            *x = self.normal();
        }
    }
}
