//! Seeded random number generation.
//!
//! The generator is SplitMix64, fixed permanently: a 64-bit counter advanced
//! by the golden-ratio increment and finalized with the Stafford mix. The raw
//! `u64` / uniform stream is bit-exact across platforms. Normal deviates use
//! Box-Muller on top of that stream, so they are deterministic for a given
//! seed (their last bits may depend on the platform's libm).

use crate::math::matrix::Matrix;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Deterministic seeded generator. Not shareable across threads; clone or
/// derive per-purpose streams instead.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
    spare_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            state: seed,
            spare_normal: None,
        }
    }

    /// Derives an independent stream from a base seed and a stream label.
    /// Used to keep e.g. train/test sample streams disjoint by construction.
    pub fn derive(seed: u64, label: u64) -> Self {
        let mut r = Rng::new(seed ^ mix(label.wrapping_mul(GOLDEN)));
        // Burn one output so closely related labels decorrelate immediately.
        r.next_u64();
        r
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix(self.state)
    }

    /// Uniform in [0, 1), 53-bit resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller; the pair's second value is cached.
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // u1 in (0, 1] so the log is finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Uniform integer in [0, n).
    pub fn next_below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Modulo bias is negligible for the n used here (n << 2^64) and keeps
        // the draw count per call fixed, which snapshots rely on.
        (self.next_u64() % n as u64) as usize
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i + 1);
            items.swap(i, j);
        }
    }
}

fn mix(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable seed derivation for labeled sub-streams (train vs test data,
/// initialization vs shuffling, ...).
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    mix(seed ^ label.wrapping_mul(GOLDEN))
}

/// He-normal initialization: i.i.d. Gaussian entries with mean 0 and standard
/// deviation sqrt(2 / cols), fan-in being the input dimension of the map.
pub fn he_normal_init(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    let std = (2.0 / cols as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.next_normal() * std)
}
