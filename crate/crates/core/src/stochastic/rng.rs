//! Per-replicate Gaussian streams.
//!
//! Replicate `r` under seed `s` draws from ChaCha12 keyed by `s` on stream
//! `r`, so its samples do not depend on scheduling. Normals come from the
//! Box–Muller transform with both outputs used in order.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

pub struct NormalStream {
    rng: ChaCha12Rng,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64, replicate: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(replicate);
        NormalStream { rng, spare: None }
    }

    /// Uniform on `(0, 1]` with 53 random bits.
    fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn sample(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.sample();
        }
    }
}
