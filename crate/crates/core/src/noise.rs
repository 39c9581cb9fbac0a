//! Counter-based Gaussian noise.
//!
//! The k-th standard normal of a stream is a pure function of `(seed, k)`,
//! so runs can be replayed, split across threads, or resumed without
//! carrying generator state around.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoiseStream {
    seed: u64,
    counter: u64,
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of standard normals drawn so far.
    pub fn position(&self) -> u64 {
        self.counter
    }

    /// The standard normal at position `index` of the stream seeded with `seed`.
    pub fn draw_at(seed: u64, index: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Each draw consumes two u64 words, i.e. four 32-bit words.
        rng.set_word_pos(4 * index as u128);
        let u1 = unit_open(rng.next_u64());
        let u2 = unit_open(rng.next_u64());
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn next_standard(&mut self) -> f64 {
        let z = Self::draw_at(self.seed, self.counter);
        self.counter += 1;
        z
    }

    /// `N(0, sigma^2 I_dim)`; draws `dim` values even when `sigma == 0`.
    pub fn gaussian_vector(&mut self, dim: usize, sigma: f64) -> Vec<f64> {
        (0..dim).map(|_| sigma * self.next_standard()).collect()
    }

    /// Independent child stream keyed by `key`.
    pub fn fork(&self, key: u64) -> NoiseStream {
        NoiseStream::new(mix_seed(&[self.seed, key]))
    }
}

/// Uniform in (0, 1] from 53 random bits.
fn unit_open(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
}

/// Deterministic seed derivation from a list of integer keys (splitmix64 finalizer).
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}
