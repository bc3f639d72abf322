//! Deterministic, order-independent random streams.
//!
//! Every draw in the crate comes from a [`RandomStream`] keyed by a base seed
//! and a `(trial, look, role)` triple. Each key is expanded into a distinct
//! ChaCha8 key, so streams never overlap and parallel schedules cannot change
//! results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// What a stream is used for. Distinct roles never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Role {
    Operator = 1,
    Speckle = 2,
    Additive = 3,
    Signal = 4,
    /// Auxiliary draws for diagnostics (concentration checks, oracles).
    Auxiliary = 5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub trial: u64,
    pub look: u64,
    pub role: Role,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RandomStream {
    pub seed: u64,
    pub id: StreamId,
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and an index (e.g. a sweep cell).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(mix64(seed) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

impl RandomStream {
    pub fn new(seed: u64, trial: u64, look: u64, role: Role) -> Self {
        Self {
            seed,
            id: StreamId { trial, look, role },
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let words = [
            mix64(self.seed),
            mix64(self.id.trial ^ 0x5851_F42D_4C95_7F2D),
            mix64(self.id.look ^ 0x1405_7B7E_F767_814F),
            mix64(self.id.role as u64 ^ 0x2545_F491_4F6C_DD1D),
        ];
        let mut key = [0u8; 32];
        for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }

    /// `len` independent standard-normal draws.
    pub fn normals(&self, len: usize) -> Vec<f64> {
        let mut rng = self.rng();
        (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
    }
}
