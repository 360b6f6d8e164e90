//! Counter-based random streams.
//!
//! Every draw in the crate comes from a stream addressed by
//! `(master_seed, purpose, replication, observation)`. The first three
//! components seed a ChaCha8 generator and the observation index selects its
//! stream, so any single draw can be regenerated without replaying the ones
//! before it and results never depend on execution order.

use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};

/// What a stream is used for. Distinct purposes never share streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// Data generation for one Monte Carlo replication.
    MonteCarlo,
    /// Simulated responses inside the bias-correction iteration.
    Sabre,
    /// Seed derivation for nested hierarchies.
    Derive,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::MonteCarlo => 0x6d63_0000_0000_0001,
            Purpose::Sabre => 0x7361_6272_6500_0002,
            Purpose::Derive => 0x6465_7269_7665_0003,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub master_seed: u64,
    pub purpose: Purpose,
    pub replication: u64,
    pub observation: u64,
}

impl StreamKey {
    pub fn new(master_seed: u64, purpose: Purpose, replication: u64, observation: u64) -> Self {
        Self {
            master_seed,
            purpose,
            replication,
            observation,
        }
    }

    pub fn stream(&self) -> Stream {
        let mut state = splitmix(self.master_seed ^ self.purpose.tag());
        state = splitmix(state ^ self.replication.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            state = splitmix(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.observation);
        Stream { rng }
    }
}

/// Derives a child master seed, e.g. the seed used by the bias-correction
/// iteration inside Monte Carlo replication `replication`.
pub fn derive_seed(master_seed: u64, purpose: Purpose, replication: u64) -> u64 {
    StreamKey::new(master_seed, Purpose::Derive, replication, purpose.tag())
        .stream()
        .next_u64()
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// A deterministic source of uniforms.
#[derive(Debug, Clone)]
pub struct Stream {
    rng: ChaCha8Rng,
}

impl Stream {
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on the open interval (0, 1) with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw by inversion, one uniform per draw.
    pub fn standard_normal(&mut self) -> f64 {
        crate::inference::normal_quantile(self.uniform())
    }
}
