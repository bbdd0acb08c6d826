//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha stream whose key is
//! derived from `(master seed, purpose, path index, particle index)`. Streams
//! with different keys are independent, and a stream's output does not depend
//! on which worker thread consumes it, so runs are reproducible under any
//! degree of parallelism.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

/// What a stream is used for. Separates e.g. the observation path's noise from
/// the particles' noise when both share the same path/particle indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Purpose {
    SystemNoise,
    ParticleNoise,
    Prior,
    ParticlePrior,
    Resampling,
    BrownianBridge,
    Fixture,
    Assumption,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::SystemNoise => 0x5359_534e,
            Purpose::ParticleNoise => 0x5041_5254,
            Purpose::Prior => 0x5052_494f,
            Purpose::ParticlePrior => 0x5050_5249,
            Purpose::Resampling => 0x5245_534d,
            Purpose::BrownianBridge => 0x4252_4447,
            Purpose::Fixture => 0x4649_5854,
            Purpose::Assumption => 0x4153_534d,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub seed: u64,
    pub purpose: Purpose,
    pub path: u64,
    pub particle: u64,
}

impl StreamKey {
    pub fn new(seed: u64, purpose: Purpose, path: u64, particle: u64) -> Self {
        Self { seed, purpose, path, particle }
    }

    pub fn with_purpose(self, purpose: Purpose) -> Self {
        Self { purpose, ..self }
    }

    pub fn with_particle(self, particle: u64) -> Self {
        Self { particle, ..self }
    }

    pub fn rng(&self) -> StreamRng {
        let mut state = self.seed ^ 0x9e37_79b9_7f4a_7c15;
        let mut seed = [0u8; 32];
        let words = [self.seed, self.purpose.tag(), self.path, self.particle];
        for (chunk, w) in seed.chunks_exact_mut(8).zip(words) {
            state = splitmix64(state ^ splitmix64(w));
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Halton low-discrepancy point `index` (starting at 1) in `[0,1)^dim`.
pub fn halton(index: u64, dim: usize, out: &mut [f64]) {
    assert!(dim <= PRIMES.len(), "halton sequence supports at most 16 dimensions");
    for (k, o) in out.iter_mut().take(dim).enumerate() {
        *o = radical_inverse(index, PRIMES[k]);
    }
}

fn radical_inverse(mut n: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while n > 0 {
        r += (n % base) as f64 * f;
        n /= base;
        f *= inv;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_key_same_stream() {
        let k = StreamKey::new(7, Purpose::ParticleNoise, 3, 11);
        let a: Vec<u64> = (0..8)
            .map({
                let mut r = k.rng();
                move |_| r.random()
            })
            .collect();
        let b: Vec<u64> = (0..8)
            .map({
                let mut r = k.rng();
                move |_| r.random()
            })
            .collect();
        assert_eq!(a, b);
        let mut other = k.with_particle(12).rng();
        assert_ne!(a[0], other.random::<u64>());
    }

    #[test]
    fn halton_first_points() {
        let mut p = [0.0; 2];
        halton(1, 2, &mut p);
        assert_eq!(p, [0.5, 1.0 / 3.0]);
        halton(2, 2, &mut p);
        assert_eq!(p, [0.25, 2.0 / 3.0]);
    }
}
