//! Counter-based random streams keyed by `(seed, particle, replicate, purpose)`.
//!
//! Every particle owns an independent ChaCha8 stream, so results do not depend
//! on which worker thread advances which particle or in what order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

/// What a stream is used for. Disjoint purposes never share random words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Diffusion = 0,
    Jump = 1,
    Initial = 2,
    Bootstrap = 3,
    Resample = 4,
    Displacement = 5,
}

/// Identifies one stream inside a seeded family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub particle: u64,
    pub replicate: u64,
}

impl StreamKey {
    pub fn new(particle: u64, replicate: u64) -> Self {
        StreamKey {
            particle,
            replicate,
        }
    }
}

/// Seed plus stream key; [`RngStream::rng`] materializes the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub key: StreamKey,
    pub purpose: Purpose,
}

impl RngStream {
    pub fn new(seed: u64, key: StreamKey, purpose: Purpose) -> Self {
        RngStream { seed, key, purpose }
    }

    /// Stream for one particle of one replicate.
    pub fn particle(seed: u64, particle: usize, replicate: u64, purpose: Purpose) -> Self {
        Self::new(seed, StreamKey::new(particle as u64, replicate), purpose)
    }

    pub fn with_purpose(self, purpose: Purpose) -> Self {
        RngStream { purpose, ..self }
    }

    /// Fresh generator positioned at word 0 of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.key.replicate.to_le_bytes());
        key[16..24].copy_from_slice(&(self.purpose as u64).to_le_bytes());
        key[24..].copy_from_slice(b"suplab\x00\x01");
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.key.particle);
        rng
    }
}

#[inline]
pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

#[inline]
pub fn exponential<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(Exp1)
}

/// Uniform on `[0, 1)`.
#[inline]
pub fn uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}
