//! Seed derivation for reproducible, schedule-independent randomness.
//!
//! Every random decision in a run is keyed by a [`Domain`] and a tuple of
//! integers (agent id, minute, location id, ...). Keys are mixed with the
//! master seed by a SplitMix64 finalizer, so the value drawn for a key does
//! not depend on how many other draws happened before it or on which thread
//! performs it. Single draws use [`Streams::uniform`]; consumers that need
//! many variates get a ChaCha8 generator positioned on its own stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Separates the key spaces of independent random decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Domain {
    Population = 1,
    Trajectory = 2,
    Binding = 3,
    Transport = 4,
    Position = 5,
    Transmission = 6,
    Progression = 7,
    Hospitalization = 8,
    Testing = 9,
    VectorInit = 10,
    Incubation = 11,
    VectorInfection = 12,
    Seeding = 13,
    Clustering = 14,
    Synthetic = 15,
    Quarantine = 16,
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Root of all random streams in one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    master: u64,
}

impl Streams {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// 64 well-mixed bits for `(domain, keys...)`.
    #[inline]
    pub fn hash(&self, domain: Domain, keys: &[u64]) -> u64 {
        let mut h = splitmix64(self.master ^ splitmix64(domain as u64));
        for &k in keys {
            h = splitmix64(h ^ k);
        }
        h
    }

    /// Uniform variate in `[0, 1)` for `(domain, keys...)`.
    #[inline]
    pub fn uniform(&self, domain: Domain, keys: &[u64]) -> f64 {
        unit_f64(self.hash(domain, keys))
    }

    /// A generator dedicated to `(domain, keys...)`.
    pub fn rng(&self, domain: Domain, keys: &[u64]) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.hash(domain, keys));
        rng.set_stream(domain as u64);
        rng
    }
}

/// Maps 64 random bits onto `[0, 1)` using the top 53 bits.
#[inline]
pub fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
