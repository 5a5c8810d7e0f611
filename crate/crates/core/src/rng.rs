//! Seed derivation and per-stream generators.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from a 64-bit
//! value derived by mixing a master seed with integer labels, so results do
//! not depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type StreamRng = ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a sequence of labels.
pub fn derive_seed(master: u64, labels: &[u64]) -> u64 {
    labels.iter().fold(splitmix64(master), |acc, &l| {
        splitmix64(acc ^ splitmix64(l.wrapping_add(0xA076_1D64_78BD_642F)))
    })
}

pub fn stream(master: u64, labels: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(master, labels))
}

pub fn fill_normal<R: rand::Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
}

pub fn normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// FNV-1a over a byte stream; used for fingerprints that must be stable
/// across platforms and releases.
pub(crate) fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    bytes.into_iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}
