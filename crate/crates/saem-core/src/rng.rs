//! Deterministic RNG streams.
//!
//! Every stochastic component draws from its own [`ChaCha8Rng`] stream whose
//! seed is derived from one master seed plus a purpose label and indices
//! (chain, subject, replicate, ...). Streams are therefore independent of
//! scheduling: a subject's chain evolves identically whether subjects are
//! processed serially or in parallel, which is what makes single-thread and
//! multi-thread runs reproducible.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 step — a fast, well-mixed 64-bit permutation used to combine
/// the master seed with purpose labels and indices.
#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `(master, label, indices)`.
///
/// The label keeps streams for different purposes (MCMC, importance sampling,
/// simulation, bootstrap) disjoint even when their indices coincide.
pub fn derive_seed(master: u64, label: &str, indices: &[u64]) -> u64 {
    let mut h = splitmix64(master);
    for &b in label.as_bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    for &ix in indices {
        h = splitmix64(h ^ ix);
    }
    h
}

/// Create the ChaCha8 stream for `(master, label, indices)`.
pub fn stream(master: u64, label: &str, indices: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, label, indices))
}
