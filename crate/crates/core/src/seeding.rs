//! Derivation of per-task RNG seeds from a study seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// FNV-1a over the parts, NUL-separated.
fn fnv1a(parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for b in part.bytes().chain(std::iter::once(0)) {
            h = (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Seed for the task identified by `parts` under `seed`.
pub fn derive_seed(seed: u64, parts: &[&str]) -> u64 {
    seed ^ fnv1a(parts)
}

pub fn task_rng(seed: u64, parts: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, parts))
}
