//! Deterministic, splittable random streams.
//!
//! Every random draw in the crate comes from a ChaCha20 generator whose key
//! is derived from `(seed, domain, lane)` and whose stream id is the trial
//! index. Results therefore never depend on how trials are scheduled across
//! threads.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::C64;

/// Separates independent uses of the same user seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Simulate = 1,
    Null = 2,
    Alternative = 3,
    Scan = 4,
    Calibrate = 5,
    Holdout = 6,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for `(seed, domain, lane, trial)`.
///
/// Lane 0 carries signal amplitudes; lane `ℓ + 1` carries channel `ℓ`'s noise.
pub fn stream(seed: u64, domain: Domain, lane: u64, trial: u64) -> ChaCha20Rng {
    let mut state = seed;
    let mut mix = splitmix64(&mut state) ^ (domain as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93);
    let mut state = mix ^ lane.wrapping_mul(0xA076_1D64_78BD_642F);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        mix = splitmix64(&mut state);
        chunk.copy_from_slice(&mix.to_le_bytes());
    }
    let mut rng = ChaCha20Rng::from_seed(key);
    rng.set_stream(trial);
    rng
}

/// Circular complex Gaussian with total variance `var` (each part `var/2`).
pub fn complex_gaussian<R: rand::Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(s * re, s * im)
}
