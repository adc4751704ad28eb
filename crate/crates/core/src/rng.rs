//! Per-orbit random streams.
//!
//! Orbit `k` of a run with seed `s` draws from ChaCha8 keyed by `s` on stream
//! `k`. ChaCha is counter-based, so every orbit's stream is fixed by
//! `(s, k)` alone and no state is shared between orbits. Results do not
//! depend on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn orbit_rng(seed: u64, orbit: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(orbit);
    rng
}

/// Lebesgue-uniform point of `Y = (1/2, 1]`.
#[inline]
pub fn uniform_in_y<R: Rng>(rng: &mut R) -> f64 {
    // random() is in [0, 1); reflect to land in (1/2, 1].
    0.5 + 0.5 * (1.0 - rng.random::<f64>())
}
