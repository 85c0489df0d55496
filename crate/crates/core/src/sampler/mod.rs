//! Weighted random selection.
//!
//! * [`AliasTable`]: constant-time draws from a fixed distribution; rebuilt
//!   every iteration by the fully adaptive solver.
//! * [`TreeSampler`]: logarithmic draws and point updates; used where only one
//!   weight changes between draws.
//! * [`SamplingPlan`]: size-`b` subsets with given per-coordinate marginals.
//! * [`cdf_draw`]: linear-time inversion, kept as a reference implementation.

mod alias;
mod minibatch;
mod tree;

pub use alias::AliasTable;
pub use minibatch::{DrawScratch, Level, SamplingPlan, TIE_TOL};
pub use tree::TreeSampler;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Generator used by every stochastic routine: ChaCha8, a counter-mode
/// stream, seeded explicitly so trajectories are reproducible.
pub type SolverRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SolverRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform index in `lo..hi`, sampled through 32 bits when the range fits.
#[inline]
pub(crate) fn uniform_index<R: Rng + ?Sized>(rng: &mut R, lo: usize, hi: usize) -> usize {
    if hi <= u32::MAX as usize {
        rng.random_range(lo as u32..hi as u32) as usize
    } else {
        rng.random_range(lo..hi)
    }
}

/// Inverse-CDF draw from `p` (which must sum to ~1).
pub fn cdf_draw<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &x) in p.iter().enumerate() {
        if x > 0.0 {
            acc += x;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}
