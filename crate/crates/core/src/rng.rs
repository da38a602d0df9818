//! Seeded randomness helpers.
//!
//! Every stochastic step in the crate draws from a [`ChaCha8Rng`] so that a
//! `(seed, stream)` pair pins the whole trajectory. Repeated-run protocols
//! put the run index in the stream; nested stages (fit vs. test projection)
//! derive fresh seeds with [`derive_seed`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::matrix::Mat;
use crate::Scalar;

/// RNG for a `(seed, stream)` pair.
pub fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64-style mix of a base seed and an index into a fresh seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw on the half-open interval `(0, 1]`. Strictly positive so
/// multiplicative updates never start from an absorbing zero.
pub fn uniform_open01<T: Scalar>(rng: &mut ChaCha8Rng) -> T {
    T::from_f64_lossy(1.0 - rng.random::<f64>())
}

/// Matrix filled with i.i.d. `(0, 1]` draws, row-major order.
pub fn uniform_matrix<T: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat<T> {
    let mut m = Mat::zeros(rows, cols);
    for v in m.data_mut() {
        *v = uniform_open01(rng);
    }
    m
}
