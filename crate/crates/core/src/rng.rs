//! Seeded random streams.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] so results are
//! reproducible across platforms for a fixed seed.

use core::f64::consts::TAU;

use rand::{Rng, SeedableRng};
pub use rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal draw (Box-Muller). Consumes exactly two `u64` words.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // 1 - [0, 1) keeps the log argument strictly positive.
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = rng.random::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(TAU * u2)
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    sigma * standard_normal(rng)
}

/// Uniform draw on `[-half, half]`.
pub fn symmetric_uniform<R: Rng + ?Sized>(rng: &mut R, half: f64) -> f64 {
    if half == 0.0 {
        return 0.0;
    }
    (2.0 * rng.random::<f64>() - 1.0) * half
}

/// Counter-addressed normal draw for element `index` of stream `stream`.
///
/// The result depends only on `(seed, stream, index)`, never on how many
/// other elements were drawn before, so parallel and sequential callers agree.
pub fn indexed_normal(seed: u64, stream: u64, index: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from(index) * 4);
    standard_normal(&mut rng)
}
