//! Seeded random streams and uniform random rationals.
//!
//! Every stochastic routine draws from ChaCha8 (`rand_chacha` 0.9). Substream
//! `i` of seed `s` is `ChaCha8Rng::seed_from_u64(s)` with its stream word set
//! to `i`, so per-sample randomness does not depend on scheduling.

use num_bigint::{BigInt, BigUint};
use num_traits::Zero;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::exact::{is_corner_within, pow_u, Params, Rational};

/// Human-readable generator identification, echoed in stochastic reports.
pub const GENERATOR: &str = "ChaCha8/rand_chacha-0.9/stream-per-index";

pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform integer in `[0, bound)` by rejection on the bit length.
pub fn uniform_below<R: RngCore + ?Sized>(bound: &BigUint, rng: &mut R) -> BigUint {
    assert!(!bound.is_zero(), "empty range");
    let bits = bound.bits();
    let words = bits.div_ceil(32) as usize;
    let top = bits - 32 * (words as u64 - 1);
    loop {
        let mut digits: Vec<u32> = (0..words).map(|_| rng.next_u32()).collect();
        if top < 32 {
            let last = digits.last_mut().unwrap();
            *last &= (1u32 << top) - 1;
        }
        let k = BigUint::from_slice(&digits);
        if &k < bound {
            return k;
        }
    }
}

/// Exponent `m` of the sampling grid `k / r^m`: the smallest `m` with
/// `r^m ≥ 2^64`, raised to `min_depth + 16` so that grid points behave like
/// generic points well past `min_depth`. For `r = 2` and small depths this is
/// the dyadic grid `k / 2^64`.
pub fn grid_exponent(p: Params, min_depth: u32) -> u32 {
    let mut m = 1;
    while pow_u(p.r(), m).bits() <= 64 {
        m += 1;
    }
    m.max(min_depth + 16)
}

/// Uniform grid point `k / r^m` in `[0, 1)` with `m = grid_exponent(p, min_depth)`.
pub fn uniform_rational<R: RngCore + ?Sized>(p: Params, min_depth: u32, rng: &mut R) -> Rational {
    let q = pow_u(p.r(), grid_exponent(p, min_depth));
    let k = uniform_below(&q, rng);
    Rational::new(BigInt::from(k), BigInt::from(q))
}

/// Like [`uniform_rational`], redrawing points that are corners `j/2r^n`
/// with `n ≤ budget`.
pub fn uniform_noncorner<R: RngCore + ?Sized>(p: Params, budget: u32, rng: &mut R) -> Rational {
    loop {
        let x = uniform_rational(p, budget, rng);
        if !is_corner_within(p, &x, budget) {
            return x;
        }
    }
}

/// Uniform point of the grid `lo + (hi − lo)·k/2^64`, `k ∈ [0, 2^64)`.
pub fn uniform_between<R: RngCore + ?Sized>(lo: &Rational, hi: &Rational, rng: &mut R) -> Rational {
    let k: u64 = rng.random();
    let t = Rational::new(BigInt::from(k), BigInt::from(1u128 << 64));
    lo + (hi - lo) * t
}
