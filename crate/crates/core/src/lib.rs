//! Exact computation with the Takagi–van der Waerden functions
//!
//! ```text
//! f_r(x) = Σ_{n≥0} r^{-n} φ(r^n x),   φ(x) = dist(x, ℤ),   r = 2, 3, …
//! ```
//!
//! Every quantity is an exact rational: values of `f_r` at rational points,
//! slopes of the partial sums, the flattening map `ρ`, correlated random walk
//! probabilities and the value ranges used by level-set covers. Floating point
//! only appears in Monte Carlo counters and in SVG coordinates.
//!
//! Modules:
//! - [`exact`]: `φ`, partial sums, exact evaluation, slope profiles, chord slopes
//! - [`selfsim`]: affine decomposition over flat intervals and witness trees
//! - [`flatten`]: the flattening map `ρ`, its iterate `π`, `ρ^∞` and `~`
//! - [`crw`]: correlated random walk parameter, exact DP, interval counting, simulation
//! - [`levelset`]: `M_r`, the sets `A⁺` / `A⁺(y)`, covers, histograms
//! - [`cli`]: the `takagi-lab` command line front end

pub mod cli;
pub mod crw;
pub mod error;
pub mod exact;
pub mod flatten;
pub mod levelset;
pub mod sampling;
pub mod selfsim;
mod ser;

pub use error::{Error, Result};
pub use exact::{IntervalAddress, Params, Rational};

/// Default depth / budget used when a caller does not supply one.
pub const DEFAULT_DEPTH: u32 = 40;

/// Hard cap on every depth or budget parameter.
pub const MAX_DEPTH: u32 = 10_000;
