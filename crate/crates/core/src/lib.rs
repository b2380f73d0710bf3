//! Sampling and learning for binary (±1) spin systems whose dynamics get
//! stuck.
//!
//! A reversible single-site Markov chain over `n` spins can spend an
//! exponentially long time inside a region of configuration space before it
//! ever visits the rest. While trapped, the empirical distribution of the
//! chain is *not* the stationary Gibbs distribution — but it is still highly
//! structured: its one-step change under the kernel is small. This crate
//! provides the tools to construct, measure, and learn from such
//! distributions:
//!
//! * [`spin`] — Ising-type models over ±1 spins, exact Gibbs distributions by
//!   dense enumeration, and a JSON interchange format.
//! * [`chains`] — Glauber/Metropolis kernels, stationarity-defect metrics
//!   (the "weak" total-variation rate and the "strong" detailed-balance
//!   rate), conductance and spectral gaps, restricted distributions, and
//!   chain simulation with on-disk sample sets.
//! * [`cw`] — the fully-connected (Curie–Weiss) ferromagnet, where all
//!   quantities collapse onto the magnetization: free-energy curves,
//!   locally-stable expansion points, Taylor and truncated weight families,
//!   O(n) stationarity-defect evaluation, and an O(1)-per-step sampler.
//! * [`learner`] — ℓ1-constrained logistic pseudo-likelihood regression per
//!   node, edge thresholding, per-node field refits, and exact
//!   likelihood/pseudo-likelihood landscapes for the fully-connected model.
//! * [`oracle`] — brute-force verification (dense enumeration, no sampling
//!   shortcuts) of the inequalities that make learning from stuck samples
//!   sound, with machine-readable reports.
//!
//! Everything is deterministic given a seed: chain simulation and samplers
//! take an explicit counter-based generator (`ChaCha12`), and perturbation
//! sweeps derive per-instance seeds from a base seed.

pub mod chains;
pub mod cw;
mod error;
pub mod learner;
pub mod math;
pub mod oracle;
pub mod rng;
pub mod spin;

pub use error::{Error, Result};

/// Largest spin count for which dense state-space enumeration (2^n states)
/// is permitted. At this cap a row-sparse kernel occupies
/// 2^16 × 17 f64 ≈ 9 MB and a distribution 0.5 MB, which keeps every dense
/// operation comfortably in memory while still covering every exactness test
/// in the suite.
pub const DENSE_SPIN_CAP: usize = 16;
