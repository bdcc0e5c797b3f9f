//! Growth simulation, exact moment formulas and statistical experiments for the
//! path length of linear recursive random trees.
//!
//! A linear recursive tree grows one node at a time: the parent of the new node
//! is chosen among existing nodes with probability proportional to `beta * d + m`,
//! where `d` is the current outdegree. The family covers binary search trees
//! (`beta = -1, m = 2`), recursive trees (`beta = 0, m = 1`), plane-oriented
//! recursive trees (`beta = 1, m = 1`), p-oriented trees and m-ary trees.
//!
//! The crate is organized around the normalized path-length martingale
//! `S_n = (P_n - E[P_n]) / (n - beta/(beta+m))`:
//!
//! * [`model`] - model parameters, weight totals and the special functions
//!   entering the asymptotic constants;
//! * [`tree_sim`] - the sequential growth engine with O(log n) weighted
//!   parent sampling;
//! * [`exact`] - closed-form moments, tail-sum variance and tail bounds;
//! * [`oracle`] - exhaustive enumeration of growth histories for small sizes;
//! * [`profile_poly`] - the profile polynomial, its normalization and the
//!   derivative identities at z = 1;
//! * [`ctbrw`] - the continuous-time branching random walk embedding;
//! * [`limit_lab`] - Monte Carlo experiments for the CLT, higher moments,
//!   the law of the iterated logarithm and martingale condition diagnostics.

pub mod ctbrw;
pub mod exact;
pub mod fenwick;
pub mod limit_lab;
pub mod model;
pub mod oracle;
pub mod profile_poly;
pub mod rng;
pub mod special;
pub mod stats;
pub mod tree_sim;

pub use model::ModelParams;
pub use rng::ReplicaSeed;

/// Errors produced by model validation, growth and experiment configuration.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter combination beta={beta}, m={m}: requires beta >= 0 with m = 1, or beta = -1 with m >= 2")]
    InvalidCombination { beta: f64, m: u32 },

    #[error("saturation violated: outdegree {outdegree} exceeds arity m={m}")]
    SaturationViolation { outdegree: u32, m: u32 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("size cap exceeded: n={n} is above the configured cap {cap}")]
    CapExceeded { n: u64, cap: u64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate normalizer: |C_n(z)| = {magnitude:e} is below 1e-300")]
    DegenerateNormalizer { magnitude: f64 },

    #[error("insufficient replicas: {0}")]
    InsufficientReplicas(String),

    #[error("empty sample")]
    EmptySample,
}

pub type Result<T> = std::result::Result<T, Error>;
