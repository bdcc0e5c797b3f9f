//! Model parameters for linear recursive trees.
//!
//! A model is the pair `(beta, m)`. A new node attaches to an existing node of
//! outdegree `d` with probability proportional to `beta * d + m`, with either
//! `beta >= 0, m = 1` (unbounded arity) or `beta = -1, m >= 2` (m-ary trees,
//! where a node saturates once it has m children).

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use crate::special::{digamma, trigamma};

/// Validated `(beta, m)` pair selecting the tree family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    beta: f64,
    m: u32,
}

impl ModelParams {
    /// Validates and builds the parameter pair.
    ///
    /// Permitted combinations are `beta >= 0` with `m = 1`, or `beta = -1`
    /// with `m >= 2`. Anything else is rejected.
    pub fn new(beta: f64, m: u32) -> Result<Self> {
        let unbounded = beta >= 0.0 && beta.is_finite() && m == 1;
        let mary = beta == -1.0 && m >= 2;
        if unbounded || mary {
            Ok(Self { beta, m })
        } else {
            Err(Error::InvalidCombination { beta, m })
        }
    }

    /// Binary search tree: `beta = -1, m = 2`.
    pub fn bst() -> Self {
        Self { beta: -1.0, m: 2 }
    }

    /// Recursive tree (uniform attachment): `beta = 0, m = 1`.
    pub fn rt() -> Self {
        Self { beta: 0.0, m: 1 }
    }

    /// Plane-oriented recursive tree: `beta = 1, m = 1`.
    pub fn port() -> Self {
        Self { beta: 1.0, m: 1 }
    }

    /// p-oriented tree: `beta = p, m = 1`.
    pub fn p_oriented(p: u32) -> Self {
        Self {
            beta: p as f64,
            m: 1,
        }
    }

    /// m-ary tree: `beta = -1`, arity `m >= 2`.
    pub fn mary(m: u32) -> Result<Self> {
        Self::new(-1.0, m)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    /// `beta + m`, the weight added to the tree by every insertion.
    pub fn weight_step(&self) -> f64 {
        self.beta + self.m as f64
    }

    /// `theta = m / (beta + m)`, the n log n coefficient of the mean path length.
    pub fn theta(&self) -> f64 {
        self.m as f64 / self.weight_step()
    }

    /// `beta / (beta + m)`, the shift in the martingale denominator
    /// `n - beta/(beta+m)`.
    pub fn shift(&self) -> f64 {
        self.beta / self.weight_step()
    }

    /// True when `beta` is an integer, the hypothesis of the higher-moment
    /// theorem and of the continuous-time embedding.
    pub fn is_integer_beta(&self) -> bool {
        self.beta.fract() == 0.0
    }

    /// Total attachment weight `alpha_n` of a tree with `n` nodes:
    /// `(beta + m) n - beta` for `n >= 1` and `1` for `n = 0`.
    pub fn total_weight(&self, n: u64) -> f64 {
        if n == 0 {
            1.0
        } else {
            self.weight_step() * n as f64 - self.beta
        }
    }

    /// Attachment weight `beta * d + m` of a single node with outdegree `d`.
    ///
    /// For `beta = -1` an outdegree above `m` would give a negative weight;
    /// that state is unreachable and is reported as an error.
    pub fn attachment_weight(&self, outdegree: u32) -> Result<f64> {
        if self.beta == -1.0 && outdegree > self.m {
            return Err(Error::SaturationViolation {
                outdegree,
                m: self.m,
            });
        }
        Ok(self.beta * outdegree as f64 + self.m as f64)
    }

    /// Short tag used in file names and report labels, e.g. `bst`, `beta0.5m1`.
    pub fn tag(&self) -> String {
        if *self == Self::bst() {
            "bst".into()
        } else if *self == Self::rt() {
            "rt".into()
        } else if *self == Self::port() {
            "port".into()
        } else if self.beta == -1.0 {
            format!("mary{}", self.m)
        } else {
            format!("beta{}m{}", self.beta, self.m)
        }
    }
}

impl std::fmt::Display for ModelParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(beta={}, m={})", self.beta, self.m)
    }
}
