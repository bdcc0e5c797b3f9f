//! Deterministic replica seeding.
//!
//! Every replica draws from its own PCG-64 stream (period 2^128). The stream
//! is derived from `(master_seed, replica_index)` through a SplitMix64 chain:
//!
//! ```text
//! s0 = splitmix(master_seed ^ GOLDEN * (replica_index + 1))
//! state  = s1 || s2,  increment = s3 || s4   (consecutive splitmix outputs)
//! ```
//!
//! The same pair always yields a bit-identical trajectory within one build of
//! the crate; reproducibility is not promised across generator implementations.

use serde::{Deserialize, Serialize};

/// A `(master_seed, replica_index)` pair identifying one replica's stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReplicaSeed {
    pub master_seed: u64,
    pub replica_index: u64,
}

impl ReplicaSeed {
    pub fn new(master_seed: u64, replica_index: u64) -> Self {
        Self {
            master_seed,
            replica_index,
        }
    }

    /// Builds the replica's generator.
    pub fn rng(&self) -> rand_pcg::Pcg64 {
        let mut s = splitmix64(
            self.master_seed
                ^ 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(self.replica_index.wrapping_add(1)),
        );
        let mut next = || {
            s = splitmix64(s);
            s
        };
        let state = (next() as u128) << 64 | next() as u128;
        let incr = (next() as u128) << 64 | next() as u128;
        rand_pcg::Pcg64::new(state, incr)
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_pair_same_stream() {
        let mut a = ReplicaSeed::new(42, 7).rng();
        let mut b = ReplicaSeed::new(42, 7).rng();
        for _ in 0..100 {
            assert_eq!(a.random::<u64>(), b.random::<u64>());
        }
    }

    #[test]
    fn distinct_pairs_diverge() {
        let mut a = ReplicaSeed::new(42, 0).rng();
        let mut b = ReplicaSeed::new(42, 1).rng();
        let mut c = ReplicaSeed::new(43, 0).rng();
        let xs: Vec<u64> = (0..8).map(|_| a.random()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.random()).collect();
        let zs: Vec<u64> = (0..8).map(|_| c.random()).collect();
        assert_ne!(xs, ys);
        assert_ne!(xs, zs);
        assert_ne!(ys, zs);
    }

    #[test]
    fn uniform_draws_in_unit_interval() {
        let mut rng = ReplicaSeed::new(1, 1).rng();
        for _ in 0..10_000 {
            let u: f64 = rng.random();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
