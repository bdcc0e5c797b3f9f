//! Exhaustive enumeration of weighted growth histories for small trees.
//!
//! A history is the sequence of parent choices `(c_2, ..., c_n)`; its
//! probability is the product of the attachment probabilities along the way.
//! Enumerating all of them gives exact ground truth for distributions,
//! martingale properties and conditional identities. Parent choices are
//! indexed by insertion order and isomorphic shapes are never merged: the
//! filtration is the labeled history.

use std::collections::BTreeMap;

use crate::exact::{self, Pmf};
use crate::model::ModelParams;
use crate::profile_poly;
use crate::tree_sim::TreeState;
use crate::{Error, Result};

/// Trees beyond this size make full enumeration explode.
pub const ENUMERATION_CAP: u64 = 8;

/// One positive-probability growth history of length n.
#[derive(Debug, Clone)]
pub struct History {
    /// Parent of the k-th inserted node, for k = 2..=n (zero-based node ids).
    pub parent_choices: Vec<u32>,
    pub probability: f64,
    /// `D_1, ..., D_n`.
    pub depths: Vec<u32>,
    /// `S_1, ..., S_n` (note `S_0 = S_1 = 0`).
    pub martingale: Vec<f64>,
    /// Terminal growth state (profiles, path length, running moments).
    pub state: TreeState,
}

impl History {
    pub fn size(&self) -> u64 {
        self.state.size()
    }

    pub fn path_length(&self) -> u64 {
        self.state.path_length()
    }

    /// Whether the i-th inserted node lies on the root path of the j-th
    /// (1-based labels, i < j). Label 1 is the root and is on every path.
    pub fn is_ancestor(&self, i: usize, j: usize) -> bool {
        assert!(1 <= i && i < j && j <= self.size() as usize);
        if i == 1 {
            return true;
        }
        let mut v = j - 1; // zero-based
        while v > 0 {
            v = self.parent_choices[v - 1] as usize;
            if v == i - 1 {
                return true;
            }
        }
        false
    }
}

/// Enumerates every positive-probability history of length `n <= 8` exactly
/// once; zero-weight (saturated) parents are pruned.
pub fn enumerate_histories(params: &ModelParams, n: u64) -> Result<Vec<History>> {
    if n < 1 {
        return Err(Error::Domain("enumeration requires n >= 1".into()));
    }
    if n > ENUMERATION_CAP {
        return Err(Error::CapExceeded {
            n,
            cap: ENUMERATION_CAP,
        });
    }
    let mut out = Vec::new();
    let root = TreeState::init(params);
    let mut scratch = History {
        parent_choices: Vec::new(),
        probability: 1.0,
        depths: vec![0],
        martingale: vec![root.martingale_value()],
        state: root,
    };
    descend(params, n, &mut scratch, &mut out);
    Ok(out)
}

fn descend(params: &ModelParams, target: u64, cur: &mut History, out: &mut Vec<History>) {
    if cur.state.size() == target {
        out.push(cur.clone());
        return;
    }
    let alpha = cur.state.total_weight();
    for parent in 0..cur.state.size() as usize {
        let w = params
            .attachment_weight(cur.state.outdegree_of(parent))
            .expect("growth cannot exceed saturation");
        if w <= 0.0 {
            continue;
        }
        let saved_state = cur.state.clone();
        let saved_prob = cur.probability;
        let d = cur.state.insert_at(parent);
        cur.parent_choices.push(parent as u32);
        cur.probability *= w / alpha;
        cur.depths.push(d);
        cur.martingale.push(cur.state.martingale_value());

        descend(params, target, cur, out);

        cur.state = saved_state;
        cur.probability = saved_prob;
        cur.parent_choices.pop();
        cur.depths.pop();
        cur.martingale.pop();
    }
}

/// Statistic whose exact law [`exact_distribution`] aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    PathLength,
    DepthOfLast,
}

/// Exact pmf of a scalar statistic under the size-n tree law.
pub fn exact_distribution(params: &ModelParams, n: u64, statistic: Statistic) -> Result<Pmf> {
    let histories = enumerate_histories(params, n)?;
    let pairs = histories
        .iter()
        .map(|h| {
            let v = match statistic {
                Statistic::PathLength => h.path_length() as f64,
                Statistic::DepthOfLast => *h.depths.last().unwrap() as f64,
            };
            (v, h.probability)
        })
        .collect();
    let pmf = Pmf::from_pairs(pairs)?;
    pmf.validate()?;
    Ok(pmf)
}

/// Exact law of the external profile vector `(U_1(n), U_2(n), ...)`, trailing
/// zeros trimmed. Only meaningful for integer `beta`, where the profile is
/// integer-valued.
pub fn external_profile_law(params: &ModelParams, n: u64) -> Result<Vec<(Vec<u64>, f64)>> {
    if !params.is_integer_beta() {
        return Err(Error::Domain(
            "the external profile law is integer-valued only for integer beta".into(),
        ));
    }
    let histories = enumerate_histories(params, n)?;
    let mut law: BTreeMap<Vec<u64>, f64> = BTreeMap::new();
    for h in &histories {
        let mut key: Vec<u64> = h
            .state
            .external_profile()
            .iter()
            .skip(1) // U_0(n) = 0 for n >= 1
            .map(|&u| u.round() as u64)
            .collect();
        while key.last() == Some(&0) {
            key.pop();
        }
        *law.entry(key).or_insert(0.0) += h.probability;
    }
    Ok(law.into_iter().collect())
}

/// Max deviation of `E[S_n | F_{n-1}] = S_{n-1}` over all positive-probability
/// prefixes of length n-1.
pub fn check_martingale_property(params: &ModelParams, n: u64) -> Result<f64> {
    if n < 2 {
        return Err(Error::Domain("martingale check requires n >= 2".into()));
    }
    let prefixes = enumerate_histories(params, n - 1)?;
    let mut worst = 0.0f64;
    for h in &prefixes {
        let alpha = h.state.total_weight();
        let mut conditional_mean = 0.0;
        for parent in 0..h.state.size() as usize {
            let w = params.attachment_weight(h.state.outdegree_of(parent))?;
            if w <= 0.0 {
                continue;
            }
            let mut child = h.state.clone();
            child.insert_at(parent);
            conditional_mean += w / alpha * child.martingale_value();
        }
        worst = worst.max((conditional_mean - h.state.martingale_value()).abs());
    }
    Ok(worst)
}

/// Total-variation distance between the enumerated law of `D_n` and the
/// Poisson-binomial convolution from [`exact::depth_pmf`].
pub fn check_depth_bernoulli_law(params: &ModelParams, n: u64) -> Result<f64> {
    let enumerated = exact_distribution(params, n, Statistic::DepthOfLast)?;
    let convolved = exact::depth_pmf(params, n)?;
    Ok(enumerated.tv_distance(&convolved))
}

/// Max deviation of the conditional-variance identity
/// `alpha_n^2/(beta+m)^2 E[X_n^2 | F_{n-1}]
///      = Var(D_n) + M_{n-1}''(1) + S_{n-1} - S_{n-1}^2`
/// over all prefixes of length n-1. The left side enumerates the n-th parent
/// choice; the right side is evaluated on the prefix tree by profile sums.
pub fn check_conditional_variance_identity(params: &ModelParams, n: u64) -> Result<f64> {
    if n < 2 {
        return Err(Error::Domain(
            "conditional variance check requires n >= 2".into(),
        ));
    }
    let prefixes = enumerate_histories(params, n - 1)?;
    let bm = params.weight_step();
    let alpha_n = params.total_weight(n);
    let var_depth = exact::depth_variance(params, n);
    let mut worst = 0.0f64;
    for h in &prefixes {
        let alpha_prev = h.state.total_weight();
        let s_prev = h.state.martingale_value();
        let mut cond_sq = 0.0;
        for parent in 0..h.state.size() as usize {
            let w = params.attachment_weight(h.state.outdegree_of(parent))?;
            if w <= 0.0 {
                continue;
            }
            let mut child = h.state.clone();
            child.insert_at(parent);
            let x = child.martingale_value() - s_prev;
            cond_sq += w / alpha_prev * x * x;
        }
        let lhs = alpha_n * alpha_n / (bm * bm) * cond_sq;
        let bundle = profile_poly::derivatives_at_one(&h.state);
        let rhs = var_depth + bundle.m_second + s_prev - s_prev * s_prev;
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn models() -> Vec<ModelParams> {
        vec![
            ModelParams::bst(),
            ModelParams::rt(),
            ModelParams::port(),
            ModelParams::new(0.5, 1).unwrap(),
            ModelParams::new(-1.0, 3).unwrap(),
        ]
    }

    #[test]
    fn trivial_and_small_enumerations() {
        for p in models() {
            let h1 = enumerate_histories(&p, 1).unwrap();
            assert_eq!(h1.len(), 1);
            assert_eq!(h1[0].probability, 1.0);
            assert!(h1[0].parent_choices.is_empty());
        }
        let rt3 = enumerate_histories(&ModelParams::rt(), 3).unwrap();
        assert_eq!(rt3.len(), 2);
        for h in &rt3 {
            assert!((h.probability - 0.5).abs() < 1e-15);
        }
        let bst3 = enumerate_histories(&ModelParams::bst(), 3).unwrap();
        assert_eq!(bst3.len(), 2);
        let mut probs: Vec<f64> = bst3.iter().map(|h| h.probability).collect();
        probs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((probs[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((probs[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn cap_enforced() {
        assert!(matches!(
            enumerate_histories(&ModelParams::rt(), ENUMERATION_CAP + 1),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn probability_conservation() {
        for p in models() {
            for n in 1..=6u64 {
                let total: f64 = enumerate_histories(&p, n)
                    .unwrap()
                    .iter()
                    .map(|h| h.probability)
                    .sum();
                assert!((total - 1.0).abs() <= 1e-12, "{p} at n={n}: {total}");
            }
        }
    }

    #[test]
    fn saturated_parents_pruned() {
        // In a BST every history keeps outdegrees <= 2 and the counts match
        // the classic (n-1)! histories of unsaturated models only for RT/PORT.
        let bst5 = enumerate_histories(&ModelParams::bst(), 5).unwrap();
        for h in &bst5 {
            for v in 0..h.state.size() as usize {
                assert!(h.state.outdegree_of(v) <= 2);
            }
        }
        let rt5 = enumerate_histories(&ModelParams::rt(), 5).unwrap();
        assert_eq!(rt5.len(), 24); // (n-1)!
    }

    #[test]
    fn exact_distributions_small() {
        let rt = exact_distribution(&ModelParams::rt(), 3, Statistic::PathLength).unwrap();
        assert_eq!(rt.support(), &[2.0, 3.0]);
        assert!((rt.probs()[0] - 0.5).abs() < 1e-15);

        let bst = exact_distribution(&ModelParams::bst(), 3, Statistic::PathLength).unwrap();
        assert_eq!(bst.support(), &[2.0, 3.0]);
        assert!((bst.probs()[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((bst.mean() - 8.0 / 3.0).abs() < 1e-15);

        for p in models() {
            let one = exact_distribution(&p, 1, Statistic::PathLength).unwrap();
            assert_eq!(one.support(), &[0.0]);
            assert_eq!(one.probs(), &[1.0]);
        }
    }

    #[test]
    fn martingale_property_small() {
        for p in models() {
            for n in 2..=5u64 {
                let dev = check_martingale_property(&p, n).unwrap();
                assert!(dev <= 1e-12, "{p} at n={n}: deviation {dev:e}");
            }
        }
        // Non-integer beta is covered by the theorem as well.
        let half = ModelParams::new(0.5, 1).unwrap();
        assert!(check_martingale_property(&half, 6).unwrap() <= 1e-12);
    }

    #[test]
    fn depth_law_matches_poisson_binomial() {
        for p in models() {
            for n in [2u64, 3, 5] {
                let tv = check_depth_bernoulli_law(&p, n).unwrap();
                assert!(tv <= 1e-12, "{p} at n={n}: tv {tv:e}");
            }
        }
        // Degenerate case: both laws are the point mass at 1.
        for p in models() {
            assert_eq!(check_depth_bernoulli_law(&p, 2).unwrap(), 0.0);
        }
    }

    #[test]
    fn conditional_variance_identity_small() {
        for p in models() {
            for n in 2..=5u64 {
                let dev = check_conditional_variance_identity(&p, n).unwrap();
                assert!(dev <= 1e-10, "{p} at n={n}: deviation {dev:e}");
            }
        }
    }

    #[test]
    fn ancestor_reconstruction() {
        // Chain history: 1 <- 2 <- 3; side history: 1 <- 2, 1 <- 3.
        let rt3 = enumerate_histories(&ModelParams::rt(), 3).unwrap();
        let chain = rt3.iter().find(|h| h.parent_choices == vec![0, 1]).unwrap();
        assert!(chain.is_ancestor(1, 3));
        assert!(chain.is_ancestor(2, 3));
        let star = rt3.iter().find(|h| h.parent_choices == vec![0, 0]).unwrap();
        assert!(star.is_ancestor(1, 3));
        assert!(!star.is_ancestor(2, 3));
    }

    #[test]
    fn external_profile_law_mass() {
        for p in [ModelParams::bst(), ModelParams::rt(), ModelParams::port()] {
            let law = external_profile_law(&p, 5).unwrap();
            let total: f64 = law.iter().map(|(_, q)| q).sum();
            assert!((total - 1.0).abs() < 1e-12);
            for (profile, _) in &law {
                let mass: u64 = profile.iter().sum();
                assert_eq!(mass as f64, p.total_weight(5));
            }
        }
        assert!(external_profile_law(&ModelParams::new(0.5, 1).unwrap(), 4).is_err());
    }
}
