//! Sequential growth engine for linear recursive trees.
//!
//! A [`TreeState`] holds the live tree (depths, outdegrees, level profiles and
//! a prefix-sum index over attachment weights) together with the running
//! exact-moment state needed to evaluate the martingale
//! `S_n = (P_n - E[P_n]) / (n - beta/(beta+m))` in O(1) per insertion.
//! Parent sampling costs O(log n) through the weight index.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::exact::Kahan;
use crate::fenwick::FenwickTree;
use crate::model::ModelParams;
use crate::rng::ReplicaSeed;
use crate::{Error, Result};

/// Trees larger than this are refused by [`grow`].
pub const MAX_TREE_SIZE: u64 = 200_000_000;

/// Below this target size [`grow`] records every step unless explicit
/// checkpoints are given; above it, recording is checkpoint-only.
pub const FULL_RECORD_LIMIT: u64 = 100_000;

/// Live growth state of one tree.
#[derive(Debug, Clone)]
pub struct TreeState {
    params: ModelParams,
    n: u64,
    depth: Vec<u32>,
    outdeg: Vec<u32>,
    weights: FenwickTree,
    /// `X_k(n)`: number of nodes at depth k.
    x_profile: Vec<f64>,
    /// `U_k(n) = beta X_k(n) + m X_{k-1}(n)`, maintained incrementally.
    u_profile: Vec<f64>,
    path_length: u64,
    /// `E_n = sum_k k U_k(n) = (beta+m) P_n + n m`.
    external_path: f64,
    /// `alpha_n`, maintained as a scalar alongside the weight index.
    total_weight: f64,
    /// Depth of the most recently inserted node (`D_n`); 0 for the root.
    last_depth: u32,

    // Running exact-moment state.
    inv_alpha: Kahan,         // sum_{i=1}^{n-1} 1/alpha_i
    depth_mean: f64,          // E[D_n]
    var_depth: Kahan,         // Var(D_n)
    path_mean: Kahan,         // E[P_n] = sum_{k<=n} E[D_k]
    martingale: f64,          // S_n
    inv_alpha_tail: Kahan,    // sum_{j=2}^{n} 1/alpha_j   (for C'(1))
    inv_alpha_sq_tail: Kahan, // sum_{j=2}^{n} 1/alpha_j^2 (for C''(1))
    w_second: f64,            // W_n''(1) = sum_k k(k-1) U_k(n)
}

impl TreeState {
    /// The single-node tree `T_1`.
    pub fn init(params: &ModelParams) -> Self {
        Self::with_capacity(params, 16)
    }

    /// `T_1` with the weight index pre-sized for `capacity` nodes.
    pub fn with_capacity(params: &ModelParams, capacity: usize) -> Self {
        let m = params.m() as f64;
        let mut weights = FenwickTree::with_capacity(capacity.max(1));
        weights.push(m);
        Self {
            params: *params,
            n: 1,
            depth: {
                let mut v = Vec::with_capacity(capacity.max(1));
                v.push(0);
                v
            },
            outdeg: {
                let mut v = Vec::with_capacity(capacity.max(1));
                v.push(0);
                v
            },
            weights,
            x_profile: vec![1.0],
            u_profile: vec![0.0, m],
            path_length: 0,
            external_path: m,
            total_weight: params.total_weight(1),
            last_depth: 0,
            inv_alpha: Kahan::default(),
            depth_mean: 0.0,
            var_depth: Kahan::default(),
            path_mean: Kahan::default(),
            martingale: 0.0,
            inv_alpha_tail: Kahan::default(),
            inv_alpha_sq_tail: Kahan::default(),
            w_second: 0.0,
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn size(&self) -> u64 {
        self.n
    }

    pub fn path_length(&self) -> u64 {
        self.path_length
    }

    /// `E_n`, the external path length.
    pub fn external_path_length(&self) -> f64 {
        self.external_path
    }

    /// `alpha_n`.
    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    /// `S_n`.
    pub fn martingale_value(&self) -> f64 {
        self.martingale
    }

    /// `E[D_n]` for the current size.
    pub fn depth_mean(&self) -> f64 {
        self.depth_mean
    }

    /// `E[P_n]` for the current size.
    pub fn path_mean(&self) -> f64 {
        self.path_mean.value()
    }

    /// `mu_n = E[E_n] = (beta+m) E[P_n] + n m`.
    pub fn external_path_mean(&self) -> f64 {
        self.params.weight_step() * self.path_mean.value() + self.n as f64 * self.params.m() as f64
    }

    /// `Var(D_{n+1})`: variance of the depth of the next insertion.
    pub fn next_depth_variance(&self) -> f64 {
        let p = self.params.m() as f64 / self.total_weight;
        self.var_depth.value() + p * (1.0 - p)
    }

    pub fn depth_of(&self, node: usize) -> u32 {
        self.depth[node]
    }

    pub fn outdegree_of(&self, node: usize) -> u32 {
        self.outdeg[node]
    }

    pub fn last_depth(&self) -> u32 {
        self.last_depth
    }

    /// `X_k(n)` by level; index k.
    pub fn internal_profile(&self) -> &[f64] {
        &self.x_profile
    }

    /// `U_k(n)` by level; index k. `U_0(n) = 0` for n >= 1.
    pub fn external_profile(&self) -> &[f64] {
        &self.u_profile
    }

    /// `W_n''(1) = sum_k k(k-1) U_k(n)`, maintained incrementally.
    pub fn w_second_at_one(&self) -> f64 {
        self.w_second
    }

    /// `sum_{j=2}^{n} 1/alpha_j`, the sum in `C_n'(1) = alpha_n (1 + m sum)`.
    pub fn inv_alpha_tail(&self) -> f64 {
        self.inv_alpha_tail.value()
    }

    /// `sum_{j=2}^{n} 1/alpha_j^2`, the sum in the `C_n''(1)` product form.
    pub fn inv_alpha_sq_tail(&self) -> f64 {
        self.inv_alpha_sq_tail.value()
    }

    /// Inserts a new node under `parent`, restoring every maintained quantity.
    pub fn insert_at(&mut self, parent: usize) -> u32 {
        debug_assert!(parent < self.n as usize);
        let beta = self.params.beta();
        let m = self.params.m() as f64;
        let bm = self.params.weight_step();
        let d = self.depth[parent] + 1;
        let df = d as f64;

        // Moment state first: it needs alpha_{n-1}.
        let alpha_prev = self.total_weight;
        self.inv_alpha.add(1.0 / alpha_prev);
        let p = m / alpha_prev;
        self.depth_mean = m * self.inv_alpha.value();
        self.var_depth.add(p * (1.0 - p));
        self.path_mean.add(self.depth_mean);

        // Structure.
        self.depth.push(d);
        self.outdeg.push(0);
        self.outdeg[parent] += 1;
        self.weights.add(parent, beta);
        self.weights.push(m);
        self.total_weight += bm;
        self.n += 1;
        self.last_depth = d;

        // Profiles.
        if self.x_profile.len() <= d as usize + 1 {
            self.x_profile.resize(d as usize + 2, 0.0);
        }
        if self.u_profile.len() <= d as usize + 1 {
            self.u_profile.resize(d as usize + 2, 0.0);
        }
        self.x_profile[d as usize] += 1.0;
        self.u_profile[d as usize] += beta;
        self.u_profile[d as usize + 1] += m;
        self.w_second += beta * df * (df - 1.0) + m * (df + 1.0) * df;

        // Path lengths.
        self.path_length += d as u64;
        self.external_path += bm * df + m;

        // C-derivative sums now include j = n.
        self.inv_alpha_tail.add(1.0 / self.total_weight);
        self.inv_alpha_sq_tail
            .add(1.0 / (self.total_weight * self.total_weight));

        // Martingale.
        self.martingale = (self.path_length as f64 - self.path_mean.value())
            / (self.n as f64 - self.params.shift());
        d
    }

    /// Samples a parent with probability `(beta d_v + m)/alpha_{n-1}` and
    /// inserts under it. Returns the depth `D_n` of the new node.
    pub fn insert_step<R: Rng>(&mut self, rng: &mut R) -> u32 {
        let parent = self.sample_parent(rng);
        self.insert_at(parent)
    }

    /// Samples a parent index without inserting.
    pub fn sample_parent<R: Rng>(&mut self, rng: &mut R) -> usize {
        // Sampling against the index's own total keeps the search in range
        // even when non-dyadic weights accumulate rounding.
        let total = self.weights.total();
        loop {
            let u: f64 = rng.random::<f64>() * total;
            if u < total {
                return self.weights.search(u);
            }
        }
    }

    /// Residuals of the per-step profile identities; all are exactly zero for
    /// dyadic `beta` (every model in the test matrix).
    pub fn profile_residuals(&self) -> ProfileResiduals {
        let beta = self.params.beta();
        let m = self.params.m() as f64;
        let mut sum_u = Kahan::default();
        let mut sum_ku = Kahan::default();
        for (k, &u) in self.u_profile.iter().enumerate() {
            sum_u.add(u);
            sum_ku.add(k as f64 * u);
        }
        let mut link = 0.0f64;
        for k in 1..self.u_profile.len() {
            let x_k = self.x_profile.get(k).copied().unwrap_or(0.0);
            let x_prev = self.x_profile.get(k - 1).copied().unwrap_or(0.0);
            link = link.max((self.u_profile[k] - (beta * x_k + m * x_prev)).abs());
        }
        ProfileResiduals {
            mass: (sum_u.value() - self.total_weight).abs(),
            first_derivative: (sum_ku.value()
                - (self.params.weight_step() * self.path_length as f64 + self.n as f64 * m))
                .abs(),
            profile_link: link,
            weight_index: (self.weights.total() - self.total_weight).abs(),
            weight_closed_form: (self.total_weight - self.params.total_weight(self.n)).abs(),
        }
    }

    /// Checks the structural invariants, with `tol` as the absolute slack for
    /// real-valued comparisons.
    pub fn check_invariants(&self, tol: f64) -> Result<()> {
        let r = self.profile_residuals();
        if r.mass > tol || r.first_derivative > tol || r.profile_link > tol {
            return Err(Error::Domain(format!("profile identity violated: {r:?}")));
        }
        if r.weight_index > tol || r.weight_closed_form > tol {
            return Err(Error::Domain(format!("weight accounting violated: {r:?}")));
        }
        let x_total: f64 = self.x_profile.iter().sum();
        if (x_total - self.n as f64).abs() > tol {
            return Err(Error::Domain("node count violated".into()));
        }
        let link = self.params.weight_step() * self.path_length as f64
            + self.n as f64 * self.params.m() as f64;
        if (self.external_path - link).abs() > tol {
            return Err(Error::Domain(format!(
                "external path length {} detached from (beta+m)P + nm = {link}",
                self.external_path
            )));
        }
        if self.u_profile.iter().any(|&u| u < -tol) {
            return Err(Error::Domain("negative external profile".into()));
        }
        if self.params.beta() == -1.0 {
            let m = self.params.m();
            if self.outdeg.iter().any(|&d| d > m) {
                return Err(Error::SaturationViolation {
                    outdegree: *self.outdeg.iter().max().unwrap(),
                    m,
                });
            }
        }
        Ok(())
    }
}

/// Residuals reported by [`TreeState::profile_residuals`].
#[derive(Debug, Clone, Copy)]
pub struct ProfileResiduals {
    /// `|sum_k U_k(n) - alpha_n|`.
    pub mass: f64,
    /// `|sum_k k U_k(n) - ((beta+m) P_n + n m)|`.
    pub first_derivative: f64,
    /// `max_k |U_k - (beta X_k + m X_{k-1})|`.
    pub profile_link: f64,
    /// `|fenwick total - alpha_n|`.
    pub weight_index: f64,
    /// `|alpha_n (maintained) - alpha_n (closed form)|`.
    pub weight_closed_form: f64,
}

impl ProfileResiduals {
    pub fn max(&self) -> f64 {
        self.mass
            .max(self.first_derivative)
            .max(self.profile_link)
            .max(self.weight_index)
            .max(self.weight_closed_form)
    }
}

/// One recorded step of a growth run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub n: u64,
    /// `D_n`, depth of the n-th inserted node.
    pub depth: u32,
    /// `P_n`.
    pub path_length: u64,
    /// `S_n`.
    pub martingale: f64,
    /// `X_n = S_n - S_{n-1}`.
    pub increment: f64,
}

/// Recorded martingale trajectory of one replica.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub params: ModelParams,
    pub seed: ReplicaSeed,
    pub rows: Vec<TrajectoryRow>,
}

impl Trajectory {
    /// Serializes as CSV with header `n,D,P,S,X`; floats carry 17 significant
    /// digits.
    pub fn to_csv<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "n,D,P,S,X")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{:.16e},{:.16e}",
                r.n, r.depth, r.path_length, r.martingale, r.increment
            )?;
        }
        Ok(())
    }

    pub fn row_at(&self, n: u64) -> Option<&TrajectoryRow> {
        self.rows
            .binary_search_by_key(&n, |r| r.n)
            .ok()
            .map(|i| &self.rows[i])
    }

    pub fn final_row(&self) -> &TrajectoryRow {
        self.rows.last().expect("trajectory has at least one row")
    }
}

/// Grows a tree to `target` nodes, recording the martingale trajectory.
///
/// With an empty `checkpoints` list every step is recorded for targets up to
/// [`FULL_RECORD_LIMIT`] and only the final row above it (memory-lean mode);
/// otherwise rows are recorded at the given sizes. The final size is always
/// recorded. Runs are deterministic in `seed`.
pub fn grow(
    params: &ModelParams,
    target: u64,
    seed: ReplicaSeed,
    checkpoints: &[u64],
) -> Result<(Trajectory, TreeState)> {
    if target < 1 {
        return Err(Error::InvalidConfig("target size must be >= 1".into()));
    }
    if target > MAX_TREE_SIZE {
        return Err(Error::CapExceeded {
            n: target,
            cap: MAX_TREE_SIZE,
        });
    }
    let record_all = checkpoints.is_empty() && target <= FULL_RECORD_LIMIT;
    let mut marks: Vec<u64> = checkpoints
        .iter()
        .copied()
        .filter(|&c| (1..=target).contains(&c))
        .collect();
    marks.sort_unstable();
    marks.dedup();

    let mut rng = seed.rng();
    let mut state = TreeState::with_capacity(params, target as usize);
    let mut rows = Vec::with_capacity(if record_all {
        target as usize
    } else {
        marks.len() + 2
    });
    let mut mark_idx = 0;
    let record = |state: &TreeState, depth: u32, prev_s: f64| TrajectoryRow {
        n: state.size(),
        depth,
        path_length: state.path_length(),
        martingale: state.martingale_value(),
        increment: state.martingale_value() - prev_s,
    };

    let should_record = |n: u64, mark_idx: &mut usize, marks: &[u64]| -> bool {
        if record_all {
            return true;
        }
        let mut hit = false;
        while *mark_idx < marks.len() && marks[*mark_idx] <= n {
            if marks[*mark_idx] == n {
                hit = true;
            }
            *mark_idx += 1;
        }
        hit
    };

    if should_record(1, &mut mark_idx, &marks) || target == 1 {
        rows.push(record(&state, 0, 0.0));
    }
    while state.size() < target {
        let prev_s = state.martingale_value();
        let d = state.insert_step(&mut rng);
        let n = state.size();
        if should_record(n, &mut mark_idx, &marks) || n == target {
            rows.push(record(&state, d, prev_s));
        }
    }
    Ok((
        Trajectory {
            params: *params,
            seed,
            rows,
        },
        state,
    ))
}

/// Residual of the increment identity
/// `X_n = (beta+m)/alpha_n (D_n - E[D_n] - S_{n-1})`
/// for two consecutive states.
pub fn increment_check(before: &TreeState, after: &TreeState) -> f64 {
    assert_eq!(
        after.size(),
        before.size() + 1,
        "states must be consecutive"
    );
    let x = after.martingale_value() - before.martingale_value();
    let rhs = after.params().weight_step() / after.total_weight()
        * (after.last_depth() as f64 - after.depth_mean() - before.martingale_value());
    (x - rhs).abs()
}
