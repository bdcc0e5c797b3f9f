//! Closed-form and asymptotic moments of the insertion depth `D_n` and the
//! path length `P_n`, the martingale tail-sum variance, and Bernstein-type
//! tail bounds.
//!
//! Everything here follows from the Bernoulli-sum representation of `D_n`:
//! `D_n = B_1 + ... + B_{n-1}` with independent `B_i`, `E[B_i] = m / alpha_i`.

use serde::{Deserialize, Serialize};

use crate::model::ModelParams;
use crate::{Error, Result};

/// Compensated (Kahan) accumulator for long sums.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    pub(crate) fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum
    }
}

/// Default size cap for the exact depth distribution.
pub const DEPTH_PMF_CAP: u64 = 10_000;

/// Probabilities below this are dropped (and the rest renormalized) when
/// building the depth law by convolution.
const PMF_TRUNCATION: f64 = 1e-18;

/// `E[D_n] = sum_{i=1}^{n-1} m / alpha_i`.
pub fn depth_mean(params: &ModelParams, n: u64) -> f64 {
    let m = params.m() as f64;
    let mut s = Kahan::default();
    for i in 1..n {
        s.add(m / params.total_weight(i));
    }
    s.value()
}

/// `Var(D_n) = sum_{i=1}^{n-1} (m/alpha_i)(1 - m/alpha_i)`.
pub fn depth_variance(params: &ModelParams, n: u64) -> f64 {
    let m = params.m() as f64;
    let mut s = Kahan::default();
    for i in 1..n {
        let p = m / params.total_weight(i);
        s.add(p * (1.0 - p));
    }
    s.value()
}

/// `E[P_n]` in the closed form
/// `(m alpha_n / (beta+m)) sum_{i=1}^{n-1} 1/alpha_i - m(n-1)/(beta+m)`.
pub fn mean_path(params: &ModelParams, n: u64) -> f64 {
    let m = params.m() as f64;
    let bm = params.weight_step();
    let mut h = Kahan::default();
    for i in 1..n {
        h.add(1.0 / params.total_weight(i));
    }
    m * params.total_weight(n) / bm * h.value() - m * (n as f64 - 1.0) / bm
}

/// `Var(P_n)` by the summation form
/// `(n - s)(n + 1 - s) sum_{i=1}^{n} Var(D_i) / ((i - s)(i + 1 - s))`
/// with `s = beta/(beta+m)`.
pub fn var_path(params: &ModelParams, n: u64) -> f64 {
    let shift = params.shift();
    let m = params.m() as f64;
    let mut var_depth = Kahan::default(); // Var(D_i) running over i
    let mut total = Kahan::default();
    for i in 1..=n {
        let fi = i as f64;
        total.add(var_depth.value() / ((fi - shift) * (fi + 1.0 - shift)));
        let p = m / params.total_weight(i);
        var_depth.add(p * (1.0 - p));
    }
    let nf = n as f64;
    (nf - shift) * (nf + 1.0 - shift) * total.value()
}

/// Exact law of `D_n` as a Poisson-binomial convolution over the `n - 1`
/// Bernoulli factors. Capped because the DP is quadratic.
pub fn depth_pmf(params: &ModelParams, n: u64) -> Result<Pmf> {
    depth_pmf_with_cap(params, n, DEPTH_PMF_CAP)
}

pub fn depth_pmf_with_cap(params: &ModelParams, n: u64, cap: u64) -> Result<Pmf> {
    if n > cap {
        return Err(Error::CapExceeded { n, cap });
    }
    if n == 0 {
        return Err(Error::Domain("depth_pmf requires n >= 1".into()));
    }
    let m = params.m() as f64;
    let mut probs = vec![1.0f64];
    for i in 1..n {
        let p = m / params.total_weight(i);
        probs.push(0.0);
        for k in (1..probs.len()).rev() {
            probs[k] = probs[k] * (1.0 - p) + probs[k - 1] * p;
        }
        probs[0] *= 1.0 - p;
    }
    let pairs = probs
        .into_iter()
        .enumerate()
        .filter(|(_, p)| *p >= PMF_TRUNCATION)
        .map(|(k, p)| (k as f64, p))
        .collect();
    let mut pmf = Pmf::from_pairs(pairs)?;
    pmf.renormalize();
    Ok(pmf)
}

/// Coefficients of the mean expansion
/// `E[P_n] = a n log n + b n + O(log n)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MeanExpansion {
    /// `a = theta = m/(beta+m)`.
    pub nlogn: f64,
    /// `b = -theta (1 + psi(theta))`.
    pub linear: f64,
}

pub fn mean_expansion(params: &ModelParams) -> MeanExpansion {
    let theta = params.theta();
    let psi = crate::special::digamma(theta).expect("theta > 0");
    MeanExpansion {
        nlogn: theta,
        linear: -theta * (1.0 + psi),
    }
}

/// Leading coefficient of `Var(P_n) = sigma^2 n^2 + o(n^2)`:
/// `sigma^2 = 1 + theta (1 - theta psi'(theta))`.
pub fn variance_constant(params: &ModelParams) -> f64 {
    let theta = params.theta();
    let psi1 = crate::special::trigamma(theta).expect("theta > 0");
    1.0 + theta * (1.0 - theta * psi1)
}

/// The martingale tail-sum variance `s_n^2 = sum_{i>=n} E[X_i^2]`, evaluated
/// two ways.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TailSumVariance {
    /// `sum_{i=n}^{horizon} E[X_i^2]` with
    /// `E[X_i^2] = ((beta+m)/alpha_i)^2 (Var(D_i) - Var(S_{i-1}))`.
    pub truncated: f64,
    /// The asymptotic evaluation `theta log(n) / n`.
    pub closed_form: f64,
}

/// Evaluates `s_n^2` truncated at `horizon` together with its closed form.
///
/// `Var(S_{i-1})` is `Var(P_{i-1}) / (i - 1 - beta/(beta+m))^2`, with the
/// path variance carried along incrementally so the whole evaluation is a
/// single O(horizon) stream.
pub fn s_squared(params: &ModelParams, n: u64, horizon: u64) -> Result<TailSumVariance> {
    if n < 2 || n > horizon {
        return Err(Error::InvalidConfig(format!(
            "s_squared requires 2 <= n <= horizon, got n={n}, horizon={horizon}"
        )));
    }
    let m = params.m() as f64;
    let bm = params.weight_step();
    let shift = params.shift();
    let mut var_depth = Kahan::default(); // Var(D_i)
    let mut weighted = Kahan::default(); // sum Var(D_j) / ((j-s)(j+1-s))
    let mut tail = Kahan::default();
    for i in 1..=horizon {
        let fi = i as f64;
        if i >= n {
            // Var(P_{i-1}) from the running weighted sum.
            let fprev = fi - 1.0;
            let var_prev_path = (fprev - shift) * (fprev + 1.0 - shift) * weighted.value();
            let var_s_prev = if i >= 2 {
                var_prev_path / ((fprev - shift) * (fprev - shift))
            } else {
                0.0
            };
            let ratio = bm / params.total_weight(i);
            tail.add(ratio * ratio * (var_depth.value() - var_s_prev));
        }
        weighted.add(var_depth.value() / ((fi - shift) * (fi + 1.0 - shift)));
        let p = m / params.total_weight(i);
        var_depth.add(p * (1.0 - p));
    }
    let fnn = n as f64;
    Ok(TailSumVariance {
        truncated: tail.value(),
        closed_form: params.theta() * fnn.ln() / fnn,
    })
}

/// Bernstein bound on the depth tail:
/// `P(|D_n - E D_n| >= t) <= 2 exp(-t^2 / (2 E[D_n] + t))`.
pub fn bernstein_depth_tail(params: &ModelParams, n: u64, t: f64) -> Result<f64> {
    if t.is_nan() || t <= 0.0 {
        return Err(Error::Domain(format!("tail bound requires t > 0, got {t}")));
    }
    let ed = depth_mean(params, n);
    Ok(2.0 * (-t * t / (2.0 * ed + t)).exp())
}

/// Union bound on the path-length tail:
/// `P(|P_n - E P_n| >= t) <= 2 n exp(-t^2 / (2 n^2 E[D_n] + t n))`.
pub fn path_tail_bound(params: &ModelParams, n: u64, t: f64) -> Result<f64> {
    if t.is_nan() || t <= 0.0 {
        return Err(Error::Domain(format!("tail bound requires t > 0, got {t}")));
    }
    let fnn = n as f64;
    let ed = depth_mean(params, n);
    Ok(2.0 * fnn * (-t * t / (2.0 * fnn * fnn * ed + t * fnn)).exp())
}

/// Cached per-size moments for sizes `1..=n_max`.
#[derive(Debug, Clone)]
pub struct MomentTable {
    params: ModelParams,
    depth_mean: Vec<f64>,
    depth_var: Vec<f64>,
    path_mean: Vec<f64>,
    path_var: Vec<f64>,
}

/// One row of a [`MomentTable`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub n: u64,
    pub depth_mean: f64,
    pub depth_var: f64,
    pub path_mean: f64,
    pub path_var: f64,
    /// `mu_n = E[E_n] = (beta+m) E[P_n] + n m`.
    pub external_path_mean: f64,
}

impl MomentTable {
    pub fn build(params: &ModelParams, n_max: u64) -> Self {
        let len = n_max as usize + 1;
        let mut dm = vec![0.0; len];
        let mut dv = vec![0.0; len];
        let mut pm = vec![0.0; len];
        let mut pv = vec![0.0; len];
        let m = params.m() as f64;
        let bm = params.weight_step();
        let shift = params.shift();
        let mut h = Kahan::default(); // sum 1/alpha_i
        let mut edn = Kahan::default(); // E[D_n]
        let mut vdn = Kahan::default(); // Var(D_n)
        let mut weighted = Kahan::default();
        for n in 1..=n_max {
            let fnn = n as f64;
            dm[n as usize] = edn.value();
            dv[n as usize] = vdn.value();
            pm[n as usize] = m * params.total_weight(n) / bm * h.value() - m * (fnn - 1.0) / bm;
            weighted.add(vdn.value() / ((fnn - shift) * (fnn + 1.0 - shift)));
            pv[n as usize] = (fnn - shift) * (fnn + 1.0 - shift) * weighted.value();
            let p = m / params.total_weight(n);
            h.add(1.0 / params.total_weight(n));
            edn.add(p);
            vdn.add(p * (1.0 - p));
        }
        Self {
            params: *params,
            depth_mean: dm,
            depth_var: dv,
            path_mean: pm,
            path_var: pv,
        }
    }

    pub fn max_size(&self) -> u64 {
        self.depth_mean.len() as u64 - 1
    }

    pub fn row(&self, n: u64) -> MomentRow {
        let i = n as usize;
        MomentRow {
            n,
            depth_mean: self.depth_mean[i],
            depth_var: self.depth_var[i],
            path_mean: self.path_mean[i],
            path_var: self.path_var[i],
            external_path_mean: self.params.weight_step() * self.path_mean[i]
                + n as f64 * self.params.m() as f64,
        }
    }
}

/// Finite probability mass function with distinct sorted support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pmf {
    support: Vec<f64>,
    probs: Vec<f64>,
}

impl Pmf {
    /// Builds a pmf from `(value, probability)` pairs, merging duplicates.
    pub fn from_pairs(mut pairs: Vec<(f64, f64)>) -> Result<Self> {
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("non-NaN support"));
        let mut support = Vec::with_capacity(pairs.len());
        let mut probs: Vec<f64> = Vec::with_capacity(pairs.len());
        for (v, p) in pairs {
            if p < 0.0 {
                return Err(Error::Domain(format!("negative probability {p} at {v}")));
            }
            if let Some(last) = support.last() {
                if *last == v {
                    *probs.last_mut().unwrap() += p;
                    continue;
                }
            }
            support.push(v);
            probs.push(p);
        }
        Ok(Self { support, probs })
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn total(&self) -> f64 {
        let mut s = Kahan::default();
        for &p in &self.probs {
            s.add(p);
        }
        s.value()
    }

    pub fn renormalize(&mut self) {
        let t = self.total();
        for p in &mut self.probs {
            *p /= t;
        }
    }

    /// Checks the carrier invariants: total mass `1 +- 1e-12`, distinct support.
    pub fn validate(&self) -> Result<()> {
        if (self.total() - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "pmf mass {} deviates from 1",
                self.total()
            )));
        }
        for w in self.support.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Domain("support not strictly increasing".into()));
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        let mut s = Kahan::default();
        for (v, p) in self.support.iter().zip(&self.probs) {
            s.add(v * p);
        }
        s.value()
    }

    pub fn variance(&self) -> f64 {
        self.central_moment(2)
    }

    pub fn central_moment(&self, order: u32) -> f64 {
        let mean = self.mean();
        let mut s = Kahan::default();
        for (v, p) in self.support.iter().zip(&self.probs) {
            s.add((v - mean).powi(order as i32) * p);
        }
        s.value()
    }

    /// Total-variation distance `1/2 sum |p - q|` over the union support.
    pub fn tv_distance(&self, other: &Pmf) -> f64 {
        let mut i = 0;
        let mut j = 0;
        let mut acc = 0.0;
        while i < self.support.len() || j < other.support.len() {
            let a = self.support.get(i).copied().unwrap_or(f64::INFINITY);
            let b = other.support.get(j).copied().unwrap_or(f64::INFINITY);
            if a < b {
                acc += self.probs[i];
                i += 1;
            } else if b < a {
                acc += other.probs[j];
                j += 1;
            } else {
                acc += (self.probs[i] - other.probs[j]).abs();
                i += 1;
                j += 1;
            }
        }
        acc / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::EULER_GAMMA;

    const MODELS: [(f64, u32); 5] = [(-1.0, 2), (0.0, 1), (1.0, 1), (0.5, 1), (-1.0, 3)];

    fn models() -> Vec<ModelParams> {
        MODELS
            .iter()
            .map(|&(b, m)| ModelParams::new(b, m).unwrap())
            .collect()
    }

    #[test]
    fn depth_moments_small_cases() {
        let bst = ModelParams::bst();
        let rt = ModelParams::rt();
        assert!((depth_mean(&bst, 3) - 5.0 / 3.0).abs() < 1e-14);
        assert!((depth_mean(&rt, 3) - 1.5).abs() < 1e-14);
        assert!((depth_variance(&rt, 3) - 0.25).abs() < 1e-14);
        for p in models() {
            assert_eq!(depth_mean(&p, 1), 0.0);
            assert_eq!(depth_variance(&p, 1), 0.0);
        }
    }

    #[test]
    fn path_moments_small_cases() {
        let bst = ModelParams::bst();
        let rt = ModelParams::rt();
        assert!((mean_path(&bst, 3) - 8.0 / 3.0).abs() < 1e-14);
        // RT: E[P_n] = n H_{n-1} - (n - 1).
        assert!((mean_path(&rt, 4) - 13.0 / 3.0).abs() < 1e-14);
        for p in models() {
            assert_eq!(mean_path(&p, 1), 0.0);
            assert_eq!(var_path(&p, 1), 0.0);
        }
        assert!(var_path(&rt, 2).abs() < 1e-15);
        assert!((var_path(&bst, 3) - 2.0 / 9.0).abs() < 1e-14);
        assert!((var_path(&rt, 3) - 0.25).abs() < 1e-14);
    }

    #[test]
    fn depth_pmf_small_cases() {
        let rt3 = depth_pmf(&ModelParams::rt(), 3).unwrap();
        assert_eq!(rt3.support(), &[1.0, 2.0]);
        assert!((rt3.probs()[0] - 0.5).abs() < 1e-15);
        assert!((rt3.probs()[1] - 0.5).abs() < 1e-15);

        let bst2 = depth_pmf(&ModelParams::bst(), 2).unwrap();
        assert_eq!(bst2.support(), &[1.0]);
        assert!((bst2.probs()[0] - 1.0).abs() < 1e-15);

        let bst3 = depth_pmf(&ModelParams::bst(), 3).unwrap();
        assert_eq!(bst3.support(), &[1.0, 2.0]);
        assert!((bst3.probs()[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((bst3.probs()[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn depth_pmf_matches_moment_formulas() {
        for p in models() {
            for n in [1u64, 2, 5, 40, 200] {
                let pmf = depth_pmf(&p, n).unwrap();
                pmf.validate().unwrap();
                assert!(
                    (pmf.mean() - depth_mean(&p, n)).abs() < 1e-10,
                    "mean mismatch for {p} at n={n}"
                );
                assert!(
                    (pmf.variance() - depth_variance(&p, n)).abs() < 1e-10,
                    "variance mismatch for {p} at n={n}"
                );
            }
        }
    }

    #[test]
    fn depth_pmf_cap() {
        assert!(matches!(
            depth_pmf(&ModelParams::rt(), DEPTH_PMF_CAP + 1),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn expansion_constants() {
        let pi = std::f64::consts::PI;
        let bst = mean_expansion(&ModelParams::bst());
        assert_eq!(bst.nlogn, 2.0);
        assert!((bst.linear - (2.0 * EULER_GAMMA - 4.0)).abs() < 1e-12);

        let rt = mean_expansion(&ModelParams::rt());
        assert_eq!(rt.nlogn, 1.0);
        assert!((rt.linear - (EULER_GAMMA - 1.0)).abs() < 1e-12);

        // PORT: psi(1/2) = -gamma - 2 ln 2, so b = (gamma + 2 ln 2 - 1)/2.
        let port = mean_expansion(&ModelParams::port());
        assert_eq!(port.nlogn, 0.5);
        let expected = 0.5 * (EULER_GAMMA + 2.0 * std::f64::consts::LN_2 - 1.0);
        assert!((port.linear - expected).abs() < 1e-12);
        assert!((port.linear - 0.481_755_013_010_711_7).abs() < 1e-9);

        assert!(
            (variance_constant(&ModelParams::bst()) - (7.0 - 2.0 * pi * pi / 3.0)).abs() < 1e-12
        );
        assert!((variance_constant(&ModelParams::rt()) - (2.0 - pi * pi / 6.0)).abs() < 1e-12);
        assert!((variance_constant(&ModelParams::port()) - (1.5 - pi * pi / 8.0)).abs() < 1e-12);
    }

    #[test]
    fn moment_table_matches_free_functions() {
        for p in models() {
            let table = MomentTable::build(&p, 300);
            for n in [1u64, 2, 3, 17, 123, 300] {
                let row = table.row(n);
                assert!((row.depth_mean - depth_mean(&p, n)).abs() < 1e-12);
                assert!((row.depth_var - depth_variance(&p, n)).abs() < 1e-12);
                assert!((row.path_mean - mean_path(&p, n)).abs() < 1e-10);
                assert!((row.path_var - var_path(&p, n)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn s_squared_basics() {
        let bst = ModelParams::bst();
        let s = s_squared(&bst, 10_000, 10_000).unwrap();
        // Closed form 2 ln(1e4)/1e4.
        assert!((s.closed_form - 1.842_068_074_395_236_5e-3).abs() < 1e-12);
        // n = horizon: single term E[X_N^2] >= 0.
        assert!(s.truncated >= 0.0);
        assert!(s.truncated < s.closed_form);
        assert!(s_squared(&bst, 1, 10).is_err());
        assert!(s_squared(&bst, 20, 10).is_err());
    }

    #[test]
    fn bernstein_bounds() {
        let bst = ModelParams::bst();
        let b = bernstein_depth_tail(&bst, 1000, 20.0).unwrap();
        let ed = depth_mean(&bst, 1000);
        assert!((b - 2.0 * (-400.0 / (2.0 * ed + 20.0)).exp()).abs() < 1e-15);
        assert!(b <= 2.0);
        // Decreasing in t.
        let mut prev = f64::INFINITY;
        for t in [1.0, 2.0, 5.0, 10.0, 20.0, 50.0] {
            let v = bernstein_depth_tail(&bst, 100, t).unwrap();
            assert!(v < prev);
            prev = v;
        }
        assert!(bernstein_depth_tail(&bst, 100, 0.0).is_err());
    }

    #[test]
    fn path_tail_bound_behavior() {
        let bst = ModelParams::bst();
        let n = 100u64;
        let ed = depth_mean(&bst, n);
        let t = n as f64 * ed;
        let v = path_tail_bound(&bst, n, t).unwrap();
        assert!(v.is_finite() && v > 0.0);
        let mut prev = f64::INFINITY;
        for k in 1..30 {
            let v = path_tail_bound(&bst, n, 50.0 * k as f64).unwrap();
            assert!(v < prev);
            prev = v;
        }
        // t -> infinity drives the bound to zero.
        assert_eq!(path_tail_bound(&bst, n, 1e12).unwrap(), 0.0);
    }

    #[test]
    fn pmf_tv_distance() {
        let a = Pmf::from_pairs(vec![(0.0, 0.5), (1.0, 0.5)]).unwrap();
        let b = Pmf::from_pairs(vec![(0.0, 0.25), (2.0, 0.75)]).unwrap();
        assert!((a.tv_distance(&b) - 0.75).abs() < 1e-15);
        assert_eq!(a.tv_distance(&a), 0.0);
    }
}
