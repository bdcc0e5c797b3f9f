//! Monte Carlo experiments around the martingale tail sum `S_n - S`.
//!
//! The limit `S` is approximated by the trajectory's terminal value `S_N` at
//! a horizon `N`. A configuration passes the proxy-variance guard when
//! `(n log N)/(N log n) <= 0.01`, i.e. when the substitution inflates the
//! tail variance by at most about one percent.
//!
//! Experiments:
//! * [`clt_sample`] - scaled tail-sum samples
//!   `Z = sqrt((beta+m)/m) sqrt(n/log n) (S_n - S_N)`, whose law approaches
//!   the standard normal;
//! * [`moment_estimate`] - empirical `E|Z|^p` against the Gaussian targets;
//! * [`lil_experiment`] - running extremes of the iterated-logarithm scaling
//!   `L_n = sqrt((beta+m)/(2m)) sqrt(n/(log n loglog n)) (S_n - S_N)`;
//! * [`condition_diagnostics`] - numeric partial-sum diagnostics for the
//!   conditions appearing in martingale limit theorems.
//!
//! Replicas run concurrently; every aggregation reduces replica results in
//! index order, so reports do not depend on scheduling.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::exact;
use crate::model::ModelParams;
use crate::profile_poly;
use crate::rng::ReplicaSeed;
use crate::stats;
use crate::tree_sim::{grow, TreeState};
use crate::{Error, Result};

pub use crate::stats::{ks_statistic, std_normal_cdf};

/// Variance-inflation ceiling for the `S ~ S_N` proxy.
pub const PROXY_GUARD_LIMIT: f64 = 0.01;

/// Monte Carlo protocol parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub params: ModelParams,
    /// Observation size n.
    pub n: u64,
    /// Proxy horizon N standing in for the martingale limit.
    pub horizon: u64,
    pub replicas: u64,
    pub master_seed: u64,
    /// Sizes at which iterated-logarithm extremes are tracked.
    #[serde(default)]
    pub checkpoints: Vec<u64>,
    /// Absolute-moment orders to estimate.
    #[serde(default)]
    pub moment_orders: Vec<u32>,
}

impl ExperimentConfig {
    pub fn new(params: ModelParams, n: u64, horizon: u64, replicas: u64, master_seed: u64) -> Self {
        Self {
            params,
            n,
            horizon,
            replicas,
            master_seed,
            checkpoints: Vec::new(),
            moment_orders: vec![2, 3, 4, 6],
        }
    }

    /// `(n log N)/(N log n)`, the relative variance inflation caused by the
    /// proxy; must stay at or below [`PROXY_GUARD_LIMIT`].
    pub fn proxy_ratio(&self) -> f64 {
        (self.n as f64 * (self.horizon as f64).ln()) / (self.horizon as f64 * (self.n as f64).ln())
    }

    pub fn validate_proxy_guard(&self) -> Result<()> {
        if self.n < 2 || self.horizon <= self.n {
            return Err(Error::InvalidConfig(format!(
                "need 2 <= n < horizon, got n={}, horizon={}",
                self.n, self.horizon
            )));
        }
        if self.replicas == 0 {
            return Err(Error::InvalidConfig("replicas must be positive".into()));
        }
        let ratio = self.proxy_ratio();
        if ratio > PROXY_GUARD_LIMIT {
            return Err(Error::InvalidConfig(format!(
                "proxy guard rejected: (n log N)/(N log n) = {ratio:.4} > {PROXY_GUARD_LIMIT}"
            )));
        }
        Ok(())
    }

    /// Validates the iterated-logarithm tracking window: checkpoints must lie
    /// in `[e^e, horizon/100]` so that `log log n > 0` and the proxy error
    /// stays small.
    pub fn validate_lil(&self) -> Result<()> {
        if self.replicas == 0 {
            return Err(Error::InvalidConfig("replicas must be positive".into()));
        }
        let lo = std::f64::consts::E.exp();
        let hi = self.horizon as f64 / 100.0;
        if self.checkpoints.len() < 2 {
            return Err(Error::InvalidConfig(
                "iterated-logarithm tracking needs at least two checkpoints".into(),
            ));
        }
        for &c in &self.checkpoints {
            if (c as f64) < lo {
                return Err(Error::InvalidConfig(format!(
                    "checkpoint {c} below e^e ~ 15.15"
                )));
            }
            if c as f64 > hi {
                return Err(Error::InvalidConfig(format!(
                    "checkpoint {c} above horizon/100 = {hi}"
                )));
            }
        }
        Ok(())
    }
}

/// Every integer size in `[from, to]`.
pub fn dense_checkpoints(from: u64, to: u64) -> Vec<u64> {
    (from..=to).collect()
}

/// The CLT prefactor `sqrt((beta+m)/m) sqrt(n/log n)`.
pub fn clt_prefactor(params: &ModelParams, n: u64) -> f64 {
    let nf = n as f64;
    (params.weight_step() / params.m() as f64).sqrt() * (nf / nf.ln()).sqrt()
}

/// The iterated-logarithm prefactor
/// `sqrt((beta+m)/(2m)) sqrt(n/(log n loglog n))`.
pub fn lil_prefactor(params: &ModelParams, n: u64) -> f64 {
    let nf = n as f64;
    (params.weight_step() / (2.0 * params.m() as f64)).sqrt()
        * (nf / (nf.ln() * nf.ln().ln())).sqrt()
}

/// Gaussian absolute moment `E|N|^p = 2^{p/2} Gamma((p+1)/2) / sqrt(pi)`.
pub fn gaussian_abs_moment(p: u32) -> f64 {
    let pf = p as f64;
    (0.5 * pf * std::f64::consts::LN_2 + crate::special::ln_gamma((pf + 1.0) / 2.0)
        - 0.5 * std::f64::consts::PI.ln())
    .exp()
}

/// Empirical mean of `|x|^p`.
pub fn abs_moment(samples: &[f64], p: u32) -> f64 {
    samples.iter().map(|x| x.abs().powi(p as i32)).sum::<f64>() / samples.len() as f64
}

/// One scaled tail-sum sample per replica:
/// `Z = sqrt((beta+m)/m) sqrt(n/log n) (S_n - S_N)`.
pub fn clt_sample(config: &ExperimentConfig) -> Result<Vec<f64>> {
    config.validate_proxy_guard()?;
    let pref = clt_prefactor(&config.params, config.n);
    (0..config.replicas)
        .into_par_iter()
        .map(|r| {
            let seed = ReplicaSeed::new(config.master_seed, r);
            let (traj, _) = grow(
                &config.params,
                config.horizon,
                seed,
                &[config.n, config.horizon],
            )?;
            let s_n = traj
                .row_at(config.n)
                .expect("checkpoint recorded")
                .martingale;
            let s_horizon = traj.final_row().martingale;
            Ok(pref * (s_n - s_horizon))
        })
        .collect()
}

/// Empirical scaled p-th absolute moment; the prefactor in `Z` already
/// normalizes, so the Gaussian limit target is `E|N|^p`.
pub fn moment_estimate(config: &ExperimentConfig, p: u32) -> Result<f64> {
    let samples = clt_sample(config)?;
    Ok(abs_moment(&samples, p))
}

/// Iterated-logarithm extremes of one experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LilReport {
    pub checkpoints_from: u64,
    pub checkpoints_to: u64,
    /// Final running max of `L_n` per replica, in replica order.
    pub per_replica_max: Vec<f64>,
    /// Final running min of `L_n` per replica.
    pub per_replica_min: Vec<f64>,
    pub pooled_max: f64,
    pub pooled_min: f64,
}

fn lil_one_replica(config: &ExperimentConfig, replica: u64) -> Result<(f64, f64)> {
    let trace = lil_running_trace(config, replica)?;
    let last = trace.last().expect("at least one checkpoint");
    Ok((last.1, last.2))
}

/// Per-checkpoint running `(max, min)` of `L_n` for one replica; exposed for
/// trend inspection.
pub fn lil_running_trace(config: &ExperimentConfig, replica: u64) -> Result<Vec<(u64, f64, f64)>> {
    let seed = ReplicaSeed::new(config.master_seed, replica);
    let (traj, _) = grow(&config.params, config.horizon, seed, &config.checkpoints)?;
    let s_horizon = traj.final_row().martingale;
    let mut out = Vec::with_capacity(config.checkpoints.len());
    let mut running_max = f64::NEG_INFINITY;
    let mut running_min = f64::INFINITY;
    for row in &traj.rows {
        if row.n == config.horizon && !config.checkpoints.contains(&config.horizon) {
            continue;
        }
        let l = lil_prefactor(&config.params, row.n) * (row.martingale - s_horizon);
        running_max = running_max.max(l);
        running_min = running_min.min(l);
        out.push((row.n, running_max, running_min));
    }
    Ok(out)
}

/// Runs the iterated-logarithm experiment across replicas.
pub fn lil_experiment(config: &ExperimentConfig) -> Result<LilReport> {
    config.validate_lil()?;
    let extremes: Vec<(f64, f64)> = (0..config.replicas)
        .into_par_iter()
        .map(|r| lil_one_replica(config, r))
        .collect::<Result<_>>()?;
    let pooled_max = extremes
        .iter()
        .map(|e| e.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let pooled_min = extremes.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
    Ok(LilReport {
        checkpoints_from: *config.checkpoints.first().unwrap(),
        checkpoints_to: *config.checkpoints.last().unwrap(),
        per_replica_max: extremes.iter().map(|e| e.0).collect(),
        per_replica_min: extremes.iter().map(|e| e.1).collect(),
        pooled_max,
        pooled_min,
    })
}

/// Configuration of the martingale-condition diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    pub params: ModelParams,
    /// Sizes n at which the tail ratio `r_n` is evaluated.
    pub n_marks: Vec<u64>,
    pub horizon: u64,
    pub replicas: u64,
    pub master_seed: u64,
    /// Epsilon grid for the Lindeberg-type truncated sum.
    pub epsilons: Vec<f64>,
    /// Sizes at which boundedness trends are recorded.
    pub trend_checkpoints: Vec<u64>,
    /// Orders p for the `E|S_n|^p` boundedness trend.
    pub moment_orders: Vec<u32>,
}

impl DiagnosticsConfig {
    pub fn new(params: ModelParams, horizon: u64, replicas: u64, master_seed: u64) -> Self {
        let trend = [100u64, 1_000, 10_000, 100_000, 1_000_000]
            .into_iter()
            .filter(|&t| t <= horizon)
            .collect();
        Self {
            params,
            n_marks: vec![1_000],
            horizon,
            replicas,
            master_seed,
            epsilons: vec![0.25, 0.5, 1.0],
            trend_checkpoints: trend,
            moment_orders: vec![4, 6],
        }
    }
}

/// Replica-averaged condition diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionReport {
    pub n_marks: Vec<u64>,
    /// Tail ratio `r_n = s_n^{-2} sum_{i=n}^{N} E[X_i^2 | F_{i-1}]` with the
    /// exact truncated `s_n^2` (same horizon in numerator and denominator);
    /// its expectation is exactly 1 by the tower property.
    pub r_exact: Vec<f64>,
    /// Same numerator against the closed form `s_n^2 ~ theta log(n)/n`; the
    /// closed form carries an O(1/log n) relative error, which this ratio
    /// makes visible.
    pub r_closed_form: Vec<f64>,
    /// `s_N^2 / s_n^2 ~ (n log N)/(N log n)` per mark: the share of the tail
    /// lost to truncation (reported, not asserted).
    pub truncation_ratio: Vec<f64>,
    /// Lindeberg-type truncated sums
    /// `s_n^{-2} sum_{i=n}^{N} E[X_i^2 1{|X_i| >= eps s_n}]`,
    /// one row per mark, one entry per epsilon.
    pub lindeberg_sums: Vec<Vec<f64>>,
    /// Partial sums `sum_{i<=t} s_i^{-4} X_i^4` (closed-form `s_i`),
    /// replica-averaged, at the trend checkpoints.
    pub fourth_moment_partial_sums: Vec<(u64, f64)>,
    /// `E|S_n|^p` at the trend checkpoints, per order p.
    pub martingale_moment_trend: BTreeMap<u32, Vec<(u64, f64)>>,
}

struct ReplicaDiagnostics {
    tail_cond: Vec<f64>,
    lindeberg: Vec<Vec<f64>>,
    fourth_partial: Vec<f64>,
    s_moments: Vec<Vec<f64>>, // [order][checkpoint]
}

fn diagnostics_one_replica(
    config: &DiagnosticsConfig,
    s_n_exact: &[f64],
    replica: u64,
) -> ReplicaDiagnostics {
    let params = &config.params;
    let mut state = TreeState::with_capacity(params, config.horizon as usize);
    let mut rng = ReplicaSeed::new(config.master_seed, replica).rng();
    let marks = &config.n_marks;
    let mut cond_total = 0.0f64; // sum_{i<=current} E[X_i^2 | F_{i-1}]
    let mut cond_prefix = vec![0.0f64; marks.len()];
    let mut lindeberg = vec![vec![0.0f64; config.epsilons.len()]; marks.len()];
    let mut fourth_sum = 0.0f64;
    let mut fourth_partial = vec![0.0f64; config.trend_checkpoints.len()];
    let mut s_moments =
        vec![vec![0.0f64; config.trend_checkpoints.len()]; config.moment_orders.len()];
    let theta = params.theta();

    while state.size() < config.horizon {
        let k = state.size(); // inserting node k+1
        for (mi, &mark) in marks.iter().enumerate() {
            if k + 1 == mark {
                cond_prefix[mi] = cond_total;
            }
        }
        cond_total += profile_poly::conditional_increment_variance(&state);
        let s_before = state.martingale_value();
        state.insert_step(&mut rng);
        let i = state.size(); // the index of this increment
        let x = state.martingale_value() - s_before;

        for ((&mark, thresholds), &s_n) in marks.iter().zip(&mut lindeberg).zip(s_n_exact) {
            if i >= mark {
                for (cell, &eps) in thresholds.iter_mut().zip(&config.epsilons) {
                    if x.abs() >= eps * s_n {
                        *cell += x * x;
                    }
                }
            }
        }
        if i >= 2 {
            let fi = i as f64;
            let inv_s2 = fi / (theta * fi.ln());
            fourth_sum += inv_s2 * inv_s2 * x * x * x * x;
        }
        if let Some(ci) = config.trend_checkpoints.iter().position(|&t| t == i) {
            fourth_partial[ci] = fourth_sum;
            for (oi, &p) in config.moment_orders.iter().enumerate() {
                s_moments[oi][ci] = state.martingale_value().abs().powi(p as i32);
            }
        }
    }
    let tail_cond = cond_prefix.iter().map(|pref| cond_total - pref).collect();
    ReplicaDiagnostics {
        tail_cond,
        lindeberg,
        fourth_partial,
        s_moments,
    }
}

/// Runs the condition diagnostics: the tail ratio for the almost-sure
/// conditional-variance condition, Lindeberg-type truncated sums, the
/// fourth-moment series and the `E|S_n|^p` boundedness trend.
pub fn condition_diagnostics(config: &DiagnosticsConfig) -> Result<ConditionReport> {
    if config.n_marks.is_empty() || config.replicas == 0 {
        return Err(Error::InvalidConfig(
            "diagnostics need at least one mark and one replica".into(),
        ));
    }
    for &mark in &config.n_marks {
        if mark < 2 || mark >= config.horizon {
            return Err(Error::InvalidConfig(format!(
                "mark {mark} outside [2, horizon)"
            )));
        }
    }
    // Exact truncated s_n^2 (and s_n for the Lindeberg thresholds).
    let tails: Vec<exact::TailSumVariance> = config
        .n_marks
        .iter()
        .map(|&mark| exact::s_squared(&config.params, mark, config.horizon))
        .collect::<Result<_>>()?;
    let s_n_exact: Vec<f64> = tails.iter().map(|t| t.truncated.sqrt()).collect();

    let replicas: Vec<ReplicaDiagnostics> = (0..config.replicas)
        .into_par_iter()
        .map(|r| diagnostics_one_replica(config, &s_n_exact, r))
        .collect();

    let rn = config.replicas as f64;
    let mut r_exact = Vec::new();
    let mut r_closed = Vec::new();
    let mut truncation = Vec::new();
    let mut lindeberg = vec![vec![0.0f64; config.epsilons.len()]; config.n_marks.len()];
    for (mi, (&mark, tail)) in config.n_marks.iter().zip(&tails).enumerate() {
        let mean_tail = replicas.iter().map(|d| d.tail_cond[mi]).sum::<f64>() / rn;
        r_exact.push(mean_tail / tail.truncated);
        r_closed.push(mean_tail / tail.closed_form);
        truncation.push(
            (mark as f64 * (config.horizon as f64).ln())
                / (config.horizon as f64 * (mark as f64).ln()),
        );
        for (ei, cell) in lindeberg[mi].iter_mut().enumerate() {
            let mean = replicas.iter().map(|d| d.lindeberg[mi][ei]).sum::<f64>() / rn;
            *cell = mean / tail.truncated;
        }
    }
    let fourth: Vec<(u64, f64)> = config
        .trend_checkpoints
        .iter()
        .enumerate()
        .map(|(ci, &t)| {
            (
                t,
                replicas.iter().map(|d| d.fourth_partial[ci]).sum::<f64>() / rn,
            )
        })
        .collect();
    let mut s_trend = BTreeMap::new();
    for (oi, &p) in config.moment_orders.iter().enumerate() {
        let series = config
            .trend_checkpoints
            .iter()
            .enumerate()
            .map(|(ci, &t)| {
                (
                    t,
                    replicas.iter().map(|d| d.s_moments[oi][ci]).sum::<f64>() / rn,
                )
            })
            .collect();
        s_trend.insert(p, series);
    }
    Ok(ConditionReport {
        n_marks: config.n_marks.clone(),
        r_exact,
        r_closed_form: r_closed,
        truncation_ratio: truncation,
        lindeberg_sums: lindeberg,
        fourth_moment_partial_sums: fourth,
        martingale_moment_trend: s_trend,
    })
}

/// Aggregate report persisted by the command-line experiments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: String,
    pub config: ExperimentConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_sd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ks_distance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ks_p_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moment_estimates: Option<BTreeMap<u32, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moment_targets: Option<BTreeMap<u32, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lil: Option<LilReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conditions: Option<ConditionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<f64>>,
    /// Timing only; everything else in the report reproduces byte-identically
    /// for a fixed config.
    pub meta: RunMeta,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub wall_time_secs: f64,
}

/// Full CLT experiment: samples, KS distance against the standard normal and
/// the requested absolute moments.
pub fn clt_experiment(config: &ExperimentConfig, keep_samples: bool) -> Result<ExperimentReport> {
    let start = std::time::Instant::now();
    let samples = clt_sample(config)?;
    let (mean, var) = stats::mean_and_variance(&samples)?;
    let d = stats::ks_statistic(&samples, stats::std_normal_cdf)?;
    let mut estimates = BTreeMap::new();
    let mut targets = BTreeMap::new();
    for &p in &config.moment_orders {
        estimates.insert(p, abs_moment(&samples, p));
        targets.insert(p, gaussian_abs_moment(p));
    }
    Ok(ExperimentReport {
        kind: "clt".into(),
        config: config.clone(),
        sample_mean: Some(mean),
        sample_sd: Some(var.sqrt()),
        ks_distance: Some(d),
        ks_p_value: Some(stats::ks_p_value(d, samples.len())),
        moment_estimates: Some(estimates),
        moment_targets: Some(targets),
        lil: None,
        conditions: None,
        samples: keep_samples.then_some(samples),
        meta: RunMeta {
            wall_time_secs: start.elapsed().as_secs_f64(),
        },
    })
}
