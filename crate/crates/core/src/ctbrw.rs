//! Continuous-time branching random walk embedding of the tree process.
//!
//! Individuals sit at integer positions and die at unit rate, independently.
//! For `beta` in {0, 1, 2, ...} with m = 1, a death at position x creates
//! `beta + 1` individuals at x and one at x + 1; the process starts with a
//! single individual at 0. For `beta = -1` (m-ary trees) a death at x creates
//! m individuals at x + 1 and the process starts with m individuals at 0,
//! the rule forced by matching the external-slot dynamics, since the
//! occupancy after the n-th death is distributed like the shifted external
//! profile: `rho_{tau_n}(k) = U_{k+1}(n+1)`.

use rand::Rng;
use serde::Serialize;

use crate::model::ModelParams;
use crate::oracle;
use crate::rng::ReplicaSeed;
use crate::stats;
use crate::{Error, Result};

/// State of the walk after some number of death events.
#[derive(Debug, Clone)]
pub struct CtState {
    params: ModelParams,
    occupancy: Vec<u64>,
    alive_total: u64,
    death_times: Vec<f64>,
    clock: f64,
}

impl CtState {
    /// Number of alive individuals at each position, trailing zeros trimmed.
    pub fn occupancy(&self) -> Vec<u64> {
        let mut v = self.occupancy.clone();
        while v.last() == Some(&0) {
            v.pop();
        }
        v
    }

    pub fn alive_total(&self) -> u64 {
        self.alive_total
    }

    /// The recorded death times `tau_1 < tau_2 < ...`.
    pub fn death_times(&self) -> &[f64] {
        &self.death_times
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    /// Largest occupied position.
    pub fn height(&self) -> usize {
        self.occupancy.iter().rposition(|&c| c > 0).unwrap_or(0)
    }
}

fn check_integer_beta(params: &ModelParams) -> Result<i64> {
    if !params.is_integer_beta() {
        return Err(Error::Domain(format!(
            "the continuous-time embedding needs integer beta, got {}",
            params.beta()
        )));
    }
    Ok(params.beta() as i64)
}

/// Runs the walk for `n_deaths` death events.
pub fn simulate(params: &ModelParams, n_deaths: u64, seed: ReplicaSeed) -> Result<CtState> {
    let beta = check_integer_beta(params)?;
    let m = params.m() as u64;
    let mut state = CtState {
        params: *params,
        occupancy: if beta >= 0 { vec![1] } else { vec![m] },
        alive_total: if beta >= 0 { 1 } else { m },
        death_times: Vec::with_capacity(n_deaths as usize),
        clock: 0.0,
    };
    let mut rng = seed.rng();
    for _ in 0..n_deaths {
        step(&mut state, &mut rng, beta, m);
    }
    // After n deaths the population has alpha_{n+1} members.
    debug_assert_eq!(
        state.alive_total as f64,
        state
            .params
            .total_weight(state.death_times.len() as u64 + 1)
    );
    Ok(state)
}

fn step<R: Rng>(state: &mut CtState, rng: &mut R, beta: i64, m: u64) {
    // Exponential waiting time at rate = population size.
    let u: f64 = rng.random();
    state.clock += -(1.0 - u).ln() / state.alive_total as f64;
    state.death_times.push(state.clock);

    // Uniformly chosen victim; positions carry no structure beyond the count.
    let mut v = rng.random_range(0..state.alive_total);
    let mut x = 0usize;
    loop {
        let c = state.occupancy[x];
        if v < c {
            break;
        }
        v -= c;
        x += 1;
    }

    if state.occupancy.len() <= x + 1 {
        state.occupancy.resize(x + 2, 0);
    }
    if beta >= 0 {
        // beta + 2 births: beta + 1 at x (net +beta) and one at x + 1.
        state.occupancy[x] += beta as u64;
        state.occupancy[x + 1] += 1;
        state.alive_total += beta as u64 + 1;
    } else {
        // m-ary rule: the victim is replaced by m individuals one level up.
        state.occupancy[x] -= 1;
        state.occupancy[x + 1] += m;
        state.alive_total += m - 1;
    }
}

/// Result of the chi-square coupling check between the walk occupancy after
/// `n` deaths and the exact law of the shifted external profile of `T_{n+1}`.
#[derive(Debug, Clone, Serialize)]
pub struct CouplingReport {
    pub replicas: u64,
    pub chi_square: f64,
    pub dof: u32,
    pub p_value: f64,
    /// Simulated occupancy vectors outside the exact support (should be 0).
    pub unexpected: u64,
    pub cells: usize,
}

/// Chi-square goodness-of-fit p-value comparing the empirical occupancy law
/// after `n` deaths against the enumerated law of `(U_{k+1}(n+1))_k`.
///
/// Expected cells below 5 are pooled. Degenerate laws (single support point)
/// return p = 1 when every replica matches and p = 0 otherwise.
pub fn coupling_statistic(
    params: &ModelParams,
    n: u64,
    replicas: u64,
    master_seed: u64,
) -> Result<CouplingReport> {
    check_integer_beta(params)?;
    if n > 6 {
        return Err(Error::InvalidConfig(format!(
            "coupling check keeps the profile state space small: n <= 6, got {n}"
        )));
    }
    if replicas < 10_000 {
        return Err(Error::InsufficientReplicas(format!(
            "coupling check needs at least 10^4 replicas, got {replicas}"
        )));
    }
    let law = oracle::external_profile_law(params, n + 1)?;
    let index: std::collections::HashMap<Vec<u64>, usize> = law
        .iter()
        .enumerate()
        .map(|(i, (k, _))| (k.clone(), i))
        .collect();
    let mut observed = vec![0u64; law.len()];
    let mut unexpected = 0u64;
    for r in 0..replicas {
        let state = simulate(params, n, ReplicaSeed::new(master_seed, r))?;
        match index.get(&state.occupancy()) {
            Some(&i) => observed[i] += 1,
            None => unexpected += 1,
        }
    }
    if law.len() == 1 {
        return Ok(CouplingReport {
            replicas,
            chi_square: 0.0,
            dof: 0,
            p_value: if unexpected == 0 { 1.0 } else { 0.0 },
            unexpected,
            cells: 1,
        });
    }
    if unexpected > 0 {
        return Ok(CouplingReport {
            replicas,
            chi_square: f64::INFINITY,
            dof: law.len() as u32 - 1,
            p_value: 0.0,
            unexpected,
            cells: law.len(),
        });
    }
    let expected: Vec<f64> = law.iter().map(|(_, p)| p * replicas as f64).collect();
    let (chi_square, dof, p_value) = stats::chi_square_gof(&observed, &expected, 5.0)?;
    Ok(CouplingReport {
        replicas,
        chi_square,
        dof,
        p_value,
        unexpected,
        cells: dof as usize + 1,
    })
}
