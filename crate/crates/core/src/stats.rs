//! Statistical acceptance machinery: the standard normal CDF, the two-sided
//! Kolmogorov-Smirnov distance, and chi-square tail probabilities via the
//! regularized incomplete gamma function.

use crate::special::ln_gamma;
use crate::{Error, Result};

const GAMMA_EPS: f64 = 1e-15;
const GAMMA_MAX_ITER: usize = 500;

/// Lower regularized incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        1.0 - gamma_q_cf(a, x)
    }
}

/// Upper regularized incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_cf(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..GAMMA_MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * GAMMA_EPS {
            break;
        }
    }
    let log_prefactor = a * x.ln() - x - ln_gamma(a);
    if log_prefactor < -700.0 {
        return 0.0;
    }
    sum * log_prefactor.exp()
}

// Modified Lentz continued fraction for Q(a, x), valid for x >= a + 1.
fn gamma_q_cf(a: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    let log_prefactor = a * x.ln() - x - ln_gamma(a);
    if log_prefactor < -700.0 {
        return 0.0;
    }
    log_prefactor.exp() * h
}

/// Standard normal CDF, accurate to well below 1e-10 everywhere.
pub fn std_normal_cdf(x: f64) -> f64 {
    if x == 0.0 {
        return 0.5;
    }
    let half = 0.5 * gamma_q(0.5, 0.5 * x * x);
    if x > 0.0 {
        1.0 - half
    } else {
        half
    }
}

/// Two-sided Kolmogorov-Smirnov distance `sup_x |F_hat(x) - F(x)|` between
/// the sample empirical CDF and a reference CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN samples"));
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i as f64 + 1.0) / n - f);
    }
    Ok(d)
}

/// Asymptotic p-value of the one-sample KS distance (Kolmogorov distribution
/// with the standard small-sample adjustment).
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sqrt_n = (n as f64).sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Chi-square survival function `P(X > x)` with `dof` degrees of freedom.
pub fn chi_square_sf(x: f64, dof: u32) -> f64 {
    debug_assert!(dof >= 1);
    if x <= 0.0 {
        return 1.0;
    }
    gamma_q(dof as f64 / 2.0, x / 2.0)
}

/// Sample mean and unbiased variance.
pub fn mean_and_variance(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() == 1 {
        return Ok((mean, 0.0));
    }
    let ss = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    Ok((mean, ss / (n - 1.0)))
}

/// Pearson correlation of two equal-length samples.
pub fn correlation(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::EmptySample);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Chi-square goodness-of-fit against a finite law, pooling the smallest
/// expected cells until every cell expects at least `min_expected`.
///
/// Returns the statistic, the degrees of freedom and the p-value.
pub fn chi_square_gof(
    observed: &[u64],
    expected: &[f64],
    min_expected: f64,
) -> Result<(f64, u32, f64)> {
    if observed.len() != expected.len() || observed.is_empty() {
        return Err(Error::InvalidConfig(
            "observed/expected cell mismatch".into(),
        ));
    }
    // Pool from the smallest expected counts upward.
    let mut order: Vec<usize> = (0..expected.len()).collect();
    order.sort_by(|&a, &b| expected[a].partial_cmp(&expected[b]).unwrap());
    let mut cells: Vec<(u64, f64)> = Vec::new();
    let mut pool_obs = 0u64;
    let mut pool_exp = 0.0f64;
    for &i in &order {
        pool_obs += observed[i];
        pool_exp += expected[i];
        if pool_exp >= min_expected {
            cells.push((pool_obs, pool_exp));
            pool_obs = 0;
            pool_exp = 0.0;
        }
    }
    if pool_exp > 0.0 || pool_obs > 0 {
        // Leftover small pool merges into the last cell.
        if let Some(last) = cells.last_mut() {
            last.0 += pool_obs;
            last.1 += pool_exp;
        } else {
            return Err(Error::InsufficientReplicas(format!(
                "total expected count {pool_exp} below the minimum cell count {min_expected}"
            )));
        }
    }
    if cells.len() < 2 {
        return Err(Error::InsufficientReplicas(
            "fewer than two cells left after pooling".into(),
        ));
    }
    let mut stat = 0.0;
    for &(o, e) in &cells {
        let diff = o as f64 - e;
        stat += diff * diff / e;
    }
    let dof = cells.len() as u32 - 1;
    Ok((stat, dof, chi_square_sf(stat, dof)))
}
