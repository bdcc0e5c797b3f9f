//! Profile polynomial machinery.
//!
//! For a tree of size n with external profile `U_k(n)` the profile polynomial
//! is `W_n(z) = sum_k U_k(n) z^k`; its deterministic normalization is
//! `C_n(z) = E[W_n(z)] = m z prod_{j=1}^{n-1} (alpha_j + beta + m z)/alpha_j`,
//! and `M_n(z) = W_n(z)/C_n(z)` is a mean-one martingale for every z with
//! positive real part. Derivatives at z = 1 tie the profile to the path
//! length: `W_n'(1) = (beta+m) P_n + n m` and `M_n'(1) = S_n`.

use num_complex::Complex64;

use crate::exact::Kahan;
use crate::model::ModelParams;
use crate::tree_sim::TreeState;
use crate::{Error, Result};

/// `W_n(z)`, Horner evaluation over the external profile.
pub fn eval_w(state: &TreeState, z: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for &u in state.external_profile().iter().rev() {
        acc = acc * z + u;
    }
    acc
}

/// `C_n(z)` by summed complex logarithms of the product factors.
///
/// Every factor `alpha_j + beta + m z` has positive real part whenever
/// `Re(z) > 0`, so the principal logarithm never crosses a branch cut; the
/// evaluation is enforced to that half-plane. `z = 1` returns `alpha_n`
/// exactly.
pub fn eval_c(params: &ModelParams, n: u64, z: Complex64) -> Result<Complex64> {
    if n < 1 {
        return Err(Error::Domain("eval_c requires n >= 1".into()));
    }
    if z.re.is_nan() || z.re <= 0.0 {
        return Err(Error::Domain(format!(
            "profile polynomial normalizer needs Re(z) > 0, got {z}"
        )));
    }
    let m = params.m() as f64;
    if z == Complex64::new(1.0, 0.0) {
        return Ok(Complex64::new(params.total_weight(n), 0.0));
    }
    let beta = params.beta();
    let mut log_re = Kahan::default();
    let mut log_im = Kahan::default();
    for j in 1..n {
        let alpha = params.total_weight(j);
        let f = (Complex64::new(alpha + beta, 0.0) + m * z) / alpha;
        let l = f.ln();
        log_re.add(l.re);
        log_im.add(l.im);
    }
    Ok(m * z * Complex64::new(log_re.value(), log_im.value()).exp())
}

/// `M_n(z) = W_n(z)/C_n(z)`.
pub fn eval_m(state: &TreeState, z: Complex64) -> Result<Complex64> {
    let c = eval_c(state.params(), state.size(), z)?;
    if c.norm() < 1e-300 {
        return Err(Error::DegenerateNormalizer {
            magnitude: c.norm(),
        });
    }
    Ok(eval_w(state, z) / c)
}

/// One profile-polynomial evaluation: the triple `(W, C, M)` at a point.
#[derive(Debug, Clone, Copy)]
pub struct ProfileEval {
    pub n: u64,
    pub z: Complex64,
    pub w: Complex64,
    pub c: Complex64,
    pub m: Complex64,
}

pub fn evaluate(state: &TreeState, z: Complex64) -> Result<ProfileEval> {
    let c = eval_c(state.params(), state.size(), z)?;
    if c.norm() < 1e-300 {
        return Err(Error::DegenerateNormalizer {
            magnitude: c.norm(),
        });
    }
    let w = eval_w(state, z);
    Ok(ProfileEval {
        n: state.size(),
        z,
        w,
        c,
        m: w / c,
    })
}

/// Incremental accumulator for `C_n(z)` along a growth run, so that a
/// trajectory can evaluate `M_n(z)` at checkpoints in O(1) extra work per
/// insertion.
#[derive(Debug, Clone)]
pub struct NormalizerProduct {
    params: ModelParams,
    z: Complex64,
    size: u64,
    log_re: Kahan,
    log_im: Kahan,
}

impl NormalizerProduct {
    /// Accumulator at size 1 (`C_1(z) = m z`).
    pub fn new(params: &ModelParams, z: Complex64) -> Result<Self> {
        if z.re.is_nan() || z.re <= 0.0 {
            return Err(Error::Domain(format!(
                "profile polynomial normalizer needs Re(z) > 0, got {z}"
            )));
        }
        Ok(Self {
            params: *params,
            z,
            size: 1,
            log_re: Kahan::default(),
            log_im: Kahan::default(),
        })
    }

    /// Absorbs the factor for the insertion that grew the tree to `size + 1`.
    pub fn advance(&mut self) {
        let alpha = self.params.total_weight(self.size);
        let f = (Complex64::new(alpha + self.params.beta(), 0.0) + self.params.m() as f64 * self.z)
            / alpha;
        let l = f.ln();
        self.log_re.add(l.re);
        self.log_im.add(l.im);
        self.size += 1;
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    pub fn eval(&self) -> Complex64 {
        self.params.m() as f64
            * self.z
            * Complex64::new(self.log_re.value(), self.log_im.value()).exp()
    }
}

/// Profile-polynomial derivatives at z = 1 for one tree state.
#[derive(Debug, Clone, Copy)]
pub struct DerivativeBundle {
    /// `W_n(1) = alpha_n`.
    pub w_at_one: f64,
    /// `W_n'(1) = E_n = (beta+m) P_n + n m`.
    pub w_prime: f64,
    /// `W_n''(1)`.
    pub w_second: f64,
    /// `C_n(1) = alpha_n`.
    pub c_at_one: f64,
    /// `C_n'(1) = mu_n`.
    pub c_prime: f64,
    /// `C_n''(1)`.
    pub c_second: f64,
    /// `M_n'(1) = S_n`.
    pub m_prime: f64,
    /// `M_n''(1)`.
    pub m_second: f64,
    /// `E[D_{n+1}^2 | F_n]`, recovered from
    /// `W_n''(1) = alpha_n E[D_{n+1}^2|F_n] - E_n`.
    pub cond_depth_square: f64,
}

/// Evaluates the derivative bundle: `W` derivatives by direct profile sums
/// (exact integers for integer `beta`), `C` derivatives by differentiating
/// the product form, `M` derivatives assembled by the product rule
/// `M''(1) = (W'' - C'')/alpha - 2 C' (W' - C') / alpha^2`.
pub fn derivatives_at_one(state: &TreeState) -> DerivativeBundle {
    let params = state.params();
    let m = params.m() as f64;
    let mut w0 = Kahan::default();
    let mut w1 = Kahan::default();
    let mut w2 = Kahan::default();
    for (k, &u) in state.external_profile().iter().enumerate() {
        let kf = k as f64;
        w0.add(u);
        w1.add(kf * u);
        w2.add(kf * (kf - 1.0) * u);
    }
    let alpha = state.total_weight();
    let t1 = state.inv_alpha_tail();
    let t2 = state.inv_alpha_sq_tail();
    let ratio1 = 1.0 + m * t1; // C'(1)/alpha_n
    let c_prime = alpha * ratio1;
    let c_second = alpha * (ratio1 * ratio1 - 1.0 - m * m * t2);
    let w_prime = w1.value();
    let w_second = w2.value();
    let m_prime = (w_prime - c_prime) / alpha;
    let m_second =
        (w_second - c_second) / alpha - 2.0 * c_prime * (w_prime - c_prime) / (alpha * alpha);
    DerivativeBundle {
        w_at_one: w0.value(),
        w_prime,
        w_second,
        c_at_one: alpha,
        c_prime,
        c_second,
        m_prime,
        m_second,
        cond_depth_square: (w_second + w_prime) / alpha,
    }
}

/// Conditional variance of the next martingale increment,
/// `E[X_{n+1}^2 | F_n] = ((beta+m)/alpha_{n+1})^2
///     (Var(D_{n+1}) + M_n''(1) + S_n - S_n^2)`,
/// with every ingredient read off the state's running sums in O(1).
pub fn conditional_increment_variance(state: &TreeState) -> f64 {
    let params = state.params();
    let m = params.m() as f64;
    let alpha = state.total_weight();
    let alpha_next = params.total_weight(state.size() + 1);
    let ratio1 = 1.0 + m * state.inv_alpha_tail();
    let c_prime = alpha * ratio1;
    let c_second = alpha * (ratio1 * ratio1 - 1.0 - m * m * state.inv_alpha_sq_tail());
    let w_prime = state.external_path_length();
    let w_second = state.w_second_at_one();
    let m_second =
        (w_second - c_second) / alpha - 2.0 * c_prime * (w_prime - c_prime) / (alpha * alpha);
    let s = state.martingale_value();
    let r = params.weight_step() / alpha_next;
    r * r * (state.next_depth_variance() + m_second + s - s * s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact;
    use crate::rng::ReplicaSeed;
    use crate::tree_sim::grow;

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
    fn w_of_initial_tree_is_mz() {
        for p in models() {
            let state = TreeState::init(&p);
            for z in [
                Complex64::new(1.0, 0.0),
                Complex64::new(0.3, -0.7),
                Complex64::new(2.0, 1.0),
            ] {
                let diff = (eval_w(&state, z) - p.m() as f64 * z).norm();
                assert!(diff < 1e-14);
            }
        }
    }

    #[test]
    fn w_at_one_is_total_weight() {
        for p in models() {
            let (_, state) = grow(&p, 700, ReplicaSeed::new(2, 0), &[]).unwrap();
            let w = eval_w(&state, Complex64::new(1.0, 0.0));
            assert_eq!(w.im, 0.0);
            assert_eq!(w.re, state.total_weight());
        }
    }

    #[test]
    fn w_on_two_node_bst() {
        let mut state = TreeState::init(&ModelParams::bst());
        state.insert_at(0);
        // Profile (U_1, U_2) = (1, 2): W(2) = 1*2 + 2*4 = 10.
        let w = eval_w(&state, Complex64::new(2.0, 0.0));
        assert_eq!(w.re, 10.0);
        assert_eq!(w.im, 0.0);
    }

    #[test]
    fn c_small_cases() {
        // n = 1: C_1(z) = m z.
        for p in models() {
            let z = Complex64::new(0.9, 0.4);
            let c = eval_c(&p, 1, z).unwrap();
            assert!((c - p.m() as f64 * z).norm() < 1e-14);
        }
        // z = 1: alpha_n exactly.
        for p in models() {
            for n in [1u64, 2, 5, 100] {
                let c = eval_c(&p, n, Complex64::new(1.0, 0.0)).unwrap();
                assert_eq!(c.re, p.total_weight(n));
            }
        }
        // BST n = 2 by hand: 2 * (2 - 1 + 2)/2 = 3.
        let c = eval_c(&ModelParams::bst(), 2, Complex64::new(1.0 + 1e-12, 0.0)).unwrap();
        assert!((c.re - 3.0).abs() < 1e-9);
        assert!(eval_c(&ModelParams::rt(), 3, Complex64::new(-1.0, 0.0)).is_err());
    }

    #[test]
    fn c_log_product_matches_direct_product() {
        for p in models() {
            for z in [Complex64::new(1.1, 0.05), Complex64::new(0.8, -0.2)] {
                let n = 400u64;
                let mut direct = p.m() as f64 * z;
                for j in 1..n {
                    let a = p.total_weight(j);
                    direct *= (Complex64::new(a + p.beta(), 0.0) + p.m() as f64 * z) / a;
                }
                let via_logs = eval_c(&p, n, z).unwrap();
                assert!(
                    (via_logs - direct).norm() / direct.norm() < 1e-11,
                    "{p} at z={z}"
                );
            }
        }
    }

    #[test]
    fn normalizer_product_tracks_eval_c() {
        let p = ModelParams::port();
        let z = Complex64::new(1.05, -0.03);
        let mut acc = NormalizerProduct::new(&p, z).unwrap();
        for n in 1..200u64 {
            let full = eval_c(&p, n, z).unwrap();
            assert!((acc.eval() - full).norm() / full.norm() < 1e-12, "n={n}");
            acc.advance();
        }
    }

    #[test]
    fn m_is_one_at_z_one_and_on_t1() {
        for p in models() {
            let (_, state) = grow(&p, 300, ReplicaSeed::new(3, 1), &[]).unwrap();
            let m = eval_m(&state, Complex64::new(1.0, 0.0)).unwrap();
            assert_eq!(m, Complex64::new(1.0, 0.0));
            let t1 = TreeState::init(&p);
            for z in [Complex64::new(0.5, 0.5), Complex64::new(1.3, -0.2)] {
                assert!((eval_m(&t1, z).unwrap() - 1.0).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn derivative_identities() {
        for p in models() {
            let (_, state) = grow(&p, 800, ReplicaSeed::new(4, 2), &[]).unwrap();
            let b = derivatives_at_one(&state);
            let bm = p.weight_step();
            // W(1) = C(1) = alpha_n, exactly.
            assert_eq!(b.w_at_one, state.total_weight());
            assert_eq!(b.c_at_one, state.total_weight());
            // W'(1) = (beta+m) P_n + n m, exactly for dyadic beta.
            let link = bm * state.path_length() as f64 + state.size() as f64 * p.m() as f64;
            assert_eq!(b.w_prime, link);
            // C'(1) = mu_n, dual route through the exact mean.
            let mu = bm * exact::mean_path(&p, state.size()) + state.size() as f64 * p.m() as f64;
            assert!(
                (b.c_prime - mu).abs() <= 1e-9 * mu.abs(),
                "{p}: c_prime={} mu={}",
                b.c_prime,
                mu
            );
            // M'(1) = S_n.
            assert!(
                (b.m_prime - state.martingale_value()).abs()
                    <= 1e-9 * state.martingale_value().abs().max(1e-3),
                "{p}"
            );
            // Running W''(1) agrees with the fresh profile sum.
            assert!((b.w_second - state.w_second_at_one()).abs() <= 1e-9 * b.w_second.abs());
        }
    }

    #[test]
    fn c_second_dual_route() {
        // C''(1) = alpha_n E[D_{n+1}^2] - mu_n, with E[D_{n+1}^2] from the
        // Bernoulli representation.
        for p in models() {
            let n = 500u64;
            let (_, state) = grow(&p, n, ReplicaSeed::new(5, 3), &[]).unwrap();
            let b = derivatives_at_one(&state);
            let ed = exact::depth_mean(&p, n + 1);
            let vd = exact::depth_variance(&p, n + 1);
            let mu = p.weight_step() * exact::mean_path(&p, n) + n as f64 * p.m() as f64;
            let expected = p.total_weight(n) * (vd + ed * ed) - mu;
            assert!(
                (b.c_second - expected).abs() <= 1e-8 * expected.abs(),
                "{p}: {} vs {}",
                b.c_second,
                expected
            );
        }
    }

    #[test]
    fn degenerate_normalizer_detected() {
        let state = TreeState::init(&ModelParams::rt());
        let z = Complex64::new(1e-305, 0.0);
        assert!(matches!(
            eval_m(&state, z),
            Err(crate::Error::DegenerateNormalizer { .. })
        ));
        let ok = evaluate(&state, Complex64::new(1.0, 0.0)).unwrap();
        assert_eq!(ok.m, Complex64::new(1.0, 0.0));
        assert_eq!(ok.w, ok.c);
    }

    #[test]
    fn conditional_variance_degenerate_cases() {
        for p in models() {
            let state = TreeState::init(&p);
            // From T_1 the next insertion is deterministic: E[X_2^2|F_1] = 0.
            let v = conditional_increment_variance(&state);
            assert!(v.abs() < 1e-14, "{p}: {v}");
        }
    }

    #[test]
    fn conditional_variance_matches_bundle_route() {
        for p in models() {
            let (_, state) = grow(&p, 257, ReplicaSeed::new(6, 4), &[]).unwrap();
            let bundle = derivatives_at_one(&state);
            let s = state.martingale_value();
            let r = p.weight_step() / p.total_weight(state.size() + 1);
            let expected = r * r * (state.next_depth_variance() + bundle.m_second + s - s * s);
            let got = conditional_increment_variance(&state);
            assert!((got - expected).abs() <= 1e-12 * expected.abs().max(1e-12));
        }
    }
}
