//! Small statistical helpers shared by the simulators and their tests:
//! log-space combinatorics, sample summaries, Wilson score intervals and
//! chi-square goodness-of-fit machinery.

use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

/// ln C(n, k), valid for large n via the log-gamma function.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Numerically stable ln(sum(exp(x_i))).
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|x| (x - m).exp()).sum();
    m + s.ln()
}

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Two-sided 99% normal quantile used for Wilson score intervals.
pub const Z99: f64 = 2.575_829_303_548_900_4;

/// Binomial point estimate with standard error and a 99% Wilson score
/// interval.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct BinomialEstimate {
    pub successes: u64,
    pub trials: u64,
    pub p_hat: f64,
    pub se: f64,
    pub lo99: f64,
    pub hi99: f64,
}

impl BinomialEstimate {
    pub fn from_counts(successes: u64, trials: u64) -> Self {
        assert!(trials > 0, "binomial estimate needs at least one trial");
        let n = trials as f64;
        let p = successes as f64 / n;
        let se = (p * (1.0 - p) / n).sqrt();
        let z2 = Z99 * Z99;
        let denom = 1.0 + z2 / n;
        let center = (p + z2 / (2.0 * n)) / denom;
        let half = Z99 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
        BinomialEstimate {
            successes,
            trials,
            p_hat: p,
            se,
            lo99: (center - half).max(0.0),
            hi99: (center + half).min(1.0),
        }
    }
}

/// Pearson chi-square statistic for observed counts against expected
/// probabilities (cells with negligible expectation are pooled into their
/// neighbour). Returns the statistic and the degrees of freedom.
pub fn chi_square_stat(observed: &[u64], probs: &[f64]) -> (f64, usize) {
    assert_eq!(observed.len(), probs.len());
    let n: u64 = observed.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0usize;
    let mut pool_obs = 0.0;
    let mut pool_exp = 0.0;
    for (&o, &p) in observed.iter().zip(probs) {
        let e = p * n as f64;
        pool_obs += o as f64;
        pool_exp += e;
        if pool_exp >= 5.0 {
            stat += (pool_obs - pool_exp).powi(2) / pool_exp;
            cells += 1;
            pool_obs = 0.0;
            pool_exp = 0.0;
        }
    }
    if pool_exp > 0.0 && cells > 0 {
        // leftover tail pooled into the last cell
        stat += (pool_obs - pool_exp).powi(2) / pool_exp;
    }
    (stat, cells.saturating_sub(1).max(1))
}

/// Upper critical value of the chi-square distribution.
pub fn chi_square_critical(df: usize, significance: f64) -> f64 {
    ChiSquared::new(df as f64)
        .expect("valid degrees of freedom")
        .inverse_cdf(1.0 - significance)
}
