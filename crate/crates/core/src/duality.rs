//! Moment duality between the frequency process and the block-counting
//! chain: E[X_t^n | X_0 = x] = E[x^{R_t} | R_0 = n].
//!
//! Both sides are estimated by independent Monte Carlo (forward paths for
//! the left, dual paths for the right) and compared through a z-score.
//! For the selection-free case a uniformization oracle computes the dual
//! expectation exactly — with alpha = 0 the chain never leaves {1..n}, so
//! the Poissonized transition matrix is finite and the series truncation
//! is the only error term.

use rayon::prelude::*;
use serde::Serialize;

use crate::dual::{DualConfig, DualSimulator, ProbeSummary};
use crate::error::{Error, Result};
use crate::forward::{ForwardConfig, ForwardSimulator};
use crate::measure::{EstimateWithError, LambdaMeasure};
use crate::rates::{alpha_star, RateTable};
use crate::stats::{mean_se, BinomialEstimate};

#[derive(Clone, Debug, Serialize)]
pub struct DualityReport {
    pub x: f64,
    pub n: usize,
    pub t: f64,
    pub lhs: EstimateWithError,
    pub rhs: EstimateWithError,
    pub z_score: f64,
}

/// Monte Carlo check of the duality identity at one (x, n, t) point. The
/// two sides use separate RNG stream families derived from the same seed,
/// so they are statistically independent but individually reproducible.
pub fn duality_check(
    measure: &LambdaMeasure,
    alpha: f64,
    x: f64,
    n: usize,
    t: f64,
    reps: u64,
    seed: u64,
) -> Result<DualityReport> {
    if !(0.0..=1.0).contains(&x) || n < 1 || !(t >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "duality check needs x in [0,1], n >= 1, t >= 0; got x={x}, n={n}, t={t}"
        )));
    }
    // both boundaries are absorbing on both sides of the identity
    if x == 0.0 || x == 1.0 || t == 0.0 {
        let v = EstimateWithError::exact(x.powi(n as i32));
        return Ok(DualityReport { x, n, t, lhs: v, rhs: v, z_score: 0.0 });
    }

    let mut fcfg = ForwardConfig::new(measure.clone(), x, alpha, seed);
    fcfg.t_max = t;
    let fwd = ForwardSimulator::new(fcfg)?;
    let powers: Vec<f64> =
        (0..reps).into_par_iter().map(|i| fwd.run(i).x_end.powi(n as i32)).collect();
    let (lhs_mean, lhs_se) = mean_se(&powers);

    let dcfg = DualConfig::new(measure.clone(), alpha, n, t, seed);
    let dual = DualSimulator::new(dcfg)?;
    let moments: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|i| {
            let end = dual.run(i).n_end;
            x.powi(end.min(i32::MAX as usize) as i32)
        })
        .collect();
    let (rhs_mean, rhs_se) = mean_se(&moments);

    let denom = (lhs_se * lhs_se + rhs_se * rhs_se).sqrt();
    let z_score = if denom > 0.0 { (lhs_mean - rhs_mean) / denom } else { 0.0 };
    Ok(DualityReport {
        x,
        n,
        t,
        lhs: EstimateWithError::monte_carlo(lhs_mean, lhs_se),
        rhs: EstimateWithError::monte_carlo(rhs_mean, rhs_se),
        z_score,
    })
}

/// Exact E[x^{R_t} | R_0 = n] for the selection-free chain, by
/// uniformization: R never exceeds its start when alpha = 0, so the
/// generator restricted to {1, ..., n} is the whole story and
/// E[g(R_t)] = sum_m P[Poisson(theta t) = m] (P^m g)(n) with
/// P = I + Q/theta. Series truncated once the Poisson weights have
/// accumulated to 1 - 1e-12.
pub fn uniformized_moment(measure: &LambdaMeasure, x: f64, n: usize, t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) || !(t >= 0.0) {
        return Err(Error::InvalidConfig(format!("need x in [0,1] and t >= 0, got {x}, {t}")));
    }
    if n == 0 || n > 50 {
        return Err(Error::InvalidConfig(format!(
            "uniformization oracle covers 1 <= n <= 50, got {n}"
        )));
    }
    if n == 1 || t == 0.0 {
        return Ok(x.powi(n as i32));
    }
    let rt = RateTable::build(measure.clone(), 0.0, n)?;
    let theta = rt.phi_total(n);
    if theta <= 0.0 {
        return Ok(x.powi(n as i32));
    }
    // transition rows of P = I + Q/theta over states 1..=n
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n + 1];
    for i in 2..=n {
        let mut row = Vec::with_capacity(i);
        let mut out = 0.0;
        for k in 2..=i {
            let rate =
                (crate::stats::ln_choose(i as u64, k as u64) + rt.lambda_nk(i, k)?.ln()).exp();
            if rate > 0.0 {
                out += rate / theta;
                row.push((i - k + 1, rate / theta));
            }
        }
        row.push((i, (1.0 - out).max(0.0)));
        rows[i] = row;
    }
    rows[1] = vec![(1, 1.0)];

    let mut v: Vec<f64> = (0..=n).map(|i| x.powi(i as i32)).collect();
    let lt = theta * t;
    let mut result = 0.0;
    let mut cum = 0.0;
    for m in 0..200_000u64 {
        let ln_w = -lt + m as f64 * lt.ln() - statrs::function::gamma::ln_gamma(m as f64 + 1.0);
        let w = ln_w.exp();
        result += w * v[n];
        cum += w;
        if cum >= 1.0 - 1e-12 {
            break;
        }
        let mut next = vec![0.0; n + 1];
        for i in 1..=n {
            let mut acc = 0.0;
            for &(j, p) in &rows[i] {
                acc += p * v[j];
            }
            next[i] = acc;
        }
        v = next;
    }
    Ok(result)
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanRow {
    pub alpha: f64,
    pub p_one: f64,
    pub se_one: f64,
    pub p_zero: f64,
    pub se_zero: f64,
    pub undecided: f64,
    pub classification: String,
    #[serde(skip)]
    pub one_est: BinomialEstimate,
}

#[derive(Clone, Debug, Serialize)]
pub struct FixationScan {
    pub alpha_star: f64,
    pub rows: Vec<ScanRow>,
}

/// Fixation probabilities across a grid of selection strengths, each row
/// classified against the threshold alpha_star. Rows use decorrelated
/// seeds derived from (seed, row index).
pub fn fixation_scan(
    measure: &LambdaMeasure,
    x0: f64,
    alpha_grid: &[f64],
    reps: u64,
    t_max: f64,
    seed: u64,
) -> Result<FixationScan> {
    if alpha_grid.is_empty() {
        return Err(Error::InvalidConfig("alpha grid must be nonempty".into()));
    }
    if alpha_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidConfig("alpha grid must be sorted".into()));
    }
    let a_star = alpha_star(measure).value;
    let resolution = alpha_grid
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
        .min(0.05 * a_star.max(1.0));
    let mut rows = Vec::with_capacity(alpha_grid.len());
    for (idx, &alpha) in alpha_grid.iter().enumerate() {
        let mut cfg = ForwardConfig::new(
            measure.clone(),
            x0,
            alpha,
            seed ^ (idx as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
        );
        cfg.t_max = t_max;
        let summary = ForwardSimulator::new(cfg)?.estimate_fixation(reps);
        let classification = if a_star.is_finite() && (alpha - a_star).abs() < resolution {
            "critical".to_string()
        } else if alpha < a_star {
            "below alpha_star".to_string()
        } else {
            "above alpha_star".to_string()
        };
        rows.push(ScanRow {
            alpha,
            p_one: summary.p_one.p_hat,
            se_one: summary.p_one.se,
            p_zero: summary.p_zero.p_hat,
            se_zero: summary.p_zero.se,
            undecided: summary.undecided,
            classification,
            one_est: summary.p_one,
        });
    }
    Ok(FixationScan { alpha_star: a_star, rows })
}

#[derive(Clone, Debug, Serialize)]
pub struct ConsistencyReport {
    pub alpha: f64,
    pub alpha_star: f64,
    pub consistent: bool,
    pub verdict: String,
    pub p_one: BinomialEstimate,
    pub p_zero: BinomialEstimate,
    pub undecided: f64,
    pub probe: ProbeSummary,
}

/// Cross-checks the dual chain's drift against forward fixation: a
/// transient dual with fixations at one, or a recurrent dual that never
/// fixes, is flagged as a contradiction between the two simulators.
pub fn transience_consistency(
    measure: &LambdaMeasure,
    alpha: f64,
    x0: f64,
    n0: usize,
    reps: u64,
    t_max: f64,
    seed: u64,
) -> Result<ConsistencyReport> {
    let mut fcfg = ForwardConfig::new(measure.clone(), x0, alpha, seed);
    fcfg.t_max = t_max;
    let summary = ForwardSimulator::new(fcfg)?.estimate_fixation(reps);

    // the probe needs no long horizon: drift shows quickly, and transient
    // paths are capped to keep the event count bounded
    let mut dcfg = DualConfig::new(measure.clone(), alpha, n0, t_max.min(20.0), seed);
    dcfg.n_cap = 100_000;
    let probe = DualSimulator::new(dcfg)?.recurrence_probe(reps.min(300));

    let a_star = alpha_star(measure).value;
    let (consistent, verdict) = if probe.drift_sign > 0 {
        if summary.p_one.lo99 > 0.0 {
            (false, "contradiction: transient dual drift but fixation CI excludes zero".into())
        } else {
            (true, "consistent: transient dual drift and no evidence of fixation at one".into())
        }
    } else if alpha < a_star {
        if summary.p_one.successes == 0 && probe.return_fraction > 0.5 {
            (false, "contradiction: recurrent dual but no fixations at one observed".into())
        } else {
            (true, "consistent: recurrent dual and fixation at one observed".into())
        }
    } else {
        (true, "no contradiction detected".into())
    };
    Ok(ConsistencyReport {
        alpha,
        alpha_star: a_star,
        consistent,
        verdict,
        p_one: summary.p_one,
        p_zero: summary.p_zero,
        undecided: summary.undecided,
        probe,
    })
}
