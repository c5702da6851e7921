//! Rate functionals of the block-counting dual chain.
//!
//! For a driving measure Lambda with nu(dx) = x^{-2} Lambda(dx), the chain
//! jumps from n to n - k + 1 at rate C(n,k) lambda_{n,k} with
//! `lambda_{n,k} = integral of x^k (1-x)^{n-k} nu(dx)`, and from n to n+1 at
//! rate alpha n. This module computes:
//!
//! * the jump rates `lambda_nk` and the total coalescence rate `phi_total`,
//! * the drift functionals `psi` (mean decrement) and `delta` (the
//!   logarithmic lower bound whose partial sums of reciprocals decide
//!   whether the chain comes down from infinity),
//! * the selection threshold `alpha_star` and the cruder threshold
//!   `mu_threshold`,
//! * generator applications and the Lyapunov / transience diagnostics
//!   built from them,
//! * the [`cdi_classify`] heuristic and the matching expected-time bound
//!   [`et_bound`].
//!
//! All integrands are evaluated through bracket functions written to stay
//! accurate both in the x -> 0 cancellation regime (where every bracket is
//! O(x^2)) and at x = 1, so the same code path serves n = 2 and n = 10^5.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{EstimateWithError, LambdaMeasure, Part, Tol};
use crate::stats::{ln_choose, log_sum_exp};

// ── stable bracket functions ─────────────────────────────────────────────

/// ln(1-x) from whichever coordinate is the accurate one.
pub(crate) fn ln_xc(x: f64, xc: f64) -> f64 {
    if x < 0.5 {
        (-x).ln_1p()
    } else {
        xc.ln()
    }
}

/// 1 - (1-x)^n - n x (1-x)^{n-1}, the phi integrand; O(x^2) at zero.
///
/// Direct form: -expm1((n-1) ln(1-x) + ln(1+(n-1)x)). The two log terms
/// cancel to O(n^2 x^2) for small x, so below (n-1)x = 1e-5 the exponent
/// switches to its power series.
pub(crate) fn phi_bracket(n: f64, x: f64, xc: f64) -> f64 {
    let m = n - 1.0;
    let y = m * x;
    let t = if y < 1e-5 {
        -0.5 * n * m * x * x * (1.0 - 2.0 * (m - 1.0) * x / 3.0)
    } else {
        m * ln_xc(x, xc) + y.ln_1p()
    };
    -t.exp_m1()
}

/// x + ln(1-x) = -x^2/2 - x^3/3 - ..., without cancellation.
fn x_plus_ln1m(x: f64, xc: f64) -> f64 {
    if x < 0.01 {
        let mut s = 0.0;
        for j in (3..=9).rev() {
            s = x * (1.0 / j as f64 + s);
        }
        -x * x * (0.5 + s)
    } else {
        x + ln_xc(x, xc)
    }
}

/// exp(y) - 1 - y = y^2/2 + y^3/6 + ..., without cancellation.
fn expm1_minus_y(y: f64) -> f64 {
    if y.abs() < 1e-3 {
        0.5 * y * y * (1.0 + y / 3.0 * (1.0 + y / 4.0 * (1.0 + y / 5.0)))
    } else {
        y.exp_m1() - y
    }
}

/// n x - 1 + (1-x)^n, the psi integrand; O(x^2) at zero, n x - 1 + o(1)
/// at one. Uses the identity
/// `n x - 1 + (1-x)^n = n (x + ln(1-x)) + (e^y - 1 - y)`, y = n ln(1-x),
/// whose two halves each have a stable series.
fn psi_bracket(n: f64, x: f64, xc: f64) -> f64 {
    let y = n * ln_xc(x, xc);
    if y < -1.0 {
        n * x - 1.0 + y.exp()
    } else {
        n * x_plus_ln1m(x, xc) + expm1_minus_y(y)
    }
}

/// -n log(1 - [n p - 1 + (1-p)^n]/n), the delta integrand. The inner
/// expression lies in [0, 1 - 1/n) for p in (0,1], so the value is finite
/// and bounded by n log n; +inf is returned only if rounding ever pushes
/// the argument of the logarithm to (or past) zero.
fn delta_integrand(n: f64, x: f64, xc: f64) -> f64 {
    let w = psi_bracket(n, x, xc) / n;
    if w >= 1.0 {
        return f64::INFINITY;
    }
    -n * (-w).ln_1p()
}

pub(crate) fn c2(n: usize) -> f64 {
    n as f64 * (n as f64 - 1.0) / 2.0
}

/// Two-pass nu-integration: a cheap pass fixes the magnitude, a second
/// pass (if needed) re-integrates with the absolute target scaled to it.
fn integrate_scaled(
    m: &LambdaMeasure,
    f: impl Fn(f64, f64) -> f64 + Copy,
    zero_order: u32,
) -> Result<EstimateWithError> {
    let first = m.integrate_nu_tol(f, zero_order, Tol { abs: 1e-6, rel: 1e-6 })?;
    let allowed = (1e-8 * first.value.abs()).max(1e-10);
    if first.error <= allowed {
        return Ok(first);
    }
    m.integrate_nu_tol(f, zero_order, Tol { abs: allowed, rel: 1e-8 })
}

// ── scalar functionals ───────────────────────────────────────────────────

/// Total coalescence rate phi(n); zero for n < 2. The atom at zero
/// contributes its Kingman term C(n,2) Lambda({0}).
pub fn phi_of(m: &LambdaMeasure, n: usize) -> Result<EstimateWithError> {
    if n < 2 {
        return Ok(EstimateWithError::exact(0.0));
    }
    let nf = n as f64;
    let base = integrate_scaled(m, move |x, xc| phi_bracket(nf, x, xc), 2)?;
    Ok(base.add(EstimateWithError::exact(m.kingman_mass() * c2(n))))
}

/// Mean decrement rate psi(n) = integral of [n x - 1 + (1-x)^n] nu(dx),
/// plus the Kingman term; zero for n < 2.
pub fn psi_of(m: &LambdaMeasure, n: usize) -> Result<EstimateWithError> {
    if n < 2 {
        return Ok(EstimateWithError::exact(0.0));
    }
    let nf = n as f64;
    let base = integrate_scaled(m, move |x, xc| psi_bracket(nf, x, xc), 2)?;
    Ok(base.add(EstimateWithError::exact(m.kingman_mass() * c2(n))))
}

/// delta(n) = -n integral of log(1 - [n p - 1 + (1-p)^n]/n) nu(dp), plus
/// the Kingman term. Dominates psi(n) pointwise and delta(n)/n increases
/// to alpha_star.
pub fn delta_of(m: &LambdaMeasure, n: usize) -> Result<EstimateWithError> {
    if n < 2 {
        return Ok(EstimateWithError::exact(0.0));
    }
    let nf = n as f64;
    let base = integrate_scaled(m, move |x, xc| delta_integrand(nf, x, xc), 2)?;
    Ok(base.add(EstimateWithError::exact(m.kingman_mass() * c2(n))))
}

/// Selection threshold `alpha_star = -integral of log(1-x) nu(dx)`,
/// possibly +inf: divergence of the integral (measures with too much mass
/// near 0 or an atom at 1) and any atom at zero both give +inf.
pub fn alpha_star(m: &LambdaMeasure) -> EstimateWithError {
    if m.kingman_mass() > 0.0 {
        return EstimateWithError::exact(f64::INFINITY);
    }
    match integrate_scaled(m, |x, xc| -ln_xc(x, xc), 1) {
        Ok(est) => est,
        Err(_) => EstimateWithError::exact(f64::INFINITY),
    }
}

/// The cruder threshold `mu = integral of 1/(x(1-x)) Lambda(dx)`, +inf
/// unless Lambda decays at both endpoints (for Beta: a > 1 and b > 1).
/// Whenever both are finite, mu > alpha_star.
pub fn mu_threshold(m: &LambdaMeasure) -> EstimateWithError {
    if m.kingman_mass() > 0.0 {
        return EstimateWithError::exact(f64::INFINITY);
    }
    match integrate_scaled(m, |x, xc| x / xc, 1) {
        Ok(est) => est,
        Err(_) => EstimateWithError::exact(f64::INFINITY),
    }
}

/// Number of blocks left after one x-jump hits n lineages:
/// P[Y = l] = 1_{l=n} (1-x)^n + C(n, l-1) (1-x)^{l-1} x^{n-l+1} on
/// {1, ..., n}, with mean n(1-x) + 1 - (1-x)^n.
pub struct YLaw {
    pub probs: Vec<f64>,
    pub mean: f64,
}

pub fn y_law(n: usize, x: f64) -> Result<YLaw> {
    if n < 2 || !(x > 0.0 && x < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "y_law needs n >= 2 and x in (0,1), got n = {n}, x = {x}"
        )));
    }
    let xc = 1.0 - x;
    let (lx, lxc) = (x.ln(), ln_xc(x, xc));
    let mut probs = vec![0.0; n];
    for l in 1..=n {
        let ln_p =
            ln_choose(n as u64, l as u64 - 1) + (l - 1) as f64 * lxc + (n - l + 1) as f64 * lx;
        probs[l - 1] = ln_p.exp();
    }
    probs[n - 1] += (n as f64 * lxc).exp();
    let mean = n as f64 * xc + 1.0 - (n as f64 * lxc).exp();
    Ok(YLaw { probs, mean })
}

// ── the jump-rate table ──────────────────────────────────────────────────

/// Log-contributions of the measure's parts to lambda_{n,k}; the Kingman
/// atom enters k = 2 only.
fn ln_lambda_parts(m: &LambdaMeasure, n: usize, k: usize) -> Result<Vec<f64>> {
    debug_assert!(2 <= k && k <= n);
    let (kf, nkf) = ((k - 2) as f64, (n - k) as f64);
    let mut parts = Vec::new();
    for p in m.parts() {
        match p {
            Part::Atom { x, mass } => {
                let xc = 1.0 - x;
                if xc == 0.0 && n > k {
                    continue; // (1-x)^{n-k} = 0
                }
                let mut ln = mass.ln() + kf * x.ln();
                if n > k {
                    ln += nkf * ln_xc(*x, xc);
                }
                parts.push(ln);
            }
            Part::Beta { a, b, scale } => {
                parts.push(scale.ln() + statrs::function::beta::ln_beta(a + kf, b + nkf));
            }
            Part::Grid { breaks, dens, scale } => {
                for (j, d) in dens.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    let lw = (scale * d).ln();
                    let one = |_: f64, _: f64| 1.0;
                    let ln_w = move |x: f64, xc: f64| {
                        let mut l = lw;
                        if kf > 0.0 {
                            l += kf * x.ln();
                        }
                        if nkf > 0.0 {
                            l += nkf * ln_xc(x, xc);
                        }
                        l
                    };
                    let q = crate::quad::nu_cell(
                        &crate::quad::Split { f: &one, ln_w: &ln_w },
                        breaks[j],
                        breaks[j + 1],
                        Tol::default(),
                    )?;
                    if q.value > 0.0 {
                        parts.push(q.value.ln());
                    }
                }
            }
        }
    }
    if k == 2 && m.kingman_mass() > 0.0 {
        parts.push(m.kingman_mass().ln());
    }
    Ok(parts)
}

/// lambda_{n,k} for any measure: closed forms for atoms (direct power
/// evaluation) and Beta parts (Beta-function identity), quadrature for
/// grid densities.
pub fn lambda_of(m: &LambdaMeasure, n: usize, k: usize) -> Result<f64> {
    if !(2 <= k && k <= n) {
        return Err(Error::InvalidConfig(format!(
            "lambda_nk needs 2 <= k <= n, got n = {n}, k = {k}"
        )));
    }
    let parts = ln_lambda_parts(m, n, k)?;
    Ok(parts.iter().map(|l| l.exp()).sum())
}

const LAMBDA_CACHE_N: usize = 64;

/// Immutable cache of the rate functionals of one (measure, alpha) pair up
/// to a block-count cap. Construction integrates every functional eagerly
/// (in parallel, with a deterministic reduction order); afterwards the
/// table is plain shared data.
pub struct RateTable {
    measure: LambdaMeasure,
    alpha: f64,
    n_max: usize,
    phi: Vec<EstimateWithError>,
    psi: Vec<EstimateWithError>,
    delta: Vec<EstimateWithError>,
    /// Lyapunov partial sums f(l) = sum_{k=2}^l (k/delta(k)) log(k/(k-1)).
    f_lyap: Vec<f64>,
    /// lambda_{n,k} for n <= LAMBDA_CACHE_N, indexed [n-2][k-2].
    lambda_small: Vec<Vec<f64>>,
}

impl RateTable {
    pub fn build(measure: LambdaMeasure, alpha: f64, n_max: usize) -> Result<Self> {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "selection rate must be finite and >= 0, got {alpha}"
            )));
        }
        if n_max < 2 {
            return Err(Error::InvalidConfig(format!("n_max must be at least 2, got {n_max}")));
        }
        let rows: Result<Vec<_>> = (2..=n_max)
            .into_par_iter()
            .map(|n| Ok((phi_of(&measure, n)?, psi_of(&measure, n)?, delta_of(&measure, n)?)))
            .collect();
        let rows = rows?;
        let zero = EstimateWithError::exact(0.0);
        let mut phi = vec![zero; n_max + 1];
        let mut psi = vec![zero; n_max + 1];
        let mut delta = vec![zero; n_max + 1];
        for (i, row) in rows.into_iter().enumerate() {
            phi[i + 2] = row.0;
            psi[i + 2] = row.1;
            delta[i + 2] = row.2;
        }
        let mut f_lyap = vec![0.0; n_max + 1];
        for l in 2..=n_max {
            let lf = l as f64;
            f_lyap[l] = f_lyap[l - 1] + lf / delta[l].value * (1.0 / (lf - 1.0)).ln_1p();
        }
        let small_cap = n_max.min(LAMBDA_CACHE_N);
        let mut lambda_small = Vec::new();
        for n in 2..=small_cap {
            let row: Result<Vec<f64>> = (2..=n).map(|k| lambda_of(&measure, n, k)).collect();
            lambda_small.push(row?);
        }
        Ok(RateTable { measure, alpha, n_max, phi, psi, delta, f_lyap, lambda_small })
    }

    pub fn measure(&self) -> &LambdaMeasure {
        &self.measure
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// phi(n), the total coalescence rate out of state n.
    pub fn phi_total(&self, n: usize) -> f64 {
        self.phi_est(n).value
    }
    pub fn phi_est(&self, n: usize) -> EstimateWithError {
        assert!(n <= self.n_max, "phi({n}) beyond table cap {}", self.n_max);
        self.phi[n]
    }

    pub fn psi(&self, n: usize) -> f64 {
        self.psi_est(n).value
    }
    pub fn psi_est(&self, n: usize) -> EstimateWithError {
        assert!(n <= self.n_max, "psi({n}) beyond table cap {}", self.n_max);
        self.psi[n]
    }

    pub fn delta(&self, n: usize) -> f64 {
        self.delta_est(n).value
    }
    pub fn delta_est(&self, n: usize) -> EstimateWithError {
        assert!(n <= self.n_max, "delta({n}) beyond table cap {}", self.n_max);
        self.delta[n]
    }

    /// lambda_{n,k}; cached for n <= 64, computed on demand above.
    pub fn lambda_nk(&self, n: usize, k: usize) -> Result<f64> {
        if !(2 <= k && k <= n) {
            return Err(Error::InvalidConfig(format!(
                "lambda_nk needs 2 <= k <= n, got n = {n}, k = {k}"
            )));
        }
        if n - 2 < self.lambda_small.len() {
            return Ok(self.lambda_small[n - 2][k - 2]);
        }
        lambda_of(&self.measure, n, k)
    }

    /// Applies the chain's generator to g at state n:
    /// sum_k C(n,k) lambda_{n,k} [g(n-k+1) - g(n)] + alpha n [g(n+1) - g(n)].
    /// Binomial factors are recombined in log space so that n far beyond
    /// 170 stays representable.
    pub fn generator_apply(&self, g: impl Fn(usize) -> f64, n: usize) -> Result<f64> {
        if n < 1 {
            return Err(Error::InvalidConfig("generator needs n >= 1".into()));
        }
        let gn = g(n);
        let mut acc = 0.0;
        for k in 2..=n {
            let parts = ln_lambda_parts(&self.measure, n, k)?;
            let ln_lambda = log_sum_exp(&parts);
            if ln_lambda == f64::NEG_INFINITY {
                continue;
            }
            let rate = (ln_choose(n as u64, k as u64) + ln_lambda).exp();
            if !rate.is_finite() {
                return Err(Error::Overflow("coalescence rate C(n,k) lambda_{n,k}"));
            }
            acc += rate * (g(n - k + 1) - gn);
        }
        acc += self.alpha * n as f64 * (g(n + 1) - gn);
        if !acc.is_finite() {
            return Err(Error::Overflow("generator application"));
        }
        Ok(acc)
    }

    /// The Lyapunov function f(l) = sum_{k=2}^l (k/delta(k)) log(k/(k-1)).
    pub fn lyapunov_f(&self, l: usize) -> f64 {
        assert!(l <= self.n_max, "lyapunov_f({l}) beyond table cap {}", self.n_max);
        self.f_lyap[l]
    }

    /// Returns (lhs, rhs) of the drift inequality
    /// `L f(l) <= -1 + alpha l / delta(l)`; callers assert lhs <= rhs plus
    /// their tolerance. Requires l + 1 <= n_max for the branching term.
    pub fn lyapunov_check(&self, l: usize) -> Result<(f64, f64)> {
        if l < 2 || l + 1 > self.n_max {
            return Err(Error::InvalidConfig(format!(
                "lyapunov_check needs 2 <= l < n_max = {}, got {l}",
                self.n_max
            )));
        }
        let lhs = self.generator_apply(|j| self.f_lyap[j], l)?;
        let rhs = -1.0 + self.alpha * l as f64 / self.delta(l);
        Ok((lhs, rhs))
    }

    /// Rescaled generator applied to g(n) = 1/log(n+1):
    /// `L g(n) log(n+1) log(n+2)`, whose large-n limit is alpha_star - alpha.
    pub fn transience_statistic(&self, n: usize) -> Result<f64> {
        let g = |j: usize| 1.0 / (j as f64 + 1.0).ln();
        let v = self.generator_apply(g, n)?;
        Ok(v * (n as f64 + 1.0).ln() * (n as f64 + 2.0).ln())
    }
}

// ── coming down from infinity ────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CdiVerdict {
    ComesDown,
    StaysInfinite,
    Inconclusive,
}

/// Evidence gathered by [`cdi_classify`]: the partial sum of 1/delta(k) up
/// to the cutoff, the fitted log-log slope of delta on [K/2, K], and the
/// relative increments of the partial sum across dyadic cutoffs.
#[derive(Clone, Debug, Serialize)]
pub struct CdiReport {
    pub verdict: CdiVerdict,
    pub partial_sum: f64,
    #[serde(rename = "K")]
    pub k_cut: usize,
    pub slope: f64,
    pub increments: (f64, f64),
    pub alpha_star: f64,
    pub tail_note: String,
}

/// Relative-increment threshold for declaring the partial sums settled.
/// 1e-2 admits series like sum k^{-3/2} whose increments at K = 2^14 are
/// a few 1e-3 while still rejecting logarithmically divergent sums.
const CDI_INCREMENT_RTOL: f64 = 1e-2;
const CDI_SLOPE_MARGIN: f64 = 0.05;

fn delta_sweep(m: &LambdaMeasure, k_cut: usize) -> Result<Vec<f64>> {
    (2..=k_cut)
        .into_par_iter()
        .map(|k| Ok(delta_of(m, k)?.value))
        .collect()
}

fn cdi_core(m: &LambdaMeasure, k_cut: usize) -> Result<(CdiReport, f64)> {
    if k_cut < 16 {
        return Err(Error::InvalidConfig(format!("cdi cutoff must be >= 16, got {k_cut}")));
    }
    let deltas = delta_sweep(m, k_cut)?; // deltas[k-2] = delta(k)
    let mut cum = Vec::with_capacity(deltas.len());
    let mut s = 0.0;
    for d in &deltas {
        s += 1.0 / d;
        cum.push(s);
    }
    let s_of = |k: usize| cum[k - 2];
    let (s4, s2, sk) = (s_of(k_cut / 4), s_of(k_cut / 2), s_of(k_cut));
    let increments = ((s2 - s4) / s2, (sk - s2) / sk);

    // least-squares slope of ln delta(k) against ln k on [K/2, K]
    let (mut sx, mut sy, mut sxx, mut sxy, mut cnt) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for k in k_cut / 2..=k_cut {
        let lx = (k as f64).ln();
        let ly = deltas[k - 2].ln();
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        cnt += 1.0;
    }
    let slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
    let intercept = (sy - slope * sx) / cnt;

    let a_star = alpha_star(m).value;
    let settled = increments.0 < CDI_INCREMENT_RTOL && increments.1 < CDI_INCREMENT_RTOL;
    let (verdict, tail_note) = if a_star.is_finite() {
        (
            CdiVerdict::StaysInfinite,
            format!(
                "alpha_star = {a_star:.6} is finite, so delta(k)/k increases to a finite \
                 limit and the series of 1/delta(k) diverges"
            ),
        )
    } else if slope <= 1.0 - CDI_SLOPE_MARGIN {
        (
            CdiVerdict::StaysInfinite,
            format!("fitted delta(k) ~ k^{slope:.3} grows too slowly for a convergent series"),
        )
    } else if slope > 1.0 + CDI_SLOPE_MARGIN && settled {
        (
            CdiVerdict::ComesDown,
            format!(
                "fitted delta(k) ~ k^{slope:.3}; dyadic increments {:.2e}, {:.2e} below {CDI_INCREMENT_RTOL:.0e}",
                increments.0, increments.1
            ),
        )
    } else {
        (
            CdiVerdict::Inconclusive,
            format!(
                "fitted slope {slope:.3} with dyadic increments {:.2e}, {:.2e}: neither clearly \
                 summable nor clearly divergent at this cutoff",
                increments.0, increments.1
            ),
        )
    };
    let report = CdiReport {
        verdict,
        partial_sum: sk,
        k_cut,
        slope,
        increments,
        alpha_star: a_star,
        tail_note,
    };
    Ok((report, intercept))
}

/// Decides whether the partial sums of 1/delta(k) look convergent
/// (ComesDown), provably divergent (StaysInfinite), or neither. The
/// verdict is a heuristic on finitely many terms and says so in its note.
pub fn cdi_classify(m: &LambdaMeasure, k_cut: usize) -> Result<CdiReport> {
    Ok(cdi_core(m, k_cut)?.0)
}

/// Upper bound 2 sum_{k>=2} 1/delta(k) for the expected time to come down
/// from infinity to one lineage: the computed partial sum plus a tail
/// estimate from the fitted power model (summed term by term to 16 K, then
/// an Euler-Maclaurin remainder). +inf unless the verdict is ComesDown.
pub fn et_bound(m: &LambdaMeasure, k_cut: usize) -> Result<(f64, CdiReport)> {
    let (report, intercept) = cdi_core(m, k_cut)?;
    if report.verdict != CdiVerdict::ComesDown {
        return Ok((f64::INFINITY, report));
    }
    let s = report.slope;
    let mut tail = 0.0;
    for k in k_cut + 1..=16 * k_cut {
        tail += (-(intercept + s * (k as f64).ln())).exp();
    }
    let m16 = (16 * k_cut) as f64;
    tail += (m16.powf(1.0 - s) / (s - 1.0) - 0.5 * m16.powf(-s)) * (-intercept).exp();
    Ok((2.0 * (report.partial_sum + tail), report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dirac_half() -> LambdaMeasure {
        LambdaMeasure::dirac(0.5, 1.0).unwrap()
    }

    /// Hurwitz zeta(2, b) by series, for alpha_star cross-checks.
    fn zeta2(b: f64) -> f64 {
        let n = 20_000u64;
        let s: f64 = (0..n).map(|k| (b + k as f64).powi(-2)).sum();
        let t = b + n as f64;
        s + 1.0 / t + 1.0 / (2.0 * t * t) + 1.0 / (6.0 * t * t * t)
    }

    #[test]
    fn bracket_functions_match_direct_evaluation() {
        for &n in &[2.0f64, 3.0, 7.0, 40.0] {
            for &x in &[0.9f64, 0.5, 0.1, 1e-3] {
                let xc: f64 = 1.0 - x;
                let phi_direct = 1.0 - xc.powf(n) - n * x * xc.powf(n - 1.0);
                let psi_direct = n * x - 1.0 + xc.powf(n);
                assert!(
                    (phi_bracket(n, x, xc) - phi_direct).abs() < 1e-12,
                    "phi bracket n={n} x={x}"
                );
                assert!(
                    (psi_bracket(n, x, xc) - psi_direct).abs() < 1e-12,
                    "psi bracket n={n} x={x}"
                );
            }
            // small-x regime against the quadratic leading term
            let x = 1e-9;
            let lead = n * (n - 1.0) / 2.0 * x * x;
            assert!((phi_bracket(n, x, 1.0 - x) / lead - 1.0).abs() < 1e-6);
            assert!((psi_bracket(n, x, 1.0 - x) / lead - 1.0).abs() < 1e-6);
        }
        // x = 1 endpoint
        assert_eq!(phi_bracket(5.0, 1.0, 0.0), 1.0);
        assert_eq!(psi_bracket(5.0, 1.0, 0.0), 4.0);
        assert!((delta_integrand(5.0, 1.0, 0.0) - 5.0 * 5.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn lambda_closed_forms() {
        let t = RateTable::build(dirac_half(), 0.0, 10).unwrap();
        assert!((t.lambda_nk(3, 2).unwrap() - 0.5).abs() < 1e-15);
        assert!((t.lambda_nk(3, 3).unwrap() - 0.5).abs() < 1e-15);

        let b = RateTable::build(LambdaMeasure::beta(2.0, 1.0).unwrap(), 0.0, 10).unwrap();
        assert!((b.lambda_nk(3, 2).unwrap() - 1.0 / 6.0).abs() < 1e-14);

        // star-shaped: all mass on k = n
        let star = RateTable::build(LambdaMeasure::dirac(1.0, 1.0).unwrap(), 0.0, 10).unwrap();
        assert_eq!(star.lambda_nk(5, 5).unwrap(), 1.0);
        assert_eq!(star.lambda_nk(5, 3).unwrap(), 0.0);

        // Kingman atom enters lambda_{n,2} only
        let king = RateTable::build(LambdaMeasure::kingman(1.0).unwrap(), 0.0, 10).unwrap();
        assert_eq!(king.lambda_nk(5, 2).unwrap(), 1.0);
        assert_eq!(king.lambda_nk(5, 3).unwrap(), 0.0);
    }

    #[test]
    fn lambda_recursion_consistency() {
        let measures = [
            dirac_half(),
            LambdaMeasure::beta(2.0, 1.0).unwrap(),
            LambdaMeasure::atoms(&[(0.25, 0.5), (0.8, 1.5)]).unwrap(),
            LambdaMeasure::grid(vec![0.1, 0.5, 1.0], vec![2.0, 0.5]).unwrap(),
        ];
        for m in measures {
            let t = RateTable::build(m, 0.0, 21).unwrap();
            for n in 2..=20usize {
                for k in 2..=n {
                    let lhs = t.lambda_nk(n, k).unwrap();
                    let rhs = t.lambda_nk(n + 1, k).unwrap() + t.lambda_nk(n + 1, k + 1).unwrap();
                    assert!(
                        (lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1e-30),
                        "recursion at n={n} k={k}: {lhs} vs {rhs}"
                    );
                }
            }
        }
    }

    #[test]
    fn phi_examples_and_binomial_sum() {
        let t = RateTable::build(dirac_half(), 0.0, 25).unwrap();
        assert!((t.phi_total(3) - 2.0).abs() < 1e-12);
        assert_eq!(t.phi_total(1), 0.0);

        let king = RateTable::build(LambdaMeasure::kingman(1.0).unwrap(), 0.0, 10).unwrap();
        assert_eq!(king.phi_total(4), 6.0);

        // phi equals the binomial sum of C(n,k) lambda_{n,k}
        for m in [dirac_half(), LambdaMeasure::beta(2.0, 3.0).unwrap()] {
            let t = RateTable::build(m, 0.0, 25).unwrap();
            for n in 2..=20usize {
                let sum: f64 = (2..=n)
                    .map(|k| {
                        (ln_choose(n as u64, k as u64) + t.lambda_nk(n, k).unwrap().ln()).exp()
                    })
                    .sum();
                assert!(
                    (t.phi_total(n) - sum).abs() < 1e-9 * sum,
                    "phi({n}) = {} vs sum {sum}",
                    t.phi_total(n)
                );
            }
        }
    }

    #[test]
    fn psi_examples_and_binomial_sum() {
        let t = RateTable::build(dirac_half(), 0.0, 25).unwrap();
        assert!((t.psi(2) - 1.0).abs() < 1e-12);
        let b = RateTable::build(LambdaMeasure::beta(2.0, 1.0).unwrap(), 0.0, 25).unwrap();
        assert!((b.psi(2) - 0.5).abs() < 1e-10);

        // psi(n) = sum_k C(n,k) lambda_{n,k} (k-1)
        for t in [&t, &b] {
            for n in 2..=20usize {
                let sum: f64 = (2..=n)
                    .map(|k| {
                        (ln_choose(n as u64, k as u64) + t.lambda_nk(n, k).unwrap().ln()).exp()
                            * (k as f64 - 1.0)
                    })
                    .sum();
                assert!((t.psi(n) - sum).abs() < 1e-9 * sum, "psi({n}) vs {sum}");
            }
        }
    }

    #[test]
    fn delta_examples_and_monotonicity() {
        let t = RateTable::build(dirac_half(), 0.0, 1000).unwrap();
        let want = -8.0 * 0.875f64.ln();
        assert!((t.delta(2) - want).abs() < 1e-12, "delta(2) = {}", t.delta(2));

        let king = RateTable::build(LambdaMeasure::kingman(1.0).unwrap(), 0.0, 10).unwrap();
        assert_eq!(king.delta(3), 3.0);

        // delta >= psi, delta and delta/n nondecreasing, delta/n below and
        // approaching alpha_star
        let star = alpha_star(t.measure()).value;
        assert!((star - 4.0 * 2.0f64.ln()).abs() < 1e-12);
        let mut prev = 0.0;
        let mut prev_ratio = 0.0;
        for n in 2..=1000usize {
            let d = t.delta(n);
            assert!(d >= t.psi(n) - 1e-9, "delta({n}) < psi({n})");
            assert!(d >= prev - 1e-9, "delta not monotone at {n}");
            let ratio = d / n as f64;
            assert!(ratio >= prev_ratio - 1e-12, "delta/n not monotone at {n}");
            assert!(ratio <= star + 1e-9);
            prev = d;
            prev_ratio = ratio;
        }
        assert!((t.delta(1000) / 1000.0 - star).abs() < 0.01 * star);
    }

    #[test]
    fn alpha_star_closed_forms() {
        assert!((alpha_star(&dirac_half()).value - 2.772588722239781).abs() < 1e-12);

        let b1 = alpha_star(&LambdaMeasure::beta(2.0, 1.0).unwrap()).value;
        assert!((b1 - zeta2(1.0)).abs() < 1e-8, "got {b1}, want {}", zeta2(1.0));
        let b3 = alpha_star(&LambdaMeasure::beta(2.0, 3.0).unwrap()).value;
        assert!((b3 - zeta2(3.0)).abs() < 1e-8, "got {b3}, want {}", zeta2(3.0));

        assert!(alpha_star(&LambdaMeasure::beta(1.0, 1.0).unwrap()).value.is_infinite());
        assert!(alpha_star(&LambdaMeasure::kingman(1.0).unwrap()).value.is_infinite());
        assert!(alpha_star(&LambdaMeasure::dirac(1.0, 1.0).unwrap()).value.is_infinite());
    }

    #[test]
    fn mu_threshold_examples() {
        assert!((mu_threshold(&dirac_half()).value - 4.0).abs() < 1e-14);
        let beta22 = LambdaMeasure::beta(2.0, 2.0).unwrap();
        assert!((mu_threshold(&beta22).value - 1.0).abs() < 1e-9);
        assert!(mu_threshold(&LambdaMeasure::dirac(1.0, 1.0).unwrap()).value.is_infinite());
        assert!(mu_threshold(&LambdaMeasure::beta(2.0, 1.0).unwrap()).value.is_infinite());
        // mu > alpha_star whenever both are finite
        assert!(mu_threshold(&beta22).value > alpha_star(&beta22).value);
    }

    #[test]
    fn y_law_values_and_normalization() {
        let y = y_law(2, 0.5).unwrap();
        assert!((y.probs[0] - 0.25).abs() < 1e-12);
        assert!((y.probs[1] - 0.75).abs() < 1e-12);
        assert!((y.mean - 1.75).abs() < 1e-15);

        for n in [2usize, 5, 17, 50] {
            for x in [0.01, 0.2, 0.5, 0.9, 0.99] {
                let y = y_law(n, x).unwrap();
                let sum: f64 = y.probs.iter().sum();
                assert!((sum - 1.0).abs() < 1e-12, "sum {sum} at n={n} x={x}");
                let first_moment: f64 =
                    y.probs.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum();
                assert!((first_moment - y.mean).abs() < 1e-10);
            }
        }
        // no-coalescence limit: mass concentrates on l = n
        let y = y_law(3, 1e-8).unwrap();
        assert!(y.probs[2] > 1.0 - 1e-7);
    }

    #[test]
    fn generator_kills_constants_and_matches_psi() {
        for m in [dirac_half(), LambdaMeasure::beta(2.0, 1.0).unwrap()] {
            for alpha in [0.0, 1.5] {
                let t = RateTable::build(m.clone(), alpha, 60).unwrap();
                for n in [1usize, 2, 7, 33] {
                    let z = t.generator_apply(|_| 1.0, n).unwrap();
                    assert_eq!(z, 0.0, "constants must be killed exactly");
                    let drift = t.generator_apply(|j| j as f64, n).unwrap();
                    let want = -t.psi(n) + alpha * n as f64;
                    assert!(
                        (drift - want).abs() < 1e-9 * (1.0 + want.abs()),
                        "identity drift at n={n}: {drift} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn lyapunov_inequality_on_small_sweep() {
        for alpha in [0.0, 1.0] {
            let t = RateTable::build(dirac_half(), alpha, 201).unwrap();
            assert!(
                (t.lyapunov_f(2) - 2.0 / t.delta(2) * 2.0f64.ln()).abs() < 1e-14,
                "f(2) single term"
            );
            for l in 2..=200usize {
                let (lhs, rhs) = t.lyapunov_check(l).unwrap();
                assert!(lhs <= rhs + 1e-6, "drift inequality fails at l={l}: {lhs} > {rhs}");
            }
        }
    }

    #[test]
    fn transience_statistic_signs() {
        let star = alpha_star(&dirac_half()).value;
        // supercritical: rescaled generator value goes negative
        let t6 = RateTable::build(dirac_half(), 6.0, 2101).unwrap();
        for n in [500usize, 1000, 2000] {
            assert!(t6.transience_statistic(n).unwrap() < 0.0, "alpha=6 at n={n}");
        }
        // subcritical: positive for large n, and at alpha=0 the rescaled
        // value approaches alpha_star itself
        let t0 = RateTable::build(dirac_half(), 0.0, 2101).unwrap();
        let v = t0.transience_statistic(2000).unwrap();
        assert!(v > 0.0);
        assert!((v - star).abs() < 0.1 * star, "rescaled value {v} vs alpha_star {star}");
    }

    #[test]
    fn cdi_kingman_comes_down_with_tight_bound() {
        let m = LambdaMeasure::kingman(1.0).unwrap();
        let (bound, report) = et_bound(&m, 4096).unwrap();
        assert_eq!(report.verdict, CdiVerdict::ComesDown);
        assert!((bound - 4.0).abs() < 1e-6, "et bound {bound}");
        assert!((report.slope - 2.0).abs() < 0.01);
    }

    #[test]
    fn cdi_finite_alpha_star_stays_infinite() {
        let m = LambdaMeasure::beta(2.0, 1.0).unwrap();
        let report = cdi_classify(&m, 256).unwrap();
        assert_eq!(report.verdict, CdiVerdict::StaysInfinite);
        let (bound, _) = et_bound(&m, 256).unwrap();
        assert!(bound.is_infinite());
    }

    #[test]
    fn cdi_beta_half_comes_down() {
        let m = LambdaMeasure::beta(0.5, 1.0).unwrap();
        let report = cdi_classify(&m, 4096).unwrap();
        assert_eq!(report.verdict, CdiVerdict::ComesDown, "note: {}", report.tail_note);
        assert!((report.slope - 1.5).abs() < 0.05, "slope {}", report.slope);
    }

    #[test]
    fn partial_sum_nondecreasing_in_cutoff() {
        let m = dirac_half();
        let mut prev = 0.0;
        for k in [16usize, 32, 64, 128] {
            let r = cdi_classify(&m, k).unwrap();
            assert!(r.partial_sum >= prev);
            prev = r.partial_sum;
        }
    }

    #[test]
    fn jensen_bound_on_delta() {
        // delta(n)/n <= sum_k -log((n-k+1)/n) C(n,k) lambda_{n,k}: the
        // per-lineage rate never beats the log-moment of the jump sizes.
        for m in [dirac_half(), LambdaMeasure::beta(2.0, 3.0).unwrap()] {
            let t = RateTable::build(m, 0.0, 101).unwrap();
            for n in [2usize, 5, 20, 100] {
                let sum: f64 = (2..=n)
                    .map(|k| {
                        let rate = (ln_choose(n as u64, k as u64)
                            + t.lambda_nk(n, k).unwrap().ln())
                        .exp();
                        -((n - k + 1) as f64 / n as f64).ln() * rate
                    })
                    .sum();
                assert!(
                    t.delta(n) / n as f64 <= sum + 1e-8 * (1.0 + sum),
                    "delta({n})/n = {} exceeds log-moment sum {sum}",
                    t.delta(n) / n as f64
                );
            }
        }
    }
}
