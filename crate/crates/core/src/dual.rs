//! The coalescing-branching block-counting chain.
//!
//! From state n the chain branches to n + 1 at rate alpha n, performs a
//! pairwise merge to n - 1 at rate Lambda({0}) C(n,2), and otherwise picks
//! a reproduction event of size x at rate w_n(x) nu(dx), where
//! w_n(x) = 1 - (1-x)^n - n x (1-x)^{n-1} is the chance that the event
//! touches at least two of the n lineages; the merged count k is then
//! binomial(n, x) conditioned on k >= 2 and the chain moves to n - k + 1.
//!
//! Sampling x directly from w_n(x) nu(dx) would need a fresh table per n,
//! so a two-piece envelope is used instead: below x_n = sqrt(2/(n(n-1)))
//! the bound w_n(x) <= C(n,2) x^2 turns the proposal into plain Lambda,
//! and above x_n the bound w_n <= 1 leaves nu itself. Both proposals come
//! from tables built once per simulator; acceptance is w_n over the
//! envelope. Atoms bypass the envelope entirely (their weights are summed
//! exactly per event).

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::RecordMode;
use crate::measure::{LambdaMeasure, SAMPLE_FLOOR};
use crate::rates::{c2, ln_xc, phi_bracket, phi_of, RateTable};
use crate::stats::{ln_choose, mean_se};
use crate::streams::{replicate_rng, CTX_DUAL};
use crate::tables::CdfTable;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualConfig {
    pub measure: LambdaMeasure,
    pub alpha: f64,
    pub n0: usize,
    pub t_max: f64,
    /// Guard against transient blow-up, not physics: paths reaching the
    /// cap are flagged, never silently truncated.
    #[serde(default = "default_n_cap")]
    pub n_cap: usize,
    pub seed: u64,
    #[serde(default = "default_record")]
    pub record: RecordMode,
}

fn default_n_cap() -> usize {
    1_000_000
}
fn default_record() -> RecordMode {
    RecordMode::EndpointOnly
}

impl DualConfig {
    pub fn new(measure: LambdaMeasure, alpha: f64, n0: usize, t_max: f64, seed: u64) -> Self {
        DualConfig {
            measure,
            alpha,
            n0,
            t_max,
            n_cap: default_n_cap(),
            seed,
            record: default_record(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DualPath {
    /// Event instants; under FullPath starts at t = 0 and closes with the
    /// terminal time.
    pub times: Vec<f64>,
    /// Post-event block counts, parallel to `times` under FullPath.
    pub values: Vec<u64>,
    pub hit_one_time: Option<f64>,
    pub capped: bool,
    pub t_end: f64,
    pub n_end: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeSummary {
    /// Fraction of paths that entered [1, n0] before the horizon,
    /// starting from 4 n0.
    pub return_fraction: f64,
    pub mean_return_time: Option<f64>,
    /// Sign of the mean endpoint displacement from the start state.
    pub drift_sign: i8,
    pub endpoint_mean: f64,
    pub note: String,
}

pub struct DualSimulator {
    cfg: DualConfig,
    rt: RateTable,
    /// Lambda restricted to its density part, for the small-x proposal.
    lam_table: Option<CdfTable>,
    /// nu = x^{-2} Lambda restricted to its density part, for large x.
    nu_table: Option<CdfTable>,
}

impl DualSimulator {
    pub fn new(cfg: DualConfig) -> Result<Self> {
        if cfg.n0 < 1 {
            return Err(Error::InvalidConfig("n0 must be >= 1".into()));
        }
        if cfg.n_cap <= cfg.n0 {
            return Err(Error::InvalidConfig(format!(
                "n_cap = {} must exceed n0 = {}",
                cfg.n_cap, cfg.n0
            )));
        }
        if !(cfg.alpha >= 0.0 && cfg.alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!("alpha must be >= 0, got {}", cfg.alpha)));
        }
        if !(cfg.t_max > 0.0) {
            return Err(Error::InvalidConfig(format!("t_max must be > 0, got {}", cfg.t_max)));
        }
        let table_cap = (4 * cfg.n0).clamp(64, 2048).min(cfg.n_cap);
        let rt = RateTable::build(cfg.measure.clone(), cfg.alpha, table_cap)?;
        let (lam_table, nu_table) = if cfg.measure.has_density() {
            let m = cfg.measure.clone();
            let lam = CdfTable::build(&|x, xc| m.density_at(x, xc), SAMPLE_FLOOR, 1.0)?;
            let nu = CdfTable::build(&|x, xc| m.density_at(x, xc) / (x * x), SAMPLE_FLOOR, 1.0)?;
            (Some(lam), Some(nu))
        } else {
            (None, None)
        };
        Ok(DualSimulator { cfg, rt, lam_table, nu_table })
    }

    pub fn config(&self) -> &DualConfig {
        &self.cfg
    }
    pub fn rate_table(&self) -> &RateTable {
        &self.rt
    }

    fn phi(&self, n: usize, memo: &mut HashMap<usize, f64>) -> f64 {
        if n <= self.rt.n_max() {
            return self.rt.phi_total(n);
        }
        *memo.entry(n).or_insert_with(|| {
            phi_of(&self.cfg.measure, n)
                .expect("phi(n) is finite for a finite driving measure")
                .value
        })
    }

    /// Exact per-event weights w_n(x_i) m_i / x_i^2 of the atoms.
    fn atom_phi(&self, n: f64) -> f64 {
        self.cfg
            .measure
            .atom_list()
            .into_iter()
            .map(|(x, m)| phi_bracket(n, x, 1.0 - x) * m / (x * x))
            .sum()
    }

    /// Draws the event size x for a coalescence at state n.
    fn sample_x(&self, n: usize, rng: &mut ChaCha8Rng, phi_x: f64) -> f64 {
        let nf = n as f64;
        let atom_phi = self.atom_phi(nf);
        if rng.random::<f64>() * phi_x < atom_phi {
            // discrete inverse-CDF over the atoms' exact weights
            let target = rng.random::<f64>() * atom_phi;
            let mut cum = 0.0;
            let atoms = self.cfg.measure.atom_list();
            for (x, m) in &atoms {
                cum += phi_bracket(nf, *x, 1.0 - x) * m / (x * x);
                if cum >= target {
                    return *x;
                }
            }
            return atoms.last().expect("positive atom weight implies atoms").0;
        }
        // density part: envelope rejection with the two-piece bound
        let lam = self.lam_table.as_ref().expect("density weight implies tables");
        let nu = self.nu_table.as_ref().expect("density weight implies tables");
        let x_split = (2.0 / (nf * (nf - 1.0))).sqrt().min(1.0);
        let mass_a = c2(n) * lam.mass_below(x_split);
        let mass_b = nu.mass_above(x_split);
        loop {
            let pick_a = rng.random::<f64>() * (mass_a + mass_b) < mass_a;
            let (x, envelope) = if pick_a {
                let x = lam.sample_below(x_split, rng.random());
                (x, c2(n) * x * x)
            } else {
                let x = nu.sample_above(x_split, rng.random());
                (x, 1.0)
            };
            let w = phi_bracket(nf, x, 1.0 - x);
            if rng.random::<f64>() * envelope < w {
                return x;
            }
        }
    }

    /// k ~ Binomial(n, x) conditioned on k >= 2: plain rejection when the
    /// conditioning event has decent mass, pmf-recurrence inversion when
    /// it is rare.
    fn cond_binomial(&self, n: usize, x: f64, rng: &mut ChaCha8Rng) -> usize {
        if x >= 1.0 - 1e-15 {
            return n;
        }
        let nf = n as f64;
        let xc = 1.0 - x;
        let w = phi_bracket(nf, x, xc);
        if w >= 0.1 {
            let bin = rand_distr::Binomial::new(n as u64, x).expect("x in (0,1)");
            loop {
                let k = rng.sample(bin) as usize;
                if k >= 2 {
                    return k;
                }
            }
        }
        let target = rng.random::<f64>() * w;
        let mut k = 2usize;
        let mut p = (ln_choose(n as u64, 2) + 2.0 * x.ln() + (nf - 2.0) * ln_xc(x, xc)).exp();
        let mut cum = p;
        while cum < target && k < n {
            p *= (nf - k as f64) / (k as f64 + 1.0) * (x / xc);
            k += 1;
            cum += p;
        }
        k
    }

    /// One transition from state n: (waiting time, new state). The wait is
    /// +inf when n = 1 and alpha = 0 (absorbing).
    pub fn next_event(
        &self,
        n: usize,
        rng: &mut ChaCha8Rng,
        memo: &mut HashMap<usize, f64>,
    ) -> (f64, usize) {
        let phi_n = self.phi(n, memo);
        let branch = self.cfg.alpha * n as f64;
        let total = phi_n + branch;
        if total <= 0.0 {
            return (f64::INFINITY, n);
        }
        let wait = -(1.0 - rng.random::<f64>()).ln() / total;
        let mut u = rng.random::<f64>() * total;
        if u < branch {
            return (wait, n + 1);
        }
        u -= branch;
        let king = self.cfg.measure.kingman_mass() * c2(n);
        let phi_x = (phi_n - king).max(0.0);
        if u < king || phi_x <= 0.0 {
            return (wait, n - 1);
        }
        let x = self.sample_x(n, rng, phi_x);
        let k = self.cond_binomial(n, x, rng);
        (wait, n - k + 1)
    }

    /// The shared path loop; `band` (when set) watches for the first entry
    /// into [1, band] without the cost of recording the whole path.
    fn run_inner(&self, start: usize, replicate: u64, band: Option<usize>) -> (DualPath, Option<f64>) {
        let mut rng = replicate_rng(self.cfg.seed, CTX_DUAL, replicate);
        let mut memo = HashMap::new();
        let full = self.cfg.record == RecordMode::FullPath;
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut t = 0.0;
        let mut n = start;
        let mut hit_one_time = (n == 1).then_some(0.0);
        let mut band_entry = band.filter(|b| n <= *b).map(|_| 0.0);
        let mut capped = false;
        if full {
            times.push(0.0);
            values.push(n as u64);
        }
        loop {
            if n >= self.cfg.n_cap {
                capped = true;
                break;
            }
            let (wait, next) = self.next_event(n, &mut rng, &mut memo);
            if t + wait >= self.cfg.t_max {
                t = self.cfg.t_max;
                break;
            }
            t += wait;
            n = next;
            if n == 1 && hit_one_time.is_none() {
                hit_one_time = Some(t);
            }
            if band_entry.is_none() && band.is_some_and(|b| n <= b) {
                band_entry = Some(t);
            }
            if full {
                times.push(t);
                values.push(n as u64);
            }
        }
        if full {
            times.push(t);
            values.push(n as u64);
        }
        (DualPath { times, values, hit_one_time, capped, t_end: t, n_end: n }, band_entry)
    }

    pub fn run_from(&self, start: usize, replicate: u64) -> DualPath {
        self.run_inner(start, replicate, None).0
    }

    pub fn run(&self, replicate: u64) -> DualPath {
        self.run_from(self.cfg.n0, replicate)
    }

    /// Starts paths at 4 n0 and reports how often they fall back into
    /// [1, n0] before the horizon, plus the endpoint drift. Near the
    /// critical selection strength no verdict is implied; the note says so.
    pub fn recurrence_probe(&self, replicates: u64) -> ProbeSummary {
        let start = 4 * self.cfg.n0;
        let results: Vec<(Option<f64>, usize)> = (0..replicates)
            .into_par_iter()
            .map(|i| {
                let (p, entry) = self.run_inner(start, i, Some(self.cfg.n0));
                (entry, p.n_end)
            })
            .collect();
        let (ret_times, endpoints): (Vec<_>, Vec<_>) = results.into_iter().unzip();
        let returners: Vec<f64> = ret_times.into_iter().flatten().collect();
        let return_fraction = returners.len() as f64 / replicates as f64;
        let endpoint_mean =
            endpoints.iter().map(|n| *n as f64).sum::<f64>() / replicates as f64;
        let displacement = endpoint_mean - start as f64;
        let drift_sign = if displacement > 0.0 {
            1
        } else if displacement < 0.0 {
            -1
        } else {
            0
        };
        let a_star = crate::rates::alpha_star(&self.cfg.measure).value;
        let note = if (self.cfg.alpha - a_star).abs() < 1e-9 * a_star.max(1.0) {
            "critical selection strength: raw statistics only, no classification".to_string()
        } else if self.cfg.alpha < a_star {
            "selection below the threshold: expect return fraction near one".to_string()
        } else {
            "selection above the threshold: expect upward drift".to_string()
        };
        ProbeSummary {
            return_fraction,
            mean_return_time: (!returners.is_empty()).then(|| mean_se(&returners).0),
            drift_sign,
            endpoint_mean,
            note,
        }
    }
}

/// One-call wrapper mirroring the simulator's `run`.
pub fn simulate_dual(cfg: DualConfig, replicate: u64) -> Result<DualPath> {
    Ok(DualSimulator::new(cfg)?.run(replicate))
}

/// Mean and standard error of the time to coalesce from n0 lineages down
/// to one, without selection. Horizon-free: with alpha = 0 the chain is
/// nonincreasing and hits 1 after at most n0 events.
pub fn absorption_time_stats(
    measure: &LambdaMeasure,
    n0: usize,
    replicates: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    let cfg = DualConfig::new(measure.clone(), 0.0, n0, f64::MAX, seed);
    let sim = DualSimulator::new(cfg)?;
    let times: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|i| {
            let p = sim.run(i);
            p.hit_one_time.expect("alpha = 0 paths absorb at 1")
        })
        .collect();
    Ok(mean_se(&times))
}
