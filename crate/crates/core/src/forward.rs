//! Forward-in-time simulation of the frequency process.
//!
//! Between jumps the process follows the selection drift
//! dx/dt = -alpha x (1 - x) exactly (its logistic solution in closed form),
//! so the only approximations are the small-jump truncation at `eps` and
//! the finite horizon. Jumps arrive at rate nu([eps, 1]); a jump of size z
//! at frequency x moves to x + z(1 - x) with probability x (a "success"
//! lineage resamples) and to x - z x otherwise. Dropping jumps below eps
//! needs no drift compensation because the u-average of the jump kernel
//! vanishes; the neglected quadratic variation Lambda((0, eps)) is computed
//! and reported on every path.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{LambdaMeasure, WeightedSampler};
use crate::stats::{mean_se, BinomialEstimate};
use crate::streams::{replicate_rng, CTX_FORWARD};

/// Closed-form solution of dx/dt = -alpha x (1-x) after time dt.
/// The fixed points 0 and 1 are preserved exactly.
pub fn logistic_flow(x: f64, alpha: f64, dt: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 || alpha == 0.0 || dt == 0.0 {
        return x.clamp(0.0, 1.0);
    }
    let e = (-alpha * dt).exp();
    x * e / (1.0 - x + x * e)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecordMode {
    FullPath,
    EndpointOnly,
    EventTimes,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    AbsorbedZero,
    AbsorbedOne,
    Undecided,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardConfig {
    pub measure: LambdaMeasure,
    pub x0: f64,
    pub alpha: f64,
    /// Small-jump truncation threshold: jumps of size below `eps` are
    /// dropped. See [`ForwardConfig::default_eps`].
    pub eps: f64,
    pub t_max: f64,
    /// Numerical absorption threshold: once x leaves (eta, 1 - eta) the
    /// path is held constant and classified.
    #[serde(default = "default_absorb_tol")]
    pub absorb_tol: f64,
    pub seed: u64,
    #[serde(default = "default_record")]
    pub record: RecordMode,
}

fn default_absorb_tol() -> f64 {
    1e-9
}
fn default_record() -> RecordMode {
    RecordMode::EndpointOnly
}

impl ForwardConfig {
    pub fn new(measure: LambdaMeasure, x0: f64, alpha: f64, seed: u64) -> Self {
        let eps = Self::default_eps(&measure);
        let t_max = Self::default_t_max(&measure, alpha);
        ForwardConfig {
            measure,
            x0,
            alpha,
            eps,
            t_max,
            absorb_tol: default_absorb_tol(),
            seed,
            record: default_record(),
        }
    }

    /// For purely atomic measures any eps below the smallest atom keeps
    /// the simulation exact; for measures with a density 1e-4 balances
    /// rate against truncation error.
    pub fn default_eps(measure: &LambdaMeasure) -> f64 {
        if measure.has_density() {
            1e-4
        } else {
            let smallest = measure
                .atom_list()
                .into_iter()
                .map(|(x, _)| x)
                .fold(f64::INFINITY, f64::min)
                .min(1.0);
            smallest / 2.0
        }
    }

    /// Heuristic horizon: fifty times the slower of the selection and
    /// pairwise-coalescence time scales (phi(2) equals the total mass of
    /// the measure).
    pub fn default_t_max(measure: &LambdaMeasure, alpha: f64) -> f64 {
        50.0 / alpha.max(measure.total_mass().value).max(0.1)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ForwardPath {
    /// Jump instants (FullPath, EventTimes); FullPath additionally starts
    /// at t = 0 and closes with the terminal time.
    pub times: Vec<f64>,
    /// Post-jump frequencies, parallel to `times` under FullPath; empty
    /// otherwise.
    pub values: Vec<f64>,
    pub outcome: Outcome,
    pub n_jumps: u64,
    /// Quadratic variation of the neglected small jumps, Lambda((0, eps)).
    pub truncation_var_bound: f64,
    pub t_end: f64,
    pub x_end: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FixationSummary {
    pub p_one: BinomialEstimate,
    pub p_zero: BinomialEstimate,
    pub undecided: f64,
    pub replicates: u64,
}

pub struct ForwardSimulator {
    cfg: ForwardConfig,
    sampler: Option<WeightedSampler>,
    rate: f64,
    truncation_var_bound: f64,
}

impl ForwardSimulator {
    pub fn new(cfg: ForwardConfig) -> Result<Self> {
        if cfg.measure.kingman_mass() > 0.0 {
            return Err(Error::KingmanUnsupported { mass: cfg.measure.kingman_mass() });
        }
        if !(0.0..=1.0).contains(&cfg.x0) {
            return Err(Error::InvalidConfig(format!("x0 must lie in [0,1], got {}", cfg.x0)));
        }
        if !(cfg.eps > 0.0 && cfg.eps < 1.0) {
            return Err(Error::InvalidConfig(format!("eps must lie in (0,1), got {}", cfg.eps)));
        }
        if !(cfg.absorb_tol > 0.0 && cfg.absorb_tol < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "absorb_tol must lie in (0, 0.5), got {}",
                cfg.absorb_tol
            )));
        }
        if !(cfg.alpha >= 0.0 && cfg.alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!("alpha must be >= 0, got {}", cfg.alpha)));
        }
        if !(cfg.t_max > 0.0) {
            return Err(Error::InvalidConfig(format!("t_max must be > 0, got {}", cfg.t_max)));
        }
        // nu restricted to [eps, 1]; an empty restriction just means a
        // jump-free flow, not an error.
        let sampler = match WeightedSampler::new(&cfg.measure, |_, _| 1.0, cfg.eps, 1.0) {
            Ok(s) => Some(s),
            Err(Error::ZeroMass) => None,
            Err(e) => return Err(e),
        };
        let rate = sampler.as_ref().map_or(0.0, |s| s.total_mass());
        let truncation_var_bound = cfg.measure.lambda_mass_below(cfg.eps)?;
        Ok(ForwardSimulator { cfg, sampler, rate, truncation_var_bound })
    }

    pub fn config(&self) -> &ForwardConfig {
        &self.cfg
    }

    /// Total jump rate nu([eps, 1]) seen by the simulation.
    pub fn jump_rate(&self) -> f64 {
        self.rate
    }

    /// Runs one path; `replicate` selects an independent, reproducible RNG
    /// stream, so results do not depend on scheduling.
    pub fn run(&self, replicate: u64) -> ForwardPath {
        let mut rng = replicate_rng(self.cfg.seed, CTX_FORWARD, replicate);
        let eta = self.cfg.absorb_tol;
        let (alpha, t_max) = (self.cfg.alpha, self.cfg.t_max);
        let full = self.cfg.record == RecordMode::FullPath;

        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut record = |t: f64, x: f64| match self.cfg.record {
            RecordMode::FullPath => {
                times.push(t);
                values.push(x);
            }
            RecordMode::EventTimes => times.push(t),
            RecordMode::EndpointOnly => {}
        };

        let mut t = 0.0;
        let mut x = self.cfg.x0;
        let mut n_jumps = 0u64;
        if full {
            record(0.0, x);
        }
        let outcome = loop {
            if x <= eta {
                break Outcome::AbsorbedZero;
            }
            if x >= 1.0 - eta {
                break Outcome::AbsorbedOne;
            }
            let dt = if self.rate > 0.0 {
                -(1.0 - rng.random::<f64>()).ln() / self.rate
            } else {
                f64::INFINITY
            };
            let step = dt.min(t_max - t);
            // the drift may cross the absorption threshold mid-segment;
            // the logistic solution gives the crossing time in closed form
            let x_flow = logistic_flow(x, alpha, step);
            if x_flow <= eta {
                let tau = ((x / (1.0 - x)).ln() - (eta / (1.0 - eta)).ln()) / alpha;
                t += tau.clamp(0.0, step);
                x = eta;
                break Outcome::AbsorbedZero;
            }
            if t + dt >= t_max {
                t = t_max;
                x = x_flow;
                break Outcome::Undecided;
            }
            t += dt;
            x = x_flow;
            let z = self
                .sampler
                .as_ref()
                .expect("positive rate implies a sampler")
                .sample(&mut rng)
                .expect("sampler with positive mass cannot fail");
            let u: f64 = rng.random();
            x = if u <= x { x + z * (1.0 - x) } else { x - z * x };
            debug_assert!((0.0..=1.0).contains(&x), "jump left [0,1]: {x}");
            n_jumps += 1;
            record(t, x);
        };
        if full {
            record(t, x);
        }
        ForwardPath {
            times,
            values,
            outcome,
            n_jumps,
            truncation_var_bound: self.truncation_var_bound,
            t_end: t,
            x_end: x,
        }
    }

    /// Fixation probabilities from independent replicates, with Wilson
    /// 99% intervals. Replicates run in parallel; aggregation is
    /// order-independent.
    pub fn estimate_fixation(&self, replicates: u64) -> FixationSummary {
        let outcomes: Vec<Outcome> =
            (0..replicates).into_par_iter().map(|i| self.run(i).outcome).collect();
        let ones = outcomes.iter().filter(|o| **o == Outcome::AbsorbedOne).count() as u64;
        let zeros = outcomes.iter().filter(|o| **o == Outcome::AbsorbedZero).count() as u64;
        FixationSummary {
            p_one: BinomialEstimate::from_counts(ones, replicates),
            p_zero: BinomialEstimate::from_counts(zeros, replicates),
            undecided: (replicates - ones - zeros) as f64 / replicates as f64,
            replicates,
        }
    }

    /// Mean and standard error of the endpoint X_{t_max}.
    pub fn endpoint_mean(&self, replicates: u64) -> (f64, f64) {
        let ends: Vec<f64> = (0..replicates).into_par_iter().map(|i| self.run(i).x_end).collect();
        mean_se(&ends)
    }
}

/// One-call wrapper mirroring the simulator's `run`.
pub fn simulate_forward(cfg: ForwardConfig, replicate: u64) -> Result<ForwardPath> {
    Ok(ForwardSimulator::new(cfg)?.run(replicate))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dirac_half() -> LambdaMeasure {
        LambdaMeasure::dirac(0.5, 1.0).unwrap()
    }

    fn cfg(measure: LambdaMeasure, x0: f64, alpha: f64, seed: u64) -> ForwardConfig {
        ForwardConfig::new(measure, x0, alpha, seed)
    }

    #[test]
    fn logistic_flow_closed_form_and_fixed_points() {
        assert_eq!(logistic_flow(0.0, 3.0, 5.0), 0.0);
        assert_eq!(logistic_flow(1.0, 3.0, 5.0), 1.0);
        let v = logistic_flow(0.5, 1.0, 2.0f64.ln());
        assert!((v - 1.0 / 3.0).abs() < 1e-15, "got {v}");

        // Runge-Kutta cross-check of the closed form
        for &(x0, alpha, t) in &[(0.3, 1.0, 1.0), (0.9, 2.5, 0.7), (0.05, 0.3, 4.0)] {
            let steps = 200_000;
            let h = t / steps as f64;
            let mut y: f64 = x0;
            for _ in 0..steps {
                let f = |x: f64| -alpha * x * (1.0 - x);
                let k1 = f(y);
                let k2 = f(y + 0.5 * h * k1);
                let k3 = f(y + 0.5 * h * k2);
                let k4 = f(y + h * k3);
                y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
            let exact = logistic_flow(x0, alpha, t);
            assert!((y - exact).abs() < 1e-12, "x0={x0} alpha={alpha} t={t}: {y} vs {exact}");
        }
    }

    #[test]
    fn absorbing_starts_stay_put() {
        let sim = ForwardSimulator::new(cfg(dirac_half(), 0.0, 1.0, 1)).unwrap();
        let p = sim.run(0);
        assert_eq!(p.outcome, Outcome::AbsorbedZero);
        assert_eq!(p.x_end, 0.0);
        assert_eq!(p.n_jumps, 0);

        let sim = ForwardSimulator::new(cfg(dirac_half(), 1.0, 1.0, 1)).unwrap();
        assert_eq!(sim.run(0).outcome, Outcome::AbsorbedOne);
    }

    #[test]
    fn star_measure_fixes_after_one_exponential_jump() {
        let star = LambdaMeasure::dirac(1.0, 1.0).unwrap();
        let mut c = cfg(star, 0.3, 0.0, 7);
        c.t_max = 100.0;
        let sim = ForwardSimulator::new(c).unwrap();
        let reps = 10_000u64;
        let mut ones = 0u64;
        let mut jump_times = Vec::new();
        for i in 0..reps {
            let p = sim.run(i);
            assert_eq!(p.n_jumps, 1, "star path must fix at the first jump");
            assert!(p.outcome != Outcome::Undecided);
            if p.outcome == Outcome::AbsorbedOne {
                assert_eq!(p.x_end, 1.0);
                ones += 1;
            } else {
                assert_eq!(p.x_end, 0.0);
            }
            jump_times.push(p.t_end);
        }
        let est = BinomialEstimate::from_counts(ones, reps);
        assert!(
            (est.p_hat - 0.3).abs() < 3.0 * est.se,
            "P[fix at 1] = {} should be x0 = 0.3",
            est.p_hat
        );
        let (mean_t, se_t) = mean_se(&jump_times);
        assert!((mean_t - 1.0).abs() < 3.0 * se_t, "Exp(1) wait: mean {mean_t}");
    }

    #[test]
    fn martingale_mean_is_preserved_without_selection() {
        for m in [LambdaMeasure::beta(2.0, 1.0).unwrap(), dirac_half()] {
            let mut c = cfg(m, 0.3, 0.0, 11);
            c.t_max = 1.0;
            let sim = ForwardSimulator::new(c).unwrap();
            let (mean, se) = sim.endpoint_mean(100_000);
            assert!((mean - 0.3).abs() < 3.0 * se, "martingale violated: {mean} +- {se}");
        }
    }

    #[test]
    fn selection_pushes_the_mean_down() {
        let mut c = cfg(dirac_half(), 0.3, 2.0, 13);
        c.t_max = 1.0;
        let sim = ForwardSimulator::new(c).unwrap();
        let (mean, se) = sim.endpoint_mean(20_000);
        assert!(mean <= 0.3 + 3.0 * se, "supermartingale violated: {mean}");
        // and strictly so, comfortably beyond noise, for this alpha
        assert!(mean < 0.25, "selection at alpha=2 barely moved the mean: {mean}");
    }

    #[test]
    fn strong_selection_never_fixes_at_one() {
        let mut c = cfg(dirac_half(), 0.5, 6.0, 17);
        c.t_max = 50.0;
        let sim = ForwardSimulator::new(c).unwrap();
        let s = sim.estimate_fixation(2_000);
        assert_eq!(s.p_one.successes, 0, "alpha far above the threshold must kill the allele");
        assert!(s.p_zero.p_hat + s.undecided >= 1.0 - 1e-12);
    }

    #[test]
    fn drift_crossing_absorbs_at_the_exact_time() {
        // negligible jump mass: pure logistic decay from 0.5 crosses eta
        // at t = (logit(0.5) - logit(eta)) / alpha
        let tiny = LambdaMeasure::dirac(0.5, 1e-12).unwrap();
        let mut c = cfg(tiny, 0.5, 50.0, 3);
        c.t_max = 10.0;
        c.eps = 0.25;
        let sim = ForwardSimulator::new(c).unwrap();
        let p = sim.run(0);
        assert_eq!(p.outcome, Outcome::AbsorbedZero);
        let eta = 1e-9f64;
        let expect = -(eta / (1.0 - eta)).ln() / 50.0;
        assert!((p.t_end - expect).abs() < 1e-12, "crossing at {} vs {expect}", p.t_end);
        assert!(p.x_end <= eta);
    }

    #[test]
    fn paths_are_deterministic_per_replicate_and_legal() {
        let mut c = cfg(dirac_half(), 0.4, 1.0, 99);
        c.t_max = 10.0;
        c.record = RecordMode::FullPath;
        let sim1 = ForwardSimulator::new(c.clone()).unwrap();
        let sim2 = ForwardSimulator::new(c).unwrap();
        let (a, b) = (sim1.run(7), sim2.run(7));
        assert_eq!(a.times, b.times);
        assert_eq!(a.values, b.values);
        assert!(a.times.windows(2).all(|w| w[0] <= w[1]), "times must be nondecreasing");
        assert!(a.values.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(*a.times.last().unwrap() <= 10.0);
        // different replicates see different randomness
        let c2 = sim1.run(8);
        assert_ne!(a.times, c2.times);
    }

    #[test]
    fn truncation_bound_and_default_eps() {
        let beta = LambdaMeasure::beta(2.0, 1.0).unwrap();
        let c = cfg(beta, 0.5, 0.0, 1);
        assert_eq!(c.eps, 1e-4);
        let sim = ForwardSimulator::new(c).unwrap();
        // Lambda((0, eps)) = eps^2 / 2 for the x dx density
        assert!((sim.run(0).truncation_var_bound - 5e-9).abs() < 1e-12);

        let atoms = LambdaMeasure::atoms(&[(0.25, 1.0), (0.75, 1.0)]).unwrap();
        let c = cfg(atoms, 0.5, 0.0, 1);
        assert_eq!(c.eps, 0.125);
        let sim = ForwardSimulator::new(c).unwrap();
        assert_eq!(sim.run(0).truncation_var_bound, 0.0, "atomic case is exact");
        assert!((sim.jump_rate() - (1.0 / 0.0625 + 1.0 / 0.5625)).abs() < 1e-12);
    }

    #[test]
    fn eps_halving_shifts_estimates_within_noise() {
        let base = cfg(LambdaMeasure::beta(2.0, 1.0).unwrap(), 0.5, 0.0, 23);
        let reps = 4_000u64;
        let run_with = |eps: f64| {
            let mut c = base.clone();
            c.eps = eps;
            c.t_max = 60.0;
            ForwardSimulator::new(c).unwrap().estimate_fixation(reps)
        };
        let (coarse, fine) = (run_with(1e-4), run_with(5e-5));
        for (a, b) in [(&coarse.p_one, &fine.p_one), (&coarse.p_zero, &fine.p_zero)] {
            let combined = (a.se * a.se + b.se * b.se).sqrt();
            assert!(
                (a.p_hat - b.p_hat).abs() < 2.0 * combined.max(1e-4),
                "eps sensitivity: {} vs {}",
                a.p_hat,
                b.p_hat
            );
        }
    }

    #[test]
    fn config_validation_rejects_bad_inputs() {
        let king = LambdaMeasure::kingman(1.0).unwrap();
        match ForwardSimulator::new(cfg(king, 0.5, 0.0, 1)).map(|_| ()) {
            Err(Error::KingmanUnsupported { mass }) => assert_eq!(mass, 1.0),
            other => panic!("expected KingmanUnsupported, got {other:?}"),
        }
        let mut c = cfg(dirac_half(), 1.2, 0.0, 1);
        assert!(ForwardSimulator::new(c.clone()).is_err());
        c.x0 = 0.5;
        c.eps = 0.0;
        assert!(ForwardSimulator::new(c).is_err());
    }
}
