//! Command-line front end.
//!
//! Every command resolves a [`RunConfig`] (file values overridden by
//! flags), derives a seed (from OS entropy when none is given — printed,
//! so any run can be reproduced), pins the thread pool, and emits one
//! artifact in JSON or CSV. Both formats embed the tool version, the
//! effective configuration, and the seed. Non-finite values are written
//! as the literal `inf` in CSV and as the string "inf" in JSON, where the
//! format itself has no spelling for them.

use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dual::{DualConfig, DualSimulator};
use crate::duality::{duality_check, fixation_scan, transience_consistency};
use crate::error::Error;
use crate::forward::{ForwardConfig, ForwardSimulator, RecordMode};
use crate::measure::LambdaMeasure;
use crate::rates::{alpha_star, cdi_classify, et_bound, mu_threshold, RateTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// The merged, serializable run configuration. Every field is optional
/// here; commands fill in their own defaults and validate through the
/// owning module's constructors.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub measure: Option<LambdaMeasure>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub x0: Option<f64>,
    #[serde(default)]
    pub n0: Option<usize>,
    #[serde(default)]
    pub t_max: Option<f64>,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub reps: Option<u64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub out_path: Option<String>,
    #[serde(default)]
    pub format: Option<Format>,
}

pub fn write_config(cfg: &RunConfig) -> String {
    serde_json::to_string_pretty(cfg).expect("config serializes")
}

pub fn parse_config(text: &str) -> Result<RunConfig, Failure> {
    serde_json::from_str(text).map_err(|e| Failure::config(format!("config parse: {e}")))
}

/// Measure from a flag value: compact shorthand (`dirac:x:c`, `beta:a:b`,
/// `kingman:c`), inline JSON, or `@path` to a JSON file.
pub fn parse_measure(s: &str) -> Result<LambdaMeasure, Failure> {
    let s = s.trim();
    if let Some(path) = s.strip_prefix('@') {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("reading {path}: {e}")))?;
        return LambdaMeasure::from_json(&text).map_err(Failure::from);
    }
    if s.starts_with('{') {
        return LambdaMeasure::from_json(s).map_err(Failure::from);
    }
    let parts: Vec<&str> = s.split(':').collect();
    let num = |v: &str| -> Result<f64, Failure> {
        v.parse::<f64>().map_err(|_| Failure::config(format!("bad number {v:?} in measure {s:?}")))
    };
    match parts.as_slice() {
        ["dirac", x, c] => LambdaMeasure::dirac(num(x)?, num(c)?).map_err(Failure::from),
        ["beta", a, b] => LambdaMeasure::beta(num(a)?, num(b)?).map_err(Failure::from),
        ["kingman", c] => LambdaMeasure::kingman(num(c)?).map_err(Failure::from),
        _ => Err(Failure::config(format!(
            "measure {s:?} is neither shorthand (dirac:x:c | beta:a:b | kingman:c), JSON, nor @file"
        ))),
    }
}

#[derive(Debug)]
pub struct Failure {
    pub message: String,
    pub exit_code: i32,
}

impl Failure {
    fn config(message: String) -> Self {
        Failure { message, exit_code: 2 }
    }
    fn compute(message: String) -> Self {
        Failure { message, exit_code: 1 }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) | Error::InvalidMeasure(_) | Error::KingmanUnsupported { .. } => {
                Failure::config(e.to_string())
            }
            _ => Failure::compute(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::compute(format!("io: {e}"))
    }
}

#[derive(Parser, Debug)]
#[command(name = "lwf", version, about = "Lambda-Wright-Fisher simulation and rate analysis")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Driving measure: dirac:x:c | beta:a:b | kingman:c, inline JSON, or @file.
    #[arg(short, long, global = true)]
    measure: Option<String>,
    /// JSON run-config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Selection rate.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Initial frequency for forward runs.
    #[arg(long, global = true)]
    x0: Option<f64>,
    /// Initial block count for dual runs.
    #[arg(long, global = true)]
    n0: Option<usize>,
    /// Time horizon.
    #[arg(long = "t", alias = "t-max", global = true)]
    t: Option<f64>,
    /// Small-jump truncation threshold for forward runs.
    #[arg(long, global = true)]
    eps: Option<f64>,
    /// Monte Carlo replicates.
    #[arg(long, global = true)]
    reps: Option<u64>,
    /// RNG seed; drawn from OS entropy (and printed) when omitted.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: LWF_DEFAULT_THREADS or all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// The selection threshold of the measure.
    AlphaStar,
    /// Triangular table of the merge rates lambda_{n,k}.
    RatesTable {
        #[arg(long, default_value_t = 10)]
        n_max: usize,
    },
    /// phi, psi, delta per block count.
    DeltaTable {
        #[arg(long, default_value_t = 50)]
        n_max: usize,
    },
    /// Comes-down-from-infinity classification.
    Cdi {
        #[arg(short = 'K', long = "k-cut", default_value_t = 1024)]
        k: usize,
    },
    /// Expected-time-to-one upper bound (with the CDI verdict).
    EtBound {
        #[arg(short = 'K', long = "k-cut", default_value_t = 1024)]
        k: usize,
    },
    /// Forward paths (one path) or fixation summary (reps > 1).
    SimulateForward,
    /// Dual paths (one path) or an endpoint summary (reps > 1).
    SimulateDual,
    /// Monte Carlo check of the moment duality at one (x, n, t).
    DualityCheck {
        #[arg(long)]
        x: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Fixation probabilities across a grid of selection strengths.
    FixationScan {
        /// Comma-separated, sorted selection rates.
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
    },
    /// Drift inequality of the Lyapunov function, row by row.
    LyapunovCheck {
        #[arg(long, default_value_t = 200)]
        n_max: usize,
    },
    /// Consistency of dual drift against forward fixation.
    TransienceCheck,
}

/// JSON value for a possibly non-finite number.
fn json_num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v > 0.0 {
        json!("inf")
    } else if v < 0.0 {
        json!("-inf")
    } else {
        json!("nan")
    }
}

struct Artifact {
    result: Value,
    csv_header: String,
    csv_rows: Vec<String>,
    /// Command-specific arguments (cutoffs, grids) echoed alongside the
    /// config; kept out of `config` so that block stays round-trippable.
    args: Option<Value>,
}

impl Artifact {
    fn new(result: Value, csv_header: &str, csv_rows: Vec<String>) -> Self {
        Artifact { result, csv_header: csv_header.to_string(), csv_rows, args: None }
    }

    fn with_args(mut self, args: Value) -> Self {
        self.args = Some(args);
        self
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v}")
}

/// Entry point used by both the binary and the tests; returns the process
/// exit code and writes all output (results and error messages) to `out`.
pub fn run<I>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = String>,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(out, "{e}");
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(out, "error: {}", f.message);
            f.exit_code
        }
    }
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::config(format!("reading {}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(m) = &cli.measure {
        cfg.measure = Some(parse_measure(m)?);
    }
    if cli.alpha.is_some() {
        cfg.alpha = cli.alpha;
    }
    if cli.x0.is_some() {
        cfg.x0 = cli.x0;
    }
    if cli.n0.is_some() {
        cfg.n0 = cli.n0;
    }
    if cli.t.is_some() {
        cfg.t_max = cli.t;
    }
    if cli.eps.is_some() {
        cfg.eps = cli.eps;
    }
    if cli.reps.is_some() {
        cfg.reps = cli.reps;
    }
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if let Some(p) = &cli.out {
        cfg.out_path = Some(p.display().to_string());
    }
    if cli.format.is_some() {
        cfg.format = cli.format;
    }

    let seed = cfg.seed.unwrap_or_else(rand::random::<u64>);
    cfg.seed = Some(seed);
    let threads = cfg.threads.or_else(|| {
        std::env::var("LWF_DEFAULT_THREADS").ok().and_then(|v| v.parse().ok())
    });
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Failure::compute(format!("thread pool: {e}")))?;

    let artifact = pool.install(|| dispatch(&cli.cmd, &mut cfg, seed))?;
    emit(&cli.cmd, &cfg, seed, artifact, out)
}

fn need_measure(cfg: &RunConfig) -> Result<LambdaMeasure, Failure> {
    cfg.measure
        .clone()
        .ok_or_else(|| Failure::config("a measure is required (-m or --config)".into()))
}

/// Runs one command. Defaults are resolved into `cfg` so the emitted
/// envelope echoes the effective values, not the unset flags.
fn dispatch(cmd: &Cmd, cfg: &mut RunConfig, seed: u64) -> Result<Artifact, Failure> {
    match cmd {
        Cmd::AlphaStar => {
            let m = need_measure(cfg)?;
            let a = alpha_star(&m);
            let mu = mu_threshold(&m);
            Ok(Artifact::new(
                json!({"alpha_star": json_num(a.value), "error": a.error,
                       "mu": json_num(mu.value)}),
                "alpha_star,error,mu",
                vec![format!("{},{},{}", fmt_f(a.value), fmt_f(a.error), fmt_f(mu.value))],
            ))
        }
        Cmd::RatesTable { n_max } => {
            let m = need_measure(cfg)?;
            let alpha = *cfg.alpha.get_or_insert(0.0);
            let rt = RateTable::build(m, alpha, (*n_max).max(2))?;
            let mut rows = Vec::new();
            let mut jrows = Vec::new();
            for n in 2..=*n_max {
                for k in 2..=n {
                    let l = rt.lambda_nk(n, k)?;
                    rows.push(format!("{n},{k},{}", fmt_f(l)));
                    jrows.push(json!({"n": n, "k": k, "lambda": l}));
                }
            }
            Ok(Artifact::new(json!({ "rates": jrows }), "n,k,lambda", rows)
                .with_args(json!({"n_max": n_max})))
        }
        Cmd::DeltaTable { n_max } => {
            let m = need_measure(cfg)?;
            let alpha = *cfg.alpha.get_or_insert(0.0);
            let rt = RateTable::build(m, alpha, (*n_max).max(2))?;
            let mut rows = Vec::new();
            let mut jrows = Vec::new();
            for n in 2..=*n_max {
                let (p, s, d) = (rt.phi_est(n), rt.psi_est(n), rt.delta_est(n));
                rows.push(format!(
                    "{n},{},{},{},{},{},{}",
                    fmt_f(p.value),
                    fmt_f(p.error),
                    fmt_f(s.value),
                    fmt_f(s.error),
                    fmt_f(d.value),
                    fmt_f(d.error)
                ));
                jrows.push(json!({"n": n, "phi": p.value, "phi_err": p.error,
                                  "psi": s.value, "psi_err": s.error,
                                  "delta": d.value, "delta_err": d.error}));
            }
            Ok(Artifact::new(
                json!({ "rows": jrows }),
                "n,phi,phi_err,psi,psi_err,delta,delta_err",
                rows,
            )
            .with_args(json!({"n_max": n_max})))
        }
        Cmd::Cdi { k } => {
            let m = need_measure(cfg)?;
            let report = cdi_classify(&m, *k)?;
            let verdict = format!("{:?}", report.verdict);
            Ok(Artifact::new(
                json!({"verdict": verdict, "partial_sum": report.partial_sum,
                       "K": report.k_cut, "slope": report.slope,
                       "increments": [report.increments.0, report.increments.1],
                       "alpha_star": json_num(report.alpha_star),
                       "tail_note": report.tail_note}),
                "verdict,partial_sum,K,slope,alpha_star",
                vec![format!(
                    "{verdict},{},{},{},{}",
                    fmt_f(report.partial_sum),
                    report.k_cut,
                    fmt_f(report.slope),
                    fmt_f(report.alpha_star)
                )],
            )
            .with_args(json!({"K": k})))
        }
        Cmd::EtBound { k } => {
            let m = need_measure(cfg)?;
            let (bound, report) = et_bound(&m, *k)?;
            let verdict = format!("{:?}", report.verdict);
            Ok(Artifact::new(
                json!({"et_bound": json_num(bound), "verdict": verdict,
                       "partial_sum": report.partial_sum, "K": report.k_cut,
                       "slope": report.slope}),
                "et_bound,verdict,partial_sum,K",
                vec![format!(
                    "{},{verdict},{},{}",
                    fmt_f(bound),
                    fmt_f(report.partial_sum),
                    report.k_cut
                )],
            )
            .with_args(json!({"K": k})))
        }
        Cmd::SimulateForward => {
            let m = need_measure(cfg)?;
            let x0 = *cfg.x0.get_or_insert(0.5);
            let alpha = *cfg.alpha.get_or_insert(0.0);
            let mut fc = ForwardConfig::new(m, x0, alpha, seed);
            if let Some(eps) = cfg.eps {
                fc.eps = eps;
            }
            if let Some(t) = cfg.t_max {
                fc.t_max = t;
            }
            cfg.eps = Some(fc.eps);
            cfg.t_max = Some(fc.t_max);
            let reps = *cfg.reps.get_or_insert(1);
            if reps <= 1 {
                fc.record = RecordMode::FullPath;
                let sim = ForwardSimulator::new(fc)?;
                let path = sim.run(0);
                let rows = path
                    .times
                    .iter()
                    .zip(&path.values)
                    .map(|(t, x)| format!("{},{}", fmt_f(*t), fmt_f(*x)))
                    .collect();
                Ok(Artifact::new(
                    json!({"times": path.times, "values": path.values,
                           "outcome": format!("{:?}", path.outcome),
                           "n_jumps": path.n_jumps,
                           "truncation_var_bound": path.truncation_var_bound,
                           "t_end": path.t_end, "x_end": path.x_end}),
                    "t,x",
                    rows,
                ))
            } else {
                let sim = ForwardSimulator::new(fc)?;
                let s = sim.estimate_fixation(reps);
                Ok(Artifact::new(
                    json!({"p_one": s.p_one, "p_zero": s.p_zero,
                           "undecided": s.undecided, "replicates": s.replicates}),
                    "p_one,se_one,lo99_one,p_zero,se_zero,undecided,replicates",
                    vec![format!(
                        "{},{},{},{},{},{},{}",
                        fmt_f(s.p_one.p_hat),
                        fmt_f(s.p_one.se),
                        fmt_f(s.p_one.lo99),
                        fmt_f(s.p_zero.p_hat),
                        fmt_f(s.p_zero.se),
                        fmt_f(s.undecided),
                        s.replicates
                    )],
                ))
            }
        }
        Cmd::SimulateDual => {
            let m = need_measure(cfg)?;
            let alpha = *cfg.alpha.get_or_insert(0.0);
            let n0 = *cfg.n0.get_or_insert(10);
            let t_max = *cfg.t_max.get_or_insert(10.0);
            let mut dc = DualConfig::new(m, alpha, n0, t_max, seed);
            let reps = *cfg.reps.get_or_insert(1);
            if reps <= 1 {
                dc.record = RecordMode::FullPath;
                let sim = DualSimulator::new(dc)?;
                let path = sim.run(0);
                let rows = path
                    .times
                    .iter()
                    .zip(&path.values)
                    .map(|(t, n)| format!("{},{n}", fmt_f(*t)))
                    .collect();
                Ok(Artifact::new(
                    json!({"times": path.times, "values": path.values,
                           "hit_one_time": path.hit_one_time,
                           "capped": path.capped,
                           "t_end": path.t_end, "n_end": path.n_end}),
                    "t,n",
                    rows,
                ))
            } else {
                let sim = DualSimulator::new(dc)?;
                use rayon::prelude::*;
                let paths: Vec<_> =
                    (0..reps).into_par_iter().map(|i| sim.run(i)).collect();
                let ends: Vec<f64> = paths.iter().map(|p| p.n_end as f64).collect();
                let (end_mean, end_se) = crate::stats::mean_se(&ends);
                let hits: Vec<f64> = paths.iter().filter_map(|p| p.hit_one_time).collect();
                let hit_fraction = hits.len() as f64 / reps as f64;
                let mean_hit = if hits.is_empty() {
                    f64::NAN
                } else {
                    crate::stats::mean_se(&hits).0
                };
                let capped = paths.iter().filter(|p| p.capped).count() as f64 / reps as f64;
                Ok(Artifact::new(
                    json!({"endpoint_mean": end_mean, "endpoint_se": end_se,
                           "hit_one_fraction": hit_fraction,
                           "mean_hit_one_time": json_num(mean_hit),
                           "capped_fraction": capped, "replicates": reps}),
                    "endpoint_mean,endpoint_se,hit_one_fraction,mean_hit_one_time,capped_fraction,replicates",
                    vec![format!(
                        "{},{},{},{},{},{reps}",
                        fmt_f(end_mean),
                        fmt_f(end_se),
                        fmt_f(hit_fraction),
                        fmt_f(mean_hit),
                        fmt_f(capped)
                    )],
                ))
            }
        }
        Cmd::DualityCheck { x, n } => {
            let m = need_measure(cfg)?;
            let x = x.or(cfg.x0).unwrap_or(0.5);
            let n = n.or(cfg.n0).unwrap_or(2);
            let t = *cfg.t_max.get_or_insert(1.0);
            let reps = *cfg.reps.get_or_insert(100_000);
            let alpha = *cfg.alpha.get_or_insert(0.0);
            let r = duality_check(&m, alpha, x, n, t, reps, seed)?;
            Ok(Artifact::new(
                json!({"x": r.x, "n": r.n, "t": r.t,
                       "lhs": r.lhs.value, "lhs_se": r.lhs.error,
                       "rhs": r.rhs.value, "rhs_se": r.rhs.error,
                       "z_score": r.z_score}),
                "x,n,t,lhs,lhs_se,rhs,rhs_se,z_score",
                vec![format!(
                    "{},{},{},{},{},{},{},{}",
                    fmt_f(r.x),
                    r.n,
                    fmt_f(r.t),
                    fmt_f(r.lhs.value),
                    fmt_f(r.lhs.error),
                    fmt_f(r.rhs.value),
                    fmt_f(r.rhs.error),
                    fmt_f(r.z_score)
                )],
            )
            .with_args(json!({"x": x, "n": n})))
        }
        Cmd::FixationScan { alphas } => {
            let m = need_measure(cfg)?;
            let grid = alphas.clone().unwrap_or_else(|| vec![0.0, 1.0, 2.0, 4.0]);
            let x0 = *cfg.x0.get_or_insert(0.5);
            let t_default = ForwardConfig::default_t_max(&m, *grid.last().unwrap());
            let t_max = *cfg.t_max.get_or_insert(t_default);
            let reps = *cfg.reps.get_or_insert(10_000);
            let scan = fixation_scan(&m, x0, &grid, reps, t_max, seed)?;
            let rows = scan
                .rows
                .iter()
                .map(|r| {
                    format!(
                        "{},{},{},{},{},{},{}",
                        fmt_f(r.alpha),
                        fmt_f(r.p_one),
                        fmt_f(r.se_one),
                        fmt_f(r.p_zero),
                        fmt_f(r.se_zero),
                        fmt_f(r.undecided),
                        r.classification
                    )
                })
                .collect();
            Ok(Artifact::new(
                json!({"alpha_star": json_num(scan.alpha_star),
                       "rows": serde_json::to_value(&scan.rows).expect("rows serialize")}),
                "alpha,p_one,se_one,p_zero,se_zero,undecided,classification",
                rows,
            )
            .with_args(json!({ "alphas": grid })))
        }
        Cmd::LyapunovCheck { n_max } => {
            let m = need_measure(cfg)?;
            let alpha = *cfg.alpha.get_or_insert(0.0);
            let rt = RateTable::build(m, alpha, n_max + 1)?;
            let mut rows = Vec::new();
            let mut jrows = Vec::new();
            let mut all_ok = true;
            for l in 2..=*n_max {
                let (lhs, rhs) = rt.lyapunov_check(l)?;
                let ok = lhs <= rhs + 1e-6;
                all_ok &= ok;
                rows.push(format!("{l},{},{},{ok}", fmt_f(lhs), fmt_f(rhs)));
                jrows.push(json!({"l": l, "lhs": lhs, "rhs": rhs, "ok": ok}));
            }
            Ok(Artifact::new(
                json!({"pass": all_ok, "rows": jrows}),
                "l,lhs,rhs,ok",
                rows,
            )
            .with_args(json!({"n_max": n_max})))
        }
        Cmd::TransienceCheck => {
            let m = need_measure(cfg)?;
            let r = transience_consistency(
                &m,
                *cfg.alpha.get_or_insert(0.0),
                *cfg.x0.get_or_insert(0.5),
                *cfg.n0.get_or_insert(10),
                *cfg.reps.get_or_insert(2_000),
                *cfg.t_max.get_or_insert(100.0),
                seed,
            )?;
            Ok(Artifact::new(
                json!({"consistent": r.consistent, "verdict": r.verdict,
                       "alpha": r.alpha, "alpha_star": json_num(r.alpha_star),
                       "p_one": r.p_one, "p_zero": r.p_zero,
                       "undecided": r.undecided, "probe": r.probe}),
                "consistent,alpha,alpha_star,p_one,drift_sign,return_fraction",
                vec![format!(
                    "{},{},{},{},{},{}",
                    r.consistent,
                    fmt_f(r.alpha),
                    fmt_f(r.alpha_star),
                    fmt_f(r.p_one.p_hat),
                    r.probe.drift_sign,
                    fmt_f(r.probe.return_fraction)
                )],
            ))
        }
    }
}

fn cmd_name(cmd: &Cmd) -> &'static str {
    match cmd {
        Cmd::AlphaStar => "alpha-star",
        Cmd::RatesTable { .. } => "rates-table",
        Cmd::DeltaTable { .. } => "delta-table",
        Cmd::Cdi { .. } => "cdi",
        Cmd::EtBound { .. } => "et-bound",
        Cmd::SimulateForward => "simulate-forward",
        Cmd::SimulateDual => "simulate-dual",
        Cmd::DualityCheck { .. } => "duality-check",
        Cmd::FixationScan { .. } => "fixation-scan",
        Cmd::LyapunovCheck { .. } => "lyapunov-check",
        Cmd::TransienceCheck => "transience-check",
    }
}

fn emit(
    cmd: &Cmd,
    cfg: &RunConfig,
    seed: u64,
    artifact: Artifact,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let format = cfg.format.unwrap_or(Format::Json);
    // thread count is an execution detail, not part of the run's identity;
    // leaving it out keeps outputs byte-identical across --threads
    let mut echo = cfg.clone();
    echo.threads = None;
    let config_value = serde_json::to_value(&echo).expect("config serializes");
    let text = match format {
        Format::Json => {
            let mut envelope = json!({
                "tool": "lwf",
                "version": env!("CARGO_PKG_VERSION"),
                "command": cmd_name(cmd),
                "seed": seed,
                "config": config_value,
                "result": artifact.result,
            });
            if let Some(args) = &artifact.args {
                envelope["args"] = args.clone();
            }
            let mut s = serde_json::to_string_pretty(&envelope).expect("envelope serializes");
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut s = String::new();
            let _ = writeln!(s, "# lwf {}", env!("CARGO_PKG_VERSION"));
            let _ = writeln!(s, "# command: {}", cmd_name(cmd));
            let _ = writeln!(s, "# seed: {seed}");
            let _ = writeln!(
                s,
                "# config: {}",
                serde_json::to_string(&config_value).expect("config serializes")
            );
            if let Some(args) = &artifact.args {
                let _ = writeln!(s, "# args: {}", serde_json::to_string(args).expect("args"));
            }
            let _ = writeln!(s, "{}", artifact.csv_header);
            for row in &artifact.csv_rows {
                let _ = writeln!(s, "{row}");
            }
            s
        }
    };
    match &cfg.out_path {
        Some(path) => {
            std::fs::write(path, text.as_bytes())
                .map_err(|e| Failure::compute(format!("writing {path}: {e}")))?;
            writeln!(out, "wrote {path}").map_err(Failure::from)?;
        }
        None => out.write_all(text.as_bytes()).map_err(Failure::from)?,
    }
    Ok(())
}
