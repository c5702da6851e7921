//! Driving measures Lambda on [0, 1] and integration against
//! nu(dx) = x^{-2} Lambda(dx) on (0, 1].
//!
//! A measure is a finite mixture of primitive parts — atoms in (0, 1],
//! unnormalised Beta densities x^{a-1}(1-x)^{b-1}, and piecewise-constant
//! grid densities — plus an optional atom at zero (`kingman_mass`), which
//! is carried separately because it never enters nu-integrals: the x^{-2}
//! reweighting is only defined away from zero, and the atom's quadratic
//! coalescence contribution is added explicitly where it applies.
//!
//! Integrand arguments: every scalar function handed to this module is
//! called as `f(x, 1 - x)` with both coordinates supplied at full
//! precision, so that factors like `ln(1-x)` stay accurate near x = 1.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{self, Quad, Split};
use crate::tables::CdfTable;

pub use crate::quad::Tol;

/// Sampling floor: density mass below this x is ignored by the tabulated
/// samplers (the nu-weight makes it irrelevant in every supported regime).
pub(crate) const SAMPLE_FLOOR: f64 = 1e-12;

// ── estimates ────────────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimateKind {
    Exact,
    Quadrature,
    MonteCarlo,
}

/// A numeric result together with an error bound and how it was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithError {
    pub value: f64,
    pub error: f64,
    pub kind: EstimateKind,
}

impl EstimateWithError {
    pub fn exact(value: f64) -> Self {
        EstimateWithError { value, error: 0.0, kind: EstimateKind::Exact }
    }
    pub fn quadrature(value: f64, error: f64) -> Self {
        EstimateWithError { value, error, kind: EstimateKind::Quadrature }
    }
    pub fn monte_carlo(value: f64, se: f64) -> Self {
        EstimateWithError { value, error: se, kind: EstimateKind::MonteCarlo }
    }
    /// Sum of two estimates; exactness survives only if both sides are exact.
    pub fn add(self, other: Self) -> Self {
        let kind = if self.kind == EstimateKind::Exact && other.kind == EstimateKind::Exact {
            EstimateKind::Exact
        } else if self.kind == EstimateKind::MonteCarlo || other.kind == EstimateKind::MonteCarlo {
            EstimateKind::MonteCarlo
        } else {
            EstimateKind::Quadrature
        };
        EstimateWithError { value: self.value + other.value, error: self.error + other.error, kind }
    }
}

// ── serialised measure descriptions ──────────────────────────────────────

/// JSON-facing description of a measure. Example:
/// `{"type":"mixture","components":[{"weight":0.5,"measure":{"type":"dirac","x":0.3,"c":1.0}},
///   {"weight":0.5,"measure":{"type":"beta","a":2.0,"b":1.0}}]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum MeasureSpec {
    Dirac { x: f64, c: f64 },
    Beta { a: f64, b: f64 },
    Kingman { c: f64 },
    Grid { breaks: Vec<f64>, density: Vec<f64> },
    Mixture { components: Vec<MixtureComponent> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub measure: MeasureSpec,
}

// ── internal flattened representation ────────────────────────────────────

#[derive(Clone, Debug)]
pub(crate) enum Part {
    /// Lambda({x}) = mass, x in (0, 1].
    Atom { x: f64, mass: f64 },
    /// scale * x^{a-1} (1-x)^{b-1} dx on (0, 1).
    Beta { a: f64, b: f64, scale: f64 },
    /// Piecewise-constant density on [breaks[j], breaks[j+1]).
    Grid { breaks: Vec<f64>, dens: Vec<f64>, scale: f64 },
}

/// A finite measure Lambda on [0, 1], validated at construction.
#[derive(Clone, Debug)]
pub struct LambdaMeasure {
    parts: Vec<Part>,
    kingman: f64,
    spec: MeasureSpec,
}

impl PartialEq for LambdaMeasure {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

impl Serialize for LambdaMeasure {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.spec.serialize(s)
    }
}

impl<'de> Deserialize<'de> for LambdaMeasure {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let spec = MeasureSpec::deserialize(d)?;
        LambdaMeasure::from_spec(spec).map_err(serde::de::Error::custom)
    }
}

fn check_finite(v: f64, what: &str) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::InvalidMeasure(format!("{what} must be finite, got {v}")));
    }
    Ok(())
}

impl LambdaMeasure {
    // ── constructors ─────────────────────────────────────────────────────

    pub fn from_spec(spec: MeasureSpec) -> Result<Self> {
        let mut parts = Vec::new();
        let mut kingman = 0.0;
        flatten(&spec, 1.0, true, &mut parts, &mut kingman)?;
        let m = LambdaMeasure { parts, kingman, spec };
        let total = m.total_mass().value;
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidMeasure(format!(
                "total mass must be strictly positive and finite, got {total}"
            )));
        }
        Ok(m)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: MeasureSpec = serde_json::from_str(text)
            .map_err(|e| Error::InvalidMeasure(format!("bad measure JSON: {e}")))?;
        Self::from_spec(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.spec).expect("measure spec serialises")
    }

    /// Single atom of mass `c` at `x` in (0, 1].
    pub fn dirac(x: f64, c: f64) -> Result<Self> {
        Self::from_spec(MeasureSpec::Dirac { x, c })
    }

    /// Unnormalised Beta density `x^{a-1} (1-x)^{b-1}` on (0, 1).
    pub fn beta(a: f64, b: f64) -> Result<Self> {
        Self::from_spec(MeasureSpec::Beta { a, b })
    }

    /// Pure atom at zero of mass `c`.
    pub fn kingman(c: f64) -> Result<Self> {
        Self::from_spec(MeasureSpec::Kingman { c })
    }

    /// Piecewise-constant density: `density[j]` on `[breaks[j], breaks[j+1])`.
    pub fn grid(breaks: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        Self::from_spec(MeasureSpec::Grid { breaks, density })
    }

    /// Finite list of atoms, `(location, mass)` pairs.
    pub fn atoms(list: &[(f64, f64)]) -> Result<Self> {
        let components = list
            .iter()
            .map(|&(x, c)| MixtureComponent { weight: 1.0, measure: MeasureSpec::Dirac { x, c } })
            .collect();
        Self::from_spec(MeasureSpec::Mixture { components })
    }

    /// Weighted mixture of non-mixture measures.
    pub fn mixture(components: Vec<(f64, LambdaMeasure)>) -> Result<Self> {
        let components = components
            .into_iter()
            .map(|(weight, m)| MixtureComponent { weight, measure: m.spec })
            .collect();
        Self::from_spec(MeasureSpec::Mixture { components })
    }

    // ── accessors ────────────────────────────────────────────────────────

    pub fn spec(&self) -> &MeasureSpec {
        &self.spec
    }

    /// Mass of the atom at zero, Lambda({0}).
    pub fn kingman_mass(&self) -> f64 {
        self.kingman
    }

    pub(crate) fn parts(&self) -> &[Part] {
        &self.parts
    }

    /// Atoms in (0, 1] as `(location, Lambda-mass)` pairs.
    pub(crate) fn atom_list(&self) -> Vec<(f64, f64)> {
        self.parts
            .iter()
            .filter_map(|p| match p {
                Part::Atom { x, mass } => Some((*x, *mass)),
                _ => None,
            })
            .collect()
    }

    pub(crate) fn has_density(&self) -> bool {
        self.parts.iter().any(|p| !matches!(p, Part::Atom { .. }))
    }

    /// Pointwise Lambda-density of the non-atomic parts.
    pub(crate) fn density_at(&self, x: f64, xc: f64) -> f64 {
        let mut d = 0.0;
        for p in &self.parts {
            match p {
                Part::Atom { .. } => {}
                Part::Beta { a, b, scale } => {
                    // guard the exponents so x = 0 or 1 with a or b = 1
                    // cannot produce 0 * ln(0)
                    let mut ln = scale.ln();
                    if *a != 1.0 {
                        ln += (a - 1.0) * x.ln();
                    }
                    if *b != 1.0 {
                        ln += (b - 1.0) * xc.ln();
                    }
                    d += ln.exp();
                }
                Part::Grid { breaks, dens, scale } => {
                    if x >= breaks[0] && x <= *breaks.last().unwrap() {
                        let j = match breaks.binary_search_by(|b| b.total_cmp(&x)) {
                            Ok(j) => j.min(dens.len() - 1),
                            Err(j) => j.saturating_sub(1).min(dens.len() - 1),
                        };
                        d += scale * dens[j];
                    }
                }
            }
        }
        d
    }

    // ── integrals ────────────────────────────────────────────────────────

    /// Total mass Lambda([0, 1]) including the atom at zero.
    pub fn total_mass(&self) -> EstimateWithError {
        let mut out = EstimateWithError::exact(self.kingman);
        for p in &self.parts {
            let e = match p {
                Part::Atom { mass, .. } => EstimateWithError::exact(*mass),
                Part::Beta { a, b, scale } => {
                    EstimateWithError::exact(scale * statrs::function::beta::ln_beta(*a, *b).exp())
                }
                Part::Grid { breaks, dens, scale } => {
                    let v: f64 = dens
                        .iter()
                        .enumerate()
                        .map(|(j, d)| d * (breaks[j + 1] - breaks[j]))
                        .sum();
                    // exact per cell, but tagged as quadrature with a
                    // rounding-level bound
                    EstimateWithError::quadrature(scale * v, scale * v * 1e-15 * dens.len() as f64)
                }
            };
            out = out.add(e);
        }
        out
    }

    /// Integral of `f` against nu(dx) = x^{-2} Lambda(dx) over (0, 1].
    ///
    /// The atom at zero never contributes. `zero_order` is the caller's
    /// declaration that `f(x) = O(x^zero_order)` as x -> 0; it is used to
    /// recognise integrals that are guaranteed to converge at the left
    /// endpoint, everything else is monitored for divergence.
    pub fn integrate_nu(&self, f: impl Fn(f64, f64) -> f64, zero_order: u32) -> Result<EstimateWithError> {
        self.integrate_nu_tol(f, zero_order, Tol::default())
    }

    /// [`integrate_nu`](Self::integrate_nu) with explicit tolerances; useful
    /// when the integral's magnitude is far from 1 and the default absolute
    /// target would over- or under-resolve the endpoint tails.
    pub fn integrate_nu_tol(
        &self,
        f: impl Fn(f64, f64) -> f64,
        zero_order: u32,
        tol: Tol,
    ) -> Result<EstimateWithError> {
        let mut value = 0.0;
        let mut error = 0.0;
        let mut any_quad = false;
        for p in &self.parts {
            let q = part_nu_integral(p, &f, zero_order, tol)?;
            value += q.value;
            error += q.error;
            any_quad |= !matches!(p, Part::Atom { .. });
        }
        if !value.is_finite() {
            return Err(Error::DivergentIntegral { endpoint: "an atom" });
        }
        Ok(if any_quad {
            EstimateWithError::quadrature(value, error)
        } else {
            EstimateWithError::exact(value)
        })
    }

    /// Laplace exponent of the additive dual subordinator:
    /// `q -> integral of (1 - (1-x)^q) nu(dx)`.
    ///
    /// Defined only for measures with no atom at zero; errors with
    /// `KingmanUnsupported` otherwise. Nondecreasing and concave in q.
    pub fn laplace_exponent(&self, q: f64) -> Result<EstimateWithError> {
        if self.kingman > 0.0 {
            return Err(Error::KingmanUnsupported { mass: self.kingman });
        }
        if !(q >= 0.0) {
            return Err(Error::InvalidConfig(format!("laplace exponent needs q >= 0, got {q}")));
        }
        if q == 0.0 {
            return Ok(EstimateWithError::exact(0.0));
        }
        self.integrate_nu(move |_x, xc| -(q * xc.ln()).exp_m1(), 1)
    }

    /// Lambda-mass of (0, y): atoms strictly below y plus the density mass.
    pub(crate) fn lambda_mass_below(&self, y: f64) -> Result<f64> {
        let y = y.clamp(0.0, 1.0);
        let mut m = 0.0;
        for p in &self.parts {
            match p {
                Part::Atom { x, mass } => {
                    if *x < y {
                        m += mass;
                    }
                }
                Part::Beta { a, b, scale } => {
                    if y > 0.0 {
                        let ab = (*a, *b, *scale);
                        let f = |_: f64, _: f64| 1.0;
                        let ln_w = move |x: f64, xc: f64| {
                            (ab.0 - 1.0) * x.ln() + (ab.1 - 1.0) * xc.ln() + ab.2.ln()
                        };
                        let split = Split { f: &f, ln_w: &ln_w };
                        if y >= 1.0 {
                            m += self.total_mass().value - self.kingman;
                        } else {
                            m += quad::left_tail(&split, y, 1e-13, true)?.value;
                        }
                    }
                }
                Part::Grid { breaks, dens, scale } => {
                    for (j, d) in dens.iter().enumerate() {
                        let lo = breaks[j];
                        let hi = breaks[j + 1];
                        if y > lo {
                            m += scale * d * (y.min(hi) - lo);
                        }
                    }
                }
            }
        }
        Ok(m)
    }

    // ── sampling ─────────────────────────────────────────────────────────

    /// Draws one sample distributed proportionally to `weight(x) nu(dx)`
    /// on (0, 1]. For repeated draws build a [`WeightedSampler`] once.
    pub fn sample_weighted<R: Rng>(
        &self,
        weight: impl Fn(f64, f64) -> f64,
        rng: &mut R,
    ) -> Result<f64> {
        WeightedSampler::new(self, weight, 0.0, 1.0)?.sample(rng)
    }
}

/// Flattens a spec into primitive parts, hoisting every atom at zero into
/// the shared `kingman` slot and validating parameters along the way.
fn flatten(
    spec: &MeasureSpec,
    weight: f64,
    allow_mixture: bool,
    parts: &mut Vec<Part>,
    kingman: &mut f64,
) -> Result<()> {
    check_finite(weight, "mixture weight")?;
    if weight < 0.0 {
        return Err(Error::InvalidMeasure(format!("mixture weight must be >= 0, got {weight}")));
    }
    if weight == 0.0 {
        return Ok(());
    }
    match spec {
        MeasureSpec::Dirac { x, c } => {
            check_finite(*x, "atom location")?;
            check_finite(*c, "atom mass")?;
            if !(*x > 0.0 && *x <= 1.0) {
                return Err(Error::InvalidMeasure(format!(
                    "atom location must lie in (0, 1], got {x}"
                )));
            }
            if *c < 0.0 {
                return Err(Error::InvalidMeasure(format!("atom mass must be >= 0, got {c}")));
            }
            if *c > 0.0 {
                parts.push(Part::Atom { x: *x, mass: weight * c });
            }
        }
        MeasureSpec::Beta { a, b } => {
            check_finite(*a, "beta parameter a")?;
            check_finite(*b, "beta parameter b")?;
            if !(*a > 0.0 && *b > 0.0) {
                return Err(Error::InvalidMeasure(format!(
                    "beta parameters must be positive, got a = {a}, b = {b}"
                )));
            }
            parts.push(Part::Beta { a: *a, b: *b, scale: weight });
        }
        MeasureSpec::Kingman { c } => {
            check_finite(*c, "kingman mass")?;
            if *c < 0.0 {
                return Err(Error::InvalidMeasure(format!("kingman mass must be >= 0, got {c}")));
            }
            *kingman += weight * c;
        }
        MeasureSpec::Grid { breaks, density } => {
            if breaks.len() < 2 || density.len() + 1 != breaks.len() {
                return Err(Error::InvalidMeasure(format!(
                    "grid needs n+1 breakpoints for n density cells, got {} and {}",
                    breaks.len(),
                    density.len()
                )));
            }
            for w in breaks.windows(2) {
                if !(w[0] < w[1]) {
                    return Err(Error::InvalidMeasure(
                        "grid breakpoints must be strictly increasing".into(),
                    ));
                }
            }
            if !(breaks[0] > 0.0 && *breaks.last().unwrap() <= 1.0) {
                return Err(Error::InvalidMeasure(
                    "grid breakpoints must lie in (0, 1]".into(),
                ));
            }
            for d in density {
                check_finite(*d, "grid density")?;
                if *d < 0.0 {
                    return Err(Error::InvalidMeasure("grid density must be >= 0".into()));
                }
            }
            parts.push(Part::Grid { breaks: breaks.clone(), dens: density.clone(), scale: weight });
        }
        MeasureSpec::Mixture { components } => {
            if !allow_mixture {
                return Err(Error::InvalidMeasure(
                    "mixtures may not contain nested mixtures".into(),
                ));
            }
            for comp in components {
                flatten(&comp.measure, weight * comp.weight, false, parts, kingman)?;
            }
        }
    }
    Ok(())
}

fn part_nu_integral(
    part: &Part,
    f: &impl Fn(f64, f64) -> f64,
    zero_order: u32,
    tol: Tol,
) -> Result<Quad> {
    match part {
        Part::Atom { x, mass } => {
            let xc = 1.0 - x;
            let v = f(*x, xc);
            if v.is_nan() {
                return Err(Error::InvalidIntegrand { x: *x });
            }
            let t = v * mass / (x * x);
            if t.is_infinite() {
                return Err(Error::DivergentIntegral { endpoint: "an atom" });
            }
            Ok(Quad { value: t, error: 0.0 })
        }
        Part::Beta { a, b, scale } => {
            let (a, b, ls) = (*a, *b, scale.ln());
            let ln_w = move |x: f64, xc: f64| (a - 3.0) * x.ln() + (b - 1.0) * xc.ln() + ls;
            let split = Split { f, ln_w: &ln_w };
            // integrand ~ x^{a + zero_order - 3} near zero: convergent iff
            // the exponent exceeds -1.
            let guaranteed = a + zero_order as f64 > 2.0 + 1e-12;
            quad::nu_open01(&split, tol, guaranteed)
        }
        Part::Grid { breaks, dens, scale } => {
            let mut total = Quad::default();
            for (j, d) in dens.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let lw = (scale * d).ln();
                let ln_w = move |x: f64, _: f64| lw - 2.0 * x.ln();
                let split = Split { f, ln_w: &ln_w };
                let q = quad::nu_cell(&split, breaks[j], breaks[j + 1], tol)?;
                total.value += q.value;
                total.error += q.error;
            }
            Ok(total)
        }
    }
}

// ── weighted sampling ────────────────────────────────────────────────────

/// Sampler for `x ~ weight(x) nu(dx)` restricted to [lo, hi], with atoms
/// handled exactly and density parts through a tabulated inverse CDF built
/// once at construction.
pub struct WeightedSampler {
    atoms: Vec<(f64, f64)>, // (x, cumulative weighted nu-mass)
    atom_total: f64,
    table: Option<CdfTable>,
    total: f64,
}

impl WeightedSampler {
    pub fn new(
        m: &LambdaMeasure,
        weight: impl Fn(f64, f64) -> f64,
        lo: f64,
        hi: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
            return Err(Error::InvalidConfig(format!(
                "sampling range [{lo}, {hi}] must satisfy 0 <= lo < hi <= 1"
            )));
        }
        let mut atoms = Vec::new();
        let mut cum = 0.0;
        for (x, mass) in m.atom_list() {
            if x < lo || x > hi {
                continue;
            }
            let w = weight(x, 1.0 - x);
            if w.is_nan() || w < 0.0 {
                return Err(Error::InvalidIntegrand { x });
            }
            if w > 0.0 {
                cum += mass / (x * x) * w;
                atoms.push((x, cum));
            }
        }
        let table = if m.has_density() {
            let dens = |x: f64, xc: f64| weight(x, xc) * m.density_at(x, xc) / (x * x);
            Some(CdfTable::build(&dens, lo.max(SAMPLE_FLOOR), hi)?)
        } else {
            None
        };
        let table_total = table.as_ref().map_or(0.0, |t| t.total());
        let total = cum + table_total;
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::ZeroMass);
        }
        Ok(WeightedSampler { atoms, atom_total: cum, table, total })
    }

    /// Total weighted nu-mass of the sampling range.
    pub fn total_mass(&self) -> f64 {
        self.total
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<f64> {
        let u: f64 = rng.random();
        let target = u * self.total;
        if target < self.atom_total {
            let idx = self.atoms.partition_point(|&(_, c)| c <= target);
            return Ok(self.atoms[idx.min(self.atoms.len() - 1)].0);
        }
        let table = self.table.as_ref().ok_or(Error::ZeroMass)?;
        let v: f64 = rng.random();
        Ok(table.sample(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Series for sum_{k>=0} (b+k)^{-2} with an Euler-Maclaurin tail.
    fn hurwitz_zeta2(b: f64) -> f64 {
        let n = 10_000u64;
        let mut s: f64 = (0..n).map(|k| (b + k as f64).powi(-2)).sum();
        let t = b + n as f64;
        s += 1.0 / t + 1.0 / (2.0 * t * t) + 1.0 / (6.0 * t * t * t);
        s
    }

    #[test]
    fn total_mass_examples() {
        let m = LambdaMeasure::beta(2.0, 1.0).unwrap();
        let t = m.total_mass();
        assert_eq!(t.kind, EstimateKind::Exact);
        assert!((t.value - 0.5).abs() < 1e-14);

        let mix = LambdaMeasure::mixture(vec![
            (0.5, LambdaMeasure::dirac(0.3, 1.0).unwrap()),
            (0.5, LambdaMeasure::beta(2.0, 1.0).unwrap()),
        ])
        .unwrap();
        assert!((mix.total_mass().value - 0.75).abs() < 1e-14);

        let king = LambdaMeasure::kingman(1.0).unwrap();
        assert!((king.total_mass().value - 1.0).abs() < 1e-15);
        assert_eq!(king.kingman_mass(), 1.0);
    }

    #[test]
    fn integrate_nu_atom_is_exact() {
        let m = LambdaMeasure::dirac(0.5, 1.0).unwrap();
        let r = m.integrate_nu(|x, _| x * x, 2).unwrap();
        assert_eq!(r.kind, EstimateKind::Exact);
        assert_eq!(r.value, 1.0);
    }

    #[test]
    fn integrate_nu_beta_dilogarithm() {
        // -ln(1-x) against nu for Beta(2,1) equals sum (1+k)^{-2} = pi^2/6
        let m = LambdaMeasure::beta(2.0, 1.0).unwrap();
        let r = m.integrate_nu(|_, xc| -xc.ln(), 1).unwrap();
        let target = hurwitz_zeta2(1.0);
        assert!(
            (r.value - target).abs() <= 1e-8 * target,
            "got {} want {target}",
            r.value
        );
        assert_eq!(r.kind, EstimateKind::Quadrature);
    }

    #[test]
    fn integrate_nu_detects_divergence() {
        let m = LambdaMeasure::beta(1.0, 1.0).unwrap();
        let err = m.integrate_nu(|_, xc| -xc.ln(), 1).unwrap_err();
        assert!(matches!(err, Error::DivergentIntegral { .. }), "got {err:?}");
    }

    #[test]
    fn integrate_nu_kingman_never_contributes() {
        let mix = LambdaMeasure::mixture(vec![
            (1.0, LambdaMeasure::kingman(5.0).unwrap()),
            (1.0, LambdaMeasure::dirac(0.5, 1.0).unwrap()),
        ])
        .unwrap();
        let r = mix.integrate_nu(|x, _| x * x, 2).unwrap();
        assert_eq!(r.value, 1.0); // kingman part invisible to nu
        assert_eq!(mix.kingman_mass(), 5.0);
    }

    #[test]
    fn laplace_exponent_values_and_shape() {
        let m = LambdaMeasure::beta(2.0, 1.0).unwrap();
        assert_eq!(m.laplace_exponent(0.0).unwrap().value, 0.0);
        let v1 = m.laplace_exponent(1.0).unwrap().value;
        let v2 = m.laplace_exponent(2.0).unwrap().value;
        assert!((v1 - 1.0).abs() < 1e-9, "got {v1}");
        assert!((v2 - 1.5).abs() < 1e-9, "got {v2}");
        // nondecreasing and concave along a grid
        let qs: Vec<f64> = (0..20).map(|i| 0.5 * i as f64).collect();
        let vals: Vec<f64> = qs.iter().map(|&q| m.laplace_exponent(q).unwrap().value).collect();
        for w in vals.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
        for w in vals.windows(3) {
            assert!(w[2] - w[1] <= w[1] - w[0] + 1e-9);
        }
    }

    #[test]
    fn laplace_exponent_rejects_kingman_and_dust() {
        let king = LambdaMeasure::kingman(1.0).unwrap();
        assert!(matches!(
            king.laplace_exponent(1.0).unwrap_err(),
            Error::KingmanUnsupported { .. }
        ));
        // Beta(1,1): integrand ~ q/x near zero, divergent
        let m = LambdaMeasure::beta(1.0, 1.0).unwrap();
        assert!(matches!(
            m.laplace_exponent(1.0).unwrap_err(),
            Error::DivergentIntegral { .. }
        ));
    }

    #[test]
    fn sample_weighted_two_atoms() {
        // nu-masses 1/0.0625 = 16 and 1/0.5625 = 1.777..; P(0.25) = 0.9
        let m = LambdaMeasure::atoms(&[(0.25, 1.0), (0.75, 1.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 20_000;
        let mut hits = 0;
        for _ in 0..n {
            if m.sample_weighted(|_, _| 1.0, &mut rng).unwrap() == 0.25 {
                hits += 1;
            }
        }
        let p = hits as f64 / n as f64;
        assert!((p - 0.9).abs() < 0.01, "got {p}");
    }

    #[test]
    fn sample_weighted_beta_mean() {
        // weight x^2 turns nu back into Lambda: density 2x on (0,1), mean 2/3
        let m = LambdaMeasure::beta(2.0, 1.0).unwrap();
        let sampler = WeightedSampler::new(&m, |x, _| x * x, 0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| sampler.sample(&mut rng).unwrap()).sum::<f64>() / n as f64;
        // sd of the target is sqrt(1/18); allow 4 standard errors
        let se = (1.0 / 18.0f64 / n as f64).sqrt();
        assert!((mean - 2.0 / 3.0).abs() < 4.0 * se, "got {mean}");
    }

    #[test]
    fn sample_weighted_restricted_chi_square() {
        // nu for Beta(2,1) has density 1/x; restricted to [0.01, 1] the
        // normalised target is 1/(x ln 100). 20 equal-probability bins.
        let m = LambdaMeasure::beta(2.0, 1.0).unwrap();
        let sampler = WeightedSampler::new(&m, |_, _| 1.0, 0.01, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bins = 20usize;
        let n = 100_000usize;
        let mut counts = vec![0u64; bins];
        let edges: Vec<f64> = (0..=bins).map(|i| 0.01f64.powf(1.0 - i as f64 / bins as f64)).collect();
        for _ in 0..n {
            let x = sampler.sample(&mut rng).unwrap();
            let j = edges.partition_point(|e| *e <= x).saturating_sub(1).min(bins - 1);
            counts[j] += 1;
        }
        let probs = vec![1.0 / bins as f64; bins];
        let (stat, df) = crate::stats::chi_square_stat(&counts, &probs);
        let crit = crate::stats::chi_square_critical(df, 0.01);
        assert!(stat < crit, "chi-square {stat} >= critical {crit} (df {df})");
    }

    #[test]
    fn sample_weighted_zero_mass_errors() {
        let m = LambdaMeasure::dirac(0.5, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = m.sample_weighted(|_, _| 0.0, &mut rng).unwrap_err();
        assert!(matches!(err, Error::ZeroMass));
    }

    #[test]
    fn json_round_trip_and_validation() {
        let text = r#"{"type":"mixture","components":[
            {"weight":0.5,"measure":{"type":"dirac","x":0.3,"c":1.0}},
            {"weight":0.5,"measure":{"type":"beta","a":2.0,"b":1.0}}]}"#;
        let m = LambdaMeasure::from_json(text).unwrap();
        let again = LambdaMeasure::from_json(&m.to_json()).unwrap();
        assert_eq!(m, again);

        assert!(LambdaMeasure::from_json(r#"{"type":"dirac","x":1.5,"c":1.0}"#).is_err());
        assert!(LambdaMeasure::from_json(r#"{"type":"beta","a":-1.0,"b":1.0}"#).is_err());
        assert!(LambdaMeasure::from_json(r#"{"type":"dirac","x":0.5,"c":1.0,"zz":3}"#).is_err());
        // nested mixtures are rejected
        let nested = r#"{"type":"mixture","components":[{"weight":1.0,"measure":
            {"type":"mixture","components":[{"weight":1.0,"measure":{"type":"dirac","x":0.5,"c":1.0}}]}}]}"#;
        assert!(LambdaMeasure::from_json(nested).is_err());
    }

    #[test]
    fn grid_measure_masses() {
        let m = LambdaMeasure::grid(vec![0.2, 0.6, 1.0], vec![1.0, 0.5]).unwrap();
        assert!((m.total_mass().value - 0.6).abs() < 1e-12);
        // weight x^2 against nu recovers the Lambda mass
        let r = m.integrate_nu(|x, _| x * x, 2).unwrap();
        assert!((r.value - 0.6).abs() < 1e-9, "got {}", r.value);
        assert!((m.lambda_mass_below(0.6).unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn lambda_mass_below_beta() {
        // Beta(2,1): Lambda((0,y)) = y^2 / 2
        let m = LambdaMeasure::beta(2.0, 1.0).unwrap();
        for y in [1e-6, 1e-3, 0.1, 0.9] {
            let got = m.lambda_mass_below(y).unwrap();
            let want = y * y / 2.0;
            assert!((got - want).abs() < 1e-12 + 1e-9 * want, "y={y} got {got} want {want}");
        }
    }
}
