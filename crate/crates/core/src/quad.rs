//! Adaptive Gauss-Kronrod quadrature on subintervals of (0, 1) with
//! logarithmic endpoint substitutions.
//!
//! Integrands are supplied in split form: a signed factor `f(x, 1-x)` and
//! the log of a positive weight `ln_w(x, 1-x)` (measure density times
//! `x^{-2}`). The engine recombines `f * exp(ln_w + ln_jacobian)` so that
//! endpoint tails can be explored far deeper than direct evaluation would
//! allow without overflow, and both `x` and `1-x` are passed explicitly so
//! that the accurate coordinate is available on either side.
//!
//! Near x = 0 the tail is parameterised by u = -ln x, near x = 1 by
//! s = -ln(1-x), in geometrically growing blocks. For a convergent
//! integral the block contributions decay geometrically; for a divergent
//! one the partial sums keep growing, which is what the
//! 1.5x-over-three-blocks rule detects once the blocks are past
//! x < 1e-12 (resp. 1-x < 1e-12).

use std::cell::Cell;
use std::collections::BinaryHeap;

use crate::error::Error;

/// Default absolute tolerance for measure integrals.
pub const ABS_TOL: f64 = 1e-10;
/// Default relative tolerance for measure integrals.
pub const REL_TOL: f64 = 1e-8;

/// x (or 1-x) below this counts as "past the endpoint" for divergence calls.
const ENDPOINT_GUARD_U: f64 = 27.631_021_115_928_55; // -ln(1e-12)
/// Deepest endpoint exploration, u = -ln x.
const U_MAX: f64 = 700.0;
const GROWTH_FACTOR: f64 = 1.5;
const MAX_SEGMENTS: usize = 256;

#[derive(Clone, Copy, Debug)]
pub struct Tol {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tol {
    fn default() -> Self {
        Tol { abs: ABS_TOL, rel: REL_TOL }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
}

/// Integrand in split form; the full integrand is `f * exp(ln_w)`.
pub struct Split<'a> {
    pub f: &'a dyn Fn(f64, f64) -> f64,
    pub ln_w: &'a dyn Fn(f64, f64) -> f64,
}

#[derive(Default)]
struct EvalState {
    /// First x at which `f` returned NaN.
    nan_at: Cell<Option<f64>>,
    /// Whether any recombined value overflowed to +-inf.
    overflowed: Cell<bool>,
}

fn eval(split: &Split, st: &EvalState, x: f64, xc: f64, ln_jac: f64) -> f64 {
    let m = (split.f)(x, xc);
    if m.is_nan() {
        if st.nan_at.get().is_none() {
            st.nan_at.set(Some(x));
        }
        return 0.0; // poisoned; reported via state
    }
    if m == 0.0 {
        return 0.0;
    }
    let l = (split.ln_w)(x, xc) + ln_jac;
    if m.is_infinite() {
        st.overflowed.set(true);
        return 0.0;
    }
    let out = if (-650.0..650.0).contains(&l) && (1e-100..1e100).contains(&m.abs()) {
        m * l.exp()
    } else {
        let s = m.abs().ln() + l;
        if s > 709.0 {
            st.overflowed.set(true);
            return 0.0;
        }
        m.signum() * s.exp()
    };
    if out.is_infinite() {
        st.overflowed.set(true);
        return 0.0;
    }
    out
}

// ── 15-point Gauss-Kronrod kernel ────────────────────────────────────────

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_17,
    0.207_784_955_007_898_47,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_93,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_94,
    0.417_959_183_673_469_4,
];

fn qk15(h: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let centr = 0.5 * (a + b);
    let hlgth = 0.5 * (b - a);
    let fc = h(centr);
    let mut resk = WGK[7] * fc;
    let mut resg = WG[3] * fc;
    let mut fv = [0.0f64; 14];
    for j in 0..7 {
        let dx = hlgth * XGK[j];
        let f1 = h(centr - dx);
        let f2 = h(centr + dx);
        fv[2 * j] = f1;
        fv[2 * j + 1] = f2;
        resk += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let reskh = resk * 0.5;
    let mut resasc = WGK[7] * (fc - reskh).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv[2 * j] - reskh).abs() + (fv[2 * j + 1] - reskh).abs());
    }
    let value = resk * hlgth;
    resasc *= hlgth.abs();
    let raw = ((resk - resg) * hlgth).abs();
    let err = if resasc != 0.0 && raw != 0.0 {
        resasc * (200.0 * raw / resasc).powf(1.5).min(1.0)
    } else {
        raw
    };
    (value, err)
}

// ── adaptive bisection on a finite interval ──────────────────────────────

struct Seg {
    err: f64,
    val: f64,
    a: f64,
    b: f64,
}

impl PartialEq for Seg {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Seg {}
impl PartialOrd for Seg {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Seg {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Adaptive GK15 on [a, b]; refines worst segments until the summed error
/// estimate drops below `abs_target` or the segment budget is exhausted.
fn adaptive(h: &impl Fn(f64) -> f64, a: f64, b: f64, abs_target: f64, max_seg: usize) -> Quad {
    let (v, e) = qk15(h, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Seg { err: e, val: v, a, b });
    let mut total_err = e;
    while total_err > abs_target && heap.len() < max_seg {
        let worst = heap.pop().expect("heap nonempty");
        let width = worst.b - worst.a;
        if width < 1e-14 * (worst.b.abs() + 1.0) {
            heap.push(worst);
            break;
        }
        let mid = 0.5 * (worst.a + worst.b);
        let (v1, e1) = qk15(h, worst.a, mid);
        let (v2, e2) = qk15(h, mid, worst.b);
        total_err += e1 + e2 - worst.err;
        heap.push(Seg { err: e1, val: v1, a: worst.a, b: mid });
        heap.push(Seg { err: e2, val: v2, a: mid, b: worst.b });
    }
    // Canonical summation order for bit-for-bit reproducibility.
    let mut segs: Vec<Seg> = heap.into_vec();
    segs.sort_by(|p, q| p.a.total_cmp(&q.a));
    let value = segs.iter().map(|s| s.val).sum();
    let error = segs.iter().map(|s| s.err).sum();
    Quad { value, error }
}

// ── endpoint tails ───────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq)]
enum Side {
    Zero,
    One,
}

impl Side {
    fn name(self) -> &'static str {
        match self {
            Side::Zero => "x = 0",
            Side::One => "x = 1",
        }
    }
}

/// Integrates the tail (0, x_edge] (side Zero) or [1 - e^{-s0}, 1) (side
/// One) in geometrically growing blocks of the log coordinate, watching the
/// block contributions for convergence or sustained growth.
fn tail(
    split: &Split,
    st: &EvalState,
    side: Side,
    u0: f64,
    abs_target: f64,
    guaranteed: bool,
) -> Result<Quad, Error> {
    let h = |u: f64| -> f64 {
        let (x, xc) = match side {
            Side::Zero => ((-u).exp(), -(-u).exp_m1()),
            Side::One => (-(-u).exp_m1(), (-u).exp()),
        };
        eval(split, st, x, xc, -u)
    };
    let block_target = (abs_target / 4.0).max(1e-300);
    let mut value = 0.0;
    let mut error = 0.0;
    let mut partials: Vec<f64> = Vec::new();
    let mut blocks: Vec<f64> = Vec::new();
    let mut u_lo = u0;
    let mut small_streak = 0usize;
    while u_lo < U_MAX {
        let u_hi = (u_lo * 2.0).min(U_MAX);
        let q = adaptive(&h, u_lo, u_hi, block_target, 64);
        if let Some(x) = st.nan_at.get() {
            return Err(Error::InvalidIntegrand { x });
        }
        if st.overflowed.get() || !q.value.is_finite() {
            return Err(Error::DivergentIntegral { endpoint: side.name() });
        }
        value += q.value;
        error += q.error;
        blocks.push(q.value);
        partials.push(value);
        let nb = blocks.len();

        if q.value.abs() <= block_target {
            small_streak += 1;
            if small_streak >= 2 {
                // Geometric extrapolation of the remaining tail.
                let r = if nb >= 2 && blocks[nb - 2].abs() > 0.0 {
                    (blocks[nb - 1] / blocks[nb - 2]).abs().min(0.9)
                } else {
                    0.5
                };
                error += blocks[nb - 1].abs() * r / (1.0 - r);
                return Ok(Quad { value, error });
            }
        } else {
            small_streak = 0;
        }

        // Sustained-growth rule: only meaningful once the blocks are past
        // the endpoint guard.
        if u_lo >= ENDPOINT_GUARD_U && nb >= 4 {
            let now = partials[nb - 1].abs();
            let then = partials[nb - 4].abs();
            if now > GROWTH_FACTOR * then && now > 1e3 * f64::MIN_POSITIVE {
                return Err(Error::DivergentIntegral { endpoint: side.name() });
            }
        }
        u_lo = u_hi;
    }
    // Budget exhausted: accept only when the evidence says "slowly
    // convergent", otherwise call it divergent.
    let nb = blocks.len();
    let last = blocks[nb - 1].abs();
    if last <= block_target {
        return Ok(Quad { value, error: error + last });
    }
    let decreasing = nb >= 3 && last < blocks[nb - 2].abs() && blocks[nb - 2].abs() < blocks[nb - 3].abs();
    if guaranteed && decreasing {
        let r = (blocks[nb - 1] / blocks[nb - 2]).abs().min(0.95);
        return Ok(Quad { value, error: error + last * r / (1.0 - r) });
    }
    Err(Error::DivergentIntegral { endpoint: side.name() })
}

// ── public entry points ──────────────────────────────────────────────────

/// Integral of `f * exp(ln_w)` over the open interval (0, 1), with both
/// endpoints treated by log substitution. `left_guaranteed` marks integrals
/// known to converge at 0 (used to accept very slow geometric tails instead
/// of declaring divergence).
pub fn nu_open01(split: &Split, tol: Tol, left_guaranteed: bool) -> Result<Quad, Error> {
    let st = EvalState::default();
    let ln4 = 4.0f64.ln();
    let left = tail(split, &st, Side::Zero, ln4, tol.abs, left_guaranteed)?;
    let right = tail(split, &st, Side::One, ln4, tol.abs, false)?;
    let mid_h = |x: f64| eval(split, &st, x, 1.0 - x, 0.0);
    let mut mid = adaptive(&mid_h, 0.25, 0.75, tol.abs / 4.0, MAX_SEGMENTS);
    if let Some(x) = st.nan_at.get() {
        return Err(Error::InvalidIntegrand { x });
    }
    if st.overflowed.get() {
        return Err(Error::DivergentIntegral { endpoint: "interior" });
    }
    let mut value = left.value + right.value + mid.value;
    let mut error = left.error + right.error + mid.error;
    // One refinement pass if only the relative target is within reach.
    let allowed = tol.abs.max(tol.rel * value.abs());
    if error > allowed && mid.error > 0.5 * error {
        mid = adaptive(&mid_h, 0.25, 0.75, allowed / 4.0, 4 * MAX_SEGMENTS);
        value = left.value + right.value + mid.value;
        error = left.error + right.error + mid.error;
    }
    let allowed = tol.abs.max(tol.rel * value.abs());
    if !value.is_finite() || error > 100.0 * allowed {
        return Err(Error::DivergentIntegral { endpoint: "interior" });
    }
    Ok(Quad { value, error })
}

/// Integral of `f * exp(ln_w)` over a cell [lo, hi] with 0 < lo < hi <= 1.
/// When the cell touches 1 the right endpoint is handled by substitution
/// (the integrand may be singular there).
pub fn nu_cell(split: &Split, lo: f64, hi: f64, tol: Tol) -> Result<Quad, Error> {
    let st = EvalState::default();
    let touches_one = hi > 1.0 - 1e-14;
    let mid_h = |x: f64| eval(split, &st, x, 1.0 - x, 0.0);
    let q = if touches_one {
        let cut = if lo < 0.75 { 0.75 } else { 0.5 * (lo + 1.0) };
        let mid = adaptive(&mid_h, lo, cut, tol.abs / 4.0, MAX_SEGMENTS);
        let s0 = -(1.0 - cut).ln();
        let right = tail(split, &st, Side::One, s0, tol.abs, false)?;
        Quad { value: mid.value + right.value, error: mid.error + right.error }
    } else {
        adaptive(&mid_h, lo, hi, tol.abs / 2.0, MAX_SEGMENTS)
    };
    if let Some(x) = st.nan_at.get() {
        return Err(Error::InvalidIntegrand { x });
    }
    if st.overflowed.get() || !q.value.is_finite() {
        return Err(Error::DivergentIntegral { endpoint: "x = 1" });
    }
    Ok(q)
}

/// Integral of `f * exp(ln_w)` over (0, x_edge], left endpoint handled by
/// substitution. Used for truncated-mass computations near zero.
pub fn left_tail(split: &Split, x_edge: f64, abs_target: f64, guaranteed: bool) -> Result<Quad, Error> {
    let st = EvalState::default();
    let q = tail(split, &st, Side::Zero, -x_edge.ln(), abs_target, guaranteed)?;
    if let Some(x) = st.nan_at.get() {
        return Err(Error::InvalidIntegrand { x });
    }
    Ok(q)
}

/// Plain adaptive quadrature of a well-behaved integrand on [a, b];
/// used for table construction and by tests.
pub fn plain(h: &dyn Fn(f64) -> f64, a: f64, b: f64, abs_target: f64) -> Quad {
    adaptive(&h, a, b, abs_target, MAX_SEGMENTS)
}
