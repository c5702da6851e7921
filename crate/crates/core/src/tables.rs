//! Tabulated inverse-CDF sampling for densities on subintervals of (0, 1].
//!
//! A table stores a piecewise-linear density model on adaptively refined
//! panels. Panel masses come from Gauss-Kronrod quadrature of the true
//! density; refinement stops once the linear model reproduces each panel
//! mass to a small relative tolerance, so positions within a panel are
//! drawn from the linear model while masses stay quadrature-accurate.
//!
//! Cumulative masses are kept from both ends (`cum_lo` from the left,
//! `cum_hi` from the right) so that tail queries remain precise even when
//! the total is dominated by the opposite end — the familiar situation for
//! nu-densities, where the mass near zero can exceed the right tail by
//! fifteen orders of magnitude.
//!
//! When the range touches 1 the last 1e-12 is covered by a fitted power
//! sliver `d(s) ~ s^{beta-1}`, `s = 1 - x`, so integrable singularities of
//! Beta-type densities with b < 1 keep their mass and their shape.

use crate::error::{Error, Result};
use crate::quad;

const MAX_PANELS: usize = 4096;
/// Linear-model mass must match the quadrature mass this closely.
const MODEL_RTOL: f64 = 5e-4;
/// The quadrature itself must be at least this sure of a panel mass.
const GK_RTOL: f64 = 1e-4;

#[derive(Clone, Debug)]
struct Sliver {
    s0: f64,
    beta: f64,
    mass: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct CdfTable {
    nodes: Vec<f64>,        // n + 1 panel boundaries, ascending
    dens: Vec<(f64, f64)>,  // density at (left, right) edge of each panel
    cum_lo: Vec<f64>,       // mass of [nodes[0], nodes[j])
    cum_hi: Vec<f64>,       // mass of [nodes[j], hi], sliver included
    sliver: Option<Sliver>,
    total: f64,
}

struct PanelWork {
    x0: f64,
    x1: f64,
    d0: f64,
    d1: f64,
    depth: u32,
    /// Absolute error floor, inherited from the panel's initial ancestor.
    /// Keeping it local (not scaled to the global total) is what preserves
    /// model fidelity in tails that are minuscule next to the total.
    floor: f64,
}

struct Panel {
    x0: f64,
    x1: f64,
    d0: f64,
    d1: f64,
    mass: f64,
}

/// Distance-from-the-near-edge at which the linear density (d_near at 0,
/// d_far at h) accumulates mass `c`. Stable for any sign of the slope.
fn invert_panel(c: f64, d_near: f64, d_far: f64, h: f64) -> f64 {
    if c <= 0.0 {
        return 0.0;
    }
    let slope = (d_far - d_near) / h;
    let disc = (d_near * d_near + 2.0 * slope * c).max(0.0);
    let denom = d_near + disc.sqrt();
    if denom <= 0.0 {
        return 0.5 * h; // dead panel; only reachable through rounding
    }
    (2.0 * c / denom).min(h)
}

/// Mass of the linear density over the first `xi` of the panel.
fn panel_mass_from(xi: f64, d_near: f64, d_far: f64, h: f64) -> f64 {
    d_near * xi + (d_far - d_near) * xi * xi / (2.0 * h)
}

fn split_point(x0: f64, x1: f64) -> f64 {
    if x1 > 4.0 * x0 {
        return (x0 * x1).sqrt();
    }
    let (s0, s1) = (1.0 - x0, 1.0 - x1);
    if s1 > 0.0 && s0 > 4.0 * s1 {
        return 1.0 - (s0 * s1).sqrt();
    }
    0.5 * (x0 + x1)
}

impl CdfTable {
    pub(crate) fn build(dens_fn: &dyn Fn(f64, f64) -> f64, lo: f64, hi: f64) -> Result<CdfTable> {
        if !(lo > 0.0 && lo < hi && hi <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "table range [{lo}, {hi}] must satisfy 0 < lo < hi <= 1"
            )));
        }
        let d_at = |x: f64| -> Result<f64> {
            let v = dens_fn(x, 1.0 - x);
            if v.is_nan() || v < 0.0 {
                return Err(Error::InvalidIntegrand { x });
            }
            if v.is_infinite() {
                return Err(Error::DivergentIntegral { endpoint: "a table node" });
            }
            Ok(v)
        };

        // Power-model sliver over the last stretch below 1.
        let (x_top, sliver) = if hi > 1.0 - 1e-14 {
            let s0 = 1e-12f64.min((1.0 - lo) / 4.0);
            let d1 = dens_fn(1.0 - s0, s0);
            let d2 = dens_fn(1.0 - s0 / 4.0, s0 / 4.0);
            if d1.is_nan() || d2.is_nan() || d1 < 0.0 || d2 < 0.0 {
                return Err(Error::InvalidIntegrand { x: 1.0 - s0 });
            }
            let sl = if d1 > 0.0 && d2 > 0.0 && d1.is_finite() && d2.is_finite() {
                let beta = 1.0 + (d1 / d2).ln() / 4.0f64.ln();
                if beta < 1e-6 {
                    return Err(Error::DivergentIntegral { endpoint: "x = 1" });
                }
                Sliver { s0, beta, mass: d1 * s0 / beta }
            } else if d1.is_finite() && d2.is_finite() {
                Sliver { s0, beta: 1.0, mass: 0.5 * (d1 + d2) * s0 }
            } else {
                return Err(Error::DivergentIntegral { endpoint: "x = 1" });
            };
            (1.0 - s0, Some(sl))
        } else {
            (hi, None)
        };

        // Initial ladder: geometric toward both endpoints, linear between.
        let mut nodes = vec![lo];
        let mut x = lo;
        while x * 2.0 < x_top.min(0.25) {
            x *= 2.0;
            nodes.push(x);
        }
        for k in 0..=8 {
            let v = 0.25 + k as f64 * 0.0625;
            if v > lo && v < x_top {
                nodes.push(v);
            }
        }
        let mut s = 0.125;
        let s_floor = 1.0 - x_top;
        while s > 2.0 * s_floor && 1.0 - s > lo {
            nodes.push(1.0 - s);
            s *= 0.5;
        }
        nodes.push(x_top);
        nodes.sort_by(f64::total_cmp);
        nodes.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * b.abs().max(1e-30));
        *nodes.last_mut().unwrap() = x_top;

        let h_fn = |x: f64| dens_fn(x, 1.0 - x);
        let mut stack: Vec<PanelWork> = Vec::new();
        for w in nodes.windows(2).rev() {
            let init = quad::plain(&h_fn, w[0], w[1], f64::INFINITY).value.abs();
            let floor = (1e-9 * init).max(1e-300);
            stack.push(PanelWork { x0: w[0], x1: w[1], d0: d_at(w[0])?, d1: d_at(w[1])?, depth: 0, floor });
        }

        let mut done: Vec<Panel> = Vec::new();
        while let Some(p) = stack.pop() {
            let q = quad::plain(&h_fn, p.x0, p.x1, f64::INFINITY);
            if !q.value.is_finite() {
                return Err(Error::InvalidIntegrand { x: 0.5 * (p.x0 + p.x1) });
            }
            let model = 0.5 * (p.d0 + p.d1) * (p.x1 - p.x0);
            let fine = (model - q.value).abs() <= MODEL_RTOL * q.value.abs() + p.floor
                && q.error <= GK_RTOL * q.value.abs() + p.floor;
            let narrow = p.x1 - p.x0 <= 1e-13 * p.x1;
            if fine || narrow || p.depth >= 40 || done.len() + stack.len() >= MAX_PANELS {
                done.push(Panel { x0: p.x0, x1: p.x1, d0: p.d0, d1: p.d1, mass: q.value.max(0.0) });
            } else {
                let xm = split_point(p.x0, p.x1);
                let dm = d_at(xm)?;
                let f = p.floor;
                stack.push(PanelWork { x0: xm, x1: p.x1, d0: dm, d1: p.d1, depth: p.depth + 1, floor: f });
                stack.push(PanelWork { x0: p.x0, x1: xm, d0: p.d0, d1: dm, depth: p.depth + 1, floor: f });
            }
        }
        done.sort_by(|a, b| a.x0.total_cmp(&b.x0));

        let n = done.len();
        let mut node_v = Vec::with_capacity(n + 1);
        node_v.push(done[0].x0);
        node_v.extend(done.iter().map(|p| p.x1));
        let dens: Vec<(f64, f64)> = done.iter().map(|p| (p.d0, p.d1)).collect();
        let mut cum_lo = vec![0.0; n + 1];
        for j in 0..n {
            cum_lo[j + 1] = cum_lo[j] + done[j].mass;
        }
        let sl_mass = sliver.as_ref().map_or(0.0, |s| s.mass);
        let mut cum_hi = vec![0.0; n + 1];
        cum_hi[n] = sl_mass;
        for j in (0..n).rev() {
            cum_hi[j] = cum_hi[j + 1] + done[j].mass;
        }
        let total = cum_lo[n] + sl_mass;
        Ok(CdfTable { nodes: node_v, dens, cum_lo, cum_hi, sliver, total })
    }

    pub(crate) fn total(&self) -> f64 {
        self.total
    }

    /// Mass of [lo, y).
    pub(crate) fn mass_below(&self, y: f64) -> f64 {
        let n = self.dens.len();
        if y <= self.nodes[0] {
            return 0.0;
        }
        if y >= 1.0 {
            return self.total;
        }
        let top = self.nodes[n];
        if y >= top {
            let extra = match &self.sliver {
                Some(sl) if sl.mass > 0.0 => {
                    sl.mass * (1.0 - ((1.0 - y) / sl.s0).powf(sl.beta))
                }
                _ => 0.0,
            };
            return self.cum_lo[n] + extra;
        }
        let j = self.nodes.partition_point(|&v| v <= y).saturating_sub(1).min(n - 1);
        let (d0, d1) = self.dens[j];
        let h = self.nodes[j + 1] - self.nodes[j];
        self.cum_lo[j] + panel_mass_from(y - self.nodes[j], d0, d1, h)
    }

    /// Mass of [y, hi], accumulated from the right for precision.
    pub(crate) fn mass_above(&self, y: f64) -> f64 {
        let n = self.dens.len();
        if y <= self.nodes[0] {
            return self.cum_hi[0];
        }
        if y >= 1.0 {
            return 0.0;
        }
        let top = self.nodes[n];
        if y >= top {
            return match &self.sliver {
                Some(sl) if sl.mass > 0.0 => sl.mass * (((1.0 - y) / sl.s0).powf(sl.beta)),
                _ => 0.0,
            };
        }
        let j = self.nodes.partition_point(|&v| v <= y).saturating_sub(1).min(n - 1);
        let (d0, d1) = self.dens[j];
        let h = self.nodes[j + 1] - self.nodes[j];
        self.cum_hi[j + 1] + panel_mass_from(self.nodes[j + 1] - y, d1, d0, h)
    }

    /// Inverse CDF: the x with `mass_below(x) = u * total`, u in [0, 1).
    pub(crate) fn sample(&self, u: f64) -> f64 {
        self.invert_from_left(u * self.total)
    }

    /// Sample conditioned on x < y.
    pub(crate) fn sample_below(&self, y: f64, u: f64) -> f64 {
        self.invert_from_left(u * self.mass_below(y)).min(y)
    }

    /// Sample conditioned on x >= y.
    pub(crate) fn sample_above(&self, y: f64, u: f64) -> f64 {
        self.invert_from_right(u * self.mass_above(y)).max(y)
    }

    fn invert_from_left(&self, target: f64) -> f64 {
        let n = self.dens.len();
        let body = self.cum_lo[n];
        if target >= body {
            if let Some(sl) = &self.sliver {
                if sl.mass > 0.0 {
                    let f = ((target - body) / sl.mass).clamp(0.0, 1.0);
                    return 1.0 - sl.s0 * (1.0 - f).powf(1.0 / sl.beta);
                }
            }
            return self.nodes[n];
        }
        let j = self.cum_lo.partition_point(|&c| c <= target).saturating_sub(1).min(n - 1);
        let (d0, d1) = self.dens[j];
        let h = self.nodes[j + 1] - self.nodes[j];
        self.nodes[j] + invert_panel(target - self.cum_lo[j], d0, d1, h)
    }

    /// Inverse of the right-cumulative: x with `mass_above(x) = t`.
    fn invert_from_right(&self, t: f64) -> f64 {
        let n = self.dens.len();
        if let Some(sl) = &self.sliver {
            if sl.mass > 0.0 && t <= sl.mass {
                let f = (t / sl.mass).clamp(0.0, 1.0);
                return 1.0 - sl.s0 * f.powf(1.0 / sl.beta);
            }
        }
        if t <= self.cum_hi[n] {
            return self.nodes[n];
        }
        let j = self.cum_hi.partition_point(|&c| c >= t).saturating_sub(1).min(n - 1);
        let (d0, d1) = self.dens[j];
        let h = self.nodes[j + 1] - self.nodes[j];
        self.nodes[j + 1] - invert_panel(t - self.cum_hi[j + 1], d1, d0, h)
    }
}
