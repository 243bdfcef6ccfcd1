//! The KP field `u = 2(ln τ)_xx`, its derivatives, and the KP and AKNS
//! residual operators.
//!
//! Derivatives of `ln τ` are computed as joint cumulants of the phase
//! slopes under the weights `w_α = c_α e^{φ_α}/τ`: for `τ = Σ c_α e^{k_α·r}`,
//! `∂^I ln τ` is the joint cumulant of the slope components listed in `I`.
//! Working with centered moments keeps the relative accuracy of every
//! derivative intact where one exponential dominates, which is where a
//! plain quotient-rule evaluation loses all significant digits.

use std::collections::HashMap;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::darboux::PotentialField;
use crate::expsum::{ExpSum, ExpSumError, MultiIndex, Point};
use crate::spectral::SigmaMode;

/// `|τ| / Σ|terms|` below which a sample counts as singular.
pub const SINGULAR_RATIO: f64 = 1e-8;

/// Highest total derivative order of `ln τ` the cumulant engine accepts.
pub const MAX_LOG_ORDER: usize = 6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("tau vanishes at ({x}, {y}, {t})")]
    TauZero { x: f64, y: f64, t: f64 },
    #[error("sample at ({x}, {y}, {t}) lies within {ratio:e} of a zero of tau")]
    SingularSample { x: f64, y: f64, t: f64, ratio: f64 },
    #[error("derivative order {order} of ln tau exceeds {cap}")]
    OrderTooHigh { order: usize, cap: usize },
    #[error(transparent)]
    ExpSum(#[from] ExpSumError),
    #[error("bad grid: {0}")]
    BadGrid(String),
}

/// Normalized weights and slopes of `τ` at one point.
struct Weights {
    w: Vec<Complex64>,
    /// Slopes centered on the weighted mean.
    d: Vec<[Complex64; 3]>,
    mean: [Complex64; 3],
}

fn weights(tau: &ExpSum, p: Point) -> Result<Weights, FieldError> {
    let terms = tau.terms();
    if terms.is_empty() {
        return Err(FieldError::TauZero { x: p.x, y: p.y, t: p.t });
    }
    let s = tau.max_real_phase(p);
    let raw: Vec<Complex64> = terms.iter().map(|t| t.coeff * (t.phase.eval(p) - s).exp()).collect();
    let z: Complex64 = raw.iter().sum();
    let total: f64 = raw.iter().map(|v| v.norm()).sum();
    if z == Complex64::new(0.0, 0.0) {
        return Err(FieldError::TauZero { x: p.x, y: p.y, t: p.t });
    }
    let ratio = z.norm() / total;
    if ratio < SINGULAR_RATIO {
        return Err(FieldError::SingularSample { x: p.x, y: p.y, t: p.t, ratio });
    }
    let w: Vec<Complex64> = raw.iter().map(|v| v / z).collect();
    // Center on the dominant term's slope first so the mean is a small correction.
    let dom = raw
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let kref = [terms[dom].phase.cx, terms[dom].phase.cy, terms[dom].phase.ct];
    let slopes: Vec<[Complex64; 3]> = terms.iter().map(|t| [t.phase.cx - kref[0], t.phase.cy - kref[1], t.phase.ct - kref[2]]).collect();
    let mut shift = [Complex64::new(0.0, 0.0); 3];
    for (wi, k) in w.iter().zip(&slopes) {
        for a in 0..3 {
            shift[a] += wi * k[a];
        }
    }
    let d = slopes.iter().map(|k| [k[0] - shift[0], k[1] - shift[1], k[2] - shift[2]]).collect();
    let mean = [kref[0] + shift[0], kref[1] + shift[1], kref[2] + shift[2]];
    Ok(Weights { w, d, mean })
}

impl Weights {
    fn central_moment(&self, m: [usize; 3]) -> Complex64 {
        self.w
            .iter()
            .zip(&self.d)
            .map(|(w, d)| w * d[0].powu(m[0] as u32) * d[1].powu(m[1] as u32) * d[2].powu(m[2] as u32))
            .sum()
    }
}

/// All set partitions of `0..n` with no singleton block (`n ≥ 2`).
fn partitions_without_singletons(n: usize) -> Vec<Vec<Vec<usize>>> {
    fn rec(i: usize, n: usize, cur: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if i == n {
            if cur.iter().all(|b| b.len() > 1) {
                out.push(cur.clone());
            }
            return;
        }
        for b in 0..cur.len() {
            cur[b].push(i);
            rec(i + 1, n, cur, out);
            cur[b].pop();
        }
        cur.push(vec![i]);
        rec(i + 1, n, cur, out);
        cur.pop();
    }
    let mut out = Vec::new();
    rec(0, n, &mut Vec::new(), &mut out);
    out
}

/// Derivatives of `ln τ` at one point.
pub struct LogTauJet {
    weights: Weights,
    moments: HashMap<[usize; 3], Complex64>,
}

impl LogTauJet {
    pub fn new(tau: &ExpSum, p: Point) -> Result<Self, FieldError> {
        Ok(LogTauJet { weights: weights(tau, p)?, moments: HashMap::new() })
    }

    fn moment(&mut self, m: [usize; 3]) -> Complex64 {
        if let Some(v) = self.moments.get(&m) {
            return *v;
        }
        let v = self.weights.central_moment(m);
        self.moments.insert(m, v);
        v
    }

    /// `∂^idx ln τ` for `1 ≤ |idx| ≤ 6`.
    pub fn log_derivative(&mut self, idx: MultiIndex) -> Result<Complex64, FieldError> {
        let order = idx.order();
        if order > MAX_LOG_ORDER {
            return Err(FieldError::OrderTooHigh { order, cap: MAX_LOG_ORDER });
        }
        if order == 0 {
            return Err(FieldError::OrderTooHigh { order, cap: MAX_LOG_ORDER });
        }
        let vars: Vec<usize> =
            std::iter::repeat(0).take(idx.ox).chain(std::iter::repeat(1).take(idx.oy)).chain(std::iter::repeat(2).take(idx.ot)).collect();
        if order == 1 {
            return Ok(self.weights.mean[vars[0]]);
        }
        let mut total = Complex64::new(0.0, 0.0);
        for part in partitions_without_singletons(order) {
            let b = part.len();
            let coef = if b % 2 == 1 { 1.0 } else { -1.0 } * (1..b).map(|i| i as f64).product::<f64>();
            let mut prod = Complex64::new(coef, 0.0);
            for block in &part {
                let mut m = [0usize; 3];
                for &i in block {
                    m[vars[i]] += 1;
                }
                prod *= self.moment(m);
            }
            total += prod;
        }
        Ok(total)
    }

    /// `∂^idx u` with `u = 2(ln τ)_xx`.
    pub fn u_derivative(&mut self, idx: MultiIndex) -> Result<Complex64, FieldError> {
        Ok(self.log_derivative(MultiIndex::new(idx.ox + 2, idx.oy, idx.ot))? * 2.0)
    }
}

/// The KP residual `−4u_xt + 6(u_x² + u u_xx) + u_xxxx + 3σ²u_yy`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KpResidual {
    pub absolute: f64,
    /// `absolute` divided by the largest individual term; 0 when every term is 0.
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub point: Point,
    pub u: f64,
    pub u_imag: f64,
    /// Requested derivatives of `u` (real parts).
    pub derivs: Vec<(MultiIndex, f64)>,
    pub kp: KpResidual,
    pub akns: Option<AknsResiduals>,
}

fn kp_from_jet(jet: &mut LogTauJet, sigma_sq: f64) -> Result<(Complex64, KpResidual), FieldError> {
    let u = jet.u_derivative(MultiIndex::ZERO)?;
    let ux = jet.u_derivative(MultiIndex::x(1))?;
    let uxx = jet.u_derivative(MultiIndex::x(2))?;
    let uxxxx = jet.u_derivative(MultiIndex::x(4))?;
    let uxt = jet.u_derivative(MultiIndex::new(1, 0, 1))?;
    let uyy = jet.u_derivative(MultiIndex::new(0, 2, 0))?;
    let terms = [uxt * -4.0, ux * ux * 6.0, u * uxx * 6.0, uxxxx, uyy * (3.0 * sigma_sq)];
    let r: Complex64 = terms.iter().sum();
    let scale = terms.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let absolute = r.norm();
    let relative = if scale == 0.0 { 0.0 } else { absolute / scale };
    Ok((u, KpResidual { absolute, relative }))
}

/// `u` and the requested derivatives at `p`, with the KP residual.
pub fn u_from_tau(tau: &ExpSum, sigma: SigmaMode, p: Point, requested: &[MultiIndex]) -> Result<FieldSample, FieldError> {
    let mut jet = LogTauJet::new(tau, p)?;
    let (u, kp) = kp_from_jet(&mut jet, sigma.sigma_sq())?;
    let mut derivs = Vec::with_capacity(requested.len());
    for &idx in requested {
        derivs.push((idx, jet.u_derivative(idx)?.re));
    }
    Ok(FieldSample { point: p, u: u.re, u_imag: u.im, derivs, kp, akns: None })
}

pub fn kp_residual(tau: &ExpSum, sigma_sq: f64, p: Point) -> Result<KpResidual, FieldError> {
    Ok(kp_from_jet(&mut LogTauJet::new(tau, p)?, sigma_sq)?.1)
}

/// `u = 2 ∂_x(τ_x/τ)` through the quotient rule; kept as an independent path.
pub fn u_via_quotient(tau: &ExpSum, p: Point) -> Result<Complex64, FieldError> {
    let tx = tau.derivative(MultiIndex::x(1));
    Ok(ExpSum::quotient_derivative(&tx, tau, MultiIndex::x(1), p)? * 2.0)
}

/// Max residual magnitude per equation family, absolute and relative to
/// the largest term of that equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AknsResiduals {
    pub absolute: [f64; 4],
    pub relative: [f64; 4],
}

pub fn akns_residuals(field: &PotentialField, sigma: SigmaMode, p: Point) -> Result<AknsResiduals, FieldError> {
    let m = field.m();
    let si = sigma.inv();
    let get = |f: &dyn Fn(usize, MultiIndex) -> Result<Complex64, ExpSumError>, idx| -> Result<Vec<Complex64>, FieldError> {
        (0..m).map(|j| f(j, idx).map_err(FieldError::from)).collect()
    };
    let pf = |j, idx| field.p(j, idx, p);
    let qf = |j, idx| field.q(j, idx, p);
    let (pv, px, pxx, pxxx) = (get(&pf, MultiIndex::ZERO)?, get(&pf, MultiIndex::x(1))?, get(&pf, MultiIndex::x(2))?, get(&pf, MultiIndex::x(3))?);
    let (qv, qx, qxx, qxxx) = (get(&qf, MultiIndex::ZERO)?, get(&qf, MultiIndex::x(1))?, get(&qf, MultiIndex::x(2))?, get(&qf, MultiIndex::x(3))?);
    let (py, pt) = (get(&pf, MultiIndex::new(0, 1, 0))?, get(&pf, MultiIndex::new(0, 0, 1))?);
    let (qy, qt) = (get(&qf, MultiIndex::new(0, 1, 0))?, get(&qf, MultiIndex::new(0, 0, 1))?);
    let dot = |a: &[Complex64], b: &[Complex64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<Complex64>();
    let pq = dot(&pv, &qv);
    let pxq = dot(&px, &qv);
    let qxp = dot(&qx, &pv);
    let mut out = AknsResiduals { absolute: [0.0; 4], relative: [0.0; 4] };
    let mut record = |fam: usize, terms: &[Complex64]| {
        let r: Complex64 = terms.iter().sum();
        let scale = terms.iter().map(|v| v.norm()).fold(0.0, f64::max);
        out.absolute[fam] = out.absolute[fam].max(r.norm());
        if scale > 0.0 {
            out.relative[fam] = out.relative[fam].max(r.norm() / scale);
        }
    };
    for j in 0..m {
        record(0, &[py[j], pxx[j] * si, -pq * pv[j] * 2.0 * si]);
        record(1, &[qy[j], -qxx[j] * si, pq * qv[j] * 2.0 * si]);
        record(2, &[pt[j], -pxxx[j], pq * px[j] * 3.0, pxq * pv[j] * 3.0]);
        record(3, &[qt[j], -qxxx[j], pq * qx[j] * 3.0, qxp * qv[j] * 3.0]);
    }
    Ok(out)
}

/// `u = −2 Σ p′_j q′_j` from the potential ratios.
pub fn u_from_potentials(field: &PotentialField, p: Point) -> Result<Complex64, FieldError> {
    let mut s = Complex64::new(0.0, 0.0);
    for j in 0..field.m() {
        s += field.p(j, MultiIndex::ZERO, p)? * field.q(j, MultiIndex::ZERO, p)?;
    }
    Ok(s * -2.0)
}

/// Axis `a..=b` sampled at `n` points, `n ≥ 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub a: f64,
    pub b: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self, FieldError> {
        if n < 2 || !a.is_finite() || !b.is_finite() || a >= b {
            return Err(FieldError::BadGrid(format!("axis {a}:{b}:{n} needs finite a < b and n ≥ 2")));
        }
        Ok(Axis { a, b, n })
    }

    /// `a + (b − a)·i/(n − 1)`, so refining `n → 2n − 1` keeps every old node bit-identical.
    pub fn coord(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.b
        } else {
            self.a + (self.b - self.a) * (i as f64 / (self.n - 1) as f64)
        }
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.coord(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub x: Axis,
    pub y: Axis,
    pub t: Vec<f64>,
}

impl GridSpec {
    pub fn new(x: Axis, y: Axis, t: Vec<f64>) -> Result<Self, FieldError> {
        if t.is_empty() || t.iter().any(|v| !v.is_finite()) {
            return Err(FieldError::BadGrid("t list must be nonempty and finite".into()));
        }
        Ok(GridSpec { x, y, t })
    }

    /// Points ordered `t`, then `y`, then `x`.
    pub fn points(&self) -> Vec<Point> {
        let (xs, ys) = (self.x.coords(), self.y.coords());
        let mut out = Vec::with_capacity(xs.len() * ys.len() * self.t.len());
        for &t in &self.t {
            for &y in &ys {
                for &x in &xs {
                    out.push(Point::new(x, y, t));
                }
            }
        }
        out
    }
}

/// Run `f` on a pool capped by `WRONSKP_THREADS` when that is set.
pub fn with_thread_cap<R: Send, F: FnOnce() -> R + Send>(f: F) -> R {
    let cap = std::env::var("WRONSKP_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0);
    match cap.and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()) {
        Some(pool) => pool.install(f),
        None => f(),
    }
}

/// Samples in [`GridSpec::points`] order; per-point failures stay in-band.
pub fn grid_sample(tau: &ExpSum, sigma: SigmaMode, grid: &GridSpec) -> Vec<Result<FieldSample, FieldError>> {
    let pts = grid.points();
    with_thread_cap(|| pts.par_iter().map(|&p| u_from_tau(tau, sigma, p, &[])).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSummary {
    pub min_u: f64,
    pub max_u: f64,
    pub max_kp_relative: f64,
    pub max_u_imag: f64,
    pub singular: usize,
    pub samples: usize,
}

pub fn summarize(samples: &[Result<FieldSample, FieldError>]) -> GridSummary {
    let mut s = GridSummary {
        min_u: f64::INFINITY,
        max_u: f64::NEG_INFINITY,
        max_kp_relative: 0.0,
        max_u_imag: 0.0,
        singular: 0,
        samples: samples.len(),
    };
    for r in samples {
        match r {
            Ok(f) => {
                s.min_u = s.min_u.min(f.u);
                s.max_u = s.max_u.max(f.u);
                s.max_kp_relative = s.max_kp_relative.max(f.kp.relative);
                s.max_u_imag = s.max_u_imag.max(f.u_imag.abs());
            }
            Err(_) => s.singular += 1,
        }
    }
    s
}
