//! Asymptotic line solitons of the resonant KPII solutions and of the
//! ordinary KPI N-soliton, with far-field measurement.

use nalgebra::{DMatrix, Matrix3, Vector3};
use num_complex::Complex64;
use thiserror::Error;

use crate::expsum::{ExpSum, LinearPhase, Point, Term, phase_from_kappa, phase_of};
use crate::kpfield::{FieldError, u_from_tau};
use crate::spectral::{Model, ScenarioConfig, SigmaMode, SpectralDatum, SpectralError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AsymptoticsError {
    #[error("coefficient sequences must have equal even length, got {a} and {b}")]
    LengthNotEven { a: usize, b: usize },
    #[error("invalid resonant parameters: {0}")]
    InvalidParams(String),
    #[error("coefficient matrix is rank deficient (rank {rank} < {rows})")]
    RankDeficient { rank: usize, rows: usize },
    #[error("peak of soliton [{i},{j}] is not isolated at y = {y}: {reason}")]
    PeakNotIsolated { i: usize, j: usize, y: f64, reason: String },
    #[error("KPI asymptotics need m = 1, got m = {0}")]
    UnsupportedComponents(usize),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// One of the three nonsingularity conditions on `(a_k, b_k)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// (i): `a_k = b_k = 0`.
    SharedZero { k: usize },
    /// (ii): `L` or `M` outside `1..=N`.
    Range { l: i64, m: i64, n: usize },
    /// (iii): `a_k a_{k+1} b_k b_{k+1} > 0`.
    SignRule { k: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::SharedZero { k } => write!(f, "condition (i): a_{k} = b_{k} = 0"),
            Violation::Range { l, m, n } => write!(f, "condition (ii): need 1 <= L, M <= N, got L = {l}, M = {m}, N = {n}"),
            Violation::SignRule { k } => write!(f, "condition (iii): a_k a_{{k+1}} b_k b_{{k+1}} <= 0 fails at k = {k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub n: usize,
    pub l: i64,
    pub m: i64,
    pub violations: Vec<Violation>,
}

impl Classification {
    /// Conditions (i) and (ii) hold; (iii) only produces warnings.
    pub fn is_valid(&self) -> bool {
        !self.violations.iter().any(|v| !matches!(v, Violation::SignRule { .. }))
    }

    pub fn warnings(&self) -> Vec<&Violation> {
        self.violations.iter().filter(|v| matches!(v, Violation::SignRule { .. })).collect()
    }
}

pub fn classify_coefficients(a: &[f64], b: &[f64]) -> Result<Classification, AsymptoticsError> {
    if a.len() != b.len() || a.len() % 2 != 0 || a.is_empty() {
        return Err(AsymptoticsError::LengthNotEven { a: a.len(), b: b.len() });
    }
    let n = a.len() / 2;
    let l = a.iter().filter(|v| **v != 0.0).count() as i64 - n as i64;
    let m = b.iter().filter(|v| **v != 0.0).count() as i64 - n as i64;
    let mut violations = Vec::new();
    for k in 0..a.len() {
        if a[k] == 0.0 && b[k] == 0.0 {
            violations.push(Violation::SharedZero { k: k + 1 });
        }
    }
    let range = 1..=n as i64;
    if !range.contains(&l) || !range.contains(&m) {
        violations.push(Violation::Range { l, m, n });
    }
    for k in 0..a.len() - 1 {
        if a[k] * a[k + 1] * b[k] * b[k + 1] > 0.0 {
            violations.push(Violation::SignRule { k: k + 1 });
        }
    }
    Ok(Classification { n, l, m, violations })
}

/// Data of the scaled resonant tau function: `L`, `M`, `κ_1 < … < κ_{M+L}`, `b′_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResonantParams {
    pub l: usize,
    pub m: usize,
    pub kappa: Vec<f64>,
    pub bprime: Vec<f64>,
    pub sigma: SigmaMode,
}

/// A term of the resonant tau function labelled by its phase subset.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledTerm {
    /// 1-based indices `I` with `|I| = M`.
    pub subset: Vec<usize>,
    pub coeff: f64,
    pub phase: LinearPhase,
}

impl ResonantParams {
    pub fn new(l: usize, m: usize, kappa: Vec<f64>, bprime: Vec<f64>, sigma: SigmaMode) -> Result<Self, AsymptoticsError> {
        let p = ResonantParams { l, m, kappa, bprime, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), AsymptoticsError> {
        let bad = |s: String| Err(AsymptoticsError::InvalidParams(s));
        if self.l == 0 || self.m == 0 {
            return bad("L and M must be positive".into());
        }
        if !self.sigma.is_real() {
            return bad("resonant solutions are KPII only (sigma = ±1)".into());
        }
        let total = self.l + self.m;
        if self.kappa.len() != total || self.bprime.len() != total {
            return bad(format!("kappa and bprime need M + L = {total} entries"));
        }
        if self.kappa.iter().chain(&self.bprime).any(|v| !v.is_finite()) {
            return bad("parameters must be finite".into());
        }
        if self.kappa.windows(2).any(|w| w[0] >= w[1]) {
            return bad("kappa must be strictly increasing".into());
        }
        if self.bprime.iter().any(|b| *b == 0.0) {
            return bad("bprime entries must be nonzero".into());
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.l + self.m
    }

    pub fn theta(&self, i: usize) -> LinearPhase {
        phase_from_kappa(self.kappa[i - 1], self.sigma)
    }

    /// `coeff(I) = (−1)^{L+ΣI} Π_J b′_j Π_{n<l}(κ_{i_n}−κ_{i_l}) Π_{n<l}(κ_{j_n}−κ_{j_l})`, `J` the complement.
    pub fn coefficient(&self, subset: &[usize]) -> f64 {
        let comp: Vec<usize> = (1..=self.total()).filter(|i| !subset.contains(i)).collect();
        let sum: usize = subset.iter().sum();
        let mut c = if (self.l + sum) % 2 == 0 { 1.0 } else { -1.0 };
        for &j in &comp {
            c *= self.bprime[j - 1];
        }
        for set in [subset, &comp[..]] {
            for a in 0..set.len() {
                for b in a + 1..set.len() {
                    c *= self.kappa[set[a] - 1] - self.kappa[set[b] - 1];
                }
            }
        }
        c
    }

    pub fn labelled_terms(&self) -> Vec<LabelledTerm> {
        subsets(self.total(), self.m)
            .into_iter()
            .map(|s| {
                let phase = s.iter().fold(LinearPhase::ZERO, |acc, &i| acc + self.theta(i));
                LabelledTerm { coeff: self.coefficient(&s), phase, subset: s }
            })
            .collect()
    }

    pub fn tau(&self) -> ExpSum {
        ExpSum::from_terms(
            self.labelled_terms().into_iter().map(|t| Term { coeff: t.coeff.into(), phase: t.phase }).collect(),
        )
    }

    /// A single-component (`m = 1`) spectral scenario with `N = max(L, M)`
    /// whose `τ` equals `τ′` up to a constant and an exponential of a linear
    /// function, so both give the same `u`.
    pub fn realize(&self) -> Result<ScenarioConfig, AsymptoticsError> {
        let n = self.l.max(self.m);
        let total = self.total();
        let kmax = self.kappa[total - 1];
        let ea = n - self.m;
        let eb = n - self.l;
        let lam = |k: f64| -k / 2.0;
        let extra: Vec<f64> = (1..=ea + eb).map(|e| lam(kmax + e as f64)).collect();
        let (lea, leb) = extra.split_at(ea);
        let mut spectra = Vec::with_capacity(2 * n);
        for i in 0..total {
            let li = lam(self.kappa[i]);
            let a = 1.0 / lea.iter().map(|&e| e - li).product::<f64>();
            let b = self.bprime[i] / leb.iter().map(|&e| li - e).product::<f64>();
            spectra.push(SpectralDatum::real(li, a, &[b]));
        }
        spectra.extend(lea.iter().map(|&e| SpectralDatum::real(e, 1.0, &[0.0])));
        spectra.extend(leb.iter().map(|&e| SpectralDatum::real(e, 0.0, &[1.0])));
        Ok(ScenarioConfig::kpii(self.sigma, 1, n, spectra)?)
    }

    /// `(a_k, b_k)` of [`ResonantParams::realize`], for the condition checks.
    pub fn coefficient_pattern(&self) -> Result<(Vec<f64>, Vec<f64>), AsymptoticsError> {
        let cfg = self.realize()?;
        Ok((cfg.spectra.iter().map(|d| d.a.re).collect(), cfg.spectra.iter().map(|d| d.b[0].re).collect()))
    }

    pub fn classify(&self) -> Result<Classification, AsymptoticsError> {
        let (a, b) = self.coefficient_pattern()?;
        classify_coefficients(&a, &b)
    }
}

/// All `k`-subsets of `1..=n` in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..=n {
            if n - i + 1 < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(1, n, k, &mut Vec::new(), &mut out);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    /// `y → +∞`.
    YPlus,
    /// `y → −∞`.
    YMinus,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::YPlus => 1.0,
            Side::YMinus => -1.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Side::YPlus => "y->+inf",
            Side::YMinus => "y->-inf",
        }
    }
}

/// `u ≈ A sech²(K·r + Ω t + δ)` along one asymptotic direction.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticSoliton {
    /// `[i, j]` (1-based); KPI solitons use `[n, n]`.
    pub pair: (usize, usize),
    pub amplitude: f64,
    pub wavevector: [f64; 2],
    pub frequency: f64,
    /// `δ`; NaN when the two dominant coefficients differ in sign.
    pub phase_offset: f64,
    pub side: Side,
    /// `δ` from the closed-form products, when those are defined and of one sign.
    pub closed_form_offset: Option<f64>,
}

impl AsymptoticSoliton {
    /// `x` where the argument of `sech²` vanishes.
    pub fn center_x(&self, y: f64, t: f64) -> f64 {
        -(self.wavevector[1] * y + self.frequency * t + self.phase_offset) / self.wavevector[0]
    }

    pub fn closed_form_agrees(&self) -> Option<bool> {
        self.closed_form_offset.map(|c| (c - self.phase_offset).abs() <= 1e-9 * (1.0 + c.abs()))
    }
}

fn half_log_ratio(a: f64, b: f64) -> f64 {
    if a / b > 0.0 {
        0.5 * (a / b).ln()
    } else {
        f64::NAN
    }
}

/// Solitons of the resonant `τ′` on both sides, offsets from the dominant labelled terms.
pub fn predict_kpii_asymptotics(params: &ResonantParams) -> Vec<AsymptoticSoliton> {
    let (l, m) = (params.l, params.m);
    let total = l + m;
    let s = params.sigma.sign();
    let k = &params.kappa;
    let coeff = |set: Vec<usize>| params.coefficient(&set);
    let make = |i: usize, j: usize, ci: f64, cj: f64, side: Side, closed: Option<(f64, f64)>| {
        let (ki, kj) = (k[i - 1], k[j - 1]);
        AsymptoticSoliton {
            pair: (i, j),
            amplitude: 0.5 * (kj - ki).powi(2),
            wavevector: [0.5 * (kj - ki), 0.5 * s * (kj * kj - ki * ki)],
            frequency: 0.5 * (kj.powi(3) - ki.powi(3)),
            phase_offset: half_log_ratio(ci, cj),
            side,
            closed_form_offset: closed.map(|(a, b)| half_log_ratio(a, b)).filter(|v| v.is_finite()),
        }
    };
    // σy → +∞ lies at y → +∞ for σ = 1 and at y → −∞ for σ = −1.
    let (plus, minus) = if s > 0.0 { (Side::YPlus, Side::YMinus) } else { (Side::YMinus, Side::YPlus) };
    let mut out = Vec::with_capacity(total);
    for i in 1..=l {
        let j = i + m;
        let ci = coeff((i..i + m).collect());
        let cj = coeff((i + 1..=i + m).collect());
        out.push(make(i, j, ci, cj, plus, Some(closed_form_c(params, i, j, true))));
    }
    for i in 1..=m {
        let j = i + l;
        let si: Vec<usize> = (1..=i).chain(l + i + 1..=total).collect();
        let sj: Vec<usize> = (1..i).chain(l + i..=total).collect();
        out.push(make(i, j, coeff(si), coeff(sj), minus, Some(closed_form_c(params, i, j, false))));
    }
    out
}

/// Closed-form `(C_i^±, C_j^±)` as products over the index ranges below, between and above `[i, j]`.
fn closed_form_c(p: &ResonantParams, i: usize, j: usize, plus: bool) -> (f64, f64) {
    let k = |n: usize| p.kappa[n - 1];
    let total = p.total();
    let sgn = |n: usize| if n % 2 == 0 { 1.0 } else { -1.0 };
    let mid = i + 1..j;
    let low = 1..i;
    let high = j + 1..=total;
    if plus {
        let ci = sgn(i)
            * p.bprime[j - 1]
            * mid.clone().map(|n| k(i) - k(n)).product::<f64>()
            * low.clone().map(|n| k(n) - k(j)).product::<f64>()
            * high.clone().map(|n| k(j) - k(n)).product::<f64>();
        let cj = sgn(j)
            * p.bprime[i - 1]
            * mid.map(|n| k(n) - k(j)).product::<f64>()
            * low.map(|n| k(n) - k(i)).product::<f64>()
            * high.map(|n| k(i) - k(n)).product::<f64>();
        (ci, cj)
    } else {
        let ci = sgn(i)
            * p.bprime[j - 1]
            * low.clone().map(|n| k(n) - k(i)).product::<f64>()
            * high.clone().map(|n| k(i) - k(n)).product::<f64>()
            * mid.clone().map(|n| k(n) - k(j)).product::<f64>();
        let cj = sgn(j)
            * p.bprime[i - 1]
            * low.map(|n| k(n) - k(j)).product::<f64>()
            * high.map(|n| k(j) - k(n)).product::<f64>()
            * mid.map(|n| k(i) - k(n)).product::<f64>();
        (ci, cj)
    }
}

/// A transition between consecutive dominant terms along `x` at fixed `(y, t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    /// Index (into the input term list) dominant on the left.
    pub left: usize,
    /// Index dominant on the right.
    pub right: usize,
    pub x: f64,
}

/// Upper envelope of `ln|c_α| + Re φ_α(x, y, t)` over `x ∈ ℝ`.
///
/// Terms whose real phases coincide are grouped (their magnitudes are
/// summed). Returned indices refer to the first term of each group.
pub fn dominant_transitions(terms: &[Term], y: f64, t: f64) -> Vec<Transition> {
    struct Line {
        idx: usize,
        slope: f64,
        icpt: f64,
    }
    let mut lines: Vec<Line> = Vec::new();
    for (idx, term) in terms.iter().enumerate() {
        let slope = term.phase.cx.re;
        let ph = term.phase.eval(Point::new(0.0, y, t)).re;
        let key = (term.phase.cx.re, term.phase.cy.re, term.phase.ct.re);
        if let Some(l) = lines.iter_mut().find(|l| {
            let o = &terms[l.idx].phase;
            (o.cx.re - key.0).abs() < 1e-12 && (o.cy.re - key.1).abs() < 1e-12 && (o.ct.re - key.2).abs() < 1e-12
        }) {
            let combined = (l.icpt.exp() + (term.coeff.norm().ln() + ph).exp()).ln();
            l.icpt = combined;
            continue;
        }
        if term.coeff.norm() == 0.0 {
            continue;
        }
        lines.push(Line { idx, slope, icpt: term.coeff.norm().ln() + ph });
    }
    if lines.is_empty() {
        return Vec::new();
    }
    // Leftmost dominant: smallest slope, then largest intercept.
    let mut cur = 0;
    for (n, l) in lines.iter().enumerate() {
        let c = &lines[cur];
        if l.slope < c.slope || (l.slope == c.slope && l.icpt > c.icpt) {
            cur = n;
        }
    }
    let mut out = Vec::new();
    let mut x0 = f64::NEG_INFINITY;
    loop {
        let c = &lines[cur];
        let mut best: Option<(f64, usize)> = None;
        for (n, l) in lines.iter().enumerate() {
            if l.slope <= c.slope {
                continue;
            }
            let x = (c.icpt - l.icpt) / (l.slope - c.slope);
            if x < x0 - 1e-12 {
                continue;
            }
            let better = match best {
                None => true,
                Some((bx, bn)) => x < bx - 1e-12 || ((x - bx).abs() <= 1e-12 && l.slope > lines[bn].slope),
            };
            if better {
                best = Some((x, n));
            }
        }
        match best {
            Some((x, n)) => {
                out.push(Transition { left: lines[cur].idx, right: lines[n].idx, x });
                x0 = x;
                cur = n;
            }
            None => break,
        }
    }
    out
}

/// Pairs `[i, j]` (from the labelled subsets) crossed along `x` at `(y, t)`.
pub fn resonant_transitions(params: &ResonantParams, y: f64, t: f64) -> Vec<(usize, usize)> {
    let labelled = params.labelled_terms();
    let terms: Vec<Term> = labelled.iter().map(|l| Term { coeff: l.coeff.into(), phase: l.phase }).collect();
    dominant_transitions(&terms, y, t)
        .into_iter()
        .map(|tr| {
            let (a, b) = (&labelled[tr.left].subset, &labelled[tr.right].subset);
            let only_a = a.iter().find(|v| !b.contains(v)).copied().unwrap_or(0);
            let only_b = b.iter().find(|v| !a.contains(v)).copied().unwrap_or(0);
            (only_a.min(only_b), only_a.max(only_b))
        })
        .collect()
}

/// `μ`, `ν` recovered from a single-component KPI scenario.
pub fn kpi_mu_nu(cfg: &ScenarioConfig) -> Vec<(f64, f64)> {
    let s = cfg.sigma.sign();
    cfg.spectra.iter().map(|d| (4.0 * d.lambda.re, 4.0 * d.lambda.im * s)).collect()
}

/// `ε^∓_{kn}` from the four index sets: `k < n, μ_k > 0` and `k > n, μ_k < 0`
/// give `(ε⁻, ε⁺) = (−1, +1)`; the other two give `(+1, −1)`.
pub fn kpi_epsilon(mu: &[f64], k: usize, n: usize) -> (f64, f64) {
    let first = (k < n && mu[k] > 0.0) || (k > n && mu[k] < 0.0);
    if first { (-1.0, 1.0) } else { (1.0, -1.0) }
}

/// Coefficient of the `τ` term with real phase `Σ s_k Re θ_k`.
fn coefficient_for_signs(tau: &ExpSum, thetas: &[LinearPhase], signs: &[f64]) -> Option<Complex64> {
    let target = thetas.iter().zip(signs).fold([0.0; 3], |mut acc, (th, s)| {
        acc[0] += s * th.cx.re;
        acc[1] += s * th.cy.re;
        acc[2] += s * th.ct.re;
        acc
    });
    let hits: Vec<&Term> = tau
        .terms()
        .iter()
        .filter(|t| {
            (t.phase.cx.re - target[0]).abs() < 1e-10
                && (t.phase.cy.re - target[1]).abs() < 1e-10
                && (t.phase.ct.re - target[2]).abs() < 1e-10
        })
        .collect();
    if hits.is_empty() {
        None
    } else {
        Some(hits.iter().map(|t| t.coeff).sum())
    }
}

/// Asymptotic solitons of the single-component KPI `τ` on both sides.
pub fn predict_kpi_asymptotics(cfg: &ScenarioConfig, tau: &ExpSum) -> Result<Vec<AsymptoticSoliton>, AsymptoticsError> {
    if cfg.model != Model::Kpi {
        return Err(AsymptoticsError::InvalidParams("KPI scenario required".into()));
    }
    if cfg.m != 1 {
        return Err(AsymptoticsError::UnsupportedComponents(cfg.m));
    }
    let munu = kpi_mu_nu(cfg);
    let mu: Vec<f64> = munu.iter().map(|v| v.0).collect();
    let thetas: Vec<LinearPhase> = cfg.spectra.iter().map(|d| phase_of(d.lambda, cfg.sigma)).collect();
    let nn = cfg.n;
    let mut out = Vec::with_capacity(2 * nn);
    for n in 0..nn {
        let (m, v) = munu[n];
        for side in [Side::YMinus, Side::YPlus] {
            let mut signs: Vec<f64> = (0..nn)
                .map(|k| {
                    if k == n {
                        0.0
                    } else {
                        let (em, ep) = kpi_epsilon(&mu, k, n);
                        if side == Side::YPlus { ep } else { em }
                    }
                })
                .collect();
            signs[n] = 1.0;
            let zeta = coefficient_for_signs(tau, &thetas, &signs);
            signs[n] = -1.0;
            let eta = coefficient_for_signs(tau, &thetas, &signs);
            let offset = match (zeta, eta) {
                (Some(z), Some(e)) => {
                    let r = z / e;
                    if r.re > 0.0 && r.im.abs() <= 1e-9 * r.norm() { 0.5 * r.re.ln() } else { f64::NAN }
                }
                _ => f64::NAN,
            };
            out.push(AsymptoticSoliton {
                pair: (n + 1, n + 1),
                amplitude: 0.5 * m * m,
                wavevector: [0.5 * m, -0.5 * m * v],
                frequency: m * (m * m - 3.0 * v * v) / 8.0,
                phase_offset: offset,
                side,
                closed_form_offset: None,
            });
        }
    }
    Ok(out)
}

/// `δ⁺ − δ⁻` for soliton `n` (1-based).
pub fn kpi_phase_shift(solitons: &[AsymptoticSoliton], n: usize) -> Option<f64> {
    let get = |side| solitons.iter().find(|s| s.pair.0 == n && s.side == side).map(|s| s.phase_offset);
    Some(get(Side::YPlus)? - get(Side::YMinus)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasuredSoliton {
    pub amplitude: f64,
    /// `δ` recovered from the fitted center.
    pub offset: f64,
    /// Fitted `k` of `A sech²(k(x − x₀))`.
    pub k: f64,
    pub x0: f64,
    /// RMS misfit divided by the amplitude.
    pub misfit: f64,
}

/// Samples along `x` in the window `x_c ± 4/K_x` at `(y, t)`.
pub const WINDOW_SAMPLES: usize = 161;

/// Fit `A sech²(k(x − x₀))` to `u` near the predicted crest at `(y, t)`.
pub fn measure_far_field(
    tau: &ExpSum,
    sigma: SigmaMode,
    soliton: &AsymptoticSoliton,
    y: f64,
    t: f64,
) -> Result<MeasuredSoliton, AsymptoticsError> {
    let (i, j) = soliton.pair;
    let not_isolated = |reason: String| AsymptoticsError::PeakNotIsolated { i, j, y, reason };
    let kx = soliton.wavevector[0].abs();
    let xc = soliton.center_x(y, t);
    if !xc.is_finite() {
        return Err(not_isolated("predicted center is undefined".into()));
    }
    let half = 4.0 / kx;
    let xs: Vec<f64> = (0..WINDOW_SAMPLES).map(|n| xc - half + 2.0 * half * n as f64 / (WINDOW_SAMPLES - 1) as f64).collect();
    let mut us = Vec::with_capacity(xs.len());
    for &x in &xs {
        us.push(u_from_tau(tau, sigma, Point::new(x, y, t), &[])?.u);
    }
    let (imax, &umax) = us.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    if umax <= 0.0 {
        return Err(not_isolated("no positive crest in the window".into()));
    }
    let edge = us[0].abs().max(us[us.len() - 1].abs());
    if edge > 1e-2 * umax {
        return Err(not_isolated(format!("u at the window edge is {edge:.3e}, crest {umax:.3e}")));
    }
    let fit = fit_sech2(&xs, &us, [umax, kx, xs[imax]]).ok_or_else(|| not_isolated("sech^2 fit did not converge".into()))?;
    let [a, k, x0] = fit.0;
    if fit.1 > 1e-3 {
        return Err(not_isolated(format!("sech^2 misfit {:.3e}", fit.1)));
    }
    let offset = -(soliton.wavevector[0] * x0 + soliton.wavevector[1] * y + soliton.frequency * t);
    Ok(MeasuredSoliton { amplitude: a, offset, k: k.abs(), x0, misfit: fit.1 })
}

/// Levenberg–Marquardt fit of `A sech²(k(x − x₀))`; returns parameters and relative RMS misfit.
fn fit_sech2(xs: &[f64], us: &[f64], start: [f64; 3]) -> Option<([f64; 3], f64)> {
    let model = |p: &Vector3<f64>, x: f64| -> (f64, Vector3<f64>) {
        let z = p[1] * (x - p[2]);
        let s = 1.0 / z.cosh();
        let s2 = s * s;
        let th = z.tanh();
        let f = p[0] * s2;
        (f, Vector3::new(s2, -2.0 * f * th * (x - p[2]), 2.0 * f * th * p[1]))
    };
    let cost = |p: &Vector3<f64>| xs.iter().zip(us).map(|(&x, &u)| (model(p, x).0 - u).powi(2)).sum::<f64>();
    let mut p = Vector3::from(start);
    let mut mu = 1e-3;
    let mut c = cost(&p);
    for _ in 0..200 {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (&x, &u) in xs.iter().zip(us) {
            let (f, g) = model(&p, x);
            jtj += g * g.transpose();
            jtr += g * (u - f);
        }
        let mut improved = false;
        for _ in 0..20 {
            let damped = jtj + Matrix3::from_diagonal(&jtj.diagonal()) * mu;
            let step = damped.lu().solve(&jtr)?;
            let trial = p + step;
            let ct = cost(&trial);
            if ct < c {
                let rel = step.norm() / (p.norm() + 1e-300);
                p = trial;
                c = ct;
                mu = (mu * 0.3).max(1e-12);
                improved = true;
                if rel < 1e-14 {
                    return finish(p, c, xs.len());
                }
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            return finish(p, c, xs.len());
        }
    }
    finish(p, c, xs.len())
}

fn finish(p: Vector3<f64>, c: f64, n: usize) -> Option<([f64; 3], f64)> {
    if !p.iter().all(|v| v.is_finite()) || p[0] <= 0.0 {
        return None;
    }
    Some(([p[0], p[1], p[2]], (c / n as f64).sqrt() / p[0]))
}

/// Local maxima of `u` along `x ∈ [xa, xb]` at `(y, t)` above `floor`,
/// refined by a parabola through the three samples around each maximum.
pub fn crest_peaks(
    tau: &ExpSum,
    sigma: SigmaMode,
    y: f64,
    t: f64,
    (xa, xb, samples): (f64, f64, usize),
    floor: f64,
) -> Result<Vec<(f64, f64)>, AsymptoticsError> {
    let h = (xb - xa) / (samples - 1) as f64;
    let mut us = Vec::with_capacity(samples);
    for n in 0..samples {
        us.push(u_from_tau(tau, sigma, Point::new(xa + h * n as f64, y, t), &[])?.u);
    }
    let mut out = Vec::new();
    for n in 1..samples - 1 {
        let (l, c, r) = (us[n - 1], us[n], us[n + 1]);
        if c > l && c >= r && c > floor {
            let curv = l - 2.0 * c + r;
            let dx = if curv < 0.0 { 0.5 * (l - r) / curv } else { 0.0 };
            out.push((xa + h * (n as f64 + dx), c - 0.25 * (l - r) * dx));
        }
    }
    Ok(out)
}

/// `τ = Wr(f_1, …, f_N)` with `f_h = Σ_l A_{hl} e^{κ_l x + σκ_l² y + κ_l³ t}`,
/// expanded as a Leibniz sum over permutations of exponential sums.
pub fn single_wronskian_oracle(a: &DMatrix<f64>, kappa: &[f64], sigma: SigmaMode) -> Result<ExpSum, AsymptoticsError> {
    let (n, m) = a.shape();
    if kappa.len() != m {
        return Err(AsymptoticsError::InvalidParams(format!("A has {m} columns but {} kappas", kappa.len())));
    }
    let rank = a.rank(1e-12 * a.amax().max(1.0));
    if rank < n {
        return Err(AsymptoticsError::RankDeficient { rank, rows: n });
    }
    let s = sigma.value().re;
    let eta: Vec<LinearPhase> = kappa.iter().map(|&k| LinearPhase::real(k, s * k * k, k * k * k, 0.0)).collect();
    // entry(h, c) = ∂_x^c f_h
    let entry = |h: usize, c: usize| -> ExpSum {
        ExpSum::from_terms(
            (0..m).map(|l| Term { coeff: (a[(h, l)] * kappa[l].powi(c as i32)).into(), phase: eta[l] }).collect(),
        )
    };
    let mut total = ExpSum::zero();
    for (perm, sign) in permutations(n) {
        let mut prod = ExpSum::constant(sign.into());
        for (h, &c) in perm.iter().enumerate() {
            prod = &prod * &entry(h, c);
        }
        total = &total + &prod;
    }
    if total.is_empty() {
        return Err(AsymptoticsError::RankDeficient { rank, rows: n });
    }
    Ok(total)
}

fn permutations(n: usize) -> Vec<(Vec<usize>, f64)> {
    fn rec(cur: &mut Vec<usize>, used: &mut [bool], sign: f64, out: &mut Vec<(Vec<usize>, f64)>) {
        let n = used.len();
        if cur.len() == n {
            out.push((cur.clone(), sign));
            return;
        }
        for v in 0..n {
            if used[v] {
                continue;
            }
            // Inversions added by placing v after the current prefix.
            let inv = cur.iter().filter(|&&c| c > v).count();
            used[v] = true;
            cur.push(v);
            rec(cur, used, if inv % 2 == 0 { sign } else { -sign }, out);
            cur.pop();
            used[v] = false;
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], 1.0, &mut out);
    out
}

/// The `L × (L+M)` coefficient matrix whose single Wronskian equals the
/// resonant `τ′` up to a constant and the factor `exp(Σ_l θ_l)`.
///
/// Row `h` holds the divided-difference weights `1/Π_{l′≠l}(κ_l − κ_{l′})`
/// over the window `h..=h+M`, so every row annihilates polynomials of
/// degree below `M`; multiplying column `l` by `b′_l` then makes the
/// maximal minors proportional to the `τ′` coefficients.
pub fn resonant_wronskian_matrix(p: &ResonantParams) -> DMatrix<f64> {
    let total = p.total();
    DMatrix::from_fn(p.l, total, |h, l| {
        if l < h || l > h + p.m {
            return 0.0;
        }
        let d: f64 = (h..=h + p.m).filter(|&o| o != l).map(|o| p.kappa[l] - p.kappa[o]).product();
        p.bprime[l] / d
    })
}

/// Whether the sign-normalized `τ` stays positive at every point.
pub fn sign_definite_on(tau: &ExpSum, points: &[Point]) -> bool {
    let lead = tau.terms().first().map(|t| t.coeff.re.signum()).unwrap_or(1.0);
    points.iter().all(|&p| {
        let v = tau.eval_scaled(p);
        (v.mantissa.re * lead) > 0.0
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kpfield::u_from_tau;
    use crate::spectral::KpiSpectralDatum;
    use crate::wronskian::tau_symbolic;

    fn fig1(bprime: Vec<f64>, sigma: SigmaMode) -> ResonantParams {
        ResonantParams::new(3, 2, vec![-0.8, -0.35, 0.25, 0.65, 1.25], bprime, sigma).unwrap()
    }

    fn alternating() -> Vec<f64> {
        vec![1.0, -1.0, 1.0, -1.0, 1.0]
    }

    #[test]
    fn classification_examples() {
        let c = classify_coefficients(&[1.0, 1.0], &[1.0, -1.0]).unwrap();
        assert_eq!((c.n, c.l, c.m), (1, 1, 1));
        assert!(c.violations.is_empty());
        let c = classify_coefficients(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!((c.l, c.m), (0, 0));
        assert!(!c.violations.iter().any(|v| matches!(v, Violation::SharedZero { .. })));
        assert!(c.violations.iter().any(|v| matches!(v, Violation::Range { .. })));
        assert!(!c.is_valid());
        let c = classify_coefficients(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(c.violations, vec![Violation::SignRule { k: 1 }]);
        assert!(c.is_valid());
        assert_eq!(c.warnings().len(), 1);
        assert!(matches!(classify_coefficients(&[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0]), Err(AsymptoticsError::LengthNotEven { .. })));
        let c = classify_coefficients(&[0.0, 1.0], &[0.0, 1.0]).unwrap();
        assert!(c.violations.contains(&Violation::SharedZero { k: 1 }));
    }

    #[test]
    fn fig1_pairs_and_amplitudes() {
        let sol = predict_kpii_asymptotics(&fig1(alternating(), SigmaMode::Plus));
        let plus: Vec<(usize, usize)> = sol.iter().filter(|s| s.side == Side::YPlus).map(|s| s.pair).collect();
        let minus: Vec<(usize, usize)> = sol.iter().filter(|s| s.side == Side::YMinus).map(|s| s.pair).collect();
        assert_eq!(plus, vec![(1, 3), (2, 4), (3, 5)]);
        assert_eq!(minus, vec![(1, 4), (2, 5)]);
        let a13 = sol.iter().find(|s| s.pair == (1, 3)).unwrap().amplitude;
        assert!((a13 - 0.55125).abs() < 1e-15);
        let swapped = predict_kpii_asymptotics(&fig1(alternating(), SigmaMode::Minus));
        assert_eq!(swapped.iter().filter(|s| s.side == Side::YPlus).count(), 2);
        assert_eq!(swapped.iter().filter(|s| s.side == Side::YMinus).count(), 3);
    }

    #[test]
    fn pairing_rule_matches_dominant_envelope() {
        for sigma in [SigmaMode::Plus, SigmaMode::Minus] {
            let p = fig1(alternating(), sigma);
            let sol = predict_kpii_asymptotics(&p);
            for side in [Side::YPlus, Side::YMinus] {
                let mut predicted: Vec<(usize, usize)> = sol.iter().filter(|s| s.side == side).map(|s| s.pair).collect();
                let mut seen = resonant_transitions(&p, 60.0 * side.sign(), 0.0);
                predicted.sort();
                seen.sort();
                assert_eq!(predicted, seen, "{sigma:?} {side:?}");
            }
        }
    }

    #[test]
    fn literal_unit_bprime_violates_sign_rule() {
        let lit = fig1(vec![1.0; 5], SigmaMode::Plus);
        let c = lit.classify().unwrap();
        assert!(c.is_valid());
        assert!(!c.warnings().is_empty());
        let alt = fig1(alternating(), SigmaMode::Plus).classify().unwrap();
        assert!(alt.violations.is_empty(), "{:?}", alt.violations);
        // All τ′ coefficients share one sign under the alternating choice only.
        let signs = |p: &ResonantParams| p.labelled_terms().iter().map(|t| t.coeff.signum()).collect::<Vec<_>>();
        let s = signs(&fig1(alternating(), SigmaMode::Plus));
        assert!(s.iter().all(|&v| v == s[0]));
        let s = signs(&lit);
        assert!(s.iter().any(|&v| v != s[0]));
    }

    #[test]
    fn realization_reproduces_u() {
        for (l, m) in [(3, 2), (2, 3), (1, 1), (2, 2), (1, 3)] {
            let kappa: Vec<f64> = (0..l + m).map(|i| -0.9 + 0.45 * i as f64).collect();
            let bprime: Vec<f64> = (0..l + m).map(|i| if i % 2 == 0 { 1.0 } else { -1.3 }).collect();
            let p = ResonantParams::new(l, m, kappa, bprime, SigmaMode::Plus).unwrap();
            let tau_p = p.tau();
            let tau_m1 = tau_symbolic(&p.realize().unwrap()).unwrap();
            for pt in [Point::new(0.3, 0.2, 0.1), Point::new(-4.0, 3.0, 1.0), Point::new(6.0, -5.0, -2.0)] {
                let a = u_from_tau(&tau_p, p.sigma, pt, &[]).unwrap().u;
                let b = u_from_tau(&tau_m1, p.sigma, pt, &[]).unwrap().u;
                assert!((a - b).abs() < 1e-10 * a.abs().max(1e-6), "({l},{m}) {pt:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn single_wronskian_examples() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let tau = single_wronskian_oracle(&a, &[-0.5, 0.7], SigmaMode::Plus).unwrap();
        assert_eq!(tau.len(), 2);
        let p = Point::new(0.0, 0.0, 0.0);
        let u = u_from_tau(&tau, SigmaMode::Plus, p, &[]).unwrap().u;
        assert!((u - 0.5 * 1.2f64.powi(2)).abs() < 1e-12);
        let rank1 = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(matches!(
            single_wronskian_oracle(&rank1, &[0.1, 0.2, 0.3], SigmaMode::Plus),
            Err(AsymptoticsError::RankDeficient { .. })
        ));
    }

    #[test]
    fn resonant_tau_is_a_single_wronskian() {
        let p = ResonantParams::new(2, 2, vec![-1.0, -0.3, 0.4, 1.1], vec![1.0, -0.7, 1.2, -0.9], SigmaMode::Plus).unwrap();
        let w = single_wronskian_oracle(&resonant_wronskian_matrix(&p), &p.kappa, p.sigma).unwrap();
        let tp = p.tau();
        for pt in [Point::new(0.5, -0.5, 0.2), Point::new(-3.0, 2.0, 1.0)] {
            let a = u_from_tau(&tp, p.sigma, pt, &[]).unwrap().u;
            let b = u_from_tau(&w, p.sigma, pt, &[]).unwrap().u;
            assert!((a - b).abs() < 1e-10 * a.abs().max(1e-6), "{a} vs {b}");
        }
    }

    #[test]
    fn kpi_epsilon_sets() {
        let (em, ep) = kpi_epsilon(&[1.0, 1.0], 1, 0);
        assert_eq!((em, ep), (1.0, -1.0));
        let (em, ep) = kpi_epsilon(&[1.0, 1.0], 0, 1);
        assert_eq!((em, ep), (-1.0, 1.0));
    }

    #[test]
    fn kpi_one_soliton_prediction_and_measurement() {
        let cfg = ScenarioConfig::kpi_from_mu_nu(SigmaMode::PlusI, -1.0, &[KpiSpectralDatum::new(1.0, 2.0, Complex64::new(1.0, 0.0))])
            .unwrap();
        let tau = tau_symbolic(&cfg).unwrap();
        let sol = predict_kpi_asymptotics(&cfg, &tau).unwrap();
        assert_eq!(sol.len(), 2);
        for s in &sol {
            assert_eq!(s.amplitude, 0.5);
            assert!(s.phase_offset.abs() < 1e-12);
            for y in [-7.0, 0.0, 12.0] {
                let m = measure_far_field(&tau, cfg.sigma, s, y, 0.3).unwrap();
                assert!((m.amplitude - 0.5).abs() < 1e-9);
                assert!((m.offset - s.phase_offset).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn close_probe_is_not_isolated() {
        let p = fig1(alternating(), SigmaMode::Plus);
        let tau = p.tau();
        let sol = predict_kpii_asymptotics(&p);
        let s = sol.iter().find(|s| s.pair == (2, 4)).unwrap();
        assert!(matches!(measure_far_field(&tau, p.sigma, s, 0.5, 0.0), Err(AsymptoticsError::PeakNotIsolated { .. })));
    }

    #[test]
    fn subsets_are_lexicographic() {
        assert_eq!(subsets(4, 2), vec![vec![1, 2], vec![1, 3], vec![1, 4], vec![2, 3], vec![2, 4], vec![3, 4]]);
        assert_eq!(subsets(3, 3), vec![vec![1, 2, 3]]);
    }

    #[test]
    fn permutation_signs() {
        let perms = permutations(3);
        assert_eq!(perms.len(), 6);
        assert_eq!(perms.iter().map(|p| p.1).sum::<f64>(), 0.0);
        assert!(perms.contains(&(vec![1, 0, 2], -1.0)));
        assert!(perms.contains(&(vec![1, 2, 0], 1.0)));
    }
}
