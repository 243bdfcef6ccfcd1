//! Finite sums of exponentials of affine phases in `(x, y, t)`.
//!
//! Every tau function, every Wronskian minor and every eigenfunction
//! component in this crate is an [`ExpSum`]: a list of terms
//! `c · exp(cx·x + cy·y + ct·t + c0)` with complex `c` and complex phase
//! coefficients. Differentiation acts termwise by multiplying with powers
//! of the phase coefficients, so all derivatives are exact.
//!
//! Evaluation always factors out the largest real phase before summing
//! (see [`ScaledValue`]), which keeps far-field probes finite.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use thiserror::Error;

use crate::spectral::SigmaMode;

/// Componentwise absolute tolerance under which two phases are merged.
pub const MERGE_TOL: f64 = 1e-12;

/// Default bound on the total order of a [`MultiIndex`] accepted by the
/// quotient engine.
pub const DEFAULT_DERIVATIVE_CAP: usize = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExpSumError {
    #[error("value not representable even after max-phase scaling (log|value| = {log_abs})")]
    OverflowAfterScaling { log_abs: f64 },
    #[error("denominator evaluates to zero at ({x}, {y}, {t})")]
    DivisionByZeroDenominator { x: f64, y: f64, t: f64 },
    #[error("derivative order {order} exceeds cap {cap}")]
    DerivativeCapExceeded { order: usize, cap: usize },
}

/// A point `(x, y, t)` of the real space-time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0, t: 0.0 };

    pub fn new(x: f64, y: f64, t: f64) -> Self {
        Point { x, y, t }
    }

    /// Shift one coordinate (`0 = x`, `1 = y`, `2 = t`) by `h`.
    pub fn shifted(self, axis: usize, h: f64) -> Self {
        let mut p = self;
        match axis {
            0 => p.x += h,
            1 => p.y += h,
            2 => p.t += h,
            _ => panic!("axis {axis} out of range"),
        }
        p
    }
}

/// Affine phase `cx·x + cy·y + ct·t + c0` with complex coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearPhase {
    pub cx: Complex64,
    pub cy: Complex64,
    pub ct: Complex64,
    pub c0: Complex64,
}

impl LinearPhase {
    pub const ZERO: LinearPhase = LinearPhase {
        cx: Complex64::new(0.0, 0.0),
        cy: Complex64::new(0.0, 0.0),
        ct: Complex64::new(0.0, 0.0),
        c0: Complex64::new(0.0, 0.0),
    };

    pub fn new(cx: Complex64, cy: Complex64, ct: Complex64, c0: Complex64) -> Self {
        LinearPhase { cx, cy, ct, c0 }
    }

    pub fn real(cx: f64, cy: f64, ct: f64, c0: f64) -> Self {
        LinearPhase::new(cx.into(), cy.into(), ct.into(), c0.into())
    }

    pub fn eval(&self, p: Point) -> Complex64 {
        self.cx * p.x + self.cy * p.y + self.ct * p.t + self.c0
    }

    pub fn scale(&self, f: f64) -> Self {
        LinearPhase::new(self.cx * f, self.cy * f, self.ct * f, self.c0 * f)
    }

    /// Phase of the complex-conjugate function over real `(x, y, t)`.
    pub fn conj(&self) -> Self {
        LinearPhase::new(self.cx.conj(), self.cy.conj(), self.ct.conj(), self.c0.conj())
    }

    /// Coefficient of `x`, `y` or `t` (`axis` 0, 1, 2).
    pub fn slope(&self, axis: usize) -> Complex64 {
        match axis {
            0 => self.cx,
            1 => self.cy,
            2 => self.ct,
            _ => panic!("axis {axis} out of range"),
        }
    }

    /// `cx^ox · cy^oy · ct^ot`, the factor picked up under `∂^idx`.
    pub fn derivative_factor(&self, idx: MultiIndex) -> Complex64 {
        self.cx.powu(idx.ox as u32) * self.cy.powu(idx.oy as u32) * self.ct.powu(idx.ot as u32)
    }

    pub fn mergeable(&self, other: &LinearPhase) -> bool {
        close(self.cx, other.cx)
            && close(self.cy, other.cy)
            && close(self.ct, other.ct)
            && close(self.c0, other.c0)
    }

    fn sort_key(&self) -> [f64; 8] {
        [
            self.cx.re, self.cx.im, self.cy.re, self.cy.im, self.ct.re, self.ct.im, self.c0.re,
            self.c0.im,
        ]
    }
}

fn close(a: Complex64, b: Complex64) -> bool {
    (a.re - b.re).abs() <= MERGE_TOL && (a.im - b.im).abs() <= MERGE_TOL
}

impl Add for LinearPhase {
    type Output = LinearPhase;
    fn add(self, o: LinearPhase) -> LinearPhase {
        LinearPhase::new(self.cx + o.cx, self.cy + o.cy, self.ct + o.ct, self.c0 + o.c0)
    }
}

impl Neg for LinearPhase {
    type Output = LinearPhase;
    fn neg(self) -> LinearPhase {
        self.scale(-1.0)
    }
}

/// The seed phase `θ = 2(λx − 2σ⁻¹λ²y + 4λ³t)` of the spectral parameter `λ`.
///
/// For real `σ = ±1` this is `2(λx − 2σλ²y + 4λ³t)`. For `σ = ±i` the
/// `1/σ` form is the one under which `(a e^{θ/2}, b e^{−θ/2})` solves the
/// zero-potential Lax system.
pub fn phase_of(lambda: Complex64, sigma: SigmaMode) -> LinearPhase {
    let l2 = lambda * lambda;
    LinearPhase::new(
        lambda * 2.0,
        -l2 * 4.0 / sigma.value(),
        l2 * lambda * 8.0,
        Complex64::new(0.0, 0.0),
    )
}

/// The line-soliton phase `−κx − σκ²y − κ³t`, equal to
/// `phase_of(−κ/2, σ)` for `σ = ±1`.
pub fn phase_from_kappa(kappa: f64, sigma: SigmaMode) -> LinearPhase {
    let s = sigma.value();
    LinearPhase::new(
        Complex64::new(-kappa, 0.0),
        -s * kappa * kappa,
        Complex64::new(-kappa * kappa * kappa, 0.0),
        Complex64::new(0.0, 0.0),
    )
}

/// Orders of differentiation in `x`, `y` and `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct MultiIndex {
    pub ox: usize,
    pub oy: usize,
    pub ot: usize,
}

impl MultiIndex {
    pub const ZERO: MultiIndex = MultiIndex { ox: 0, oy: 0, ot: 0 };

    pub const fn new(ox: usize, oy: usize, ot: usize) -> Self {
        MultiIndex { ox, oy, ot }
    }

    pub const fn x(n: usize) -> Self {
        MultiIndex::new(n, 0, 0)
    }

    pub fn order(&self) -> usize {
        self.ox + self.oy + self.ot
    }

    pub fn is_zero(&self) -> bool {
        self.order() == 0
    }

    pub fn check_cap(&self, cap: usize) -> Result<(), ExpSumError> {
        if self.order() > cap {
            Err(ExpSumError::DerivativeCapExceeded { order: self.order(), cap })
        } else {
            Ok(())
        }
    }

    /// Every `β ≤ self` componentwise, in lexicographic order.
    pub fn lower_set(&self) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        for a in 0..=self.ox {
            for b in 0..=self.oy {
                for c in 0..=self.ot {
                    out.push(MultiIndex::new(a, b, c));
                }
            }
        }
        out
    }

    /// Multivariate binomial `C(self, beta)`.
    pub fn binomial(&self, beta: &MultiIndex) -> f64 {
        binom(self.ox, beta.ox) * binom(self.oy, beta.oy) * binom(self.ot, beta.ot)
    }

    fn minus(&self, b: &MultiIndex) -> MultiIndex {
        MultiIndex::new(self.ox - b.ox, self.oy - b.oy, self.ot - b.ot)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.ox, self.oy, self.ot)
    }
}

pub(crate) fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

/// A complex number stored as `mantissa · e^{log_scale}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledValue {
    pub mantissa: Complex64,
    pub log_scale: f64,
}

impl ScaledValue {
    pub const ZERO: ScaledValue = ScaledValue { mantissa: Complex64::new(0.0, 0.0), log_scale: 0.0 };

    pub fn new(mantissa: Complex64, log_scale: f64) -> Self {
        ScaledValue { mantissa, log_scale }
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa == Complex64::new(0.0, 0.0)
    }

    /// `ln |value|`; `-inf` for zero.
    pub fn log_abs(&self) -> f64 {
        self.mantissa.norm().ln() + self.log_scale
    }

    /// `value / |value|`; zero for zero.
    pub fn unit(&self) -> Complex64 {
        let n = self.mantissa.norm();
        if n == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            self.mantissa / n
        }
    }

    pub fn to_complex(&self) -> Result<Complex64, ExpSumError> {
        if self.is_zero() {
            return Ok(self.mantissa);
        }
        let v = self.mantissa * self.log_scale.exp();
        if v.re.is_finite() && v.im.is_finite() && self.mantissa.re.is_finite() && self.mantissa.im.is_finite() {
            Ok(v)
        } else {
            Err(ExpSumError::OverflowAfterScaling { log_abs: self.log_abs() })
        }
    }

    /// Same value expressed with a different `log_scale`.
    pub fn rescaled(&self, log_scale: f64) -> Complex64 {
        self.mantissa * (self.log_scale - log_scale).exp()
    }

    pub fn mul(&self, o: &ScaledValue) -> ScaledValue {
        ScaledValue::new(self.mantissa * o.mantissa, self.log_scale + o.log_scale)
    }

    pub fn div(&self, o: &ScaledValue) -> ScaledValue {
        ScaledValue::new(self.mantissa / o.mantissa, self.log_scale - o.log_scale)
    }
}

/// One term `coeff · exp(phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub coeff: Complex64,
    pub phase: LinearPhase,
}

/// A canonical finite sum of exponentials.
///
/// Canonical form: no two terms have mergeable phases and no coefficient
/// is exactly zero. Every constructor and operation returns canonical sums.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExpSum {
    terms: Vec<Term>,
}

impl ExpSum {
    pub fn zero() -> Self {
        ExpSum { terms: Vec::new() }
    }

    pub fn constant(c: Complex64) -> Self {
        ExpSum::single(c, LinearPhase::ZERO)
    }

    pub fn single(coeff: Complex64, phase: LinearPhase) -> Self {
        ExpSum::from_terms(vec![Term { coeff, phase }])
    }

    pub fn from_terms(terms: Vec<Term>) -> Self {
        ExpSum { terms: canonicalize(terms) }
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Re-run canonicalization; a no-op on canonical sums.
    pub fn canonical(&self) -> Self {
        ExpSum::from_terms(self.terms.clone())
    }

    pub fn scale(&self, c: Complex64) -> Self {
        ExpSum::from_terms(self.terms.iter().map(|t| Term { coeff: t.coeff * c, phase: t.phase }).collect())
    }

    /// Multiply every term by `exp(phase)`.
    pub fn shift_phase(&self, phase: LinearPhase) -> Self {
        ExpSum::from_terms(self.terms.iter().map(|t| Term { coeff: t.coeff, phase: t.phase + phase }).collect())
    }

    /// The complex conjugate as a function of real `(x, y, t)`.
    pub fn conj(&self) -> Self {
        ExpSum::from_terms(self.terms.iter().map(|t| Term { coeff: t.coeff.conj(), phase: t.phase.conj() }).collect())
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.iter().map(|t| t.coeff.norm()).fold(0.0, f64::max)
    }

    /// Exact `∂^idx` of the sum.
    pub fn derivative(&self, idx: MultiIndex) -> ExpSum {
        if idx.is_zero() {
            return self.clone();
        }
        ExpSum::from_terms(
            self.terms
                .iter()
                .map(|t| Term { coeff: t.coeff * t.phase.derivative_factor(idx), phase: t.phase })
                .collect(),
        )
    }

    /// Largest real part of any phase at `p`; `0` for the empty sum.
    pub fn max_real_phase(&self, p: Point) -> f64 {
        self.terms
            .iter()
            .map(|t| t.phase.eval(p).re + t.coeff.norm().ln())
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max)
            .max_finite_or(0.0)
    }

    /// `Σ c · k^idx · exp(φ(p) − shift)`: the derivative `∂^idx` at `p`,
    /// divided by `e^{shift}`.
    pub fn derivative_at_scaled(&self, idx: MultiIndex, p: Point, shift: f64) -> Complex64 {
        self.terms
            .iter()
            .map(|t| {
                let factor = if idx.is_zero() { Complex64::new(1.0, 0.0) } else { t.phase.derivative_factor(idx) };
                t.coeff * factor * (t.phase.eval(p) - shift).exp()
            })
            .sum()
    }

    /// Evaluate with the largest real phase factored out.
    pub fn eval_scaled(&self, p: Point) -> ScaledValue {
        if self.terms.is_empty() {
            return ScaledValue::ZERO;
        }
        let s = self.max_real_phase(p);
        ScaledValue::new(self.derivative_at_scaled(MultiIndex::ZERO, p, s), s)
    }

    pub fn eval(&self, p: Point) -> Result<Complex64, ExpSumError> {
        self.eval_scaled(p).to_complex()
    }

    /// `∂^idx (num/den)` at `p` by the recursive quotient rule.
    pub fn quotient_derivative(
        num: &ExpSum,
        den: &ExpSum,
        idx: MultiIndex,
        p: Point,
    ) -> Result<Complex64, ExpSumError> {
        ExpSum::quotient_derivative_capped(num, den, idx, p, DEFAULT_DERIVATIVE_CAP)
    }

    pub fn quotient_derivative_capped(
        num: &ExpSum,
        den: &ExpSum,
        idx: MultiIndex,
        p: Point,
        cap: usize,
    ) -> Result<Complex64, ExpSumError> {
        idx.check_cap(cap)?;
        let shift = den.max_real_phase(p);
        let d0 = den.derivative_at_scaled(MultiIndex::ZERO, p, shift);
        if d0 == Complex64::new(0.0, 0.0) || !d0.is_finite() {
            return Err(ExpSumError::DivisionByZeroDenominator { x: p.x, y: p.y, t: p.t });
        }
        // n = q·d  ⇒  ∂^α q = (∂^α n − Σ_{β<α} C(α,β) ∂^β q ∂^{α−β} d) / d
        let lower = idx.lower_set();
        let mut q: Vec<(MultiIndex, Complex64)> = Vec::with_capacity(lower.len());
        for alpha in &lower {
            let mut acc = num.derivative_at_scaled(*alpha, p, shift);
            for (beta, qb) in &q {
                if beta.ox <= alpha.ox && beta.oy <= alpha.oy && beta.ot <= alpha.ot {
                    let rest = alpha.minus(beta);
                    acc -= *qb * alpha.binomial(beta) * den.derivative_at_scaled(rest, p, shift);
                }
            }
            q.push((*alpha, acc / d0));
        }
        let v = q.last().map(|(_, v)| *v).unwrap_or_default();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExpSumError::OverflowAfterScaling { log_abs: f64::INFINITY })
        }
    }
}

trait MaxFinite {
    fn max_finite_or(self, d: f64) -> f64;
}

impl MaxFinite for f64 {
    fn max_finite_or(self, d: f64) -> f64 {
        if self.is_finite() {
            self
        } else {
            d
        }
    }
}

fn cmp_keys(a: &[f64; 8], b: &[f64; 8]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

fn canonicalize(mut terms: Vec<Term>) -> Vec<Term> {
    terms.retain(|t| t.coeff != Complex64::new(0.0, 0.0));
    terms.sort_by(|a, b| cmp_keys(&a.phase.sort_key(), &b.phase.sort_key()));
    let mut out: Vec<Term> = Vec::with_capacity(terms.len());
    'next: for t in terms {
        // Sorted by cx.re, so any mergeable predecessor lies in a short tail window.
        for prev in out.iter_mut().rev() {
            if prev.phase.cx.re < t.phase.cx.re - MERGE_TOL {
                break;
            }
            if prev.phase.mergeable(&t.phase) {
                prev.coeff += t.coeff;
                continue 'next;
            }
        }
        out.push(t);
    }
    out.retain(|t| t.coeff != Complex64::new(0.0, 0.0));
    out
}

impl Add for &ExpSum {
    type Output = ExpSum;
    fn add(self, o: &ExpSum) -> ExpSum {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&o.terms);
        ExpSum::from_terms(terms)
    }
}

impl Sub for &ExpSum {
    type Output = ExpSum;
    fn sub(self, o: &ExpSum) -> ExpSum {
        let mut terms = self.terms.clone();
        terms.extend(o.terms.iter().map(|t| Term { coeff: -t.coeff, phase: t.phase }));
        ExpSum::from_terms(terms)
    }
}

impl Neg for &ExpSum {
    type Output = ExpSum;
    fn neg(self) -> ExpSum {
        self.scale(Complex64::new(-1.0, 0.0))
    }
}

impl Mul for &ExpSum {
    type Output = ExpSum;
    fn mul(self, o: &ExpSum) -> ExpSum {
        let mut terms = Vec::with_capacity(self.terms.len() * o.terms.len());
        for a in &self.terms {
            for b in &o.terms {
                terms.push(Term { coeff: a.coeff * b.coeff, phase: a.phase + b.phase });
            }
        }
        ExpSum::from_terms(terms)
    }
}

impl std::iter::Sum for ExpSum {
    fn sum<I: Iterator<Item = ExpSum>>(iter: I) -> ExpSum {
        let mut terms = Vec::new();
        for s in iter {
            terms.extend(s.terms);
        }
        ExpSum::from_terms(terms)
    }
}

/// Largest coefficient of `a − b` relative to the largest coefficient of
/// either operand. Zero when both are empty.
pub fn termwise_relative_difference(a: &ExpSum, b: &ExpSum) -> f64 {
    let scale = a.max_abs_coeff().max(b.max_abs_coeff());
    if scale == 0.0 {
        return 0.0;
    }
    (a - b).max_abs_coeff() / scale
}
