//! The N-fold Darboux matrix `T(λ)` of the coupled AKNS Lax triple and its
//! numerical verification.
//!
//! `T(λ)` is the `(m+1)×(m+1)` polynomial matrix
//!
//! ```text
//!   α(λ)   = λᴺ − Σ α⁽ⁿ⁾ λⁿ          β_j(λ)  = Σ β_j⁽ⁿ⁾ (−λ)ⁿ
//!   γ_i(λ) = −Σ γ_i⁽ⁿ⁾ λⁿ            δ_ij(λ) = δ_ij λᴺ + Σ δ_ij⁽ⁿ⁾ (−λ)ⁿ
//! ```
//!
//! whose coefficients are fixed by requiring `T(λ_k) Φ_k = 0` for the `K`
//! seed eigenfunctions. After multiplying through by `f_k` the linear
//! system has exactly the `τ` block matrix as its coefficient matrix.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::expsum::{ExpSum, ExpSumError, LinearPhase, MultiIndex, Point, phase_of};
use crate::linalg::{self, CMatrix};
use crate::spectral::{ScenarioConfig, SigmaMode, SpectralDatum, SpectralError};
use crate::wronskian::{BlockMatrix, Minor, WronskianError, WronskianSet};

/// Condition number above which the coefficient system counts as singular.
pub const SINGULAR_CONDITION: f64 = 1e15;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DarbouxError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Wronskian(#[from] WronskianError),
    #[error(transparent)]
    ExpSum(#[from] ExpSumError),
    #[error("Darboux coefficient system is singular at ({x}, {y}, {t}) (condition {condition:e})")]
    SingularSystem { x: f64, y: f64, t: f64, condition: f64 },
}

/// `Φ = (f, g⁽¹⁾, …, g⁽ᵐ⁾)` for the zero seed: `(a e^{θ/2}, b⁽ʲ⁾ e^{−θ/2})`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenVector {
    pub lambda: Complex64,
    pub phi: Vec<ExpSum>,
}

impl EigenVector {
    pub fn seed(datum: &SpectralDatum, sigma: SigmaMode) -> Self {
        let half = phase_of(datum.lambda, sigma).scale(0.5);
        let mut phi = vec![ExpSum::single(datum.a, half)];
        phi.extend(datum.b.iter().map(|&b| ExpSum::single(b, -half)));
        EigenVector { lambda: datum.lambda, phi }
    }

    /// Components at `p`, divided by `e^{shift}`.
    pub fn eval_shifted(&self, p: Point, shift: f64) -> DVector<Complex64> {
        DVector::from_iterator(
            self.phi.len(),
            self.phi.iter().map(|c| c.derivative_at_scaled(MultiIndex::ZERO, p, shift)),
        )
    }

    /// Largest `ln|component|` at `p`.
    pub fn log_scale(&self, p: Point) -> f64 {
        self.phi.iter().filter(|c| !c.is_empty()).map(|c| c.max_real_phase(p)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `ϖ⁽ʲ⁾ = g⁽ʲ⁾/f`, `None` where `f` vanishes.
    pub fn ratios(&self, p: Point) -> Option<Vec<Complex64>> {
        let s = self.log_scale(p);
        let v = self.eval_shifted(p, s);
        if v[0] == Complex64::new(0.0, 0.0) {
            return None;
        }
        Some(v.iter().skip(1).map(|g| g / v[0]).collect())
    }
}

/// The polynomial coefficients of `T(λ)` solved at one point.
#[derive(Debug, Clone)]
pub struct DarbouxCoeffs {
    pub m: usize,
    pub n: usize,
    pub point: Point,
    /// `α⁽⁰⁾ … α⁽ᴺ⁻¹⁾`.
    pub alpha: Vec<Complex64>,
    /// `beta[j][n] = β_{j+1}⁽ⁿ⁾`.
    pub beta: Vec<Vec<Complex64>>,
    /// `gamma[i][n] = γ_{i+1}⁽ⁿ⁾`.
    pub gamma: Vec<Vec<Complex64>>,
    /// `delta[i][j][n] = δ_{i+1,j+1}⁽ⁿ⁾`.
    pub delta: Vec<Vec<Vec<Complex64>>>,
    pub lambdas: Vec<Complex64>,
    pub eigenvectors: Vec<EigenVector>,
    /// One-norm condition number of the row-scaled system.
    pub condition: f64,
    /// Rows where `f_k` vanishes, so `ϖ_k` is undefined (the multiplied
    /// system is still well posed).
    pub zero_f_rows: Vec<usize>,
    /// Largest residual of the scaled linear system.
    pub solve_residual: f64,
}

impl DarbouxCoeffs {
    /// `p′_j = −2(−1)^{N−1} β_j⁽ᴺ⁻¹⁾` for the zero seed.
    pub fn p_new(&self) -> Vec<Complex64> {
        let s = if self.n % 2 == 1 { -2.0 } else { 2.0 };
        self.beta.iter().map(|b| b[self.n - 1] * s).collect()
    }

    /// `q′_i = −2 γ_i⁽ᴺ⁻¹⁾` for the zero seed.
    pub fn q_new(&self) -> Vec<Complex64> {
        self.gamma.iter().map(|g| g[self.n - 1] * -2.0).collect()
    }
}

pub fn solve_coeffs(cfg: &ScenarioConfig, p: Point) -> Result<DarbouxCoeffs, DarbouxError> {
    cfg.validate()?;
    let bm = BlockMatrix::new(cfg, Minor::Tau)?;
    let rows = cfg.rows();
    let (m, n, k) = (cfg.m, cfg.n, cfg.k());
    let (mat, row_logs) = bm.evaluate_scaled(p);

    // Right-hand sides λ_r^N f_r and λ_r^N g_r^{(i)} on the same row scale.
    let mut rhs = CMatrix::zeros(k, m + 1);
    let mut zero_f_rows = Vec::new();
    let eigenvectors: Vec<EigenVector> = rows.iter().map(|r| EigenVector::seed(r, cfg.sigma)).collect();
    for (r, ev) in eigenvectors.iter().enumerate() {
        let ln = rows[r].lambda.powu(n as u32);
        let v = ev.eval_shifted(p, row_logs[r]);
        if rows[r].a == Complex64::new(0.0, 0.0) {
            zero_f_rows.push(r);
        }
        for c in 0..=m {
            rhs[(r, c)] = ln * v[c];
        }
    }
    let singular = |condition| DarbouxError::SingularSystem { x: p.x, y: p.y, t: p.t, condition };
    let condition = linalg::condition_1(&mat);
    if !(condition < SINGULAR_CONDITION) {
        return Err(singular(condition));
    }
    let sol = linalg::solve(&mat, &rhs).ok_or_else(|| singular(f64::INFINITY))?;
    let solve_residual = linalg::max_abs(&(&mat * &sol - &rhs)) / linalg::max_abs(&rhs).max(f64::MIN_POSITIVE);

    let alpha = (0..n).map(|i| sol[(i, 0)]).collect();
    let beta = (0..m).map(|j| (0..n).map(|i| sol[((j + 1) * n + i, 0)]).collect()).collect();
    let gamma = (0..m).map(|i| (0..n).map(|l| sol[(l, i + 1)]).collect()).collect();
    let delta = (0..m)
        .map(|i| (0..m).map(|j| (0..n).map(|l| sol[((j + 1) * n + l, i + 1)]).collect()).collect())
        .collect();
    Ok(DarbouxCoeffs {
        m,
        n,
        point: p,
        alpha,
        beta,
        gamma,
        delta,
        lambdas: rows.iter().map(|r| r.lambda).collect(),
        eigenvectors,
        condition,
        zero_f_rows,
        solve_residual,
    })
}

fn poly(c: &[Complex64], x: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &v| acc * x + v)
}

pub fn darboux_matrix_at(coeffs: &DarbouxCoeffs, lambda: Complex64) -> CMatrix {
    let m = coeffs.m;
    let ln = lambda.powu(coeffs.n as u32);
    let mut t = CMatrix::zeros(m + 1, m + 1);
    t[(0, 0)] = ln - poly(&coeffs.alpha, lambda);
    for j in 0..m {
        t[(0, j + 1)] = poly(&coeffs.beta[j], -lambda);
        t[(j + 1, 0)] = -poly(&coeffs.gamma[j], lambda);
        for l in 0..m {
            t[(j + 1, l + 1)] = poly(&coeffs.delta[j][l], -lambda) + if j == l { ln } else { Complex64::new(0.0, 0.0) };
        }
    }
    t
}

/// Potentials and their first two x-derivatives at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialJet {
    /// `p[d][j] = ∂_x^d p_j`.
    pub p: [Vec<Complex64>; 3],
    pub q: [Vec<Complex64>; 3],
}

impl PotentialJet {
    pub fn zero(m: usize) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); m];
        PotentialJet { p: [z.clone(), z.clone(), z.clone()], q: [z.clone(), z.clone(), z] }
    }

    pub fn m(&self) -> usize {
        self.p[0].len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaxMatrices {
    pub u: CMatrix,
    pub v: CMatrix,
    pub w: CMatrix,
}

pub fn lax_matrices(jet: &PotentialJet, lambda: Complex64, sigma: SigmaMode) -> LaxMatrices {
    let m = jet.m();
    let d = m + 1;
    let (p, q) = (&jet.p[0], &jet.q[0]);
    let (px, qx) = (&jet.p[1], &jet.q[1]);
    let (pxx, qxx) = (&jet.p[2], &jet.q[2]);
    let si = sigma.inv();
    let s = sigma.value();
    let pq: Complex64 = p.iter().zip(q).map(|(a, b)| a * b).sum();

    let mut u0 = CMatrix::identity(d, d) * Complex64::new(-1.0, 0.0);
    u0[(0, 0)] = Complex64::new(1.0, 0.0);
    let mut u1 = CMatrix::zeros(d, d);
    let mut v2 = CMatrix::zeros(d, d);
    let mut w3 = CMatrix::zeros(d, d);
    v2[(0, 0)] = pq * si;
    w3[(0, 0)] = p.iter().zip(qx).zip(px.iter().zip(q)).map(|((a, b), (c, e))| a * b - c * e).sum();
    for j in 0..m {
        u1[(0, j + 1)] = p[j];
        u1[(j + 1, 0)] = q[j];
        v2[(0, j + 1)] = -px[j] * si;
        v2[(j + 1, 0)] = qx[j] * si;
        w3[(0, j + 1)] = pxx[j] - pq * p[j] * 2.0;
        w3[(j + 1, 0)] = qxx[j] - q[j] * pq * 2.0;
        for l in 0..m {
            v2[(j + 1, l + 1)] = -q[j] * p[l] * si;
            w3[(j + 1, l + 1)] = q[j] * px[l] - qx[j] * p[l];
        }
    }
    let l2 = lambda * lambda;
    let u = &u0 * lambda + &u1;
    let v = (&u0 * l2 + &u1 * lambda) * (-2.0 * si) + &v2;
    let w = (&u0 * (l2 * lambda) + &u1 * l2) * Complex64::new(4.0, 0.0) + &v2 * (lambda * s * -2.0) + &w3;
    LaxMatrices { u, v, w }
}

/// `p′_j`, `q′_i` as exact ratios `χ/τ`.
#[derive(Debug, Clone)]
pub struct PotentialField {
    pub n: usize,
    pub set: WronskianSet,
}

impl PotentialField {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, DarbouxError> {
        Ok(PotentialField { n: cfg.n, set: WronskianSet::build(cfg)? })
    }

    pub fn m(&self) -> usize {
        self.set.chi1.len()
    }

    /// `p′_j = 2(−1)^{(j+1)N+1} χ⁽¹⁾_j / τ`, `j` 0-based.
    pub fn p(&self, j: usize, idx: MultiIndex, pt: Point) -> Result<Complex64, ExpSumError> {
        let s = if ((j + 2) * self.n + 1) % 2 == 0 { 2.0 } else { -2.0 };
        Ok(ExpSum::quotient_derivative(&self.set.chi1[j], &self.set.tau, idx, pt)? * s)
    }

    /// `q′_i = −2(−1)^{(i−1)N−1} χ⁽²⁾_i / τ`, `i` 0-based.
    pub fn q(&self, i: usize, idx: MultiIndex, pt: Point) -> Result<Complex64, ExpSumError> {
        let s = if (i * self.n + 1) % 2 == 0 { -2.0 } else { 2.0 };
        Ok(ExpSum::quotient_derivative(&self.set.chi2[i], &self.set.tau, idx, pt)? * s)
    }

    pub fn jet(&self, pt: Point) -> Result<PotentialJet, ExpSumError> {
        let m = self.m();
        let mut jet = PotentialJet::zero(m);
        for d in 0..3 {
            for j in 0..m {
                jet.p[d][j] = self.p(j, MultiIndex::x(d), pt)?;
                jet.q[d][j] = self.q(j, MultiIndex::x(d), pt)?;
            }
        }
        Ok(jet)
    }
}

/// 25 fixed points of `[−3, 3]³` followed by `random` seeded points.
pub fn probe_points(random: usize, seed: u64) -> Vec<Point> {
    let mut out = Vec::with_capacity(25 + random);
    for i in 0..25usize {
        let f = |k: usize| -3.0 + 6.0 * ((i * k) % 25) as f64 / 24.0;
        out.push(Point::new(f(1), f(7), f(18)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random {
        out.push(Point::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)));
    }
    out
}

/// `K + 2` spectral sample points away from the real and imaginary axes.
pub fn lambda_samples(count: usize) -> Vec<Complex64> {
    (0..count)
        .map(|s| {
            let ang = 0.37 + std::f64::consts::TAU * s as f64 / count as f64;
            Complex64::from_polar(0.9 + 0.05 * s as f64, ang)
        })
        .collect()
}

/// `max_r ‖T(λ_r) Φ_r‖ / ‖Φ_r‖`.
pub fn kernel_residual(coeffs: &DarbouxCoeffs) -> f64 {
    let p = coeffs.point;
    coeffs
        .eigenvectors
        .iter()
        .map(|ev| {
            let phi = ev.eval_shifted(p, ev.log_scale(p));
            (darboux_matrix_at(coeffs, ev.lambda) * &phi).norm() / phi.norm()
        })
        .fold(0.0, f64::max)
}

/// `max |det T(λ) − Π(λ − λ_k)| / max(1, |Π(λ − λ_k)|)` over `K + 2` samples.
pub fn determinant_residual(coeffs: &DarbouxCoeffs) -> f64 {
    lambda_samples(coeffs.lambdas.len() + 2)
        .into_iter()
        .map(|l| {
            let d = linalg::determinant(&darboux_matrix_at(coeffs, l));
            let prod: Complex64 = coeffs.lambdas.iter().map(|&lk| l - lk).product();
            (d - prod).norm() / prod.norm().max(1.0)
        })
        .fold(0.0, f64::max)
}

/// Max entrywise difference between `β_j⁽ᴺ⁻¹⁾`, `γ_i⁽ᴺ⁻¹⁾` and the Cramer
/// ratios `(−1)^{jN−1} χ⁽¹⁾_j/τ`, `(−1)^{(i−1)N−1} χ⁽²⁾_i/τ`, relative to
/// the largest entry of either vector.
pub fn cramer_residual(coeffs: &DarbouxCoeffs, set: &WronskianSet) -> Result<f64, DarbouxError> {
    let p = coeffs.point;
    let n = coeffs.n;
    let mut pairs = Vec::with_capacity(2 * coeffs.m);
    for j in 0..coeffs.m {
        let jj = j + 1;
        let sb = if (jj * n + 1) % 2 == 0 { 1.0 } else { -1.0 };
        let b = ExpSum::quotient_derivative(&set.chi1[j], &set.tau, MultiIndex::ZERO, p)? * sb;
        let sg = if (j * n + 1) % 2 == 0 { 1.0 } else { -1.0 };
        let g = ExpSum::quotient_derivative(&set.chi2[j], &set.tau, MultiIndex::ZERO, p)? * sg;
        pairs.push((coeffs.beta[j][n - 1], b));
        pairs.push((coeffs.gamma[j][n - 1], g));
    }
    let scale = pairs.iter().map(|(a, b)| a.norm().max(b.norm())).fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok(pairs.iter().map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / scale)
}

/// Fourth-order central difference of `f` along `axis`.
fn central4<F>(p: Point, axis: usize, h: f64, f: F) -> Result<CMatrix, DarbouxError>
where
    F: Fn(Point) -> Result<CMatrix, DarbouxError>,
{
    let fm2 = f(p.shifted(axis, -2.0 * h))?;
    let fm1 = f(p.shifted(axis, -h))?;
    let fp1 = f(p.shifted(axis, h))?;
    let fp2 = f(p.shifted(axis, 2.0 * h))?;
    Ok((fm2 - fm1 * Complex64::new(8.0, 0.0) + fp1 * Complex64::new(8.0, 0.0) - fp2) / Complex64::new(12.0 * h, 0.0))
}

/// Residuals of `T_x + T U − U′T` (and the `y`, `t` analogues with `V`, `W`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntertwiningReport {
    /// Max entrywise magnitude per axis.
    pub absolute: [f64; 3],
    /// The same divided by the largest entry of `T_a`, `T·L`, `L′·T`.
    pub relative: [f64; 3],
}

/// Step used by the checks: `base` divided by the largest phase slope along `axis`.
pub fn fd_step(cfg: &ScenarioConfig, axis: usize, base: f64) -> f64 {
    let slope = cfg
        .rows()
        .iter()
        .map(|r| phase_of(r.lambda, cfg.sigma).slope(axis).norm() * 0.5)
        .fold(1.0, f64::max);
    base / slope
}

pub fn verify_intertwining(
    cfg: &ScenarioConfig,
    field: &PotentialField,
    p: Point,
    lambdas: &[Complex64],
    steps: [f64; 3],
) -> Result<IntertwiningReport, DarbouxError> {
    let c0 = solve_coeffs(cfg, p)?;
    let jet = field.jet(p)?;
    let zero = PotentialJet::zero(cfg.m);
    let mut rep = IntertwiningReport { absolute: [0.0; 3], relative: [0.0; 3] };
    for &l in lambdas {
        let t = darboux_matrix_at(&c0, l);
        let seed = lax_matrices(&zero, l, cfg.sigma);
        let new = lax_matrices(&jet, l, cfg.sigma);
        for axis in 0..3 {
            let ta = central4(p, axis, steps[axis], |q| Ok(darboux_matrix_at(&solve_coeffs(cfg, q)?, l)))?;
            let (ls, ln) = match axis {
                0 => (&seed.u, &new.u),
                1 => (&seed.v, &new.v),
                _ => (&seed.w, &new.w),
            };
            let a = &t * ls;
            let b = ln * &t;
            let r = linalg::max_abs(&(&ta + &a - &b));
            let scale = linalg::max_abs(&ta).max(linalg::max_abs(&a)).max(linalg::max_abs(&b)).max(f64::MIN_POSITIVE);
            rep.absolute[axis] = rep.absolute[axis].max(r);
            rep.relative[axis] = rep.relative[axis].max(r / scale);
        }
    }
    Ok(rep)
}

/// Observed order of the x-intertwining residual under `h → h/2 → h/4`.
pub fn intertwining_convergence_order(
    cfg: &ScenarioConfig,
    field: &PotentialField,
    p: Point,
    lambda: Complex64,
    h: f64,
) -> Result<(f64, [f64; 3]), DarbouxError> {
    let mut r = [0.0; 3];
    for (i, hh) in [h, h / 2.0, h / 4.0].into_iter().enumerate() {
        r[i] = verify_intertwining(cfg, field, p, &[lambda], [hh, hh, hh])?.absolute[0];
    }
    let order = 0.5 * ((r[0] / r[1]).log2() + (r[1] / r[2]).log2());
    Ok((order, r))
}

/// Appendix-style adjoint products `[T_a + T L] T*` at every `λ_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjointReport {
    pub absolute: [f64; 3],
    pub relative: [f64; 3],
    /// `max |T*[j,:] − ϖ_j T*[0,:]| / max |T*|`.
    pub proportionality: f64,
}

pub fn verify_adjoint_roots(cfg: &ScenarioConfig, p: Point, steps: [f64; 3]) -> Result<AdjointReport, DarbouxError> {
    verify_adjoint_at(cfg, p, steps, None)
}

/// Same products at arbitrary `λ` values instead of the roots.
pub fn adjoint_products_at(
    cfg: &ScenarioConfig,
    p: Point,
    steps: [f64; 3],
    lambdas: &[Complex64],
) -> Result<AdjointReport, DarbouxError> {
    verify_adjoint_at(cfg, p, steps, Some(lambdas))
}

fn verify_adjoint_at(
    cfg: &ScenarioConfig,
    p: Point,
    steps: [f64; 3],
    at: Option<&[Complex64]>,
) -> Result<AdjointReport, DarbouxError> {
    let c0 = solve_coeffs(cfg, p)?;
    let zero = PotentialJet::zero(cfg.m);
    let mut rep = AdjointReport { absolute: [0.0; 3], relative: [0.0; 3], proportionality: 0.0 };
    let targets: Vec<(Complex64, Option<&EigenVector>)> = match at {
        Some(ls) => ls.iter().map(|&l| (l, None)).collect(),
        None => c0.eigenvectors.iter().map(|e| (e.lambda, Some(e))).collect(),
    };
    for (l, ev) in targets {
        let t = darboux_matrix_at(&c0, l);
        let adj = linalg::adjugate(&t);
        let seed = lax_matrices(&zero, l, cfg.sigma);
        for axis in 0..3 {
            let ta = central4(p, axis, steps[axis], |q| Ok(darboux_matrix_at(&solve_coeffs(cfg, q)?, l)))?;
            let ls = match axis {
                0 => &seed.u,
                1 => &seed.v,
                _ => &seed.w,
            };
            let inner = &ta + &t * ls;
            let prod = &inner * &adj;
            let r = linalg::max_abs(&prod);
            let scale = (linalg::max_abs(&inner) * linalg::max_abs(&adj)).max(f64::MIN_POSITIVE);
            rep.absolute[axis] = rep.absolute[axis].max(r);
            rep.relative[axis] = rep.relative[axis].max(r / scale);
        }
        if let Some(ratios) = ev.and_then(|e| e.ratios(p)) {
            let mx = linalg::max_abs(&adj).max(f64::MIN_POSITIVE);
            for (j, w) in ratios.iter().enumerate() {
                for c in 0..adj.ncols() {
                    let d = (adj[(j + 1, c)] - w * adj[(0, c)]).norm() / mx;
                    rep.proportionality = rep.proportionality.max(d);
                }
            }
        }
    }
    Ok(rep)
}

/// Residual of `Φ′_a = L′ Φ′` for `Φ′ = T Φ` with `Φ` a seed eigenfunction
/// at a non-root `λ`, per axis, relative to `max(|Φ′_a|, |L′Φ′|)`.
pub fn verify_new_eigenfunction(
    cfg: &ScenarioConfig,
    field: &PotentialField,
    datum: &SpectralDatum,
    p: Point,
    steps: [f64; 3],
) -> Result<[f64; 3], DarbouxError> {
    let ev = EigenVector::seed(datum, cfg.sigma);
    let shift = ev.log_scale(p);
    let phi_new = |q: Point| -> Result<CMatrix, DarbouxError> {
        let t = darboux_matrix_at(&solve_coeffs(cfg, q)?, datum.lambda);
        let v = t * ev.eval_shifted(q, shift);
        Ok(CMatrix::from_column_slice(v.len(), 1, v.as_slice()))
    };
    let center = phi_new(p)?;
    let lax = lax_matrices(&field.jet(p)?, datum.lambda, cfg.sigma);
    let mut out = [0.0; 3];
    for (axis, o) in out.iter_mut().enumerate() {
        let d = central4(p, axis, steps[axis], phi_new)?;
        let l = match axis {
            0 => &lax.u,
            1 => &lax.v,
            _ => &lax.w,
        };
        let rhs = l * &center;
        let scale = linalg::max_abs(&d).max(linalg::max_abs(&rhs)).max(f64::MIN_POSITIVE);
        *o = linalg::max_abs(&(d - rhs)) / scale;
    }
    Ok(out)
}

/// `max_j |p′_j − ε conj(q′_j)|` relative to `max |p′|`.
pub fn reduction_residual(coeffs: &DarbouxCoeffs, epsilon: f64) -> f64 {
    let p = coeffs.p_new();
    let q = coeffs.q_new();
    let scale = p.iter().chain(q.iter()).map(|z| z.norm()).fold(f64::MIN_POSITIVE, f64::max);
    p.iter().zip(&q).map(|(a, b)| (a - b.conj() * epsilon).norm() / scale).fold(0.0, f64::max)
}

/// `u = −2 Σ p′_j q′_j` from the solved coefficients.
pub fn u_from_coeffs(coeffs: &DarbouxCoeffs) -> Complex64 {
    coeffs.p_new().iter().zip(coeffs.q_new()).map(|(a, b)| a * b).sum::<Complex64>() * -2.0
}

/// Seed phase of a datum, for callers that need `θ` itself.
pub fn theta(datum: &SpectralDatum, sigma: SigmaMode) -> LinearPhase {
    phase_of(datum.lambda, sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{random_kpi, random_kpii};
    use rand::SeedableRng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn one_one() -> ScenarioConfig {
        ScenarioConfig::kpii(
            SigmaMode::Plus,
            1,
            1,
            vec![SpectralDatum::real(0.35, 1.0, &[0.8]), SpectralDatum::real(-0.45, 1.2, &[-0.6])],
        )
        .unwrap()
    }

    #[test]
    fn hand_elimination_m1_n1() {
        // α⁽⁰⁾ and β⁽⁰⁾ from α(λ_k) + ϖ_k β(λ_k) = 0 with α = λ − α⁽⁰⁾, β = β⁽⁰⁾.
        let cfg = one_one();
        let p = Point::new(0.4, -0.3, 0.2);
        let co = solve_coeffs(&cfg, p).unwrap();
        let w: Vec<Complex64> = co.eigenvectors.iter().map(|e| e.ratios(p).unwrap()[0]).collect();
        let (l1, l2) = (co.lambdas[0], co.lambdas[1]);
        let beta = (l1 - l2) / (w[1] - w[0]);
        let alpha = l1 + w[0] * beta;
        assert!((co.beta[0][0] - beta).norm() < 1e-13 * beta.norm());
        assert!((co.alpha[0] - alpha).norm() < 1e-13 * alpha.norm().max(1.0));
    }

    #[test]
    fn duplicate_lambda_is_rejected() {
        let mut cfg = one_one();
        cfg.spectra[1].lambda = cfg.spectra[0].lambda;
        assert!(matches!(
            solve_coeffs(&cfg, Point::ORIGIN),
            Err(DarbouxError::Spectral(SpectralError::DuplicateSpectralPoint { .. }))
        ));
    }

    #[test]
    fn nearly_coincident_rows_are_singular() {
        // λ's 1e-11 apart pass validation but leave the system numerically rank deficient.
        let cfg = ScenarioConfig::kpii(
            SigmaMode::Plus,
            1,
            1,
            vec![SpectralDatum::real(0.35, 1.0, &[0.8]), SpectralDatum::real(0.35 + 1e-11, 1.0, &[0.8])],
        )
        .unwrap();
        assert!(matches!(solve_coeffs(&cfg, Point::ORIGIN), Err(DarbouxError::SingularSystem { .. })));
    }

    #[test]
    fn potentials_match_definition() {
        let cfg = one_one();
        let p = Point::new(0.1, 0.2, 0.3);
        let co = solve_coeffs(&cfg, p).unwrap();
        assert_eq!(co.p_new()[0], co.beta[0][0] * -2.0);
        assert_eq!(co.q_new()[0], co.gamma[0][0] * -2.0);
    }

    #[test]
    fn zero_potential_lax_matrices() {
        let l = c(0.3, -0.2);
        for s in [SigmaMode::Plus, SigmaMode::MinusI] {
            let lax = lax_matrices(&PotentialJet::zero(2), l, s);
            let mut u0 = CMatrix::identity(3, 3) * c(-1.0, 0.0);
            u0[(0, 0)] = c(1.0, 0.0);
            assert!(linalg::max_abs(&(&lax.u - &u0 * l)) < 1e-15);
            assert!(linalg::max_abs(&(&lax.v - &u0 * (l * l * -2.0 * s.inv()))) < 1e-15);
            assert!(linalg::max_abs(&(&lax.w - &u0 * (l * l * l * 4.0))) < 1e-15);
        }
    }

    #[test]
    fn v_is_odd_in_sigma() {
        let jet = PotentialJet {
            p: [vec![c(0.3, 0.1)], vec![c(-0.2, 0.0)], vec![c(0.5, 0.2)]],
            q: [vec![c(0.7, 0.0)], vec![c(0.1, -0.4)], vec![c(-0.3, 0.0)]],
        };
        let l = c(0.6, 0.2);
        let a = lax_matrices(&jet, l, SigmaMode::Plus);
        let b = lax_matrices(&jet, l, SigmaMode::Minus);
        assert!(linalg::max_abs(&(&a.v + &b.v)) < 1e-15);
        assert!(linalg::max_abs(&(&a.w - &b.w)) < 1e-15);
    }

    #[test]
    fn large_lambda_degree_structure() {
        let cfg = one_one();
        let co = solve_coeffs(&cfg, Point::new(0.2, 0.1, 0.0)).unwrap();
        let big = c(1e6, 0.0);
        let t = darboux_matrix_at(&co, big);
        assert!((t[(0, 0)] / big - 1.0).norm() < 1e-5);
        assert!((t[(1, 1)] / big - 1.0).norm() < 1e-5);
        assert!(t[(0, 1)].norm() < 10.0 && t[(1, 0)].norm() < 10.0);
    }

    #[test]
    fn structure_on_random_scenarios() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (m, n) in [(1, 1), (2, 1), (1, 2), (2, 2)] {
            for cfg in [random_kpii(&mut rng, SigmaMode::Plus, m, n), random_kpi(&mut rng, SigmaMode::PlusI, m, n)] {
                let set = WronskianSet::build(&cfg).unwrap();
                for p in probe_points(3, 1).into_iter().step_by(4) {
                    let co = solve_coeffs(&cfg, p).unwrap();
                    assert!(kernel_residual(&co) < 1e-10, "kernel m={m} n={n}");
                    assert!(determinant_residual(&co) < 1e-9, "det m={m} n={n}: {}", determinant_residual(&co));
                    let cr = cramer_residual(&co, &set).unwrap();
                    assert!(cr < 1e-9, "cramer m={m} n={n} {:?}: {cr}", cfg.model);
                    if cfg.model == crate::spectral::Model::Kpi {
                        assert!(reduction_residual(&co, cfg.epsilon) < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn row_order_does_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = random_kpii(&mut rng, SigmaMode::Minus, 2, 1);
        let mut rev = cfg.clone();
        rev.spectra.reverse();
        let p = Point::new(0.5, -0.4, 0.3);
        let a = solve_coeffs(&cfg, p).unwrap();
        let b = solve_coeffs(&rev, p).unwrap();
        for j in 0..2 {
            assert!(rel(a.beta[j][0], b.beta[j][0]) < 1e-12);
            assert!(rel(a.gamma[j][0], b.gamma[j][0]) < 1e-12);
        }
        assert!(rel(a.alpha[0], b.alpha[0]) < 1e-12);
    }

    fn rel(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / a.norm().max(b.norm()).max(f64::MIN_POSITIVE)
    }

    #[test]
    fn intertwining_and_adjoint_m1_n1() {
        let cfg = one_one();
        let field = PotentialField::new(&cfg).unwrap();
        let p = Point::new(0.3, -0.2, 0.1);
        let steps = [0, 1, 2].map(|a| fd_step(&cfg, a, 1e-3));
        let r = verify_intertwining(&cfg, &field, p, &lambda_samples(3), steps).unwrap();
        assert!(r.absolute.iter().all(|&v| v < 1e-6), "{r:?}");
        let a = verify_adjoint_roots(&cfg, p, steps).unwrap();
        assert!(a.absolute.iter().all(|&v| v < 1e-6), "{a:?}");
        assert!(a.proportionality < 1e-10);
        let off = adjoint_products_at(&cfg, p, steps, &[c(0.9, 0.4)]).unwrap();
        assert!(off.absolute.iter().any(|&v| v > 1e-3), "{off:?}");
        let (order, _) = intertwining_convergence_order(&cfg, &field, p, c(0.7, 0.3), 0.2).unwrap();
        assert!((3.5..=4.5).contains(&order), "order {order}");
        let datum = SpectralDatum::new(c(0.6, 0.25), c(1.0, 0.0), vec![c(0.7, 0.0)]);
        let e = verify_new_eigenfunction(&cfg, &field, &datum, p, steps).unwrap();
        assert!(e.iter().all(|&v| v < 1e-6), "{e:?}");
    }
}
