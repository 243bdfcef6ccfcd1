//! Multi-component Wronskians `τ`, `χ⁽¹⁾_j`, `χ⁽²⁾_i`.
//!
//! The block matrix has columns `[F, −G⁽¹⁾, …, −G⁽ᵐ⁾]` with
//! `F[k][n] = a_k λ_k^n e^{θ_k/2}` and `G⁽ʲ⁾[k][n] = b_k⁽ʲ⁾ (−λ_k)^n e^{−θ_k/2}`.
//! `τ` uses width `N` for every block; `χ⁽¹⁾_j` widens `F` to `N+1` and
//! narrows `G⁽ʲ⁾` to `N−1`; `χ⁽²⁾_i` does the opposite.
//!
//! Two engines are provided. The symbolic engine expands the determinant
//! by column blocks (generalized Laplace expansion): each block minor is a
//! Vandermonde determinant times the row prefactors, so `τ` comes out as an
//! exact [`ExpSum`]. The numeric engine evaluates entries at a point and
//! takes a row-scaled LU determinant.

use num_complex::Complex64;
use thiserror::Error;

use crate::expsum::{ExpSum, LinearPhase, MultiIndex, Point, ScaledValue, Term, phase_of, termwise_relative_difference};
use crate::linalg::{CMatrix, scaled_determinant};
use crate::spectral::{ScenarioConfig, SpectralDatum, SpectralError};

pub const DEFAULT_SYMBOLIC_CAP: usize = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WronskianError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("symbolic expansion of a {k}x{k} determinant exceeds cap {cap}")]
    SymbolicCapExceeded { k: usize, cap: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Which determinant to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Minor {
    Tau,
    /// `χ⁽¹⁾_j`, `j` in `1..=m`.
    Chi1(usize),
    /// `χ⁽²⁾_i`, `i` in `1..=m`.
    Chi2(usize),
}

impl Minor {
    pub fn widths(self, m: usize, n: usize) -> Result<Vec<usize>, WronskianError> {
        let mut w = vec![n; m + 1];
        match self {
            Minor::Tau => {}
            Minor::Chi1(j) | Minor::Chi2(j) if j == 0 || j > m => {
                return Err(WronskianError::DimensionMismatch(format!("component {j} outside 1..={m}")));
            }
            Minor::Chi1(j) => {
                w[0] += 1;
                w[j] -= 1;
            }
            Minor::Chi2(i) => {
                w[0] -= 1;
                w[i] += 1;
            }
        }
        Ok(w)
    }
}

/// The block matrix with one single-term exponential per entry.
#[derive(Debug, Clone)]
pub struct BlockMatrix {
    rows: Vec<SpectralDatum>,
    thetas: Vec<LinearPhase>,
    widths: Vec<usize>,
}

/// `τ`'s layout `[F_{K×N}, −G⁽¹⁾_{K×N}, …]`.
pub fn build_blocks(cfg: &ScenarioConfig) -> Result<BlockMatrix, WronskianError> {
    BlockMatrix::new(cfg, Minor::Tau)
}

impl BlockMatrix {
    pub fn new(cfg: &ScenarioConfig, minor: Minor) -> Result<Self, WronskianError> {
        cfg.validate()?;
        let widths = minor.widths(cfg.m, cfg.n)?;
        let rows = cfg.rows();
        let thetas = rows.iter().map(|r| phase_of(r.lambda, cfg.sigma)).collect();
        let bm = BlockMatrix { rows, thetas, widths };
        if bm.widths.iter().sum::<usize>() != bm.size() {
            return Err(WronskianError::DimensionMismatch(format!(
                "column widths {:?} do not sum to K = {}",
                bm.widths,
                bm.size()
            )));
        }
        Ok(bm)
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn theta(&self, r: usize) -> LinearPhase {
        self.thetas[r]
    }

    /// Block index and in-block column of global column `col`.
    pub fn locate(&self, mut col: usize) -> (usize, usize) {
        for (b, &w) in self.widths.iter().enumerate() {
            if col < w {
                return (b, col);
            }
            col -= w;
        }
        panic!("column out of range");
    }

    /// Prefactor, node and half-phase sign of row `r` in block `b`.
    fn row_block(&self, r: usize, b: usize) -> (Complex64, Complex64, f64) {
        let d = &self.rows[r];
        if b == 0 {
            (d.a, d.lambda, 1.0)
        } else {
            (-d.b[b - 1], -d.lambda, -1.0)
        }
    }

    pub fn entry(&self, r: usize, col: usize) -> Term {
        let (b, n) = self.locate(col);
        let (c, x, s) = self.row_block(r, b);
        Term { coeff: c * x.powu(n as u32), phase: self.thetas[r].scale(0.5 * s) }
    }

    /// Entry values at `p`.
    pub fn evaluate(&self, p: Point) -> CMatrix {
        let k = self.size();
        CMatrix::from_fn(k, k, |r, col| {
            let t = self.entry(r, col);
            t.coeff * t.phase.eval(p).exp()
        })
    }

    /// Generalized Laplace expansion into an [`ExpSum`].
    pub fn det_symbolic(&self, cap: usize) -> Result<ExpSum, WronskianError> {
        let k = self.size();
        if k > cap {
            return Err(WronskianError::SymbolicCapExceeded { k, cap });
        }
        let mut state = Dfs {
            bm: self,
            remaining: self.widths.clone(),
            assigned: vec![Vec::new(); self.widths.len()],
            out: Vec::new(),
        };
        state.go(0, Complex64::new(1.0, 0.0), LinearPhase::ZERO, 0);
        Ok(ExpSum::from_terms(state.out))
    }

    /// Row-scaled LU determinant at `p`.
    pub fn det_numeric(&self, p: Point) -> ScaledValue {
        self.det_numeric_derivative(MultiIndex::ZERO, p)
    }

    /// `∂^idx det` at `p` by distributing the derivative over rows.
    pub fn det_numeric_derivative(&self, idx: MultiIndex, p: Point) -> ScaledValue {
        let k = self.size();
        if k == 0 {
            return ScaledValue::new(Complex64::new(1.0, 0.0), 0.0);
        }
        let (base, logs) = self.evaluate_scaled(p);
        if idx.is_zero() {
            return scaled_determinant(base, &logs);
        }
        let mut total = Complex64::new(0.0, 0.0);
        for dist in distributions(idx, k) {
            let mut m = base.clone();
            let mut weight = 1.0;
            for (r, a) in dist.iter().enumerate() {
                weight /= factorial(a.ox) * factorial(a.oy) * factorial(a.ot);
                if a.is_zero() {
                    continue;
                }
                for col in 0..k {
                    let (b, _) = self.locate(col);
                    let (_, _, s) = self.row_block(r, b);
                    m[(r, col)] *= self.thetas[r].scale(0.5 * s).derivative_factor(*a);
                }
            }
            weight *= factorial(idx.ox) * factorial(idx.oy) * factorial(idx.ot);
            total += crate::linalg::determinant(&m) * weight;
        }
        ScaledValue::new(total, logs.iter().sum())
    }

    /// Entry mantissas with each row divided by its largest entry, plus the
    /// log of each row factor. Magnitudes stay in log form until the end, so
    /// no entry overflows before scaling.
    pub fn evaluate_scaled(&self, p: Point) -> (CMatrix, Vec<f64>) {
        let k = self.size();
        let mut m = CMatrix::zeros(k, k);
        let mut row_logs = Vec::with_capacity(k);
        for r in 0..k {
            let mut logs = vec![f64::NEG_INFINITY; k];
            let mut units = vec![Complex64::new(0.0, 0.0); k];
            for col in 0..k {
                let t = self.entry(r, col);
                let n = t.coeff.norm();
                if n == 0.0 {
                    continue;
                }
                let ph = t.phase.eval(p);
                logs[col] = n.ln() + ph.re;
                units[col] = t.coeff / n * Complex64::new(0.0, ph.im).exp();
            }
            let mx = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mx = if mx.is_finite() { mx } else { 0.0 };
            for col in 0..k {
                m[(r, col)] = units[col] * (logs[col] - mx).exp();
            }
            row_logs.push(mx);
        }
        (m, row_logs)
    }
}

struct Dfs<'a> {
    bm: &'a BlockMatrix,
    remaining: Vec<usize>,
    assigned: Vec<Vec<Complex64>>,
    out: Vec<Term>,
}

impl Dfs<'_> {
    fn go(&mut self, r: usize, coeff: Complex64, phase: LinearPhase, inversions: usize) {
        if r == self.bm.size() {
            let sign = if inversions % 2 == 0 { 1.0 } else { -1.0 };
            self.out.push(Term { coeff: coeff * sign, phase });
            return;
        }
        for b in 0..self.remaining.len() {
            if self.remaining[b] == 0 {
                continue;
            }
            let (c, x, s) = self.bm.row_block(r, b);
            if c == Complex64::new(0.0, 0.0) {
                continue;
            }
            let mut f = c;
            for &xs in &self.assigned[b] {
                f *= x - xs;
            }
            if f == Complex64::new(0.0, 0.0) {
                continue;
            }
            // Earlier rows already sitting in later blocks each form one inversion with r.
            let later: usize = self.assigned[b + 1..].iter().map(Vec::len).sum();
            self.remaining[b] -= 1;
            self.assigned[b].push(x);
            let ph = phase + self.bm.thetas[r].scale(0.5 * s);
            self.go(r + 1, coeff * f, ph, inversions + later);
            self.assigned[b].pop();
            self.remaining[b] += 1;
        }
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Every way to split `idx` into `k` per-row multi-indices.
fn distributions(idx: MultiIndex, k: usize) -> Vec<Vec<MultiIndex>> {
    let xs = compositions(idx.ox, k);
    let ys = compositions(idx.oy, k);
    let ts = compositions(idx.ot, k);
    let mut out = Vec::with_capacity(xs.len() * ys.len() * ts.len());
    for a in &xs {
        for b in &ys {
            for c in &ts {
                out.push((0..k).map(|r| MultiIndex::new(a[r], b[r], c[r])).collect());
            }
        }
    }
    out
}

fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

pub fn tau_symbolic(cfg: &ScenarioConfig) -> Result<ExpSum, WronskianError> {
    build_blocks(cfg)?.det_symbolic(DEFAULT_SYMBOLIC_CAP)
}

pub fn tau_numeric(cfg: &ScenarioConfig, p: Point) -> Result<ScaledValue, WronskianError> {
    Ok(build_blocks(cfg)?.det_numeric(p))
}

/// `family` is 1 or 2; `j` in `1..=m`.
pub fn chi_symbolic(cfg: &ScenarioConfig, family: u8, j: usize) -> Result<ExpSum, WronskianError> {
    BlockMatrix::new(cfg, chi_minor(family, j)?)?.det_symbolic(DEFAULT_SYMBOLIC_CAP)
}

pub fn chi_numeric(cfg: &ScenarioConfig, family: u8, j: usize, p: Point) -> Result<ScaledValue, WronskianError> {
    Ok(BlockMatrix::new(cfg, chi_minor(family, j)?)?.det_numeric(p))
}

fn chi_minor(family: u8, j: usize) -> Result<Minor, WronskianError> {
    match family {
        1 => Ok(Minor::Chi1(j)),
        2 => Ok(Minor::Chi2(j)),
        _ => Err(WronskianError::DimensionMismatch(format!("family {family} is not 1 or 2"))),
    }
}

/// The reduced `τ` with its gauge factor removed: `τ · exp(i(m−1)/2 Σ_k Im θ_k) / ω`,
/// where `ω` is the unit phase of the gauged value at the origin.
///
/// For `m = 1` the factor is a constant. For `m > 1` the reflected rows
/// carry `e^{±θ̄_k/2}` in pairs and leave a linear imaginary phase that
/// `2(ln τ)_xx` does not see.
pub fn real_gauge(cfg: &ScenarioConfig, tau: &ExpSum) -> ExpSum {
    let half = 0.5 * (cfg.m as f64 - 1.0);
    let im = |c: Complex64| Complex64::new(0.0, half * c.im);
    let gauge = cfg.spectra.iter().map(|d| phase_of(d.lambda, cfg.sigma)).fold(LinearPhase::ZERO, |acc, th| {
        acc + LinearPhase::new(im(th.cx), im(th.cy), im(th.ct), Complex64::new(0.0, 0.0))
    });
    let shifted = tau.shift_phase(gauge);
    let v = shifted.eval_scaled(Point::ORIGIN).mantissa;
    if v.norm() == 0.0 {
        return shifted;
    }
    shifted.scale(v.conj() / v.norm())
}

/// `τ`, every `χ⁽¹⁾_j` and every `χ⁽²⁾_i` of a scenario.
#[derive(Debug, Clone)]
pub struct WronskianSet {
    pub tau: ExpSum,
    pub chi1: Vec<ExpSum>,
    pub chi2: Vec<ExpSum>,
}

impl WronskianSet {
    pub fn build(cfg: &ScenarioConfig) -> Result<Self, WronskianError> {
        let tau = tau_symbolic(cfg)?;
        let mut chi1 = Vec::with_capacity(cfg.m);
        let mut chi2 = Vec::with_capacity(cfg.m);
        for j in 1..=cfg.m {
            chi1.push(chi_symbolic(cfg, 1, j)?);
            chi2.push(chi_symbolic(cfg, 2, j)?);
        }
        Ok(WronskianSet { tau, chi1, chi2 })
    }

    /// `Σ_j χ⁽¹⁾_j χ⁽²⁾_j` and `¼(ττ_xx − τ_x²)` as exact sums.
    pub fn identity_sides(&self) -> (ExpSum, ExpSum) {
        let lhs: ExpSum = self.chi1.iter().zip(&self.chi2).map(|(a, b)| a * b).sum();
        let tx = self.tau.derivative(MultiIndex::x(1));
        let txx = self.tau.derivative(MultiIndex::x(2));
        let rhs = (&(&self.tau * &txx) - &(&tx * &tx)).scale(Complex64::new(0.25, 0.0));
        (lhs, rhs)
    }

    /// Largest coefficient mismatch of the identity, relative to the largest coefficient.
    pub fn identity_residual(&self) -> f64 {
        let (l, r) = self.identity_sides();
        termwise_relative_difference(&l, &r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::SigmaMode;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn two_by_two() -> ScenarioConfig {
        ScenarioConfig::kpii(
            SigmaMode::Plus,
            1,
            1,
            vec![SpectralDatum::real(0.3, 1.2, &[0.7]), SpectralDatum::real(-0.5, 0.9, &[-1.1])],
        )
        .unwrap()
    }

    #[test]
    fn two_by_two_blocks() {
        let cfg = two_by_two();
        let bm = build_blocks(&cfg).unwrap();
        let p = Point::new(0.2, -0.4, 0.1);
        let m = bm.evaluate(p);
        let th: Vec<Complex64> = (0..2).map(|r| phase_of(cfg.spectra[r].lambda, cfg.sigma).eval(p)).collect();
        let d = &cfg.spectra;
        let expect = [
            [d[0].a * (th[0] / 2.0).exp(), -d[0].b[0] * (-th[0] / 2.0).exp()],
            [d[1].a * (th[1] / 2.0).exp(), -d[1].b[0] * (-th[1] / 2.0).exp()],
        ];
        for r in 0..2 {
            for col in 0..2 {
                assert!((m[(r, col)] - expect[r][col]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn two_by_two_tau_cofactor_oracle() {
        let cfg = two_by_two();
        let tau = tau_symbolic(&cfg).unwrap();
        let d = &cfg.spectra;
        let t1 = phase_of(d[0].lambda, cfg.sigma).scale(0.5);
        let t2 = phase_of(d[1].lambda, cfg.sigma).scale(0.5);
        // det [[a1 e1, -b1/e1], [a2 e2, -b2/e2]] = -a1 b2 e1/e2 + a2 b1 e2/e1
        let oracle = ExpSum::from_terms(vec![
            Term { coeff: -d[0].a * d[1].b[0], phase: t1 + (-t2) },
            Term { coeff: d[1].a * d[0].b[0], phase: t2 + (-t1) },
        ]);
        assert!(termwise_relative_difference(&tau, &oracle) < 1e-15);
    }

    #[test]
    fn two_by_two_chi1_is_vandermonde() {
        let cfg = two_by_two();
        let chi = chi_symbolic(&cfg, 1, 1).unwrap();
        let d = &cfg.spectra;
        let ph = phase_of(d[0].lambda, cfg.sigma).scale(0.5) + phase_of(d[1].lambda, cfg.sigma).scale(0.5);
        let oracle = ExpSum::single(d[0].a * d[1].a * (d[1].lambda - d[0].lambda), ph);
        assert!(termwise_relative_difference(&chi, &oracle) < 1e-15);
    }

    #[test]
    fn gauged_kpi_tau_is_real() {
        use crate::spectral::random_kpi;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for m in 1..4 {
            let cfg = random_kpi(&mut rng, SigmaMode::MinusI, m, 2);
            let g = real_gauge(&cfg, &tau_symbolic(&cfg).unwrap());
            for p in [Point::new(0.4, -1.3, 0.2), Point::new(-2.0, 0.5, 1.5)] {
                let v = g.eval_scaled(p).mantissa;
                assert!(v.im.abs() < 1e-12 * v.norm(), "m = {m}: {v}");
            }
        }
    }

    #[test]
    fn kpi_one_soliton_blocks_and_realness() {
        let lam = c(0.25, 0.5);
        let cfg = ScenarioConfig::kpi(SigmaMode::PlusI, -1.0, 1, 1, vec![SpectralDatum::new(lam, c(1.0, 0.0), vec![c(1.0, 0.0)])])
            .unwrap();
        let bm = build_blocks(&cfg).unwrap();
        let p = Point::new(0.3, -0.7, 0.4);
        let m = bm.evaluate(p);
        let th = phase_of(lam, cfg.sigma).eval(p);
        // Reduced row equals −[b̄ e^{−θ̄/2}, ā e^{θ̄/2}].
        assert!((m[(1, 0)] + (-th.conj() / 2.0).exp()).norm() < 1e-14);
        assert!((m[(1, 1)] + (th.conj() / 2.0).exp()).norm() < 1e-14);
        let tau = tau_symbolic(&cfg).unwrap();
        let v = tau.eval(p).unwrap();
        assert!(v.im.abs() < 1e-14 * v.norm());
        // |τ| = 2 cosh(Re θ)
        assert!((v.norm() - 2.0 * th.re.cosh()).abs() < 1e-12 * v.norm());
    }

    #[test]
    fn widths_sum_to_k_and_bad_component_rejected() {
        for m in 1..4 {
            for n in 1..3 {
                for minor in [Minor::Tau, Minor::Chi1(1), Minor::Chi2(m)] {
                    assert_eq!(minor.widths(m, n).unwrap().iter().sum::<usize>(), (m + 1) * n);
                }
            }
        }
        assert!(matches!(Minor::Chi1(3).widths(2, 1), Err(WronskianError::DimensionMismatch(_))));
        assert!(chi_symbolic(&two_by_two(), 3, 1).is_err());
    }

    #[test]
    fn identity_and_engine_agreement_on_random_scenarios() {
        use crate::spectral::{random_kpi, random_kpii};
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for (m, n) in [(1, 1), (2, 1), (1, 2), (2, 2), (3, 1)] {
            for cfg in [
                random_kpii(&mut rng, SigmaMode::Plus, m, n),
                random_kpii(&mut rng, SigmaMode::Minus, m, n),
                random_kpi(&mut rng, SigmaMode::PlusI, m, n),
            ] {
                let set = WronskianSet::build(&cfg).unwrap();
                let r = set.identity_residual();
                assert!(r < 1e-12, "m={m} n={n} {:?}: identity residual {r}", cfg.model);
                let bm = build_blocks(&cfg).unwrap();
                let p0 = Point::new(0.3, 0.1, -0.2);
                let scale = set.tau.eval(p0).unwrap() / bm.det_numeric(p0).to_complex().unwrap();
                assert!((scale.norm() - 1.0).abs() < 1e-9, "{scale}");
                for p in [Point::new(-2.0, 1.5, 0.7), Point::new(2.5, -2.0, -1.0)] {
                    let a = set.tau.eval(p).unwrap();
                    let b = bm.det_numeric(p).to_complex().unwrap() * scale;
                    assert!((a - b).norm() < 1e-9 * a.norm());
                }
            }
        }
    }

    #[test]
    fn symbolic_cap() {
        let cfg = two_by_two();
        assert_eq!(
            build_blocks(&cfg).unwrap().det_symbolic(1),
            Err(WronskianError::SymbolicCapExceeded { k: 2, cap: 1 })
        );
    }

    #[test]
    fn degenerate_numeric_example() {
        // λ₁ = −λ₂ and a = b = 1 at the origin: rows (1, −1) and (1, −1).
        let cfg = ScenarioConfig::kpii(
            SigmaMode::Plus,
            1,
            1,
            vec![SpectralDatum::real(0.4, 1.0, &[1.0]), SpectralDatum::real(-0.4, 1.0, &[1.0])],
        )
        .unwrap();
        let v = tau_numeric(&cfg, Point::ORIGIN).unwrap();
        assert_eq!(v.mantissa, c(0.0, 0.0));
    }

    #[test]
    fn numeric_derivative_matches_symbolic() {
        let cfg = ScenarioConfig::kpii(
            SigmaMode::Minus,
            1,
            2,
            vec![
                SpectralDatum::real(-0.6, 1.0, &[0.5]),
                SpectralDatum::real(-0.2, 0.8, &[-1.0]),
                SpectralDatum::real(0.3, 1.1, &[0.9]),
                SpectralDatum::real(0.7, 0.6, &[-0.4]),
            ],
        )
        .unwrap();
        let tau = tau_symbolic(&cfg).unwrap();
        let bm = build_blocks(&cfg).unwrap();
        let p = Point::new(0.4, -0.2, 0.3);
        let scale = tau.eval(p).unwrap() / bm.det_numeric(p).to_complex().unwrap();
        for idx in [MultiIndex::x(1), MultiIndex::x(3), MultiIndex::new(1, 1, 0), MultiIndex::new(0, 0, 1)] {
            let a = tau.derivative(idx).eval(p).unwrap();
            let b = bm.det_numeric_derivative(idx, p).to_complex().unwrap() * scale;
            assert!((a - b).norm() < 1e-10 * a.norm().max(1.0), "{idx}: {a} vs {b}");
        }
    }
}
