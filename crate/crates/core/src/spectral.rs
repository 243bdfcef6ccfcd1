//! Spectral data and scenario configuration.

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

/// Duplicate-spectral-point tolerance.
pub const DUPLICATE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Model {
    Kpii,
    Kpi,
}

/// `σ ∈ {+1, −1}` for KPII and `σ ∈ {+i, −i}` for KPI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SigmaMode {
    Plus,
    Minus,
    PlusI,
    MinusI,
}

impl SigmaMode {
    pub fn value(self) -> Complex64 {
        match self {
            SigmaMode::Plus => Complex64::new(1.0, 0.0),
            SigmaMode::Minus => Complex64::new(-1.0, 0.0),
            SigmaMode::PlusI => Complex64::new(0.0, 1.0),
            SigmaMode::MinusI => Complex64::new(0.0, -1.0),
        }
    }

    pub fn inv(self) -> Complex64 {
        1.0 / self.value()
    }

    /// `σ²`: `+1` for KPII, `−1` for KPI.
    pub fn sigma_sq(self) -> f64 {
        if self.is_real() {
            1.0
        } else {
            -1.0
        }
    }

    pub fn is_real(self) -> bool {
        matches!(self, SigmaMode::Plus | SigmaMode::Minus)
    }

    /// The real sign of `σ` (KPII) or of `σ/i` (KPI).
    pub fn sign(self) -> f64 {
        match self {
            SigmaMode::Plus | SigmaMode::PlusI => 1.0,
            SigmaMode::Minus | SigmaMode::MinusI => -1.0,
        }
    }

    pub fn model(self) -> Model {
        if self.is_real() {
            Model::Kpii
        } else {
            Model::Kpi
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("duplicate spectral point: λ_{i} and λ_{j} coincide (λ_k ≠ λ_l required)")]
    DuplicateSpectralPoint { i: usize, j: usize },
    #[error("KPI spectral points λ_{i} and λ_{j} satisfy λ_k = −conj(λ_l); reduced rows would coincide")]
    ReflectedSpectralPoint { i: usize, j: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("KPII parameters must be real: {0}")]
    NonRealParameter(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// `(λ_k, a_k, b_k^{(1..m)})`: the eigenfunction `(a e^{θ/2}, b e^{−θ/2})`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDatum {
    pub lambda: Complex64,
    pub a: Complex64,
    pub b: Vec<Complex64>,
}

impl SpectralDatum {
    pub fn new(lambda: Complex64, a: Complex64, b: Vec<Complex64>) -> Self {
        SpectralDatum { lambda, a, b }
    }

    pub fn real(lambda: f64, a: f64, b: &[f64]) -> Self {
        SpectralDatum::new(lambda.into(), a.into(), b.iter().map(|&v| v.into()).collect())
    }
}

/// KPI data `λ = ¼(μ + σν)`, with `a = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KpiSpectralDatum {
    pub mu: f64,
    pub nu: f64,
    pub b: Complex64,
}

impl KpiSpectralDatum {
    pub fn new(mu: f64, nu: f64, b: Complex64) -> Self {
        KpiSpectralDatum { mu, nu, b }
    }

    pub fn lambda(&self, sigma: SigmaMode) -> Complex64 {
        (Complex64::new(self.mu, 0.0) + sigma.value() * self.nu) * 0.25
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub model: Model,
    pub sigma: SigmaMode,
    pub epsilon: f64,
    pub m: usize,
    pub n: usize,
    /// `K` rows for KPII, `N` rows for KPI (the reduced rows are derived).
    pub spectra: Vec<SpectralDatum>,
}

impl ScenarioConfig {
    pub fn kpii(sigma: SigmaMode, m: usize, n: usize, spectra: Vec<SpectralDatum>) -> Result<Self, SpectralError> {
        let cfg = ScenarioConfig { model: Model::Kpii, sigma, epsilon: 1.0, m, n, spectra };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn kpi(
        sigma: SigmaMode,
        epsilon: f64,
        m: usize,
        n: usize,
        spectra: Vec<SpectralDatum>,
    ) -> Result<Self, SpectralError> {
        let cfg = ScenarioConfig { model: Model::Kpi, sigma, epsilon, m, n, spectra };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Single-component KPI data with `a_k = 1`.
    pub fn kpi_from_mu_nu(sigma: SigmaMode, epsilon: f64, data: &[KpiSpectralDatum]) -> Result<Self, SpectralError> {
        let spectra = data
            .iter()
            .map(|d| SpectralDatum::new(d.lambda(sigma), Complex64::new(1.0, 0.0), vec![d.b]))
            .collect();
        ScenarioConfig::kpi(sigma, epsilon, 1, data.len(), spectra)
    }

    /// `K = (m+1)N`.
    pub fn k(&self) -> usize {
        (self.m + 1) * self.n
    }

    pub fn validate(&self) -> Result<(), SpectralError> {
        if self.m == 0 || self.n == 0 {
            return Err(SpectralError::DimensionMismatch("m and N must be positive".into()));
        }
        if self.sigma.model() != self.model {
            return Err(SpectralError::InvalidParameter(match self.model {
                Model::Kpii => "KPII requires sigma = ±1".into(),
                Model::Kpi => "KPI requires sigma = ±i".into(),
            }));
        }
        let expected = match self.model {
            Model::Kpii => self.k(),
            Model::Kpi => self.n,
        };
        if self.spectra.len() != expected {
            return Err(SpectralError::DimensionMismatch(format!(
                "expected {expected} spectral data, got {}",
                self.spectra.len()
            )));
        }
        for (k, d) in self.spectra.iter().enumerate() {
            if d.b.len() != self.m {
                return Err(SpectralError::DimensionMismatch(format!(
                    "datum {} has {} b-coefficients, expected m = {}",
                    k + 1,
                    d.b.len(),
                    self.m
                )));
            }
            let finite = d.lambda.is_finite() && d.a.is_finite() && d.b.iter().all(|b| b.is_finite());
            if !finite {
                return Err(SpectralError::InvalidParameter(format!("datum {} is not finite", k + 1)));
            }
            if self.model == Model::Kpii && (d.lambda.im != 0.0 || d.a.im != 0.0 || d.b.iter().any(|b| b.im != 0.0)) {
                return Err(SpectralError::NonRealParameter(format!("datum {}", k + 1)));
            }
        }
        for i in 0..self.spectra.len() {
            for j in i + 1..self.spectra.len() {
                if (self.spectra[i].lambda - self.spectra[j].lambda).norm() < DUPLICATE_TOL {
                    return Err(SpectralError::DuplicateSpectralPoint { i: i + 1, j: j + 1 });
                }
            }
        }
        if self.model == Model::Kpi {
            if self.epsilon != 1.0 && self.epsilon != -1.0 {
                return Err(SpectralError::InvalidParameter("epsilon must be ±1".into()));
            }
            for i in 0..self.n {
                for j in 0..self.n {
                    if (self.spectra[i].lambda + self.spectra[j].lambda.conj()).norm() < DUPLICATE_TOL {
                        return Err(SpectralError::ReflectedSpectralPoint { i: i + 1, j: j + 1 });
                    }
                }
            }
        }
        Ok(())
    }

    /// The `K` rows of the block matrix.
    ///
    /// For KPI each datum `(λ, a, b)` is followed by `m` reflected rows
    /// `(−λ̄, ε b̄^{(j)}, ā e_j)`, so the reduction is carried by the data
    /// and every downstream engine treats both models alike.
    pub fn rows(&self) -> Vec<SpectralDatum> {
        match self.model {
            Model::Kpii => self.spectra.clone(),
            Model::Kpi => {
                let mut out = Vec::with_capacity(self.k());
                for d in &self.spectra {
                    out.push(d.clone());
                    for j in 0..self.m {
                        let mut b = vec![Complex64::new(0.0, 0.0); self.m];
                        b[j] = d.a.conj();
                        out.push(SpectralDatum::new(-d.lambda.conj(), d.b[j].conj() * self.epsilon, b));
                    }
                }
                out
            }
        }
    }

    pub fn lambdas(&self) -> Vec<Complex64> {
        self.rows().iter().map(|r| r.lambda).collect()
    }
}

/// Random KPII scenario with well-separated real `λ` in `[−1, 1]` and
/// coefficients of magnitude in `[0.5, 1.5]` with random signs.
pub fn random_kpii<R: Rng>(rng: &mut R, sigma: SigmaMode, m: usize, n: usize) -> ScenarioConfig {
    let k = (m + 1) * n;
    let lambdas = separated_points(rng, k);
    let spectra = lambdas
        .into_iter()
        .map(|l| {
            let b: Vec<f64> = (0..m).map(|_| signed_magnitude(rng)).collect();
            SpectralDatum::real(l, signed_magnitude(rng), &b)
        })
        .collect();
    ScenarioConfig::kpii(sigma, m, n, spectra).expect("random KPII scenario is valid")
}

/// Random KPI scenario with `ε = −1`, `a = 1` and `Re λ` bounded away from 0.
pub fn random_kpi<R: Rng>(rng: &mut R, sigma: SigmaMode, m: usize, n: usize) -> ScenarioConfig {
    let nus = separated_points(rng, n);
    let spectra = nus
        .into_iter()
        .map(|nu| {
            let mu = rng.gen_range(0.6..1.4) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let lambda = (Complex64::new(mu, 0.0) + sigma.value() * nu) * 0.25;
            let b = (0..m).map(|_| Complex64::from_polar(rng.gen_range(0.5..1.5), rng.gen_range(-0.3..0.3))).collect();
            SpectralDatum::new(lambda, Complex64::new(1.0, 0.0), b)
        })
        .collect();
    ScenarioConfig::kpi(sigma, -1.0, m, n, spectra).expect("random KPI scenario is valid")
}

fn signed_magnitude<R: Rng>(rng: &mut R) -> f64 {
    rng.gen_range(0.5..1.5) * if rng.gen::<bool>() { 1.0 } else { -1.0 }
}

/// `k` sorted points in `[−1, 1]`, pairwise at least `0.6/k` apart.
fn separated_points<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let gap = 0.6 / k as f64;
    loop {
        let mut v: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        v.sort_by(f64::total_cmp);
        if v.windows(2).all(|w| w[1] - w[0] >= gap) {
            return v;
        }
    }
}
