//! The verify-everything pipeline behind `wronskp verify`.

use std::fmt::Write as _;

use num_complex::Complex64;

use wronskp_core::asymptotics::classify_coefficients;
use wronskp_core::darboux::{
    DarbouxError, PotentialField, cramer_residual, determinant_residual, fd_step, kernel_residual, lambda_samples,
    probe_points, solve_coeffs, verify_adjoint_roots, verify_intertwining,
};
use wronskp_core::kpfield::{Axis, GridSpec, akns_residuals, grid_sample, summarize, u_from_tau};
use wronskp_core::wronskian::{WronskianSet, real_gauge, tau_numeric};
use wronskp_core::{ExpSum, Model, Point, Scenario, ScenarioConfig};

use crate::CliError;

pub const PROBE_SEED: u64 = 20;
pub const RANDOM_PROBES: usize = 25;

#[derive(Debug, Clone)]
pub struct CheckRow {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub note: String,
}

impl CheckRow {
    pub fn pass(&self) -> bool {
        self.value <= self.tolerance
    }
}

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub rows: Vec<CheckRow>,
    pub warnings: Vec<String>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(CheckRow::pass)
    }

    fn push(&mut self, name: &'static str, value: f64, tolerance: f64, note: impl Into<String>) {
        self.rows.push(CheckRow { name, value, tolerance, note: note.into() });
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<40} {:>12} {:>10}  status", "check", "max", "tol");
        for r in &self.rows {
            let status = if r.pass() { "PASS" } else { "FAIL" };
            let _ = write!(s, "{:<40} {:>12.3e} {:>10.1e}  {status}", r.name, r.value, r.tolerance);
            if !r.note.is_empty() {
                let _ = write!(s, "  ({})", r.note);
            }
            s.push('\n');
        }
        if !self.warnings.is_empty() {
            s.push_str("warnings:\n");
            for w in &self.warnings {
                let _ = writeln!(s, "  - {w}");
            }
        }
        let _ = writeln!(s, "result: {}", if self.passed() { "PASS" } else { "FAIL" });
        s
    }
}

/// `21 × 21` over `[−15, 15]²` at `t ∈ {−5, 0, 5}`.
pub fn default_grid() -> GridSpec {
    let ax = Axis::new(-15.0, 15.0, 21).expect("static axis");
    GridSpec::new(ax, ax, vec![-5.0, 0.0, 5.0]).expect("static grid")
}

fn max_of(v: [f64; 3]) -> f64 {
    v.into_iter().fold(0.0, f64::max)
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn condition_warnings(scenario: &Scenario, cfg: &ScenarioConfig, out: &mut Vec<String>) -> Result<(), CliError> {
    let classification = match scenario {
        Scenario::Resonant(r) => Some(r.classify().map_err(config_err)?),
        Scenario::Spectral(c) if c.model == Model::Kpii && c.m == 1 => {
            let a: Vec<f64> = c.spectra.iter().map(|d| d.a.re).collect();
            let b: Vec<f64> = c.spectra.iter().map(|d| d.b[0].re).collect();
            classify_coefficients(&a, &b).ok()
        }
        _ => None,
    };
    if let Some(c) = classification {
        for v in &c.violations {
            out.push(format!("{v}"));
        }
    }
    if cfg.model == Model::Kpi && cfg.epsilon > 0.0 {
        out.push("epsilon = +1: the reduced tau function may vanish, singular samples are skipped".into());
    }
    Ok(())
}

pub fn run_verify(scenario: &Scenario) -> Result<VerifyReport, CliError> {
    let mut rep = VerifyReport::default();

    // Validation.
    scenario.validate().map_err(config_err)?;
    let cfg = scenario.config().map_err(config_err)?;
    cfg.validate().map_err(config_err)?;
    condition_warnings(scenario, &cfg, &mut rep.warnings)?;

    let tau = scenario.tau().map_err(config_err)?;
    let set = WronskianSet::build(&cfg).map_err(config_err)?;
    let probes = probe_points(RANDOM_PROBES, PROBE_SEED);

    // Engine cross-check: symbolic against numeric determinant, and the
    // reported τ against the Wronskian τ through u.
    let mut engine: f64 = 0.0;
    let mut field_match: f64 = 0.0;
    let mut skipped = 0;
    for &p in &probes {
        let sym = set.tau.eval_scaled(p);
        let num = tau_numeric(&cfg, p).map_err(config_err)?;
        match sym.div(&num).to_complex() {
            Ok(r) if r.is_finite() => engine = engine.max((r - 1.0).norm()),
            _ => skipped += 1,
        }
        if let Scenario::Resonant(_) = scenario {
            if let (Ok(a), Ok(b)) = (u_from_tau(&tau, cfg.sigma, p, &[]), u_from_tau(&set.tau, cfg.sigma, p, &[])) {
                field_match = field_match.max((a.u - b.u).abs() / b.u.abs().max(1.0));
            }
        }
    }
    let note = if skipped > 0 { format!("{skipped} probes at zeros of tau skipped") } else { String::new() };
    rep.push("engine: symbolic vs numeric tau", engine, 1e-9, note);
    if let Scenario::Resonant(_) = scenario {
        rep.push("engine: resonant tau' vs Wronskian u", field_match, 1e-9, "");
    }

    rep.push("Wronskian identity", set.identity_residual(), 1e-10, "termwise, relative");

    // Darboux structure.
    let field = PotentialField::new(&cfg).map_err(config_err)?;
    let steps = [0, 1, 2].map(|a| fd_step(&cfg, a, 1e-3));
    let lambdas = lambda_samples(3);
    let (mut det, mut kern, mut cramer, mut adj, mut inter) = (0f64, 0f64, 0f64, 0f64, 0f64);
    let mut singular = 0;
    let mut zero_f = 0;
    for (k, &p) in probes.iter().enumerate() {
        let c = match solve_coeffs(&cfg, p) {
            Ok(c) => c,
            Err(DarbouxError::SingularSystem { .. }) => {
                singular += 1;
                continue;
            }
            Err(e) => return Err(config_err(e)),
        };
        zero_f += c.zero_f_rows.len();
        det = det.max(determinant_residual(&c));
        kern = kern.max(kernel_residual(&c));
        cramer = cramer.max(cramer_residual(&c, &set).unwrap_or(f64::INFINITY));
        if k % 5 == 0 {
            match (verify_adjoint_roots(&cfg, p, steps), verify_intertwining(&cfg, &field, p, &lambdas, steps)) {
                (Ok(a), Ok(i)) => {
                    adj = adj.max(max_of(a.absolute));
                    inter = inter.max(max_of(i.absolute));
                }
                _ => singular += 1,
            }
        }
    }
    let note = if singular > 0 { format!("{singular} singular probes skipped") } else { String::new() };
    rep.push("Darboux: det T = prod(lambda - lambda_k)", det, 1e-9, note.clone());
    rep.push("Darboux: T(lambda_k) Phi_k", kern, 1e-9, note.clone());
    rep.push("Darboux: Cramer ratios", cramer, 1e-9, note.clone());
    rep.push("Darboux: adjoint products at roots", adj, 1e-6, "finite differences");
    rep.push("Darboux: intertwining", inter, 1e-6, "finite differences");
    if zero_f > 0 {
        rep.warnings.push(format!("{zero_f} probe rows with f_k = 0 (eigenvector ratios undefined there)"));
    }

    // AKNS.
    let mut akns: f64 = 0.0;
    for &p in &probes {
        if let Ok(r) = akns_residuals(&field, cfg.sigma, p) {
            akns = akns.max(r.relative.into_iter().fold(0.0, f64::max));
        }
    }
    rep.push("AKNS residuals", akns, 1e-7, "relative");

    // KP on the default grid.
    let samples = grid_sample(&tau, cfg.sigma, &default_grid());
    let summary = summarize(&samples);
    let note = format!("{} samples, {} singular", summary.samples, summary.singular);
    rep.push("KP residual (21x21 grid)", summary.max_kp_relative, 1e-7, note);

    if cfg.model == Model::Kpi {
        let (tau_im, u_im) = realness(&cfg, &set.tau, &probes);
        rep.push("KPI: |Im tau|/|tau|", tau_im, 1e-10, if cfg.m > 1 { "after gauge" } else { "" });
        rep.push("KPI: |Im u|", u_im.max(summary.max_u_imag), 1e-9, "");
    }
    Ok(rep)
}

fn realness(cfg: &ScenarioConfig, tau: &ExpSum, probes: &[Point]) -> (f64, f64) {
    let checked = if cfg.m == 1 { tau.clone() } else { real_gauge(cfg, tau) };
    let mut tau_im: f64 = 0.0;
    let mut u_im: f64 = 0.0;
    for &p in probes {
        let v: Complex64 = checked.eval_scaled(p).mantissa;
        if v.norm() > 0.0 {
            tau_im = tau_im.max(v.im.abs() / v.norm());
        }
        if let Ok(s) = u_from_tau(tau, cfg.sigma, p, &[]) {
            u_im = u_im.max(s.u_imag.abs());
        }
    }
    (tau_im, u_im)
}
