//! Parameter sets of the six published figures.

use num_complex::Complex64;

use crate::asymptotics::ResonantParams;
use crate::kpfield::{Axis, GridSpec};
use crate::scenario::Scenario;
use crate::spectral::{KpiSpectralDatum, ScenarioConfig, SigmaMode};

pub const FIG1_KAPPA: [f64; 5] = [-0.8, -0.35, 0.25, 0.65, 1.25];

/// `b′_k = (−1)^{k+1}`: the sign pattern that keeps every `τ′` coefficient of one sign.
pub const FIG1_BPRIME: [f64; 5] = [1.0, -1.0, 1.0, -1.0, 1.0];

/// Far-field probe distance `|y|`.
pub const PROBE_Y: f64 = 30.0;

#[derive(Debug, Clone)]
pub struct Preset {
    pub number: usize,
    pub title: &'static str,
    pub scenario: Scenario,
    /// Times at which the figure grid is rendered.
    pub times: Vec<f64>,
}

impl Preset {
    /// Rendering grid: `121 × 121` over `[−30, 30]²` at the preset times.
    pub fn grid(&self) -> GridSpec {
        let ax = Axis::new(-30.0, 30.0, 121).expect("static axis");
        GridSpec::new(ax, ax, self.times.clone()).expect("static grid")
    }
}

pub fn resonant_fig1(sigma: SigmaMode) -> ResonantParams {
    ResonantParams::new(3, 2, FIG1_KAPPA.to_vec(), FIG1_BPRIME.to_vec(), sigma).expect("static preset")
}

fn kpi(data: &[(f64, f64)]) -> Scenario {
    let d: Vec<KpiSpectralDatum> = data.iter().map(|&(mu, nu)| KpiSpectralDatum::new(mu, nu, Complex64::new(1.0, 0.0))).collect();
    Scenario::Spectral(ScenarioConfig::kpi_from_mu_nu(SigmaMode::PlusI, -1.0, &d).expect("static preset"))
}

pub fn preset(number: usize) -> Option<Preset> {
    let (title, scenario, times) = match number {
        1 => ("(3,2)-resonant KPII soliton", Scenario::Resonant(resonant_fig1(SigmaMode::Plus)), vec![0.0]),
        2 => ("(2,3)-resonant KPII soliton (sigma = -1)", Scenario::Resonant(resonant_fig1(SigmaMode::Minus)), vec![0.0]),
        3 => ("KPI one-soliton", kpi(&[(1.0, 2.0)]), vec![0.0]),
        4 => ("KPI oblique two-soliton", kpi(&[(1.0, -1.6), (1.0, 2.0)]), vec![0.0]),
        5 => ("KPI parallel two-soliton", kpi(&[(1.0, 0.8), (1.5, 0.8)]), vec![-10.0, 10.0]),
        6 => ("KPI bound state at collision", kpi(&[(1.0, 0.8), (1.5, 0.8)]), vec![0.0]),
        _ => return None,
    };
    Some(Preset { number, title, scenario, times })
}

pub fn all() -> Vec<Preset> {
    (1..=6).filter_map(preset).collect()
}
