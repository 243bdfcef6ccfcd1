//! A scenario is either a spectral configuration or resonant `(L, M)` data.

use thiserror::Error;

use crate::asymptotics::{AsymptoticSoliton, AsymptoticsError, ResonantParams, predict_kpi_asymptotics, predict_kpii_asymptotics};
use crate::expsum::ExpSum;
use crate::spectral::{Model, ScenarioConfig, SigmaMode, SpectralError};
use crate::wronskian::{WronskianError, tau_symbolic};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Wronskian(#[from] WronskianError),
    #[error(transparent)]
    Asymptotics(#[from] AsymptoticsError),
    #[error("asymptotic predictions need resonant data (KPII) or a single-component KPI scenario")]
    NoPrediction,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    Spectral(ScenarioConfig),
    Resonant(ResonantParams),
}

impl Scenario {
    pub fn sigma(&self) -> SigmaMode {
        match self {
            Scenario::Spectral(c) => c.sigma,
            Scenario::Resonant(r) => r.sigma,
        }
    }

    pub fn model(&self) -> Model {
        self.sigma().model()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        match self {
            Scenario::Spectral(c) => c.validate()?,
            Scenario::Resonant(r) => r.validate()?,
        }
        Ok(())
    }

    /// The spectral configuration behind the scenario; resonant data are realized with `m = 1`.
    pub fn config(&self) -> Result<ScenarioConfig, ScenarioError> {
        match self {
            Scenario::Spectral(c) => Ok(c.clone()),
            Scenario::Resonant(r) => Ok(r.realize()?),
        }
    }

    /// The `τ` whose field is reported: the resonant `τ′` directly, otherwise the Wronskian determinant.
    pub fn tau(&self) -> Result<ExpSum, ScenarioError> {
        match self {
            Scenario::Spectral(c) => Ok(tau_symbolic(c)?),
            Scenario::Resonant(r) => Ok(r.tau()),
        }
    }

    pub fn predict(&self, tau: &ExpSum) -> Result<Vec<AsymptoticSoliton>, ScenarioError> {
        match self {
            Scenario::Resonant(r) => Ok(predict_kpii_asymptotics(r)),
            Scenario::Spectral(c) if c.model == Model::Kpi && c.m == 1 => Ok(predict_kpi_asymptotics(c, tau)?),
            Scenario::Spectral(_) => Err(ScenarioError::NoPrediction),
        }
    }
}
