//! Scenario JSON files.
//!
//! ```json
//! { "model": "KPI", "sigma": "i", "epsilon": -1, "m": 1, "N": 1,
//!   "kpi_spectra": [ { "mu": 1.0, "nu": 2.0, "b": [1.0, 0.0] } ] }
//! ```
//!
//! Exactly one of `spectra`, `kpi_spectra` and `resonant` must be present.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use wronskp_core::asymptotics::ResonantParams;
use wronskp_core::presets;
use wronskp_core::{KpiSpectralDatum, Model, Scenario, ScenarioConfig, SigmaMode, SpectralDatum};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaField {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralEntry {
    pub lambda: [f64; 2],
    pub a: [f64; 2],
    pub b: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KpiEntry {
    pub mu: f64,
    pub nu: f64,
    pub b: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonantEntry {
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub kappa: Vec<f64>,
    pub bprime: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub model: String,
    pub sigma: SigmaField,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectra: Option<Vec<SpectralEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kpi_spectra: Option<Vec<KpiEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resonant: Option<ResonantEntry>,
}

fn c(v: [f64; 2]) -> Complex64 {
    Complex64::new(v[0], v[1])
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| config_err(format!("scenario JSON: {e}")))
    }

    fn model(&self) -> Result<Model, CliError> {
        match self.model.to_ascii_uppercase().as_str() {
            "KPII" => Ok(Model::Kpii),
            "KPI" => Ok(Model::Kpi),
            other => Err(config_err(format!("model must be \"KPII\" or \"KPI\", got {other:?}"))),
        }
    }

    fn sigma(&self) -> Result<SigmaMode, CliError> {
        let s = match &self.sigma {
            SigmaField::Number(v) if *v == 1.0 => SigmaMode::Plus,
            SigmaField::Number(v) if *v == -1.0 => SigmaMode::Minus,
            SigmaField::Text(t) if t == "i" || t == "+i" => SigmaMode::PlusI,
            SigmaField::Text(t) if t == "-i" => SigmaMode::MinusI,
            other => return Err(config_err(format!("sigma must be 1, -1, \"i\" or \"-i\", got {other:?}"))),
        };
        Ok(s)
    }

    pub fn to_scenario(&self) -> Result<Scenario, CliError> {
        let model = self.model()?;
        let sigma = self.sigma()?;
        if sigma.model() != model {
            return Err(config_err(match model {
                Model::Kpii => "KPII requires sigma = 1 or -1",
                Model::Kpi => "KPI requires sigma = \"i\" or \"-i\"",
            }));
        }
        let present = [self.spectra.is_some(), self.kpi_spectra.is_some(), self.resonant.is_some()];
        if present.iter().filter(|p| **p).count() != 1 {
            return Err(config_err("exactly one of spectra, kpi_spectra, resonant must be present"));
        }
        if model == Model::Kpii && self.epsilon.is_some() {
            return Err(config_err("epsilon applies to KPI only"));
        }
        let check_dim = |name: &str, given: Option<usize>, actual: usize| match given {
            Some(g) if g != actual => Err(config_err(format!("{name} = {g} does not match the data ({actual})"))),
            _ => Ok(()),
        };
        let scenario = if let Some(entries) = &self.spectra {
            let m = self.m.ok_or_else(|| config_err("m is required with spectra"))?;
            let n = self.n.ok_or_else(|| config_err("N is required with spectra"))?;
            let spectra = entries.iter().map(|e| SpectralDatum::new(c(e.lambda), c(e.a), e.b.iter().map(|&b| c(b)).collect())).collect();
            let cfg = match model {
                Model::Kpii => ScenarioConfig::kpii(sigma, m, n, spectra),
                Model::Kpi => ScenarioConfig::kpi(sigma, self.epsilon.ok_or_else(|| config_err("KPI needs epsilon"))?, m, n, spectra),
            }
            .map_err(|e| config_err(e.to_string()))?;
            Scenario::Spectral(cfg)
        } else if let Some(entries) = &self.kpi_spectra {
            if model != Model::Kpi {
                return Err(config_err("kpi_spectra requires model KPI"));
            }
            check_dim("m", self.m, 1)?;
            check_dim("N", self.n, entries.len())?;
            let eps = self.epsilon.ok_or_else(|| config_err("KPI needs epsilon"))?;
            let data: Vec<KpiSpectralDatum> = entries.iter().map(|e| KpiSpectralDatum::new(e.mu, e.nu, c(e.b))).collect();
            Scenario::Spectral(ScenarioConfig::kpi_from_mu_nu(sigma, eps, &data).map_err(|e| config_err(e.to_string()))?)
        } else {
            let r = self.resonant.as_ref().expect("checked above");
            if model != Model::Kpii {
                return Err(config_err("resonant data require model KPII"));
            }
            check_dim("m", self.m, 1)?;
            check_dim("N", self.n, r.l.max(r.m))?;
            let p = ResonantParams::new(r.l, r.m, r.kappa.clone(), r.bprime.clone(), sigma).map_err(|e| config_err(e.to_string()))?;
            Scenario::Resonant(p)
        };
        Ok(scenario)
    }

    /// The file form of a scenario (KPI single-component data use `kpi_spectra`).
    pub fn from_scenario(s: &Scenario) -> Self {
        let sigma = match s.sigma() {
            SigmaMode::Plus => SigmaField::Number(1.0),
            SigmaMode::Minus => SigmaField::Number(-1.0),
            SigmaMode::PlusI => SigmaField::Text("i".into()),
            SigmaMode::MinusI => SigmaField::Text("-i".into()),
        };
        let pair = |z: Complex64| [z.re, z.im];
        match s {
            Scenario::Resonant(r) => ScenarioFile {
                model: "KPII".into(),
                sigma,
                epsilon: None,
                m: Some(1),
                n: Some(r.l.max(r.m)),
                spectra: None,
                kpi_spectra: None,
                resonant: Some(ResonantEntry { l: r.l, m: r.m, kappa: r.kappa.clone(), bprime: r.bprime.clone() }),
            },
            Scenario::Spectral(cfg) => {
                let model = if cfg.model == Model::Kpi { "KPI" } else { "KPII" }.to_string();
                let kpi_form = cfg.model == Model::Kpi && cfg.m == 1 && cfg.spectra.iter().all(|d| d.a == Complex64::new(1.0, 0.0));
                let (spectra, kpi_spectra) = if kpi_form {
                    let s = cfg.sigma.sign();
                    let k = cfg
                        .spectra
                        .iter()
                        .map(|d| KpiEntry { mu: 4.0 * d.lambda.re, nu: 4.0 * d.lambda.im * s, b: pair(d.b[0]) })
                        .collect();
                    (None, Some(k))
                } else {
                    let e = cfg
                        .spectra
                        .iter()
                        .map(|d| SpectralEntry { lambda: pair(d.lambda), a: pair(d.a), b: d.b.iter().map(|&b| pair(b)).collect() })
                        .collect();
                    (Some(e), None)
                };
                ScenarioFile {
                    model,
                    sigma,
                    epsilon: (cfg.model == Model::Kpi).then_some(cfg.epsilon),
                    m: Some(cfg.m),
                    n: Some(cfg.n),
                    spectra,
                    kpi_spectra,
                    resonant: None,
                }
            }
        }
    }
}

/// Load a scenario from a JSON path, or `preset:N` for a figure preset.
pub fn load_scenario(spec: &str) -> Result<Scenario, CliError> {
    if let Some(n) = spec.strip_prefix("preset:") {
        let n: usize = n.parse().map_err(|_| config_err(format!("bad preset number {n:?}")))?;
        return presets::preset(n).map(|p| p.scenario).ok_or_else(|| config_err(format!("no preset {n}; presets are 1..6")));
    }
    let text = std::fs::read_to_string(Path::new(spec)).map_err(|e| config_err(format!("cannot read {spec}: {e}")))?;
    ScenarioFile::parse(&text)?.to_scenario()
}
