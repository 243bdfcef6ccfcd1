//! Multi-component Wronskian solutions of the KP equation built from
//! iterated Darboux transformations of coupled AKNS systems, with the
//! numerical machinery to verify them.

pub mod asymptotics;
pub mod darboux;
pub mod expsum;
pub mod kpfield;
pub mod linalg;
pub mod presets;
pub mod scenario;
pub mod spectral;
pub mod wronskian;

pub use scenario::Scenario;
pub use expsum::{ExpSum, LinearPhase, MultiIndex, Point, ScaledValue};
pub use spectral::{KpiSpectralDatum, Model, ScenarioConfig, SigmaMode, SpectralDatum};
