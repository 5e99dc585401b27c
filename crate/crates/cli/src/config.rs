//! JSON run configuration.
//!
//! Every key is optional and unknown keys are rejected. An empty document
//! `{}` describes the default impure squeezed state with a unit LO.

use std::path::{Path, PathBuf};

use homodyne_core::experiments::{
    log_grid, phase_grid, DEFAULT_PHASE_POINTS, DEFAULT_TRANSMISSION_MIN,
    DEFAULT_TRANSMISSION_POINTS,
};
use homodyne_core::{
    DetectorNoiseModel, GaussianState, LocalOscillator, MeasurementSetting, SimulationConfig,
    SnlMode, VACUUM_VARIANCE,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StateSpec {
    pub vx: f64,
    pub vy: f64,
    pub cxy: f64,
}

impl Default for StateSpec {
    fn default() -> Self {
        Self {
            vx: 0.171,
            vy: 0.79,
            cxy: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoSpec {
    pub amplitude: f64,
    pub v_x: f64,
}

impl Default for LoSpec {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            v_x: VACUUM_VARIANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SettingSpec {
    pub phase: f64,
    pub transmission: f64,
}

impl Default for SettingSpec {
    fn default() -> Self {
        Self {
            phase: 0.0,
            transmission: 1.0,
        }
    }
}

/// Standard deviations of the detector electronic noise. The default puts
/// the total noise variance at 2% of the unit-LO shot-noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            sigma1: 0.1,
            sigma2: 0.1,
            rho: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    PhaseScan,
    AttenSweep,
    EnRobustness,
    CalibrateSnl,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::PhaseScan => "phase-scan",
            ExperimentKind::AttenSweep => "atten-sweep",
            ExperimentKind::EnRobustness => "en-robustness",
            ExperimentKind::CalibrateSnl => "calibrate-snl",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnlModeSpec {
    #[default]
    Analytic,
    Calibrated,
}

impl From<SnlModeSpec> for SnlMode {
    fn from(m: SnlModeSpec) -> Self {
        match m {
            SnlModeSpec::Analytic => SnlMode::Analytic,
            SnlModeSpec::Calibrated => SnlMode::Calibrated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub state: StateSpec,
    pub lo: LoSpec,
    pub setting: SettingSpec,
    pub noise: NoiseSpec,
    pub n_samples: usize,
    pub seed: u64,
    pub ac_coupled: bool,

    /// When present, must match the subcommand it is run with.
    pub experiment: Option<ExperimentKind>,
    pub output: Option<PathBuf>,

    pub phases: Option<Vec<f64>>,
    pub phase_points: usize,

    pub transmissions: Option<Vec<f64>>,
    pub transmission_points: usize,
    pub transmission_min: f64,
    pub snl_mode: SnlModeSpec,

    pub en_scales: Vec<f64>,
    pub en_rho: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            state: StateSpec::default(),
            lo: LoSpec::default(),
            setting: SettingSpec::default(),
            noise: NoiseSpec::default(),
            n_samples: 1_000_000,
            seed: 0,
            ac_coupled: true,
            experiment: None,
            output: None,
            phases: None,
            phase_points: DEFAULT_PHASE_POINTS,
            transmissions: None,
            transmission_points: DEFAULT_TRANSMISSION_POINTS,
            transmission_min: DEFAULT_TRANSMISSION_MIN,
            snl_mode: SnlModeSpec::Analytic,
            en_scales: vec![0.0, 1.0, 10.0],
            en_rho: 0.0,
        }
    }
}

fn field<T>(section: &str, r: homodyne_core::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Config(format!("{section}: {e}")))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Validates every section and builds the simulation config.
    pub fn simulation(&self) -> Result<SimulationConfig, CliError> {
        let state = field(
            "state",
            GaussianState::new(self.state.vx, self.state.vy, self.state.cxy),
        )?;
        let lo = field("lo", LocalOscillator::new(self.lo.amplitude, self.lo.v_x))?;
        let setting = field(
            "setting",
            MeasurementSetting::new(self.setting.phase, self.setting.transmission),
        )?;
        let noise = field(
            "noise",
            DetectorNoiseModel::new(self.noise.sigma1, self.noise.sigma2, self.noise.rho),
        )?;
        let config = SimulationConfig {
            state,
            lo,
            setting,
            noise,
            n_samples: self.n_samples,
            seed: self.seed,
            ac_coupled: self.ac_coupled,
        };
        field("n_samples", config.validate())?;
        Ok(config)
    }

    pub fn phase_grid(&self) -> Result<Vec<f64>, CliError> {
        match &self.phases {
            Some(p) => Ok(p.clone()),
            None if self.phase_points == 0 => {
                Err(CliError::Config("phase_points: must be >= 1".into()))
            }
            None => Ok(phase_grid(self.phase_points)),
        }
    }

    pub fn transmission_grid(&self) -> Result<Vec<f64>, CliError> {
        match &self.transmissions {
            Some(t) => Ok(t.clone()),
            None => {
                if self.transmission_points == 0 {
                    return Err(CliError::Config("transmission_points: must be >= 1".into()));
                }
                if !(self.transmission_min > 0.0 && self.transmission_min <= 1.0) {
                    return Err(CliError::Config(format!(
                        "transmission_min: {} must lie in (0, 1]",
                        self.transmission_min
                    )));
                }
                Ok(log_grid(
                    self.transmission_min,
                    1.0,
                    self.transmission_points,
                ))
            }
        }
    }

    pub fn check_experiment(&self, kind: ExperimentKind) -> Result<(), CliError> {
        match self.experiment {
            Some(k) if k != kind => Err(CliError::Config(format!(
                "experiment: config is for `{}` but was run with `{}`",
                k.name(),
                kind.name()
            ))),
            _ => Ok(()),
        }
    }
}
