//! Balanced homodyne detection of Gaussian light: exact second-moment
//! predictions, a seeded photocurrent simulator, and the two squeezing
//! estimators (difference variance and inter-detector covariance).
//!
//! The covariance of the two photocurrents does not contain the detectors'
//! electronic noise when that noise is uncorrelated, while the variance of
//! their difference always does. The [`experiments`] module reproduces both
//! effects over LO phase, attenuation and noise level.

pub mod error;
pub mod estimators;
pub mod experiments;
pub mod states;
pub mod trace;

pub use error::{Error, Result};
pub use estimators::{
    calibrate_snl, classify_state, covariance, covariance_two_pass, difference_variance,
    simulate_moments, squeezing_from_covariance, squeezing_from_subtraction, EstimateWithError,
    PairMoments, SnlCalibration, StateClass, StateVerdict,
};
pub use experiments::{
    run_attenuation_sweep, run_en_robustness, run_phase_scan, AttenuationSweepResult,
    EnRobustnessResult, PhaseScanResult, SnlMode,
};
pub use states::{
    ideal_squeezing_curve, predicted_covariance, predicted_difference_variance, squeezing_db,
    GaussianState, LocalOscillator, MeasurementSetting, VACUUM_VARIANCE,
};
pub use trace::{sample_trace_pair, DetectorNoiseModel, SimulationConfig, TracePair, TraceSource};
