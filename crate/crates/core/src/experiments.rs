//! Scripted measurement series: LO phase scan, attenuation sweep and an
//! electronic-noise robustness sweep.
//!
//! Every grid point runs on its own seed, `derive_seed(base, experiment, row)`,
//! so rows are independent and the whole table is reproducible. Rows are
//! computed in parallel and returned in grid order. A failure in one row is
//! recorded in that row and does not abort the series.

use std::f64::consts::TAU;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{
    calibrate_snl, covariance_to_normalized_variance, db_std_error, simulate_moments,
    EstimateWithError, SnlCalibration,
};
use crate::states::{
    ideal_squeezing_curve, model_covariance, model_difference_variance, predicted_covariance,
    GaussianState, VACUUM_VARIANCE,
};
use crate::trace::{DetectorNoiseModel, SimulationConfig};

/// Agreement band, in standard errors, used by every row check.
pub const AGREEMENT_SIGMAS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum ExperimentId {
    PhaseScan = 1,
    AttenuationSweep = 2,
    EnRobustness = 3,
    SnlLadder = 4,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed for row `row` of experiment `experiment` under `base`.
pub fn derive_seed(base: u64, experiment: ExperimentId, row: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ experiment as u64) ^ row as u64)
}

/// `points` phases `2πk/points`, k = 0..points.
pub fn phase_grid(points: usize) -> Vec<f64> {
    (0..points)
        .map(|k| TAU * k as f64 / points as f64)
        .collect()
}

/// `points` values log-spaced over `[lo, hi]`, endpoints included.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![hi],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..points)
                .map(|k| {
                    if k + 1 == points {
                        hi
                    } else {
                        (a + (b - a) * k as f64 / (points - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

pub const DEFAULT_PHASE_POINTS: usize = 64;
pub const DEFAULT_TRANSMISSION_POINTS: usize = 20;
pub const DEFAULT_TRANSMISSION_MIN: f64 = 0.02;

/// LO power multiples (of the nominal power) used for the shot-noise ladder.
pub const DEFAULT_LADDER_FACTORS: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

fn check_increasing(values: &[f64], name: &str, range_ok: impl Fn(f64) -> bool) -> Result<()> {
    if values.is_empty() {
        return Err(Error::InvalidConfig(format!("{name}: grid is empty")));
    }
    if let Some(v) = values.iter().find(|&&v| !range_ok(v)) {
        return Err(Error::InvalidConfig(format!("{name}: {v} is out of range")));
    }
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig(format!(
            "{name}: grid must be strictly increasing"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseScanRow {
    pub phase: f64,
    pub seed: u64,
    /// Covariance predicted for uncorrelated electronic noise.
    pub cov_analytic: f64,
    /// `cov_analytic` plus the background `ρσ₁σ₂`; what the estimate should match.
    pub cov_expected: f64,
    pub cov_mc: Result<EstimateWithError>,
}

impl PhaseScanRow {
    pub fn deviation(&self) -> Option<f64> {
        self.cov_mc
            .as_ref()
            .ok()
            .map(|e| (e.value - self.cov_expected).abs())
    }

    pub fn passed(&self) -> bool {
        matches!(&self.cov_mc, Ok(e) if e.within(self.cov_expected, AGREEMENT_SIGMAS))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseScanResult {
    pub rows: Vec<PhaseScanRow>,
}

impl PhaseScanResult {
    pub fn passed(&self) -> usize {
        self.rows.iter().filter(|r| r.passed()).count()
    }

    pub fn failed(&self) -> usize {
        self.rows.len() - self.passed()
    }

    /// Row with the largest analytic covariance (most squeezed quadrature).
    /// The covariance is π-periodic, so ties within rounding go to the
    /// smaller phase.
    pub fn analytic_max(&self) -> Option<&PhaseScanRow> {
        self.extreme(1.0)
    }

    pub fn analytic_min(&self) -> Option<&PhaseScanRow> {
        self.extreme(-1.0)
    }

    fn extreme(&self, sign: f64) -> Option<&PhaseScanRow> {
        let mut best: Option<(f64, &PhaseScanRow)> = None;
        for row in &self.rows {
            let v = sign * row.cov_analytic;
            match best {
                Some((b, _)) if v <= b + 1e-12 * b.abs() => {}
                _ => best = Some((v, row)),
            }
        }
        best.map(|(_, row)| row)
    }
}

/// Covariance against LO phase. Positive rows see the squeezed quadrature,
/// negative rows the anti-squeezed one.
pub fn run_phase_scan(base: &SimulationConfig, phases: &[f64]) -> Result<PhaseScanResult> {
    base.validate()?;
    check_increasing(phases, "phases", |p| (0.0..TAU).contains(&p))?;
    let rows = phases
        .par_iter()
        .enumerate()
        .map(|(row, &phase)| phase_scan_row(base, row, phase))
        .collect::<Result<Vec<_>>>()?;
    Ok(PhaseScanResult { rows })
}

fn phase_scan_row(base: &SimulationConfig, row: usize, phase: f64) -> Result<PhaseScanRow> {
    let seed = derive_seed(base.seed, ExperimentId::PhaseScan, row);
    let config = SimulationConfig {
        setting: base.setting.with_phase(phase)?,
        seed,
        ..base.clone()
    };
    let (state, lo) = config.detected()?;
    let cov_analytic = predicted_covariance(&state, &lo, &config.setting);
    let cov_expected = model_covariance(&state, &lo, &config.setting, &config.noise);
    let cov_mc = simulate_moments(&config).and_then(|m| m.covariance());
    Ok(PhaseScanRow {
        phase,
        seed,
        cov_analytic,
        cov_expected,
        cov_mc,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SnlMode {
    /// `4·α²·¼` at the attenuated LO power.
    #[default]
    Analytic,
    /// Extrapolated from a Monte Carlo shot-noise ladder.
    Calibrated,
}

/// Monte Carlo estimates for one transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct AttenuationMeasurement {
    pub difference_variance: EstimateWithError,
    pub covariance: EstimateWithError,
    pub sq_subtraction_db: f64,
    pub sq_subtraction_se_db: f64,
    /// `Err(OutOfRange)` when the covariance implies a nonpositive variance.
    pub sq_covariance_db: Result<f64>,
    pub sq_covariance_se_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttenuationRow {
    pub transmission: f64,
    pub seed: u64,
    /// Electronic-noise-free shot-noise variance used for normalization.
    pub snl: f64,
    /// Noise-free detector expectation.
    pub sq_ideal_db: f64,
    /// Exact expectation of the subtraction method including electronic noise.
    pub sq_subtraction_expected_db: f64,
    /// Exact expectation of the covariance method (NaN if out of range).
    pub sq_covariance_expected_db: f64,
    pub measurement: Result<AttenuationMeasurement>,
}

impl AttenuationRow {
    pub fn sq_subtraction_db(&self) -> Option<f64> {
        self.measurement.as_ref().ok().map(|m| m.sq_subtraction_db)
    }

    pub fn sq_covariance_db(&self) -> Option<f64> {
        self.measurement
            .as_ref()
            .ok()
            .and_then(|m| m.sq_covariance_db.as_ref().ok().copied())
    }

    /// Both methods agree with their exact expectations within the band.
    pub fn passed(&self) -> bool {
        let Ok(m) = &self.measurement else {
            return false;
        };
        let sub_ok = (m.sq_subtraction_db - self.sq_subtraction_expected_db).abs()
            <= AGREEMENT_SIGMAS * m.sq_subtraction_se_db;
        let cov_ok = match &m.sq_covariance_db {
            Ok(db) => {
                (db - self.sq_covariance_expected_db).abs()
                    <= AGREEMENT_SIGMAS * m.sq_covariance_se_db
            }
            Err(_) => false,
        };
        sub_ok && cov_ok
    }

    /// Covariance method within the band of the noise-free curve.
    pub fn covariance_tracks_ideal(&self) -> bool {
        match &self.measurement {
            Ok(m) => matches!(&m.sq_covariance_db,
                Ok(db) if (db - self.sq_ideal_db).abs() <= AGREEMENT_SIGMAS * m.sq_covariance_se_db),
            Err(_) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttenuationSweepResult {
    pub rows: Vec<AttenuationRow>,
    pub calibration: Option<SnlCalibration>,
}

impl AttenuationSweepResult {
    pub fn passed(&self) -> usize {
        self.rows.iter().filter(|r| r.passed()).count()
    }

    pub fn failed(&self) -> usize {
        self.rows.len() - self.passed()
    }

    /// Transmission at which the subtraction method crosses 0 dB, by linear
    /// interpolation between the bracketing rows. Searches from the highest
    /// transmission down.
    pub fn subtraction_zero_crossing(&self) -> Option<f64> {
        let points: Vec<(f64, Option<f64>)> = self
            .rows
            .iter()
            .map(|r| (r.transmission, r.sq_subtraction_db()))
            .collect();
        zero_crossing(&points)
    }

    pub fn covariance_zero_crossing(&self) -> Option<f64> {
        let points: Vec<(f64, Option<f64>)> = self
            .rows
            .iter()
            .map(|r| (r.transmission, r.sq_covariance_db()))
            .collect();
        zero_crossing(&points)
    }
}

fn zero_crossing(points: &[(f64, Option<f64>)]) -> Option<f64> {
    points.windows(2).rev().find_map(|w| {
        let ((t0, y0), (t1, y1)) = (w[0], w[1]);
        let (y0, y1) = (y0?, y1?);
        if (y0 >= 0.0) != (y1 >= 0.0) {
            Some(t0 + (t1 - t0) * y0 / (y0 - y1))
        } else {
            None
        }
    })
}

/// Fits the shot-noise ladder for `base`: vacuum input at
/// [`DEFAULT_LADDER_FACTORS`] times the nominal LO power, same detectors.
pub fn calibrate_from_ladder(base: &SimulationConfig, factors: &[f64]) -> Result<SnlCalibration> {
    let ladder = factors
        .par_iter()
        .enumerate()
        .map(|(row, &factor)| {
            let lo = crate::states::LocalOscillator::new(
                base.lo.amplitude() * factor.sqrt(),
                base.lo.v_x(),
            )?;
            let config = SimulationConfig {
                state: GaussianState::vacuum(),
                lo,
                setting: base.setting.with_transmission(1.0)?,
                seed: derive_seed(base.seed, ExperimentId::SnlLadder, row),
                ..base.clone()
            };
            let v = simulate_moments(&config)?.difference_variance()?;
            Ok((lo.power(), v.value))
        })
        .collect::<Result<Vec<_>>>()?;
    calibrate_snl(&ladder)
}

/// Squeezing against transmission for both methods. The LO phase of `base`
/// should select the squeezed quadrature; the attenuator acts on signal and
/// LO alike while the electronic noise stays fixed.
pub fn run_attenuation_sweep(
    base: &SimulationConfig,
    transmissions: &[f64],
    snl_mode: SnlMode,
) -> Result<AttenuationSweepResult> {
    base.validate()?;
    check_increasing(transmissions, "transmissions", |t| t > 0.0 && t <= 1.0)?;
    let calibration = match snl_mode {
        SnlMode::Analytic => None,
        SnlMode::Calibrated => Some(calibrate_from_ladder(base, &DEFAULT_LADDER_FACTORS)?),
    };
    let v_signal = base.state.rotated_variance(base.setting.phase());
    let rows = transmissions
        .par_iter()
        .enumerate()
        .map(|(row, &t)| attenuation_row(base, row, t, v_signal, calibration.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    Ok(AttenuationSweepResult { rows, calibration })
}

fn attenuation_row(
    base: &SimulationConfig,
    row: usize,
    transmission: f64,
    v_signal: f64,
    calibration: Option<&SnlCalibration>,
) -> Result<AttenuationRow> {
    let seed = derive_seed(base.seed, ExperimentId::AttenuationSweep, row);
    let config = SimulationConfig {
        setting: base.setting.with_transmission(transmission)?,
        seed,
        ..base.clone()
    };
    let (state, lo) = config.detected()?;
    let snl = match calibration {
        Some(cal) => cal.snl_at(lo.power()),
        None => 4.0 * lo.power() * VACUUM_VARIANCE,
    };
    let expected_dv = model_difference_variance(&state, &lo, &config.setting, &config.noise);
    let expected_cov = model_covariance(&state, &lo, &config.setting, &config.noise);
    let sq_covariance_expected_db = covariance_to_normalized_variance(expected_cov, snl, lo.v_x())
        .map(|r| 10.0 * r.log10())
        .unwrap_or(f64::NAN);

    let measurement = simulate_moments(&config).and_then(|m| {
        let dv = m.difference_variance()?;
        let cov = m.covariance()?;
        let sub_ratio = dv.value / snl;
        let sq_subtraction_db = crate::states::squeezing_db(dv.value, snl)?;
        let sq_subtraction_se_db = db_std_error(sub_ratio, dv.std_error / snl);
        let cov_ratio = covariance_to_normalized_variance(cov.value, snl, lo.v_x());
        let cov_ratio_se = cov.std_error / (snl * VACUUM_VARIANCE);
        let (sq_covariance_db, sq_covariance_se_db) = match cov_ratio {
            Ok(r) => (Ok(10.0 * r.log10()), db_std_error(r, cov_ratio_se)),
            Err(e) => (Err(e), f64::NAN),
        };
        Ok(AttenuationMeasurement {
            difference_variance: dv,
            covariance: cov,
            sq_subtraction_db,
            sq_subtraction_se_db,
            sq_covariance_db,
            sq_covariance_se_db,
        })
    });

    Ok(AttenuationRow {
        transmission,
        seed,
        snl,
        sq_ideal_db: ideal_squeezing_curve(v_signal, transmission),
        sq_subtraction_expected_db: 10.0 * (expected_dv / snl).log10(),
        sq_covariance_expected_db,
        measurement,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnRobustnessRow {
    pub en_scale: f64,
    pub seed: u64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho: f64,
    /// Optical covariance, independent of the detectors.
    pub cov_analytic: f64,
    /// `ρσ₁σ₂`
    pub expected_bias: f64,
    pub diff_var_analytic: f64,
    pub covariance: Result<EstimateWithError>,
    pub difference_variance: Result<EstimateWithError>,
}

impl EnRobustnessRow {
    pub fn bias(&self) -> Option<f64> {
        self.covariance
            .as_ref()
            .ok()
            .map(|c| c.value - self.cov_analytic)
    }

    pub fn bias_ok(&self) -> bool {
        matches!(&self.covariance,
            Ok(c) if c.within(self.cov_analytic + self.expected_bias, AGREEMENT_SIGMAS))
    }

    pub fn diff_var_ok(&self) -> bool {
        matches!(&self.difference_variance,
            Ok(d) if d.within(self.diff_var_analytic, AGREEMENT_SIGMAS))
    }

    pub fn passed(&self) -> bool {
        self.bias_ok() && self.diff_var_ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnRobustnessResult {
    pub rows: Vec<EnRobustnessRow>,
}

impl EnRobustnessResult {
    pub fn passed(&self) -> usize {
        self.rows.iter().filter(|r| r.passed()).count()
    }

    pub fn failed(&self) -> usize {
        self.rows.len() - self.passed()
    }
}

/// Fixed optics; both electronic-noise standard deviations of `base` are
/// multiplied by each scale, with correlation `rho`.
pub fn run_en_robustness(
    base: &SimulationConfig,
    en_scales: &[f64],
    rho: f64,
) -> Result<EnRobustnessResult> {
    base.validate()?;
    if en_scales.is_empty() {
        return Err(Error::InvalidConfig("en_scales: grid is empty".into()));
    }
    if let Some(s) = en_scales.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(Error::InvalidConfig(format!("en_scales: {s} must be >= 0")));
    }
    let shape = DetectorNoiseModel::new(base.noise.sigma1(), base.noise.sigma2(), rho)?;
    let rows = en_scales
        .par_iter()
        .enumerate()
        .map(|(row, &scale)| {
            let seed = derive_seed(base.seed, ExperimentId::EnRobustness, row);
            let config = SimulationConfig {
                noise: shape.scaled(scale)?,
                seed,
                ..base.clone()
            };
            let (state, lo) = config.detected()?;
            let moments = simulate_moments(&config);
            Ok(EnRobustnessRow {
                en_scale: scale,
                seed,
                sigma1: config.noise.sigma1(),
                sigma2: config.noise.sigma2(),
                rho,
                cov_analytic: predicted_covariance(&state, &lo, &config.setting),
                expected_bias: config.noise.cross_covariance(),
                diff_var_analytic: model_difference_variance(
                    &state,
                    &lo,
                    &config.setting,
                    &config.noise,
                ),
                covariance: moments.clone().and_then(|m| m.covariance()),
                difference_variance: moments.and_then(|m| m.difference_variance()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnRobustnessResult { rows })
}
