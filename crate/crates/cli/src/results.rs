//! Flat CSV records for experiment results. Column names are the field names.

use homodyne_core::experiments::{AttenuationRow, EnRobustnessRow, PhaseScanRow, AGREEMENT_SIGMAS};
use homodyne_core::{EstimateWithError, Result as CoreResult};
use serde::Serialize;

fn split(est: &CoreResult<EstimateWithError>) -> (Option<f64>, Option<f64>, Option<usize>) {
    match est {
        Ok(e) => (Some(e.value), Some(e.std_error), Some(e.n)),
        Err(_) => (None, None, None),
    }
}

fn error_text<T>(r: &CoreResult<T>) -> String {
    r.as_ref().err().map(|e| e.to_string()).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseScanRecord {
    pub phase: f64,
    pub seed: u64,
    pub cov_analytic: f64,
    pub cov_expected: f64,
    pub cov_mc: Option<f64>,
    pub cov_mc_std_error: Option<f64>,
    pub n: Option<usize>,
    pub deviation: Option<f64>,
    pub z_score: Option<f64>,
    pub pass: bool,
    pub error: String,
}

impl From<&PhaseScanRow> for PhaseScanRecord {
    fn from(r: &PhaseScanRow) -> Self {
        let (cov_mc, cov_mc_std_error, n) = split(&r.cov_mc);
        Self {
            phase: r.phase,
            seed: r.seed,
            cov_analytic: r.cov_analytic,
            cov_expected: r.cov_expected,
            cov_mc,
            cov_mc_std_error,
            n,
            deviation: r.deviation(),
            z_score: r.cov_mc.as_ref().ok().map(|e| e.z_score(r.cov_expected)),
            pass: r.passed(),
            error: error_text(&r.cov_mc),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttenuationRecord {
    pub transmission: f64,
    pub seed: u64,
    pub snl: f64,
    pub sq_ideal_db: f64,
    pub sq_subtraction_db: Option<f64>,
    pub sq_subtraction_se_db: Option<f64>,
    pub sq_subtraction_expected_db: f64,
    /// Empty when the covariance is out of range; see `error`.
    pub sq_covariance_db: Option<f64>,
    pub sq_covariance_se_db: Option<f64>,
    pub sq_covariance_expected_db: f64,
    pub difference_variance: Option<f64>,
    pub difference_variance_std_error: Option<f64>,
    pub covariance: Option<f64>,
    pub covariance_std_error: Option<f64>,
    pub n: Option<usize>,
    pub covariance_tracks_ideal: bool,
    pub pass: bool,
    pub error: String,
}

impl From<&AttenuationRow> for AttenuationRecord {
    fn from(r: &AttenuationRow) -> Self {
        let m = r.measurement.as_ref().ok();
        let error = match &r.measurement {
            Err(e) => e.to_string(),
            Ok(m) => error_text(&m.sq_covariance_db),
        };
        Self {
            transmission: r.transmission,
            seed: r.seed,
            snl: r.snl,
            sq_ideal_db: r.sq_ideal_db,
            sq_subtraction_db: m.map(|m| m.sq_subtraction_db),
            sq_subtraction_se_db: m.map(|m| m.sq_subtraction_se_db),
            sq_subtraction_expected_db: r.sq_subtraction_expected_db,
            sq_covariance_db: r.sq_covariance_db(),
            sq_covariance_se_db: m.map(|m| m.sq_covariance_se_db).filter(|v| v.is_finite()),
            sq_covariance_expected_db: r.sq_covariance_expected_db,
            difference_variance: m.map(|m| m.difference_variance.value),
            difference_variance_std_error: m.map(|m| m.difference_variance.std_error),
            covariance: m.map(|m| m.covariance.value),
            covariance_std_error: m.map(|m| m.covariance.std_error),
            n: m.map(|m| m.covariance.n),
            covariance_tracks_ideal: r.covariance_tracks_ideal(),
            pass: r.passed(),
            error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnRobustnessRecord {
    pub en_scale: f64,
    pub seed: u64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho: f64,
    pub cov_analytic: f64,
    pub covariance: Option<f64>,
    pub covariance_std_error: Option<f64>,
    pub bias: Option<f64>,
    pub expected_bias: f64,
    pub bias_ok: bool,
    pub difference_variance: Option<f64>,
    pub difference_variance_std_error: Option<f64>,
    pub diff_var_analytic: f64,
    pub diff_var_ok: bool,
    pub n: Option<usize>,
    pub pass: bool,
    pub error: String,
}

impl From<&EnRobustnessRow> for EnRobustnessRecord {
    fn from(r: &EnRobustnessRow) -> Self {
        let (covariance, covariance_std_error, n) = split(&r.covariance);
        let (difference_variance, difference_variance_std_error, _) = split(&r.difference_variance);
        let mut error = error_text(&r.covariance);
        if error.is_empty() {
            error = error_text(&r.difference_variance);
        }
        Self {
            en_scale: r.en_scale,
            seed: r.seed,
            sigma1: r.sigma1,
            sigma2: r.sigma2,
            rho: r.rho,
            cov_analytic: r.cov_analytic,
            covariance,
            covariance_std_error,
            bias: r.bias(),
            expected_bias: r.expected_bias,
            bias_ok: r.bias_ok(),
            difference_variance,
            difference_variance_std_error,
            diff_var_analytic: r.diff_var_analytic,
            diff_var_ok: r.diff_var_ok(),
            n,
            pass: r.passed(),
            error,
        }
    }
}

/// Summary line shared by the experiment commands.
pub fn pass_summary(rows: usize, passed: usize) -> String {
    format!(
        "rows: {rows}, passed: {passed}, failed: {} ({}·SE agreement with analytic values)",
        rows - passed,
        AGREEMENT_SIGMAS
    )
}
