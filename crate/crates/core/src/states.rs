//! Second-moment algebra for single-mode Gaussian light.
//!
//! Quadratures follow the `X = (a† + a)/2`, `Y = i(a† − a)/2` convention, so the
//! vacuum variance is exactly 1/4 and a state is physical when
//! `vx·vy − cxy² ≥ 1/16`. Every quantity is dimensionless; the LO amplitude
//! squared is the mean LO photon number per sample slot.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::trace::DetectorNoiseModel;

/// Quadrature variance of the vacuum (shot-noise reference).
pub const VACUUM_VARIANCE: f64 = 0.25;

const UNCERTAINTY_BOUND: f64 = VACUUM_VARIANCE * VACUUM_VARIANCE;
// Loss and rotation round at the last bit; pure states sit exactly on the bound.
const BOUND_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianState {
    vx: f64,
    vy: f64,
    cxy: f64,
}

impl GaussianState {
    pub fn new(vx: f64, vy: f64, cxy: f64) -> Result<Self> {
        if !(vx.is_finite() && vx > 0.0) {
            return Err(Error::domain("vx", vx, "must be finite and > 0"));
        }
        if !(vy.is_finite() && vy > 0.0) {
            return Err(Error::domain("vy", vy, "must be finite and > 0"));
        }
        if !cxy.is_finite() {
            return Err(Error::domain("cxy", cxy, "must be finite"));
        }
        let determinant = vx * vy - cxy * cxy;
        if determinant < UNCERTAINTY_BOUND * (1.0 - BOUND_RTOL) {
            return Err(Error::Unphysical { determinant });
        }
        Ok(Self { vx, vy, cxy })
    }

    pub fn diagonal(vx: f64, vy: f64) -> Result<Self> {
        Self::new(vx, vy, 0.0)
    }

    pub fn vacuum() -> Self {
        Self {
            vx: VACUUM_VARIANCE,
            vy: VACUUM_VARIANCE,
            cxy: 0.0,
        }
    }

    /// State whose minimum-variance quadrature is `v_min`, reached at LO phase
    /// `angle`, with `v_max` in the conjugate quadrature.
    pub fn squeezed(v_min: f64, v_max: f64, angle: f64) -> Result<Self> {
        let (s, c) = angle.sin_cos();
        Self::new(
            v_min * c * c + v_max * s * s,
            v_min * s * s + v_max * c * c,
            (v_min - v_max) * s * c,
        )
    }

    pub fn vx(&self) -> f64 {
        self.vx
    }

    pub fn vy(&self) -> f64 {
        self.vy
    }

    pub fn cxy(&self) -> f64 {
        self.cxy
    }

    pub fn determinant(&self) -> f64 {
        self.vx * self.vy - self.cxy * self.cxy
    }

    /// Variance of `cos φ·X + sin φ·Y`.
    pub fn rotated_variance(&self, phase: f64) -> f64 {
        let (s, c) = phase.sin_cos();
        c * c * self.vx + s * s * self.vy + 2.0 * s * c * self.cxy
    }

    /// Smallest and largest rotated variance (eigenvalues of the covariance matrix).
    pub fn principal_variances(&self) -> (f64, f64) {
        let mean = 0.5 * (self.vx + self.vy);
        let half_gap = (0.25 * (self.vx - self.vy).powi(2) + self.cxy * self.cxy).sqrt();
        (mean - half_gap, mean + half_gap)
    }

    /// Beam-splitter loss: a fraction `1 − t` of the mode is replaced by vacuum.
    pub fn apply_loss(&self, transmission: f64) -> Result<Self> {
        check_transmission(transmission)?;
        let t = transmission;
        let admix = (1.0 - t) * VACUUM_VARIANCE;
        Ok(Self {
            vx: t * self.vx + admix,
            vy: t * self.vy + admix,
            cxy: t * self.cxy,
        })
    }
}

impl Default for GaussianState {
    fn default() -> Self {
        Self::vacuum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalOscillator {
    amplitude: f64,
    v_x: f64,
}

impl LocalOscillator {
    pub fn new(amplitude: f64, v_x: f64) -> Result<Self> {
        if !(amplitude.is_finite() && amplitude >= 0.0) {
            return Err(Error::domain(
                "amplitude",
                amplitude,
                "must be finite and >= 0",
            ));
        }
        if !(v_x.is_finite() && v_x > 0.0) {
            return Err(Error::domain("v_x", v_x, "must be finite and > 0"));
        }
        Ok(Self { amplitude, v_x })
    }

    pub fn shot_noise_limited(amplitude: f64) -> Result<Self> {
        Self::new(amplitude, VACUUM_VARIANCE)
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// Mean photon number per sample slot, `α²`.
    pub fn power(&self) -> f64 {
        self.amplitude * self.amplitude
    }

    pub fn v_x(&self) -> f64 {
        self.v_x
    }

    pub fn is_shot_noise_limited(&self) -> bool {
        self.v_x == VACUUM_VARIANCE
    }

    pub fn after_loss(&self, transmission: f64) -> Result<Self> {
        check_transmission(transmission)?;
        Ok(Self {
            amplitude: self.amplitude * transmission.sqrt(),
            v_x: transmission * self.v_x + (1.0 - transmission) * VACUUM_VARIANCE,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementSetting {
    phase: f64,
    transmission: f64,
}

impl MeasurementSetting {
    /// The phase is wrapped into `[0, 2π)`.
    pub fn new(phase: f64, transmission: f64) -> Result<Self> {
        if !phase.is_finite() {
            return Err(Error::domain("phase", phase, "must be finite"));
        }
        if !(transmission > 0.0 && transmission <= 1.0) {
            return Err(Error::domain(
                "transmission",
                transmission,
                "must lie in (0, 1]",
            ));
        }
        let mut phase = phase.rem_euclid(TAU);
        if phase >= TAU {
            phase = 0.0;
        }
        Ok(Self {
            phase,
            transmission,
        })
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn transmission(&self) -> f64 {
        self.transmission
    }

    pub fn with_phase(&self, phase: f64) -> Result<Self> {
        Self::new(phase, self.transmission)
    }

    pub fn with_transmission(&self, transmission: f64) -> Result<Self> {
        Self::new(self.phase, transmission)
    }
}

impl Default for MeasurementSetting {
    fn default() -> Self {
        Self {
            phase: 0.0,
            transmission: 1.0,
        }
    }
}

fn check_transmission(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::domain("transmission", t, "must lie in [0, 1]"))
    }
}

/// Variance of the difference photocurrent, `4α²V_φ + σ₁² + σ₂²`.
///
/// `state` and `lo` are the values after attenuation. This is the textbook
/// expression and assumes uncorrelated electronic noise; see
/// [`model_difference_variance`] for the exact moment with correlated noise.
pub fn predicted_difference_variance(
    state: &GaussianState,
    lo: &LocalOscillator,
    setting: &MeasurementSetting,
    noise: &DetectorNoiseModel,
) -> f64 {
    4.0 * lo.power() * state.rotated_variance(setting.phase())
        + noise.sigma1() * noise.sigma1()
        + noise.sigma2() * noise.sigma2()
}

/// Photocurrent covariance `α²(V_LO − V_φ)`. Takes no noise model: with
/// independent detector noise the electronic contribution averages out.
pub fn predicted_covariance(
    state: &GaussianState,
    lo: &LocalOscillator,
    setting: &MeasurementSetting,
) -> f64 {
    lo.power() * (lo.v_x() - state.rotated_variance(setting.phase()))
}

/// Exact `var(i₁ − i₂)` of the simulated photocurrents, including the
/// `−2ρσ₁σ₂` term from correlated electronic noise.
pub fn model_difference_variance(
    state: &GaussianState,
    lo: &LocalOscillator,
    setting: &MeasurementSetting,
    noise: &DetectorNoiseModel,
) -> f64 {
    predicted_difference_variance(state, lo, setting, noise) - 2.0 * noise.cross_covariance()
}

/// Exact `cov(i₁, i₂)` of the simulated photocurrents: the optical term plus
/// the background `ρσ₁σ₂`.
pub fn model_covariance(
    state: &GaussianState,
    lo: &LocalOscillator,
    setting: &MeasurementSetting,
    noise: &DetectorNoiseModel,
) -> f64 {
    predicted_covariance(state, lo, setting) + noise.cross_covariance()
}

/// `10·log10(v / v_ref)`; negative values are below the reference.
pub fn squeezing_db(v: f64, v_ref: f64) -> Result<f64> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::domain("v", v, "must be finite and > 0"));
    }
    if !(v_ref > 0.0 && v_ref.is_finite()) {
        return Err(Error::domain("v_ref", v_ref, "must be finite and > 0"));
    }
    Ok(10.0 * (v / v_ref).log10())
}

/// Squeezing in dB seen by a noiseless detector after loss `1 − t`.
pub fn ideal_squeezing_curve(v_signal: f64, transmission: f64) -> f64 {
    let t = transmission;
    10.0 * (t * (v_signal / VACUUM_VARIANCE) + (1.0 - t)).log10()
}
