//! Statistics on photocurrent trace pairs.
//!
//! Both the difference-variance and the covariance estimates come out of one
//! streaming pass ([`PairMoments`]). Standard errors assume jointly Gaussian
//! samples, which is exact for simulated traces and approximate for recordings.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::states::{squeezing_db, VACUUM_VARIANCE};
use crate::trace::{SimulationConfig, TraceGenerator, TracePair, CHUNK_LEN};

/// Point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateWithError {
    pub value: f64,
    pub std_error: f64,
    pub n: usize,
}

impl EstimateWithError {
    pub fn new(value: f64, std_error: f64, n: usize) -> Result<Self> {
        if !(std_error >= 0.0) {
            return Err(Error::domain("std_error", std_error, "must be >= 0"));
        }
        if n < 2 {
            return Err(Error::InsufficientData {
                required: 2,
                got: n,
            });
        }
        Ok(Self {
            value,
            std_error,
            n,
        })
    }

    /// `(value − reference) / std_error`
    pub fn z_score(&self, reference: f64) -> f64 {
        (self.value - reference) / self.std_error
    }

    /// True when `reference` lies within `k` standard errors.
    pub fn within(&self, reference: f64, k: f64) -> bool {
        (self.value - reference).abs() <= k * self.std_error
    }
}

impl fmt::Display for EstimateWithError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ± {} (n = {})", self.value, self.std_error, self.n)
    }
}

/// Running first and second moments of a sample pair and of its difference.
///
/// Welford update on data shifted by the first sample seen, so a large common
/// offset does not erode precision. [`PairMoments::merge`] combines partial
/// results (Chan et al.), so blocks may be reduced in parallel.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PairMoments {
    n: usize,
    shift1: f64,
    shift2: f64,
    shift_d: f64,
    // means below are relative to the shifts
    mean1: f64,
    mean2: f64,
    mean_d: f64,
    m2_1: f64,
    m2_2: f64,
    m2_d: f64,
    c12: f64,
}

impl PairMoments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_samples<I: IntoIterator<Item = (f64, f64)>>(samples: I) -> Self {
        let mut acc = Self::new();
        for (x, y) in samples {
            acc.add(x, y);
        }
        acc
    }

    /// Streams `traces` block by block and merges the blocks in order, so the
    /// result does not depend on scheduling.
    pub fn from_traces(traces: &TracePair) -> Self {
        let blocks: Vec<PairMoments> = traces
            .ch1()
            .par_chunks(CHUNK_LEN)
            .zip(traces.ch2().par_chunks(CHUNK_LEN))
            .map(|(a, b)| Self::from_samples(a.iter().copied().zip(b.iter().copied())))
            .collect();
        blocks.into_iter().fold(Self::new(), |mut acc, b| {
            acc.merge(&b);
            acc
        })
    }

    pub fn add(&mut self, x: f64, y: f64) {
        if self.n == 0 {
            self.shift1 = x;
            self.shift2 = y;
            self.shift_d = x - y;
        }
        self.n += 1;
        let n = self.n as f64;
        let (x, y, d) = (x - self.shift1, y - self.shift2, (x - y) - self.shift_d);

        let dx = x - self.mean1;
        let dy = y - self.mean2;
        self.mean1 += dx / n;
        self.mean2 += dy / n;
        self.m2_1 += dx * (x - self.mean1);
        self.m2_2 += dy * (y - self.mean2);
        self.c12 += dx * (y - self.mean2);

        let dd = d - self.mean_d;
        self.mean_d += dd / n;
        self.m2_d += dd * (d - self.mean_d);
    }

    pub fn merge(&mut self, other: &Self) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let na = self.n as f64;
        let nb = other.n as f64;
        let n = na + nb;
        let w = na * nb / n;

        let d1 = (other.shift1 - self.shift1) + (other.mean1 - self.mean1);
        let d2 = (other.shift2 - self.shift2) + (other.mean2 - self.mean2);
        let dd = (other.shift_d - self.shift_d) + (other.mean_d - self.mean_d);

        self.m2_1 += other.m2_1 + d1 * d1 * w;
        self.m2_2 += other.m2_2 + d2 * d2 * w;
        self.m2_d += other.m2_d + dd * dd * w;
        self.c12 += other.c12 + d1 * d2 * w;

        self.mean1 += d1 * nb / n;
        self.mean2 += d2 * nb / n;
        self.mean_d += dd * nb / n;
        self.n += other.n;
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn means(&self) -> (f64, f64) {
        (self.shift1 + self.mean1, self.shift2 + self.mean2)
    }

    fn check(&self) -> Result<f64> {
        if self.n < 2 {
            return Err(Error::InsufficientData {
                required: 2,
                got: self.n,
            });
        }
        Ok((self.n - 1) as f64)
    }

    /// Unbiased channel variances.
    pub fn variances(&self) -> Result<(f64, f64)> {
        let dof = self.check()?;
        Ok((self.m2_1 / dof, self.m2_2 / dof))
    }

    pub fn covariance(&self) -> Result<EstimateWithError> {
        let dof = self.check()?;
        let c = self.c12 / dof;
        let (v1, v2) = (self.m2_1 / dof, self.m2_2 / dof);
        Ok(covariance_estimate(c, v1, v2, self.n))
    }

    pub fn difference_variance(&self) -> Result<EstimateWithError> {
        let dof = self.check()?;
        let v = self.m2_d / dof;
        Ok(EstimateWithError {
            value: v,
            std_error: v * (2.0 / dof).sqrt(),
            n: self.n,
        })
    }
}

/// Moments of the trace `config` would generate, computed block by block
/// without materializing it. Bit-identical to
/// `PairMoments::from_traces(&sample_trace_pair(config)?)`.
pub fn simulate_moments(config: &SimulationConfig) -> Result<PairMoments> {
    let generator = TraceGenerator::new(config)?;
    let blocks: Vec<PairMoments> = (0..generator.n_blocks())
        .into_par_iter()
        .map_init(
            || (vec![0.0; CHUNK_LEN], vec![0.0; CHUNK_LEN]),
            |(buf1, buf2), block| {
                let len = generator.block_len(block);
                let (a, b) = (&mut buf1[..len], &mut buf2[..len]);
                generator.fill_block(block, a, b);
                PairMoments::from_samples(a.iter().copied().zip(b.iter().copied()))
            },
        )
        .collect();
    Ok(blocks.into_iter().fold(PairMoments::new(), |mut acc, b| {
        acc.merge(&b);
        acc
    }))
}

fn covariance_estimate(c: f64, v1: f64, v2: f64, n: usize) -> EstimateWithError {
    let dof = (n - 1) as f64;
    EstimateWithError {
        value: c,
        std_error: ((v1 * v2 + c * c) / dof).sqrt(),
        n,
    }
}

/// Unbiased variance of `ch1 − ch2`; standard error `value·√(2/(n−1))`.
pub fn difference_variance(traces: &TracePair) -> Result<EstimateWithError> {
    PairMoments::from_traces(traces).difference_variance()
}

/// Unbiased `cov(ch1, ch2)` from the one-pass co-moment; standard error
/// `√((v₁v₂ + c²)/(n−1))`.
pub fn covariance(traces: &TracePair) -> Result<EstimateWithError> {
    PairMoments::from_traces(traces).covariance()
}

/// Reference covariance: subtract the means, then accumulate products.
/// The residual sums of the deviations correct for rounding in the means.
pub fn covariance_two_pass(traces: &TracePair) -> Result<EstimateWithError> {
    let n = traces.len();
    if n < 2 {
        return Err(Error::InsufficientData {
            required: 2,
            got: n,
        });
    }
    let nf = n as f64;
    let m1 = traces.ch1().iter().sum::<f64>() / nf;
    let m2 = traces.ch2().iter().sum::<f64>() / nf;
    let (mut s1, mut s2, mut s11, mut s22, mut s12) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (x, y) in traces.samples() {
        let (a, b) = (x - m1, y - m2);
        s1 += a;
        s2 += b;
        s11 += a * a;
        s22 += b * b;
        s12 += a * b;
    }
    let dof = (n - 1) as f64;
    Ok(covariance_estimate(
        (s12 - s1 * s2 / nf) / dof,
        (s11 - s1 * s1 / nf) / dof,
        (s22 - s2 * s2 / nf) / dof,
        n,
    ))
}

/// Straight-line fit of difference variance against LO power.
#[derive(Debug, Clone, PartialEq)]
pub struct SnlCalibration {
    /// Shot-noise variance per unit LO power.
    pub slope: f64,
    /// Electronic-noise floor.
    pub intercept: f64,
    pub fit_points: Vec<(f64, f64)>,
    pub r_squared: f64,
}

impl SnlCalibration {
    /// Noise-free shot-noise level at `power`; the intercept is dropped.
    pub fn snl_at(&self, power: f64) -> f64 {
        self.slope * power
    }
}

/// Ordinary least squares on `(lo_power, variance)` points.
pub fn calibrate_snl(ladder: &[(f64, f64)]) -> Result<SnlCalibration> {
    if ladder.len() < 3 {
        return Err(Error::Calibration(format!(
            "need at least 3 ladder points, got {}",
            ladder.len()
        )));
    }
    for &(p, v) in ladder {
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::Calibration(format!("nonpositive power {p}")));
        }
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Calibration(format!("nonpositive variance {v}")));
        }
    }
    let n = ladder.len() as f64;
    let p_mean = ladder.iter().map(|&(p, _)| p).sum::<f64>() / n;
    let v_mean = ladder.iter().map(|&(_, v)| v).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(p, v) in ladder {
        let (dp, dv) = (p - p_mean, v - v_mean);
        sxx += dp * dp;
        sxy += dp * dv;
        syy += dv * dv;
    }
    if sxx == 0.0 {
        return Err(Error::Calibration("all ladder powers are equal".into()));
    }
    let slope = sxy / sxx;
    if !(slope > 0.0) {
        return Err(Error::Calibration(format!(
            "fitted slope {slope} is not positive"
        )));
    }
    let intercept = v_mean - slope * p_mean;
    let ss_res: f64 = ladder
        .iter()
        .map(|&(p, v)| (v - slope * p - intercept).powi(2))
        .sum();
    let r_squared = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(SnlCalibration {
        slope,
        intercept,
        fit_points: ladder.to_vec(),
        r_squared,
    })
}

pub fn squeezing_from_subtraction(traces: &TracePair, snl: f64) -> Result<f64> {
    squeezing_db(difference_variance(traces)?.value, snl)
}

/// Squeezing in dB inferred from the photocurrent covariance, assuming a
/// shot-noise-limited LO.
pub fn squeezing_from_covariance(traces: &TracePair, snl: f64) -> Result<f64> {
    squeezing_from_covariance_with_lo(traces, snl, VACUUM_VARIANCE)
}

pub fn squeezing_from_covariance_with_lo(
    traces: &TracePair,
    snl: f64,
    lo_variance: f64,
) -> Result<f64> {
    covariance_to_squeezing_db(covariance(traces)?.value, snl, lo_variance)
}

/// Normalized quadrature variance `V_φ/V_vac = 4·V_LO − 4·cov/snl`, where
/// `snl = α²` is the noise-free shot-noise variance at the same LO power.
pub fn covariance_to_normalized_variance(cov: f64, snl: f64, lo_variance: f64) -> Result<f64> {
    if !(snl > 0.0 && snl.is_finite()) {
        return Err(Error::domain("snl", snl, "must be finite and > 0"));
    }
    let ratio = (lo_variance - cov / snl) / VACUUM_VARIANCE;
    if ratio > 0.0 {
        Ok(ratio)
    } else {
        Err(Error::OutOfRange {
            covariance: cov,
            snl,
        })
    }
}

pub fn covariance_to_squeezing_db(cov: f64, snl: f64, lo_variance: f64) -> Result<f64> {
    let ratio = covariance_to_normalized_variance(cov, snl, lo_variance)?;
    Ok(10.0 * ratio.log10())
}

/// First-order propagation of a standard error on `ratio` into dB.
pub fn db_std_error(ratio: f64, ratio_std_error: f64) -> f64 {
    10.0 / std::f64::consts::LN_10 * ratio_std_error / ratio.abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StateClass {
    Squeezed,
    CoherentConsistent,
    ExcessNoise,
    Inconclusive,
}

impl fmt::Display for StateClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StateClass::Squeezed => "Squeezed",
            StateClass::CoherentConsistent => "CoherentConsistent",
            StateClass::ExcessNoise => "ExcessNoise",
            StateClass::Inconclusive => "Inconclusive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVerdict {
    pub class: StateClass,
    pub z_score: f64,
}

pub const DEFAULT_Z_THRESHOLD: f64 = 3.0;

/// Classifies the input light from the sign of the photocurrent covariance.
/// Only meaningful for a shot-noise-limited LO.
pub fn classify_state(cov: &EstimateWithError, z_threshold: f64) -> StateVerdict {
    if cov.n < 2 || !cov.value.is_finite() || !(cov.std_error >= 0.0) {
        return StateVerdict {
            class: StateClass::Inconclusive,
            z_score: f64::NAN,
        };
    }
    let z = if cov.std_error == 0.0 {
        if cov.value == 0.0 {
            0.0
        } else {
            cov.value.signum() * f64::INFINITY
        }
    } else {
        cov.value / cov.std_error
    };
    let class = if z > z_threshold {
        StateClass::Squeezed
    } else if z < -z_threshold {
        StateClass::ExcessNoise
    } else {
        StateClass::CoherentConsistent
    };
    StateVerdict { class, z_score: z }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{GaussianState, LocalOscillator, MeasurementSetting};
    use crate::trace::{sample_trace_pair, DetectorNoiseModel, SimulationConfig, TraceSource};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pair(a: &[f64], b: &[f64]) -> TracePair {
        TracePair::new(a.to_vec(), b.to_vec(), TraceSource::Ingested(vec![])).unwrap()
    }

    #[test]
    fn difference_variance_small_cases() {
        let same = pair(&[1.0, 5.0, -2.0], &[1.0, 5.0, -2.0]);
        assert_eq!(difference_variance(&same).unwrap().value, 0.0);
        let d = difference_variance(&pair(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0])).unwrap();
        assert_relative_eq!(d.value, 1.0);
        assert_relative_eq!(d.std_error, 1.0);
        assert_eq!(d.n, 3);
    }

    #[test]
    fn covariance_small_cases() {
        let xs = [0.3, -1.2, 4.0, 2.5];
        let c = covariance(&pair(&xs, &xs)).unwrap();
        let (v, _) = PairMoments::from_samples(xs.iter().map(|&x| (x, x)))
            .variances()
            .unwrap();
        assert_relative_eq!(c.value, v, epsilon = 1e-15);
        let anti = covariance(&pair(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0])).unwrap();
        assert_relative_eq!(anti.value, -1.0);
        let flat = covariance_two_pass(&pair(&[2.0, 2.0, 2.0], &[-1.0, -1.0, -1.0])).unwrap();
        assert_eq!(flat.value, 0.0);
        assert_eq!(
            covariance(&pair(&[2.0, 2.0], &[5.0, 5.0])).unwrap().value,
            0.0
        );
    }

    #[test]
    fn short_accumulator_reports_insufficient_data() {
        let mut acc = PairMoments::new();
        acc.add(1.0, 2.0);
        assert!(matches!(
            acc.covariance(),
            Err(Error::InsufficientData { got: 1, .. })
        ));
        assert!(acc.difference_variance().is_err());
    }

    fn squeezed_config(sigma: f64) -> SimulationConfig {
        SimulationConfig {
            noise: DetectorNoiseModel::new(sigma, sigma, 0.0).unwrap(),
            seed: 99,
            ..SimulationConfig::default()
        }
    }

    #[test]
    fn vacuum_difference_variance_matches_shot_noise() {
        let cfg = SimulationConfig {
            state: GaussianState::vacuum(),
            seed: 5,
            ..SimulationConfig::default()
        };
        let d = difference_variance(&sample_trace_pair(&cfg).unwrap()).unwrap();
        assert!(d.within(1.0, 4.0), "{d}");
    }

    #[test]
    fn squeezed_covariance_is_positive_regardless_of_noise() {
        for sigma in [0.0, 0.5, 2.0] {
            let c = covariance(&sample_trace_pair(&squeezed_config(sigma)).unwrap()).unwrap();
            assert!(c.within(0.079, 4.0), "sigma {sigma}: {c}");
        }
    }

    #[test]
    fn one_pass_matches_two_pass_with_offset() {
        let base = sample_trace_pair(&SimulationConfig {
            n_samples: 100_000,
            noise: DetectorNoiseModel::new(0.2, 0.3, 0.1).unwrap(),
            ..SimulationConfig::default()
        })
        .unwrap();
        let plain = covariance(&base).unwrap().value;
        let (a, b) = base.into_channels();
        let shifted = pair(
            &a.iter().map(|x| x + 1e8).collect::<Vec<_>>(),
            &b.iter().map(|x| x + 1e8).collect::<Vec<_>>(),
        );
        let one = covariance(&shifted).unwrap().value;
        let two = covariance_two_pass(&shifted).unwrap().value;
        assert!(((one - two) / two).abs() < 1e-10, "{one} vs {two}");
        assert!(((one - plain) / plain).abs() < 1e-6, "{one} vs {plain}");
    }

    #[test]
    fn streamed_moments_match_materialized_trace() {
        let cfg = SimulationConfig {
            n_samples: 2 * CHUNK_LEN + 1234,
            noise: DetectorNoiseModel::new(0.3, 0.1, -0.2).unwrap(),
            seed: 17,
            ..SimulationConfig::default()
        };
        let streamed = simulate_moments(&cfg).unwrap();
        let stored = PairMoments::from_traces(&sample_trace_pair(&cfg).unwrap());
        assert_eq!(streamed, stored);
    }

    #[test]
    fn calibration_exact_lines() {
        let cal = calibrate_snl(&[(1.0, 2.0), (2.0, 4.0), (3.0, 6.0)]).unwrap();
        assert_relative_eq!(cal.slope, 2.0, epsilon = 1e-12);
        assert!(cal.intercept.abs() < 1e-12);
        assert_relative_eq!(cal.r_squared, 1.0);

        let cal = calibrate_snl(&[(1.0, 2.5), (2.0, 4.5), (4.0, 8.5), (8.0, 16.5)]).unwrap();
        assert_relative_eq!(cal.slope, 2.0, epsilon = 1e-12);
        assert_relative_eq!(cal.intercept, 0.5, epsilon = 1e-12);
        assert_relative_eq!(cal.snl_at(0.1), 0.2, epsilon = 1e-12);
    }

    #[test]
    fn calibration_errors() {
        assert!(matches!(
            calibrate_snl(&[(1.0, 1.0), (2.0, 2.0)]),
            Err(Error::Calibration(_))
        ));
        assert!(calibrate_snl(&[(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)]).is_err());
        assert!(calibrate_snl(&[(0.0, 1.0), (1.0, 2.0), (2.0, 3.0)]).is_err());
        assert!(calibrate_snl(&[(1.0, 3.0), (2.0, 2.0), (3.0, 1.0)]).is_err());
    }

    #[test]
    fn calibration_from_monte_carlo_ladder() {
        // EN floor 0.02 × SNL at the top power (8), split evenly between detectors
        let noise = DetectorNoiseModel::symmetric(0.08, 0.0).unwrap();
        let ladder: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0]
            .iter()
            .enumerate()
            .map(|(k, &power)| {
                let cfg = SimulationConfig {
                    state: GaussianState::vacuum(),
                    lo: LocalOscillator::shot_noise_limited(f64::sqrt(power)).unwrap(),
                    noise,
                    seed: 1000 + k as u64,
                    ..SimulationConfig::default()
                };
                let d = difference_variance(&sample_trace_pair(&cfg).unwrap()).unwrap();
                (power, d.value)
            })
            .collect();
        let cal = calibrate_snl(&ladder).unwrap();
        assert!((cal.slope - 1.0).abs() < 0.02, "{cal:?}");
    }

    #[test]
    fn subtraction_squeezing() {
        let t = pair(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]);
        assert_eq!(squeezing_from_subtraction(&t, 1.0).unwrap(), 0.0);

        let sq = sample_trace_pair(&squeezed_config(0.0)).unwrap();
        let db = squeezing_from_subtraction(&sq, 1.0).unwrap();
        assert!((db + 1.65).abs() < 0.1, "{db}");

        // weak LO, fixed EN: approaches 10·log10(σ²_tot/snl) > 0
        let weak = SimulationConfig {
            lo: LocalOscillator::shot_noise_limited(0.01).unwrap(),
            noise: DetectorNoiseModel::new(0.01, 0.01, 0.0).unwrap(),
            ..squeezed_config(0.0)
        };
        let snl = 1e-4;
        let db = squeezing_from_subtraction(&sample_trace_pair(&weak).unwrap(), snl).unwrap();
        let expected = 10.0 * ((4.0 * 1e-4 * 0.171 + 2e-4) / snl).log10();
        assert!(
            db > 0.0 && (db - expected).abs() < 0.05,
            "{db} vs {expected}"
        );
    }

    #[test]
    fn covariance_inversion() {
        assert_eq!(covariance_to_squeezing_db(0.0, 1.0, 0.25).unwrap(), 0.0);
        assert_relative_eq!(
            covariance_to_squeezing_db(0.079, 1.0, 0.25).unwrap(),
            10.0 * 0.684_f64.log10(),
            epsilon = 1e-12
        );
        assert!((covariance_to_squeezing_db(0.079, 1.0, 0.25).unwrap() + 1.65).abs() < 0.005);
        assert_relative_eq!(
            covariance_to_squeezing_db(-0.54, 1.0, 0.25).unwrap(),
            10.0 * 3.16_f64.log10(),
            epsilon = 1e-12
        );
        assert!(matches!(
            covariance_to_squeezing_db(0.3, 1.0, 0.25),
            Err(Error::OutOfRange { covariance, .. }) if covariance == 0.3
        ));
        // non-shot-limited LO: V_φ = V_LO − cov/α²
        assert_relative_eq!(
            covariance_to_normalized_variance(0.1, 2.0, 0.3).unwrap(),
            (0.3 - 0.05) / 0.25,
            epsilon = 1e-12
        );
    }

    #[test]
    fn covariance_squeezing_on_traces() {
        let sq = sample_trace_pair(&squeezed_config(1.0)).unwrap();
        let db = squeezing_from_covariance(&sq, 1.0).unwrap();
        assert!((db + 1.65).abs() < 0.1, "{db}");
    }

    #[test]
    fn classification_examples() {
        let est = |value, std_error| EstimateWithError {
            value,
            std_error,
            n: 1000,
        };
        let v = classify_state(&est(0.079, 0.001), DEFAULT_Z_THRESHOLD);
        assert_eq!(v.class, StateClass::Squeezed);
        assert_relative_eq!(v.z_score, 79.0, epsilon = 1e-9);
        assert_eq!(
            classify_state(&est(0.0005, 0.001), 3.0).class,
            StateClass::CoherentConsistent
        );
        assert_eq!(
            classify_state(&est(-0.54, 0.002), 3.0).class,
            StateClass::ExcessNoise
        );
        assert_eq!(
            classify_state(&est(0.0, 0.0), 3.0),
            StateVerdict {
                class: StateClass::CoherentConsistent,
                z_score: 0.0
            }
        );
        let inf = classify_state(&est(-1e-3, 0.0), 3.0);
        assert_eq!(inf.class, StateClass::ExcessNoise);
        assert_eq!(inf.z_score, f64::NEG_INFINITY);
        let short = EstimateWithError {
            value: 1.0,
            std_error: 0.0,
            n: 1,
        };
        assert_eq!(classify_state(&short, 3.0).class, StateClass::Inconclusive);
        // threshold is inclusive on the coherent side
        assert_eq!(
            classify_state(&est(3.0, 1.0), 3.0).class,
            StateClass::CoherentConsistent
        );
    }

    #[test]
    fn estimate_constructor_validates() {
        assert!(EstimateWithError::new(1.0, -0.1, 10).is_err());
        assert!(EstimateWithError::new(1.0, 0.1, 1).is_err());
        assert!(EstimateWithError::new(1.0, 0.1, 2).is_ok());
    }

    #[test]
    fn shift_invariance_on_simulated_trace() {
        let t = sample_trace_pair(&SimulationConfig {
            n_samples: 50_000,
            ..squeezed_config(0.3)
        })
        .unwrap();
        let base = PairMoments::from_traces(&t);
        let (a, b) = t.into_channels();
        let shifted = pair(
            &a.iter().map(|x| x + 37.5).collect::<Vec<_>>(),
            &b.iter().map(|x| x - 1234.0).collect::<Vec<_>>(),
        );
        let moved = PairMoments::from_traces(&shifted);
        let (c0, c1) = (
            base.covariance().unwrap().value,
            moved.covariance().unwrap().value,
        );
        let (d0, d1) = (
            base.difference_variance().unwrap().value,
            moved.difference_variance().unwrap().value,
        );
        assert!(((c0 - c1) / c0).abs() < 1e-9);
        assert!(((d0 - d1) / d0).abs() < 1e-9);
    }

    #[test]
    fn ac_and_dc_traces_give_same_statistics() {
        let ac = SimulationConfig {
            lo: LocalOscillator::shot_noise_limited(2.0).unwrap(),
            n_samples: 200_000,
            setting: MeasurementSetting::new(0.3, 0.8).unwrap(),
            ..squeezed_config(0.4)
        };
        let dc = SimulationConfig {
            ac_coupled: false,
            ..ac.clone()
        };
        let a = PairMoments::from_traces(&sample_trace_pair(&ac).unwrap());
        let d = PairMoments::from_traces(&sample_trace_pair(&dc).unwrap());
        let rel = |x: f64, y: f64| ((x - y) / y).abs();
        assert!(rel(a.covariance().unwrap().value, d.covariance().unwrap().value) < 1e-12);
        assert!(
            rel(
                a.difference_variance().unwrap().value,
                d.difference_variance().unwrap().value
            ) < 1e-12
        );
    }

    fn samples() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 2..400)
    }

    proptest! {
        #[test]
        fn merge_matches_sequential(xs in samples(), cut in 0usize..400) {
            let cut = cut.min(xs.len());
            let seq = PairMoments::from_samples(xs.iter().copied());
            let mut left = PairMoments::from_samples(xs[..cut].iter().copied());
            left.merge(&PairMoments::from_samples(xs[cut..].iter().copied()));
            prop_assert_eq!(left.count(), seq.count());
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300);
            let (c_seq, c_mrg) = (seq.covariance().unwrap().value, left.covariance().unwrap().value);
            // covariance can sit near zero; compare against the variance scale
            let (v1, v2) = seq.variances().unwrap();
            prop_assert!((c_seq - c_mrg).abs() <= 1e-12 * (v1 * v2).sqrt().max(1e-300));
            prop_assert!(close(seq.difference_variance().unwrap().value, left.difference_variance().unwrap().value));
            let (m1, _) = left.variances().unwrap();
            prop_assert!(close(v1, m1));
        }

        #[test]
        fn one_pass_agrees_with_two_pass(xs in samples(), offset in -1e8f64..1e8) {
            let (a, b): (Vec<f64>, Vec<f64>) = xs.iter().map(|&(x, y)| (x + offset, y + offset)).unzip();
            let t = pair(&a, &b);
            let one = covariance(&t).unwrap();
            let two = covariance_two_pass(&t).unwrap();
            let scale = (one.std_error * ((t.len() - 1) as f64).sqrt()).max(1e-300);
            prop_assert!((one.value - two.value).abs() <= 1e-10 * scale.max(two.value.abs()));
        }
    }
}
