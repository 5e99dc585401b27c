//! Seeded Monte Carlo photocurrent traces.
//!
//! Each sample is one independent measurement slot:
//!
//! ```text
//! i₁ = α²/2 + α(δX_LO + δX_φ) + e₁
//! i₂ = α²/2 + α(δX_LO − δX_φ) + e₂
//! ```
//!
//! with the DC term `α²/2` removed when the trace is AC coupled.
//!
//! # Seed-to-trace mapping
//!
//! Samples are produced in blocks of [`CHUNK_LEN`]. Block `k` uses a
//! `ChaCha8Rng` seeded with `seed_from_u64(seed)` on stream `k`. Within a
//! block every sample consumes four standard normals (ziggurat method from
//! `rand_distr`) in the order `δX_LO`, `δX_φ`, `z₁`, `z₂`, regardless of which
//! variances are zero. The mapping is independent of the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::states::{GaussianState, LocalOscillator, MeasurementSetting};

pub const CHUNK_LEN: usize = 1 << 16;

/// Electronic noise of the two detectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorNoiseModel {
    sigma1: f64,
    sigma2: f64,
    rho: f64,
}

impl DetectorNoiseModel {
    pub fn new(sigma1: f64, sigma2: f64, rho: f64) -> Result<Self> {
        if !(sigma1.is_finite() && sigma1 >= 0.0) {
            return Err(Error::domain("sigma1", sigma1, "must be finite and >= 0"));
        }
        if !(sigma2.is_finite() && sigma2 >= 0.0) {
            return Err(Error::domain("sigma2", sigma2, "must be finite and >= 0"));
        }
        if !(-1.0..=1.0).contains(&rho) {
            return Err(Error::domain("rho", rho, "must lie in [-1, 1]"));
        }
        Ok(Self {
            sigma1,
            sigma2,
            rho,
        })
    }

    pub fn noiseless() -> Self {
        Self {
            sigma1: 0.0,
            sigma2: 0.0,
            rho: 0.0,
        }
    }

    /// Independent detectors with equal noise variance `variance` each.
    pub fn symmetric(variance: f64, rho: f64) -> Result<Self> {
        if !(variance.is_finite() && variance >= 0.0) {
            return Err(Error::domain("variance", variance, "must be >= 0"));
        }
        let sigma = variance.sqrt();
        Self::new(sigma, sigma, rho)
    }

    pub fn sigma1(&self) -> f64 {
        self.sigma1
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `ρσ₁σ₂`
    pub fn cross_covariance(&self) -> f64 {
        self.rho * self.sigma1 * self.sigma2
    }

    pub fn total_variance(&self) -> f64 {
        self.sigma1 * self.sigma1 + self.sigma2 * self.sigma2
    }

    /// Both standard deviations multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.sigma1 * factor, self.sigma2 * factor, self.rho)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        correlated_noise_pair(self.sigma1, self.sigma2, self.rho, rng)
    }
}

impl Default for DetectorNoiseModel {
    fn default() -> Self {
        Self::noiseless()
    }
}

/// Jointly normal pair with standard deviations `(sigma1, sigma2)` and
/// correlation `rho`, built from two standard normals by Cholesky factor.
pub fn correlated_noise_pair<R: Rng + ?Sized>(
    sigma1: f64,
    sigma2: f64,
    rho: f64,
    rng: &mut R,
) -> (f64, f64) {
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    let e1 = sigma1 * z1;
    let e2 = sigma2 * (rho * z1 + (1.0 - rho * rho).sqrt() * z2);
    (e1, e2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    /// Signal state before the attenuator.
    pub state: GaussianState,
    /// LO before the attenuator.
    pub lo: LocalOscillator,
    pub setting: MeasurementSetting,
    pub noise: DetectorNoiseModel,
    pub n_samples: usize,
    pub seed: u64,
    pub ac_coupled: bool,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(Error::InvalidConfig(format!(
                "n_samples = {} (must be >= 2)",
                self.n_samples
            )));
        }
        Ok(())
    }

    /// State and LO after the attenuator.
    pub fn detected(&self) -> Result<(GaussianState, LocalOscillator)> {
        let t = self.setting.transmission();
        Ok((self.state.apply_loss(t)?, self.lo.after_loss(t)?))
    }
}

impl Default for SimulationConfig {
    /// Impure squeezed state (−1.65 dB / +5 dB) with a unit shot-noise-limited LO.
    fn default() -> Self {
        Self {
            state: GaussianState::diagonal(0.171, 0.79).expect("physical"),
            lo: LocalOscillator::shot_noise_limited(1.0).expect("valid"),
            setting: MeasurementSetting::default(),
            noise: DetectorNoiseModel::noiseless(),
            n_samples: 1_000_000,
            seed: 0,
            ac_coupled: true,
        }
    }
}

/// Where a trace came from.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceSource {
    Simulated(SimulationConfig),
    /// External recording; free-form `key=value` metadata.
    Ingested(Vec<(String, String)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TracePair {
    ch1: Vec<f64>,
    ch2: Vec<f64>,
    source: TraceSource,
}

impl TracePair {
    pub fn new(ch1: Vec<f64>, ch2: Vec<f64>, source: TraceSource) -> Result<Self> {
        if ch1.len() != ch2.len() {
            return Err(Error::LengthMismatch {
                ch1: ch1.len(),
                ch2: ch2.len(),
            });
        }
        if ch1.len() < 2 {
            return Err(Error::InsufficientData {
                required: 2,
                got: ch1.len(),
            });
        }
        if let Some(index) = ch1
            .iter()
            .zip(&ch2)
            .position(|(a, b)| !(a.is_finite() && b.is_finite()))
        {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { ch1, ch2, source })
    }

    pub fn ch1(&self) -> &[f64] {
        &self.ch1
    }

    pub fn ch2(&self) -> &[f64] {
        &self.ch2
    }

    pub fn len(&self) -> usize {
        self.ch1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ch1.is_empty()
    }

    pub fn source(&self) -> &TraceSource {
        &self.source
    }

    pub fn samples(&self) -> impl ExactSizeIterator<Item = (f64, f64)> + '_ {
        self.ch1.iter().copied().zip(self.ch2.iter().copied())
    }

    pub fn into_channels(self) -> (Vec<f64>, Vec<f64>) {
        (self.ch1, self.ch2)
    }
}

/// Per-sample parameters derived from a validated config. Produces any block
/// of the trace independently of the others.
#[derive(Debug, Clone, Copy)]
pub struct TraceGenerator {
    seed: u64,
    n_samples: usize,
    alpha: f64,
    sd_lo: f64,
    sd_signal: f64,
    dc: f64,
    noise: DetectorNoiseModel,
}

impl TraceGenerator {
    pub fn new(config: &SimulationConfig) -> Result<Self> {
        config.validate()?;
        let (state, lo) = config.detected()?;
        Ok(Self {
            seed: config.seed,
            n_samples: config.n_samples,
            alpha: lo.amplitude(),
            sd_lo: lo.v_x().sqrt(),
            sd_signal: state.rotated_variance(config.setting.phase()).sqrt(),
            dc: if config.ac_coupled {
                0.0
            } else {
                0.5 * lo.power()
            },
            noise: config.noise,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_blocks(&self) -> usize {
        self.n_samples.div_ceil(CHUNK_LEN)
    }

    /// Length of block `block`; the last one may be short.
    pub fn block_len(&self, block: usize) -> usize {
        CHUNK_LEN.min(self.n_samples.saturating_sub(block * CHUNK_LEN))
    }

    /// Fills `out1`/`out2` with the first `out1.len()` samples of block `block`.
    pub fn fill_block(&self, block: usize, out1: &mut [f64], out2: &mut [f64]) {
        debug_assert_eq!(out1.len(), out2.len());
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(block as u64);
        for (a, b) in out1.iter_mut().zip(out2.iter_mut()) {
            let x_lo = rng.sample::<f64, _>(StandardNormal) * self.sd_lo;
            let x_sig = rng.sample::<f64, _>(StandardNormal) * self.sd_signal;
            let (e1, e2) = self.noise.sample(&mut rng);
            *a = self.dc + self.alpha * (x_lo + x_sig) + e1;
            *b = self.dc + self.alpha * (x_lo - x_sig) + e2;
        }
    }
}

/// Generates a trace pair for `config`. Identical configs give bit-identical traces.
pub fn sample_trace_pair(config: &SimulationConfig) -> Result<TracePair> {
    let generator = TraceGenerator::new(config)?;
    let n = generator.n_samples();
    let mut ch1 = vec![0.0; n];
    let mut ch2 = vec![0.0; n];
    ch1.par_chunks_mut(CHUNK_LEN)
        .zip(ch2.par_chunks_mut(CHUNK_LEN))
        .enumerate()
        .for_each(|(block, (out1, out2))| generator.fill_block(block, out1, out2));

    TracePair::new(ch1, ch2, TraceSource::Simulated(config.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_var(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    }

    fn diff_var(t: &TracePair) -> f64 {
        let d: Vec<f64> = t.samples().map(|(a, b)| a - b).collect();
        sample_var(&d)
    }

    fn vacuum_config(n: usize, sigma: f64) -> SimulationConfig {
        SimulationConfig {
            state: GaussianState::vacuum(),
            lo: LocalOscillator::shot_noise_limited(1.0).unwrap(),
            noise: DetectorNoiseModel::new(sigma, sigma, 0.0).unwrap(),
            n_samples: n,
            seed: 7,
            ..SimulationConfig::default()
        }
    }

    #[test]
    fn dark_noiseless_trace_is_zero() {
        let cfg = SimulationConfig {
            lo: LocalOscillator::shot_noise_limited(0.0).unwrap(),
            n_samples: 1000,
            ..SimulationConfig::default()
        };
        let t = sample_trace_pair(&cfg).unwrap();
        assert!(t.ch1().iter().chain(t.ch2()).all(|&x| x == 0.0));
    }

    #[test]
    fn vacuum_difference_variance_is_shot_noise() {
        let t = sample_trace_pair(&vacuum_config(1_000_000, 0.0)).unwrap();
        let v = diff_var(&t);
        assert!((v - 1.0).abs() < 0.01, "{v}");
    }

    #[test]
    fn electronic_noise_adds_to_difference_variance() {
        let t = sample_trace_pair(&vacuum_config(1_000_000, 1.0)).unwrap();
        let v = diff_var(&t);
        assert!((v - 3.0).abs() < 0.03, "{v}");
    }

    #[test]
    fn same_seed_same_trace() {
        let cfg = SimulationConfig {
            n_samples: 3 * CHUNK_LEN + 17,
            noise: DetectorNoiseModel::new(0.3, 0.2, 0.4).unwrap(),
            seed: 12345,
            ..SimulationConfig::default()
        };
        let a = sample_trace_pair(&cfg).unwrap();
        let b = sample_trace_pair(&cfg).unwrap();
        assert_eq!(a, b);
        let other = sample_trace_pair(&SimulationConfig { seed: 12346, ..cfg }).unwrap();
        assert_ne!(a.ch1(), other.ch1());
    }

    #[test]
    fn blocks_use_distinct_streams() {
        let cfg = SimulationConfig {
            n_samples: 2 * CHUNK_LEN,
            ..SimulationConfig::default()
        };
        let t = sample_trace_pair(&cfg).unwrap();
        assert_ne!(t.ch1()[..16], t.ch1()[CHUNK_LEN..CHUNK_LEN + 16]);
    }

    #[test]
    fn ac_coupling_only_shifts_by_dc() {
        let ac = SimulationConfig {
            lo: LocalOscillator::shot_noise_limited(3.0).unwrap(),
            n_samples: 5000,
            ..SimulationConfig::default()
        };
        let dc = SimulationConfig {
            ac_coupled: false,
            ..ac.clone()
        };
        let a = sample_trace_pair(&ac).unwrap();
        let d = sample_trace_pair(&dc).unwrap();
        for ((a1, a2), (d1, d2)) in a.samples().zip(d.samples()) {
            assert!((d1 - 4.5 - a1).abs() < 1e-12);
            assert!((d2 - 4.5 - a2).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_short_config() {
        let cfg = SimulationConfig {
            n_samples: 1,
            ..SimulationConfig::default()
        };
        assert!(matches!(
            sample_trace_pair(&cfg),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn trace_pair_invariants() {
        let src = || TraceSource::Ingested(vec![]);
        assert!(matches!(
            TracePair::new(vec![1.0, 2.0], vec![1.0], src()),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            TracePair::new(vec![1.0], vec![1.0], src()),
            Err(Error::InsufficientData { .. })
        ));
        assert!(matches!(
            TracePair::new(vec![1.0, f64::NAN], vec![1.0, 2.0], src()),
            Err(Error::NonFinite { index: 1 })
        ));
    }

    #[test]
    fn noise_model_validation() {
        assert!(DetectorNoiseModel::new(-1.0, 1.0, 0.0).is_err());
        assert!(DetectorNoiseModel::new(1.0, 1.0, 1.01).is_err());
        assert!(DetectorNoiseModel::new(1.0, 1.0, f64::NAN).is_err());
        let m = DetectorNoiseModel::new(1.0, 2.0, 0.3).unwrap();
        assert!((m.cross_covariance() - 0.6).abs() < 1e-15);
        assert_eq!(m.total_variance(), 5.0);
    }

    #[test]
    fn independent_noise_is_uncorrelated() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 1_000_000;
        let pairs: Vec<(f64, f64)> = (0..n)
            .map(|_| correlated_noise_pair(1.0, 1.0, 0.0, &mut rng))
            .collect();
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let corr = pearson(&a, &b);
        assert!(corr.abs() < 0.005, "{corr}");
    }

    #[test]
    fn fully_correlated_equal_noise_is_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let (a, b) = correlated_noise_pair(0.7, 0.7, 1.0, &mut rng);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn partial_correlation_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 1_000_000;
        let (a, b): (Vec<f64>, Vec<f64>) = (0..n)
            .map(|_| correlated_noise_pair(1.0, 2.0, 0.3, &mut rng))
            .unzip();
        let ma = a.iter().sum::<f64>() / n as f64;
        let mb = b.iter().sum::<f64>() / n as f64;
        let cov = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - ma) * (y - mb))
            .sum::<f64>()
            / (n as f64 - 1.0);
        // SE of a Gaussian covariance: √((σ₁²σ₂² + c²)/(n−1))
        let se = ((1.0 * 4.0 + 0.36) / (n as f64 - 1.0)).sqrt();
        assert!((cov - 0.6).abs() < 3.0 * se, "{cov} ± {se}");
        assert!((sample_var(&a) - 1.0).abs() < 0.01);
        assert!((sample_var(&b) - 4.0).abs() < 0.04);
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (x, y) in a.iter().zip(b) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma).powi(2);
            sbb += (y - mb).powi(2);
        }
        sab / (saa * sbb).sqrt()
    }
}
