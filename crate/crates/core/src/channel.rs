//! Baseband channel with multipath, multiplicative phase noise and AWGN:
//!
//! `y(n) = e^{jθ(n)} · Σ_l h(l) x(n-l) · e^{j2π f_cfo n / fs} + w(n)`
//!
//! The phase process θ(n) is the combined transmit/receive oscillator
//! phase; it is drawn directly rather than as two separate processes.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, SampleBuffer};

/// The filtered-Gaussian corner sits this far below the phase-noise
/// bandwidth, so `bandwidth_hz` bounds the occupied band rather than the
/// 3-dB point.
pub const CORNER_RATIO: f64 = 0.085;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PhaseNoiseModel {
    FilteredGaussian,
    RandomWalk,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseNoiseConfig {
    pub model: PhaseNoiseModel,
    /// Stationary standard deviation of θ in radians. For the random walk,
    /// the drift standard deviation over `drift_window` samples.
    pub sigma: f64,
    /// Phase-noise bandwidth B_pn: the band holding the dominant power.
    pub bandwidth_hz: f64,
    #[serde(default = "default_drift_window")]
    pub drift_window: usize,
}

fn default_drift_window() -> usize {
    80
}

impl Default for PhaseNoiseConfig {
    fn default() -> Self {
        Self {
            model: PhaseNoiseModel::FilteredGaussian,
            sigma: 0.26,
            bandwidth_hz: 1e6,
            drift_window: default_drift_window(),
        }
    }
}

impl PhaseNoiseConfig {
    pub fn none() -> Self {
        Self {
            model: PhaseNoiseModel::None,
            sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self, sample_rate_hz: f64) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "phase_noise.sigma = {} must be finite and >= 0",
                self.sigma
            )));
        }
        match self.model {
            PhaseNoiseModel::None => Ok(()),
            PhaseNoiseModel::FilteredGaussian | PhaseNoiseModel::RandomWalk => {
                if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz < sample_rate_hz / 2.0) {
                    return Err(Error::InvalidConfig(format!(
                        "phase_noise.bandwidth_hz = {} must lie in (0, {})",
                        self.bandwidth_hz,
                        sample_rate_hz / 2.0
                    )));
                }
                if self.model == PhaseNoiseModel::RandomWalk && self.drift_window == 0 {
                    return Err(Error::InvalidConfig(
                        "phase_noise.drift_window must be positive".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// 3-dB corner of the filtered-Gaussian shaping filter.
    pub fn corner_hz(&self) -> f64 {
        self.bandwidth_hz * CORNER_RATIO
    }
}

/// Second-order Butterworth low-pass in transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
    state: [f64; 2],
}

impl Biquad {
    pub fn butterworth_lowpass(corner_hz: f64, sample_rate_hz: f64) -> Self {
        let k = (PI * corner_hz / sample_rate_hz).tan();
        let k2 = k * k;
        let sqrt2 = std::f64::consts::SQRT_2;
        let norm = 1.0 / (1.0 + sqrt2 * k + k2);
        let b0 = k2 * norm;
        Self {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k2 - 1.0) * norm, (1.0 - sqrt2 * k + k2) * norm],
            state: [0.0; 2],
        }
    }

    #[inline]
    pub fn step(&mut self, x: f64) -> f64 {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let y = b0 * x + self.state[0];
        self.state[0] = b1 * x - a1 * y + self.state[1];
        self.state[1] = b2 * x - a2 * y;
        y
    }

    /// Stationary covariance `[p11, p12, p22]` of the state under unit white
    /// input, from the discrete Lyapunov equation.
    fn stationary_state_cov(&self) -> [f64; 3] {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let g1 = b1 - a1 * b0;
        let g2 = b2 - a2 * b0;
        let denom = 1.0 - a1 * a1 - a2 * a2 + 2.0 * a1 * a1 * a2 / (1.0 + a2);
        let p11 = (g1 * g1 + g2 * g2 - 2.0 * a1 * g1 * g2 / (1.0 + a2)) / denom;
        let p12 = (a1 * a2 * p11 + g1 * g2) / (1.0 + a2);
        let p22 = a2 * a2 * p11 + g2 * g2;
        [p11, p12, p22]
    }

    /// Output variance under unit-variance white input.
    pub fn stationary_output_var(&self) -> f64 {
        self.stationary_state_cov()[0] + self.b[0] * self.b[0]
    }

    /// Draws the state from its stationary distribution.
    fn randomize_state(&mut self, rng: &mut ChaCha8Rng) {
        let [p11, p12, p22] = self.stationary_state_cov();
        let l11 = p11.max(0.0).sqrt();
        let l21 = if l11 > 0.0 { p12 / l11 } else { 0.0 };
        let l22 = (p22 - l21 * l21).max(0.0).sqrt();
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        self.state = [l11 * z1, l21 * z1 + l22 * z2];
    }
}

#[derive(Debug, Clone)]
enum Generator {
    Filtered { filter: Biquad, gain: f64 },
    Walk { step_std: f64, phase: f64 },
    Silent,
}

/// Seeded generator of θ(n). Successive calls to [`generate`](Self::generate)
/// continue one realization.
#[derive(Debug, Clone)]
pub struct PhaseNoiseProcess {
    config: PhaseNoiseConfig,
    generator: Generator,
    rng: ChaCha8Rng,
}

impl PhaseNoiseProcess {
    pub fn new(config: PhaseNoiseConfig, sample_rate_hz: f64, seed: u64) -> Result<Self> {
        Self::with_rng(config, sample_rate_hz, ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn with_rng(
        config: PhaseNoiseConfig,
        sample_rate_hz: f64,
        mut rng: ChaCha8Rng,
    ) -> Result<Self> {
        config.validate(sample_rate_hz)?;
        let generator = match config.model {
            PhaseNoiseModel::None => Generator::Silent,
            _ if config.sigma == 0.0 => Generator::Silent,
            PhaseNoiseModel::FilteredGaussian => {
                let mut filter = Biquad::butterworth_lowpass(config.corner_hz(), sample_rate_hz);
                let gain = config.sigma / filter.stationary_output_var().sqrt();
                filter.randomize_state(&mut rng);
                Generator::Filtered { filter, gain }
            }
            PhaseNoiseModel::RandomWalk => Generator::Walk {
                step_std: config.sigma / (config.drift_window as f64).sqrt(),
                phase: 0.0,
            },
        };
        Ok(Self {
            config,
            generator,
            rng,
        })
    }

    pub fn config(&self) -> &PhaseNoiseConfig {
        &self.config
    }

    pub fn generate(&mut self, n: usize) -> Vec<f64> {
        let rng = &mut self.rng;
        match &mut self.generator {
            Generator::Silent => vec![0.0; n],
            Generator::Filtered { filter, gain } => (0..n)
                .map(|_| {
                    let w: f64 = StandardNormal.sample(rng);
                    *gain * filter.step(w)
                })
                .collect(),
            Generator::Walk { step_std, phase } => (0..n)
                .map(|_| {
                    let current = *phase;
                    let w: f64 = StandardNormal.sample(rng);
                    *phase += *step_std * w;
                    current
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// Multipath taps h(0..L-1); normalized to unit energy on use.
    pub taps: Vec<Complex64>,
    /// `None` disables additive noise.
    pub snr_db: Option<f64>,
    pub phase_noise: PhaseNoiseConfig,
    pub cfo_hz: f64,
    pub sample_rate_hz: f64,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            taps: vec![Complex64::new(1.0, 0.0)],
            snr_db: Some(40.0),
            phase_noise: PhaseNoiseConfig::default(),
            cfo_hz: 0.0,
            sample_rate_hz: 25e6,
            seed: 0,
        }
    }
}

impl ChannelConfig {
    /// Identity channel: single unit tap, no noise, no phase noise.
    pub fn ideal(sample_rate_hz: f64) -> Self {
        Self {
            snr_db: None,
            phase_noise: PhaseNoiseConfig::none(),
            sample_rate_hz,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sample_rate_hz = {} must be positive",
                self.sample_rate_hz
            )));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "snr_db = {snr} must be finite"
                )));
            }
        }
        if !self.cfo_hz.is_finite() {
            return Err(Error::InvalidConfig("cfo_hz must be finite".into()));
        }
        self.phase_noise.validate(self.sample_rate_hz)?;
        self.normalized_taps().map(|_| ())
    }

    pub fn normalized_taps(&self) -> Result<Vec<Complex64>> {
        if self.taps.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one channel tap is required".into(),
            ));
        }
        let energy: f64 = self.taps.iter().map(|t| t.norm_sqr()).sum();
        if !(energy.is_finite() && energy > 0.0) {
            return Err(Error::InvalidConfig("channel taps have zero energy".into()));
        }
        let scale = 1.0 / energy.sqrt();
        Ok(self.taps.iter().map(|t| t * scale).collect())
    }

    /// True when the tap span exceeds the cyclic prefix and the link will
    /// see inter-symbol interference.
    pub fn exceeds_cyclic_prefix(&self, cp_len: usize) -> bool {
        self.taps.len() > cp_len
    }

    fn stream_rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Channel output together with the ground-truth phase that was applied.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelOutput {
    pub samples: SampleBuffer,
    pub phase: Vec<f64>,
}

/// Draws θ(n) from the configured process and applies the channel.
pub fn apply_channel(x: &[Complex64], cfg: &ChannelConfig) -> Result<ChannelOutput> {
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    cfg.validate()?;
    let mut process = PhaseNoiseProcess::with_rng(
        cfg.phase_noise.clone(),
        cfg.sample_rate_hz,
        cfg.stream_rng(1),
    )?;
    let phase = process.generate(x.len());
    let samples = apply_channel_with_phase(x, cfg, &phase)?;
    Ok(ChannelOutput { samples, phase })
}

/// Applies the channel with a caller-supplied phase trajectory.
pub fn apply_channel_with_phase(
    x: &[Complex64],
    cfg: &ChannelConfig,
    phase: &[f64],
) -> Result<SampleBuffer> {
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    if phase.len() != x.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: phase.len(),
        });
    }
    cfg.validate()?;
    let taps = cfg.normalized_taps()?;

    let faded: Vec<Complex64> = (0..x.len())
        .map(|n| {
            taps.iter()
                .enumerate()
                .take(n + 1)
                .map(|(l, h)| h * x[n - l])
                .sum()
        })
        .collect();

    let cfo_step = 2.0 * PI * cfg.cfo_hz / cfg.sample_rate_hz;
    let mut y: Vec<Complex64> = faded
        .iter()
        .zip(phase)
        .enumerate()
        .map(|(n, (s, &theta))| s * Complex64::from_polar(1.0, theta + cfo_step * n as f64))
        .collect();

    if let Some(snr_db) = cfg.snr_db {
        let signal_power = faded.iter().map(|s| s.norm_sqr()).sum::<f64>() / faded.len() as f64;
        let noise_std = (signal_power / 10f64.powf(snr_db / 10.0) / 2.0).sqrt();
        if noise_std > 0.0 {
            let mut rng = cfg.stream_rng(2);
            for v in &mut y {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                *v += Complex64::new(re, im) * noise_std;
            }
        }
    }
    Ok(y)
}

/// Default probe tone: an eighth of the sample rate.
pub fn default_probe_tone_hz(sample_rate_hz: f64) -> f64 {
    sample_rate_hz / 8.0
}

/// Sends `e^{j2πfn/fs}` for `duration` samples through the channel.
pub fn single_tone_probe(
    freq_hz: f64,
    duration: usize,
    cfg: &ChannelConfig,
) -> Result<ChannelOutput> {
    if freq_hz.abs() >= cfg.sample_rate_hz / 2.0 || freq_hz.is_nan() {
        return Err(Error::Aliasing {
            freq_hz,
            sample_rate_hz: cfg.sample_rate_hz,
        });
    }
    if duration == 0 {
        cfg.validate()?;
        return Ok(ChannelOutput {
            samples: Vec::new(),
            phase: Vec::new(),
        });
    }
    let step = 2.0 * PI * freq_hz / cfg.sample_rate_hz;
    let x: Vec<Complex64> = (0..duration)
        .map(|n| Complex64::from_polar(1.0, step * n as f64))
        .collect();
    apply_channel(&x, cfg)
}
