//! Phase-noise instrumentation: tone phase extraction, Gaussian fit, Welch
//! PSD and phase-tracking error.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Welch defaults.
pub const DEFAULT_PSD_NFFT: usize = 4096;
pub const DEFAULT_PSD_OVERLAP: f64 = 0.5;

/// Wraps an angle into `(-π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    let w = (x + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Unwrapped, mean-removed phase of `y(n) e^{-j2π f n / fs}`.
pub fn extract_tone_phase(y: &[Complex64], tone_hz: f64, fs: f64) -> Result<Vec<f64>> {
    if y.is_empty() {
        return Err(Error::EmptyInput);
    }
    if tone_hz.abs() >= fs / 2.0 || tone_hz.is_nan() {
        return Err(Error::Aliasing {
            freq_hz: tone_hz,
            sample_rate_hz: fs,
        });
    }
    let step = 2.0 * PI * tone_hz / fs;
    let mut out = Vec::with_capacity(y.len());
    let mut prev = 0.0;
    for (n, v) in y.iter().enumerate() {
        let raw = (v * Complex64::from_polar(1.0, -step * n as f64)).arg();
        let unwrapped = if n == 0 {
            raw
        } else {
            prev + wrap_phase(raw - prev)
        };
        out.push(unwrapped);
        prev = unwrapped;
    }
    let mean = out.iter().sum::<f64>() / out.len() as f64;
    out.iter_mut().for_each(|v| *v -= mean);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub mean: f64,
    pub std: f64,
    pub sample_count: usize,
}

/// Method-of-moments fit: sample mean and unbiased standard deviation.
pub fn gaussian_fit(samples: &[f64]) -> Result<GaussianFit> {
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(GaussianFit {
        mean,
        std: var.sqrt(),
        sample_count: samples.len(),
    })
}

/// Two-sided power spectral density, frequencies ascending from `-fs/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdEstimate {
    pub freqs_hz: Vec<f64>,
    /// Density in dB re 1 unit²/Hz.
    pub power_db: Vec<f64>,
    pub nfft: usize,
    pub segment_overlap: f64,
    /// Linear density, same ordering as `freqs_hz`.
    #[serde(skip)]
    pub density: Vec<f64>,
}

impl PsdEstimate {
    pub fn bin_width_hz(&self) -> f64 {
        if self.freqs_hz.len() < 2 {
            0.0
        } else {
            self.freqs_hz[1] - self.freqs_hz[0]
        }
    }

    /// Integral of the density over all frequencies.
    pub fn total_power(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.bin_width_hz()
    }

    /// Fraction of the total power in `|f| < cutoff_hz`.
    pub fn fraction_below(&self, cutoff_hz: f64) -> f64 {
        let inside: f64 = self
            .freqs_hz
            .iter()
            .zip(&self.density)
            .filter(|(f, _)| f.abs() < cutoff_hz)
            .map(|(_, p)| p)
            .sum();
        let total: f64 = self.density.iter().sum();
        if total > 0.0 {
            inside / total
        } else {
            0.0
        }
    }
}

/// Welch estimate with a periodic Hann window. The record mean is removed
/// first so the integrated density equals the variance.
pub fn psd_welch(samples: &[f64], fs: f64, nfft: usize, overlap: f64) -> Result<PsdEstimate> {
    if nfft < 2 {
        return Err(Error::InvalidConfig(format!("nfft = {nfft} must be >= 2")));
    }
    if samples.len() < nfft {
        return Err(Error::InsufficientSamples {
            needed: nfft,
            got: samples.len(),
        });
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::InvalidConfig(format!(
            "overlap = {overlap} must lie in [0, 1)"
        )));
    }
    let hop = ((nfft as f64) * (1.0 - overlap)).round().max(1.0) as usize;
    // Periodic Hann.
    let window: Vec<f64> = (0..nfft)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / nfft as f64).cos())
        .collect();
    let window_power: f64 = window.iter().map(|w| w * w).sum();

    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let fft = FftPlanner::new().plan_fft_forward(nfft);
    let mut acc = vec![0.0; nfft];
    let mut segments = 0usize;
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    let mut start = 0;
    while start + nfft <= samples.len() {
        let seg = &samples[start..start + nfft];
        for ((b, &x), &w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex64::new((x - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        segments += 1;
        start += hop;
    }

    let scale = 1.0 / (fs * window_power * segments as f64);
    let half = nfft / 2;
    let mut freqs_hz = Vec::with_capacity(nfft);
    let mut density = Vec::with_capacity(nfft);
    for i in 0..nfft {
        let bin = (i + half) % nfft;
        let signed = bin as isize - if bin >= half { nfft as isize } else { 0 };
        freqs_hz.push(signed as f64 * fs / nfft as f64);
        density.push(acc[bin] * scale);
    }
    let power_db = density
        .iter()
        .map(|&p| 10.0 * p.max(f64::MIN_POSITIVE).log10())
        .collect();
    Ok(PsdEstimate {
        freqs_hz,
        power_db,
        nfft,
        segment_overlap: overlap,
        density,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseTrackingReport {
    pub rmse: f64,
    pub residual_std: f64,
}

/// Error between true and estimated phase, wrapped to `(-π, π]`.
pub fn phase_tracking_report(theta_true: &[f64], theta_est: &[f64]) -> Result<PhaseTrackingReport> {
    if theta_true.len() != theta_est.len() {
        return Err(Error::LengthMismatch {
            expected: theta_true.len(),
            actual: theta_est.len(),
        });
    }
    if theta_true.is_empty() {
        return Err(Error::EmptyInput);
    }
    let diff: Vec<f64> = theta_true
        .iter()
        .zip(theta_est)
        .map(|(t, e)| wrap_phase(t - e))
        .collect();
    let n = diff.len() as f64;
    let rmse = (diff.iter().map(|d| d * d).sum::<f64>() / n).sqrt();
    let mean = diff.iter().sum::<f64>() / n;
    let residual_std = (diff.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(PhaseTrackingReport { rmse, residual_std })
}

/// Normalized histogram: `(bin_center, density)` with unit total area.
pub fn histogram_density(samples: &[f64], bins: usize) -> Result<Vec<(f64, f64)>> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    if bins == 0 {
        return Err(Error::InvalidConfig(
            "histogram needs at least one bin".into(),
        ));
    }
    let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo {
        (hi - lo) / bins as f64
    } else {
        1.0
    };
    let mut counts = vec![0usize; bins];
    for &x in samples {
        let idx = (((x - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let norm = 1.0 / (samples.len() as f64 * width);
    Ok(counts
        .iter()
        .enumerate()
        .map(|(i, &c)| (lo + (i as f64 + 0.5) * width, c as f64 * norm))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{single_tone_probe, ChannelConfig, PhaseNoiseConfig, PhaseNoiseProcess};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn variance(x: &[f64]) -> f64 {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
    }

    #[test]
    fn wrap_range() {
        assert_abs_diff_eq!(wrap_phase(PI), PI);
        assert_abs_diff_eq!(wrap_phase(-PI), PI);
        assert_abs_diff_eq!(wrap_phase(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_phase(0.3), 0.3);
    }

    #[test]
    fn clean_tone_has_zero_phase() {
        let cfg = ChannelConfig::ideal(25e6);
        let y = single_tone_probe(3.125e6, 4096, &cfg).unwrap().samples;
        let theta = extract_tone_phase(&y, 3.125e6, 25e6).unwrap();
        assert!(theta.iter().all(|t| t.abs() < 1e-9));
    }

    #[test]
    fn constant_offset_is_centered_away() {
        let fs = 25e6;
        let f = 2e6;
        let y: Vec<Complex64> = (0..1000)
            .map(|n| Complex64::from_polar(1.0, 2.0 * PI * f * n as f64 / fs + 1.3))
            .collect();
        let theta = extract_tone_phase(&y, f, fs).unwrap();
        assert!(theta.iter().all(|t| t.abs() < 1e-9));
        assert!(extract_tone_phase(&[], f, fs).is_err());
    }

    #[test]
    fn tone_phase_tracks_generator() {
        let cfg = ChannelConfig {
            snr_db: Some(40.0),
            seed: 17,
            ..ChannelConfig::default()
        };
        let out = single_tone_probe(3.125e6, 200_000, &cfg).unwrap();
        let est = extract_tone_phase(&out.samples, 3.125e6, 25e6).unwrap();
        let mean_true = out.phase.iter().sum::<f64>() / out.phase.len() as f64;
        let centered: Vec<f64> = out.phase.iter().map(|t| t - mean_true).collect();
        let report = phase_tracking_report(&centered, &est).unwrap();
        assert!(report.rmse < 0.02, "rmse {}", report.rmse);
    }

    #[test]
    fn gaussian_fit_examples() {
        let fit = gaussian_fit(&[-1.0, 1.0]).unwrap();
        assert_eq!(fit.mean, 0.0);
        assert_abs_diff_eq!(fit.std, 2f64.sqrt(), epsilon = 1e-15);
        assert!(gaussian_fit(&[0.4; 10]).unwrap().std < 1e-15);
        assert!(gaussian_fit(&[1.0]).is_err());

        let mut p = PhaseNoiseProcess::new(PhaseNoiseConfig::default(), 25e6, 3).unwrap();
        let fit = gaussian_fit(&p.generate(1_000_000)).unwrap();
        assert!((0.247..=0.273).contains(&fit.std), "std {}", fit.std);
    }

    #[test]
    fn welch_tone_peak() {
        let fs = 1e6;
        let f0 = 125_000.0;
        let x: Vec<f64> = (0..32_768)
            .map(|n| (2.0 * PI * f0 * n as f64 / fs).cos())
            .collect();
        let psd = psd_welch(&x, fs, 1024, 0.5).unwrap();
        let (idx, _) = psd
            .density
            .iter()
            .enumerate()
            .filter(|(i, _)| psd.freqs_hz[*i] > 0.0)
            .fold(
                (0, 0.0),
                |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc },
            );
        assert_abs_diff_eq!(psd.freqs_hz[idx], f0, epsilon = 1e-6);
        assert_abs_diff_eq!(psd.freqs_hz[0], -fs / 2.0);
        assert!(psd.freqs_hz.last().unwrap() < &(fs / 2.0));
        assert_abs_diff_eq!(psd.total_power(), 0.5, epsilon = 0.5 * 0.03);
    }

    #[test]
    fn welch_white_noise_is_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..1_000_000)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let psd = psd_welch(&x, 25e6, DEFAULT_PSD_NFFT, DEFAULT_PSD_OVERLAP).unwrap();
        let mean_db = 10.0 * (psd.density.iter().sum::<f64>() / psd.nfft as f64).log10();
        for p in &psd.power_db {
            assert!((p - mean_db).abs() < 1.5, "{p} vs {mean_db}");
        }
    }

    #[test]
    fn welch_errors() {
        assert!(psd_welch(&[0.0; 10], 1.0, 16, 0.5).is_err());
        assert!(psd_welch(&[0.0; 32], 1.0, 16, 1.0).is_err());
    }

    #[test]
    fn generator_power_sits_below_bandwidth() {
        let mut p = PhaseNoiseProcess::new(PhaseNoiseConfig::default(), 25e6, 8).unwrap();
        let theta = p.generate(1_000_000);
        let psd = psd_welch(&theta, 25e6, DEFAULT_PSD_NFFT, DEFAULT_PSD_OVERLAP).unwrap();
        assert!(psd.fraction_below(1e6) >= 0.85);
    }

    #[test]
    fn tracking_report_examples() {
        let t = vec![0.1, -0.2, 0.3, 3.0];
        let r = phase_tracking_report(&t, &t).unwrap();
        assert_eq!((r.rmse, r.residual_std), (0.0, 0.0));
        let biased: Vec<f64> = t.iter().map(|x| x + 0.1).collect();
        let r = phase_tracking_report(&t, &biased).unwrap();
        assert_abs_diff_eq!(r.rmse, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(r.residual_std, 0.0, epsilon = 1e-12);
        assert!(phase_tracking_report(&t, &t[1..]).is_err());
        // Wrapping: π + 0.1 vs -π + 0.1 differ by a full turn.
        let r = phase_tracking_report(&[PI - 0.05], &[-PI + 0.05]).unwrap();
        assert_abs_diff_eq!(r.rmse, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn histogram_is_normalized() {
        let h = histogram_density(&[0.0, 0.1, 0.2, 0.3, 1.0], 4).unwrap();
        let width = h[1].0 - h[0].0;
        let area: f64 = h.iter().map(|(_, d)| d * width).sum();
        assert_abs_diff_eq!(area, 1.0, epsilon = 1e-12);
        assert!(histogram_density(&[], 4).is_err());
    }

    proptest! {
        #[test]
        fn welch_parseval(seed in any::<u64>(), len in 4096usize..20_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
            let psd = psd_welch(&x, 1e6, 512, 0.5).unwrap();
            let v = variance(&x);
            prop_assert!((psd.total_power() - v).abs() < 0.03 * v);
        }

        #[test]
        fn fit_is_affine_equivariant(
            x in prop::collection::vec(-10.0f64..10.0, 2..100),
            a in -5.0f64..5.0,
            b in -5.0f64..5.0,
        ) {
            let f = gaussian_fit(&x).unwrap();
            let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let g = gaussian_fit(&y).unwrap();
            let tol = 1e-12 * (1.0 + f.mean.abs() * a.abs() + b.abs() + f.std * a.abs()) * 100.0;
            prop_assert!((g.mean - (a * f.mean + b)).abs() < tol);
            prop_assert!((g.std - a.abs() * f.std).abs() < tol);
        }

        #[test]
        fn tone_phase_recovers_smooth_phase(
            amps in prop::collection::vec(0.0f64..0.4, 3),
            offset in -3.0f64..3.0,
        ) {
            let fs = 25e6;
            let f = 3.125e6;
            let theta: Vec<f64> = (0..2048)
                .map(|n| {
                    amps.iter()
                        .enumerate()
                        .map(|(i, a)| a * (2.0 * PI * (i + 1) as f64 * n as f64 / 2048.0).sin())
                        .sum()
                })
                .collect();
            let y: Vec<Complex64> = theta
                .iter()
                .enumerate()
                .map(|(n, t)| Complex64::from_polar(1.0, 2.0 * PI * f * n as f64 / fs + t + offset))
                .collect();
            let est = extract_tone_phase(&y, f, fs).unwrap();
            let mean = theta.iter().sum::<f64>() / theta.len() as f64;
            for (e, t) in est.iter().zip(&theta) {
                prop_assert!((e - (t - mean)).abs() < 1e-9);
            }
        }
    }
}
