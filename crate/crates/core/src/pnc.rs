//! Per-symbol phase noise estimation and cancellation.
//!
//! Phase noise spreads the DC pilot over its neighbouring bins. Keeping only
//! bins `-K..=K` of the received symbol and transforming back yields a
//! time-domain copy of the pilot that carries the phase trajectory
//! `p̂(n) ∝ e^{jθ(n)}`. The symbol is then de-rotated sample by sample with
//! `r(n) = y(n) e^{-j∠p̂(n)}`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::ofdm::{OfdmConfig, UnitaryDft};
use crate::{Error, Result, SampleBuffer};

/// Magnitude below which `p̂(n)` carries no usable phase.
pub const DEGENERATE_MAGNITUDE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseEstimate {
    /// Estimated phase per sample, in `(-π, π]`.
    pub per_sample_phase: Vec<f64>,
    /// `p̂(n)` before angle extraction.
    pub raw_complex: Vec<Complex64>,
    /// Samples whose phase was carried over from the previous sample.
    pub degenerate_samples: usize,
}

/// Phase noise canceller for one OFDM configuration.
#[derive(Debug, Clone)]
pub struct PhaseNoiseCanceller {
    dft: UnitaryDft,
    kept_bins: Vec<usize>,
    cp_len: usize,
}

impl PhaseNoiseCanceller {
    pub fn new(cfg: &OfdmConfig) -> Self {
        let n = cfg.n_fft();
        let k = cfg.plan.k_guard;
        let kept_bins = (0..=k)
            .chain(n - k..n)
            .collect::<std::collections::BTreeSet<_>>();
        Self {
            dft: UnitaryDft::new(n),
            kept_bins: kept_bins.into_iter().collect(),
            cp_len: cfg.cp_len,
        }
    }

    /// Bins retained for estimation: DC and the `K` guards on each side.
    pub fn kept_bins(&self) -> &[usize] {
        &self.kept_bins
    }

    /// Estimates the phase trajectory of a CP-stripped symbol body.
    pub fn estimate(&self, body: &[Complex64]) -> Result<PhaseEstimate> {
        let bins = self.dft.forward(body)?;
        self.estimate_from_bins(&bins)
    }

    /// Same as [`estimate`](Self::estimate) for a symbol already in the
    /// frequency domain.
    pub fn estimate_from_bins(&self, bins: &[Complex64]) -> Result<PhaseEstimate> {
        let n = self.dft.len();
        if bins.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: bins.len(),
            });
        }
        let mut kept = vec![Complex64::new(0.0, 0.0); n];
        for &b in &self.kept_bins {
            kept[b] = bins[b];
        }
        let raw_complex = self.dft.inverse(&kept)?;

        let mut per_sample_phase = Vec::with_capacity(n);
        let mut degenerate_samples = 0;
        let mut previous = 0.0;
        for p in &raw_complex {
            let phase = if p.norm() < DEGENERATE_MAGNITUDE {
                degenerate_samples += 1;
                previous
            } else {
                half_open_arg(*p)
            };
            per_sample_phase.push(phase);
            previous = phase;
        }
        Ok(PhaseEstimate {
            per_sample_phase,
            raw_complex,
            degenerate_samples,
        })
    }

    /// Strips the cyclic prefix, estimates and removes the phase noise.
    pub fn process_symbol(&self, y_with_cp: &[Complex64]) -> Result<SampleBuffer> {
        self.process_symbol_with_estimate(y_with_cp).map(|(r, _)| r)
    }

    pub fn process_symbol_with_estimate(
        &self,
        y_with_cp: &[Complex64],
    ) -> Result<(SampleBuffer, PhaseEstimate)> {
        let expected = self.dft.len() + self.cp_len;
        if y_with_cp.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: y_with_cp.len(),
            });
        }
        let body = &y_with_cp[self.cp_len..];
        let est = self.estimate(body)?;
        let r = cancel(body, &est)?;
        Ok((r, est))
    }
}

fn half_open_arg(z: Complex64) -> f64 {
    let a = z.arg();
    if a <= -PI {
        a + 2.0 * PI
    } else {
        a
    }
}

/// `r(n) = y(n) e^{-j phase(n)}`.
pub fn cancel(y: &[Complex64], est: &PhaseEstimate) -> Result<SampleBuffer> {
    if y.len() != est.per_sample_phase.len() {
        return Err(Error::LengthMismatch {
            expected: est.per_sample_phase.len(),
            actual: y.len(),
        });
    }
    Ok(y.iter()
        .zip(&est.per_sample_phase)
        .map(|(v, &phase)| v * Complex64::from_polar(1.0, -phase))
        .collect())
}

/// One-shot estimate on a CP-stripped body.
pub fn estimate_phase(body: &[Complex64], cfg: &OfdmConfig) -> Result<PhaseEstimate> {
    PhaseNoiseCanceller::new(cfg).estimate(body)
}

/// One-shot cancellation of a full symbol with cyclic prefix.
pub fn pnc_symbol(y_with_cp: &[Complex64], cfg: &OfdmConfig) -> Result<SampleBuffer> {
    PhaseNoiseCanceller::new(cfg).process_symbol(y_with_cp)
}
