//! Channel estimation, equalization and frame decoding after phase noise
//! cancellation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::baseband::{demap_hard, power_ratio_db, Modulation, EVM_FLOOR_DB};
use crate::ofdm::{OfdmConfig, OfdmModem, PREAMBLE_SYMBOLS};
use crate::pnc::PhaseNoiseCanceller;
use crate::{Error, Result};

/// Equalizer bins with `|Ĥ| < ERASURE_FRACTION · max|Ĥ|` are erased.
pub const ERASURE_FRACTION: f64 = 1e-6;

/// Least-squares channel estimate on the trained bins.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    /// Ĥ indexed by DFT bin; zero on bins the preamble does not train.
    pub h_freq: Vec<Complex64>,
    /// Bins carrying an estimate (pilot and payload).
    pub bins: Vec<usize>,
    /// Per-bin noise power estimated from the preamble repeats.
    pub noise_floor_est: f64,
}

/// `Ĥ(k) = mean_i Y_i(k) / T(k)` over the preamble repeats.
pub fn estimate_channel_ls(
    preamble_bins: &[Vec<Complex64>],
    training: &[Complex64],
    bins: &[usize],
) -> Result<ChannelEstimate> {
    if preamble_bins.is_empty() {
        return Err(Error::EmptyInput);
    }
    for sym in preamble_bins {
        if sym.len() != training.len() {
            return Err(Error::LengthMismatch {
                expected: training.len(),
                actual: sym.len(),
            });
        }
    }
    let repeats = preamble_bins.len() as f64;
    let mut h_freq = vec![Complex64::new(0.0, 0.0); training.len()];
    let mut diff_power = 0.0;
    for &b in bins {
        let t = training[b];
        if t.norm() == 0.0 {
            return Err(Error::ZeroTraining(b));
        }
        h_freq[b] = preamble_bins.iter().map(|y| y[b] / t).sum::<Complex64>() / repeats;
        if preamble_bins.len() >= 2 {
            diff_power += (preamble_bins[0][b] - preamble_bins[1][b]).norm_sqr();
        }
    }
    // Y0 - Y1 carries twice the per-bin noise power.
    let noise_floor_est = if bins.is_empty() {
        0.0
    } else {
        diff_power / (2.0 * bins.len() as f64)
    };
    Ok(ChannelEstimate {
        h_freq,
        bins: bins.to_vec(),
        noise_floor_est,
    })
}

/// Equalized payload bins; erased bins hold zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Equalized {
    pub points: Vec<Complex64>,
    pub erased: Vec<bool>,
}

impl Equalized {
    pub fn erased_count(&self) -> usize {
        self.erased.iter().filter(|&&e| e).count()
    }
}

/// `Z(k) = Y(k) / Ĥ(k)` on `payload_bins`.
pub fn equalize(bins: &[Complex64], est: &ChannelEstimate, payload_bins: &[usize]) -> Equalized {
    let h_max = est
        .bins
        .iter()
        .map(|&b| est.h_freq[b].norm())
        .fold(0.0, f64::max);
    let threshold = ERASURE_FRACTION * h_max;
    let mut points = Vec::with_capacity(payload_bins.len());
    let mut erased = Vec::with_capacity(payload_bins.len());
    for &b in payload_bins {
        let h = est.h_freq[b];
        if h.norm() < threshold || h.norm() == 0.0 {
            points.push(Complex64::new(0.0, 0.0));
            erased.push(true);
        } else {
            points.push(bins[b] / h);
            erased.push(false);
        }
    }
    Equalized { points, erased }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeReport {
    pub bits: Vec<u8>,
    /// Decision-directed EVM over all payload points.
    pub evm_db: f64,
    /// Spread of the equalized pilot phase across payload symbols.
    pub residual_phase_std: f64,
    pub per_symbol_evm: Vec<f64>,
    /// Equalized payload points in transmission order.
    #[serde(skip)]
    pub points: Vec<Complex64>,
    pub erased_bins: usize,
    /// EVM against the transmitted symbols, when they were supplied.
    pub genie_evm_db: Option<f64>,
    /// Per-sample phase removed by cancellation, all symbols concatenated.
    /// Empty when cancellation is off.
    #[serde(skip)]
    pub estimated_phase: Vec<f64>,
}

/// Receive chain for one OFDM configuration.
#[derive(Debug, Clone)]
pub struct Receiver {
    modem: OfdmModem,
    canceller: PhaseNoiseCanceller,
    training: Vec<Complex64>,
}

impl Receiver {
    pub fn new(cfg: OfdmConfig) -> Self {
        let canceller = PhaseNoiseCanceller::new(&cfg);
        let modem = OfdmModem::new(cfg);
        let training = modem.training_bins();
        Self {
            modem,
            canceller,
            training,
        }
    }

    pub fn config(&self) -> &OfdmConfig {
        self.modem.config()
    }

    /// Decodes a symbol-aligned frame.
    pub fn decode_frame(
        &self,
        rx_samples: &[Complex64],
        modulation: Modulation,
        pnc_enabled: bool,
    ) -> Result<DecodeReport> {
        self.decode(rx_samples, modulation, pnc_enabled, None)
    }

    /// Decodes and also scores the points against the transmitted bits.
    pub fn decode_frame_with_reference(
        &self,
        rx_samples: &[Complex64],
        modulation: Modulation,
        pnc_enabled: bool,
        tx_bits: &[u8],
    ) -> Result<DecodeReport> {
        self.decode(rx_samples, modulation, pnc_enabled, Some(tx_bits))
    }

    fn decode(
        &self,
        rx_samples: &[Complex64],
        modulation: Modulation,
        pnc_enabled: bool,
        tx_bits: Option<&[u8]>,
    ) -> Result<DecodeReport> {
        let cfg = self.modem.config();
        let sym_len = cfg.symbol_len();
        let needed = PREAMBLE_SYMBOLS * sym_len;
        if rx_samples.len() < needed || !rx_samples.len().is_multiple_of(sym_len) {
            return Err(Error::FrameTooShort {
                samples: rx_samples.len(),
                needed: needed.max(rx_samples.len().div_ceil(sym_len) * sym_len),
            });
        }

        let mut estimated_phase = Vec::new();
        let mut symbol_bins = Vec::with_capacity(rx_samples.len() / sym_len);
        for sym in rx_samples.chunks_exact(sym_len) {
            let bins = if pnc_enabled {
                let (clean, est) = self.canceller.process_symbol_with_estimate(sym)?;
                estimated_phase.extend_from_slice(&est.per_sample_phase);
                self.modem.dft().forward(&clean)?
            } else {
                self.modem.demodulate_symbol(sym)?
            };
            symbol_bins.push(bins);
        }

        let plan = &cfg.plan;
        let estimate = estimate_channel_ls(
            &symbol_bins[..PREAMBLE_SYMBOLS],
            &self.training,
            &plan.occupied_indices(),
        )?;

        let payload = &symbol_bins[PREAMBLE_SYMBOLS..];
        let n_points = payload.len() * plan.payload_indices.len();
        let mut bits = Vec::with_capacity(n_points * modulation.bits_per_symbol());
        let mut points = Vec::with_capacity(n_points);
        let mut per_symbol_evm = Vec::with_capacity(payload.len());
        let mut pilot_phases = Vec::with_capacity(payload.len());
        let mut erased_bins = 0;
        let mut err_total = 0.0;
        let mut counted = 0usize;

        for bins in payload {
            let eq = equalize(bins, &estimate, &plan.payload_indices);
            erased_bins += eq.erased_count();

            let mut err = 0.0;
            let mut n = 0usize;
            for (z, &erased) in eq.points.iter().zip(&eq.erased) {
                if erased {
                    bits.extend(std::iter::repeat_n(0u8, modulation.bits_per_symbol()));
                    continue;
                }
                let label = modulation.decide(*z);
                err += (z - modulation.point(label)).norm_sqr();
                n += 1;
                bits.extend(demap_hard(std::slice::from_ref(z), modulation));
            }
            per_symbol_evm.push(if n == 0 {
                EVM_FLOOR_DB
            } else {
                power_ratio_db(err / n as f64)
            });
            err_total += err;
            counted += n;
            points.extend_from_slice(&eq.points);

            let pilot = bins[plan.pilot_index] / estimate.h_freq[plan.pilot_index];
            pilot_phases.push((pilot / cfg.pilot_value).arg());
        }

        let evm_db = if counted == 0 {
            EVM_FLOOR_DB
        } else {
            power_ratio_db(err_total / counted as f64)
        };

        let genie_evm_db = match tx_bits {
            Some(tx) => Some(genie_evm(&points, tx, modulation)?),
            None => None,
        };

        Ok(DecodeReport {
            bits,
            evm_db,
            residual_phase_std: std_dev(&pilot_phases),
            per_symbol_evm,
            points,
            erased_bins,
            genie_evm_db,
            estimated_phase,
        })
    }
}

fn genie_evm(points: &[Complex64], tx_bits: &[u8], modulation: Modulation) -> Result<f64> {
    let reference = crate::baseband::map_bits(tx_bits, modulation)?;
    if reference.len() != points.len() {
        return Err(Error::LengthMismatch {
            expected: points.len(),
            actual: reference.len(),
        });
    }
    if points.is_empty() {
        return Ok(EVM_FLOOR_DB);
    }
    let err: f64 = points
        .iter()
        .zip(&reference)
        .map(|(z, r)| (z - r).norm_sqr())
        .sum();
    Ok(power_ratio_db(err / points.len() as f64))
}

/// Population standard deviation; zero for fewer than two values.
fn std_dev(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}
