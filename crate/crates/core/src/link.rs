//! End-to-end frame simulation: random bits through transmitter, channel and
//! receiver, with per-frame seeds derived from one master seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseband::{Modulation, EVM_FLOOR_DB};
use crate::channel::{apply_channel, ChannelConfig, ChannelOutput};
use crate::metrics::phase_tracking_report;
use crate::ofdm::{OfdmConfig, OfdmModem, PREAMBLE_SYMBOLS};
use crate::receiver::{DecodeReport, Receiver};
use crate::{Complex64, Error, Result};

pub const DEFAULT_PAYLOAD_SYMBOLS: usize = 20;

/// Splitmix64 finalizer over `master + index`; gives each frame an
/// independent, order-free seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    pub ofdm: OfdmConfig,
    pub modulation: Modulation,
    pub n_payload_symbols: usize,
    pub channel: ChannelConfig,
    pub pnc_enabled: bool,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            ofdm: OfdmConfig::default(),
            modulation: Modulation::Qpsk,
            n_payload_symbols: DEFAULT_PAYLOAD_SYMBOLS,
            channel: ChannelConfig::default(),
            pnc_enabled: true,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_payload_symbols == 0 {
            return Err(Error::InvalidConfig(
                "n_payload_symbols must be >= 1".into(),
            ));
        }
        if (self.channel.sample_rate_hz - self.ofdm.sample_rate_hz).abs()
            > 1e-9 * self.ofdm.sample_rate_hz
        {
            return Err(Error::InvalidConfig(format!(
                "channel sample rate {} differs from PHY sample rate {}",
                self.channel.sample_rate_hz, self.ofdm.sample_rate_hz
            )));
        }
        self.channel.validate()
    }

    pub fn frame_capacity_bits(&self) -> usize {
        self.n_payload_symbols * self.ofdm.bits_per_ofdm_symbol(self.modulation)
    }

    /// Channel uses (samples) per frame, preamble and cyclic prefixes included.
    pub fn frame_samples(&self) -> usize {
        (PREAMBLE_SYMBOLS + self.n_payload_symbols) * self.ofdm.symbol_len()
    }

    /// Warns once when the tap span exceeds the cyclic prefix.
    pub(crate) fn warn_on_isi(&self) {
        if self.channel.exceeds_cyclic_prefix(self.ofdm.cp_len) {
            log::warn!(
                "{} channel taps exceed the {}-sample cyclic prefix; expect inter-symbol interference",
                self.channel.taps.len(),
                self.ofdm.cp_len
            );
        }
    }
}

/// Transmitter, channel and receiver for one configuration.
#[derive(Debug, Clone)]
pub struct Link {
    cfg: LinkConfig,
    modem: OfdmModem,
    receiver: Receiver,
}

/// A decoded frame together with what was sent and applied.
#[derive(Debug, Clone)]
pub struct FrameOutcome {
    pub tx_bits: Vec<u8>,
    pub report: DecodeReport,
    pub channel: ChannelOutput,
}

impl Link {
    pub fn new(cfg: LinkConfig) -> Result<Self> {
        cfg.validate()?;
        cfg.warn_on_isi();
        Ok(Self {
            modem: OfdmModem::new(cfg.ofdm.clone()),
            receiver: Receiver::new(cfg.ofdm.clone()),
            cfg,
        })
    }

    pub fn config(&self) -> &LinkConfig {
        &self.cfg
    }

    /// Sends `bits` (at most one frame's capacity, zero-padded) through a
    /// channel seeded with `channel_seed`.
    pub fn transmit(&self, bits: &[u8], channel_seed: u64) -> Result<FrameOutcome> {
        let capacity = self.cfg.frame_capacity_bits();
        if bits.len() > capacity {
            return Err(Error::Capacity {
                bits: bits.len(),
                symbols: self.cfg.n_payload_symbols,
                per_symbol: self.cfg.ofdm.bits_per_ofdm_symbol(self.cfg.modulation),
            });
        }
        let mut tx_bits = bits.to_vec();
        tx_bits.resize(capacity, 0);
        let frame =
            self.modem
                .build_frame(&tx_bits, self.cfg.modulation, self.cfg.n_payload_symbols)?;
        let channel_cfg = ChannelConfig {
            seed: channel_seed,
            ..self.cfg.channel.clone()
        };
        let channel = apply_channel(&frame.samples(), &channel_cfg)?;
        let report = self.receiver.decode_frame_with_reference(
            &channel.samples,
            self.cfg.modulation,
            self.cfg.pnc_enabled,
            &tx_bits,
        )?;
        Ok(FrameOutcome {
            tx_bits,
            report,
            channel,
        })
    }

    /// Runs frame `index` of a simulation with random payload bits.
    pub fn run_frame(&self, master_seed: u64, index: u64) -> Result<FrameOutcome> {
        let seed = derive_seed(master_seed, index);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bits: Vec<u8> = (0..self.cfg.frame_capacity_bits())
            .map(|_| rng.random_range(0..2u8))
            .collect();
        self.transmit(&bits, seed)
    }

    pub fn simulate(&self, n_frames: usize, master_seed: u64) -> Result<LinkReport> {
        let frames = (0..n_frames as u64)
            .into_par_iter()
            .map(|i| {
                let outcome = self.run_frame(master_seed, i)?;
                FrameSummary::from_outcome(i as usize, &self.cfg.ofdm, &outcome)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LinkReport::from_frames(frames))
    }
}

/// Drops the cyclic-prefix samples of a per-sample phase trajectory, leaving
/// the samples the receiver's FFT window sees.
pub fn body_phase(phase: &[f64], cfg: &OfdmConfig) -> Vec<f64> {
    phase
        .chunks_exact(cfg.symbol_len())
        .flat_map(|sym| &sym[cfg.cp_len..])
        .copied()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSummary {
    pub frame: usize,
    pub evm_db: f64,
    pub genie_evm_db: f64,
    /// Pilot-bin phase spread across payload symbols.
    pub residual_phase_std: f64,
    /// Spread of the per-sample phase left after cancellation, against the
    /// channel's ground truth. Without cancellation this is the spread of
    /// the phase noise itself.
    pub tracking_residual_std: f64,
    pub bit_errors: usize,
    pub bits: usize,
    pub erased_bins: usize,
    #[serde(skip)]
    pub points: Vec<Complex64>,
}

impl FrameSummary {
    pub fn from_outcome(frame: usize, cfg: &OfdmConfig, outcome: &FrameOutcome) -> Result<Self> {
        let report = &outcome.report;
        let truth = body_phase(&outcome.channel.phase, cfg);
        let estimate = if report.estimated_phase.is_empty() {
            vec![0.0; truth.len()]
        } else {
            report.estimated_phase.clone()
        };
        let tracking = phase_tracking_report(&truth, &estimate)?;
        let bit_errors = outcome
            .tx_bits
            .iter()
            .zip(&report.bits)
            .filter(|(a, b)| a != b)
            .count();
        Ok(Self {
            frame,
            evm_db: report.evm_db,
            genie_evm_db: report.genie_evm_db.unwrap_or(EVM_FLOOR_DB),
            residual_phase_std: report.residual_phase_std,
            tracking_residual_std: tracking.residual_std,
            bit_errors,
            bits: outcome.tx_bits.len(),
            erased_bins: report.erased_bins,
            points: report.points.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkReport {
    pub n_frames: usize,
    /// Arithmetic mean of the per-frame EVM in dB.
    pub mean_evm_db: f64,
    pub mean_residual_phase_std: f64,
    /// RMS over frames of the per-sample tracking residual.
    pub tracking_residual_std: f64,
    pub bit_error_rate: f64,
    pub frames: Vec<FrameSummary>,
}

impl LinkReport {
    pub fn from_frames(frames: Vec<FrameSummary>) -> Self {
        let n = frames.len();
        let mean = |f: &dyn Fn(&FrameSummary) -> f64, empty: f64| {
            if n == 0 {
                empty
            } else {
                frames.iter().map(f).sum::<f64>() / n as f64
            }
        };
        let mean_evm_db = mean(&|f| f.evm_db, EVM_FLOOR_DB);
        let mean_residual_phase_std = mean(&|f| f.residual_phase_std, 0.0);
        let tracking_residual_std = mean(&|f| f.tracking_residual_std.powi(2), 0.0).sqrt();
        let total_bits: usize = frames.iter().map(|f| f.bits).sum();
        let errors: usize = frames.iter().map(|f| f.bit_errors).sum();
        Self {
            n_frames: n,
            mean_evm_db,
            mean_residual_phase_std,
            tracking_residual_std,
            bit_error_rate: if total_bits == 0 {
                0.0
            } else {
                errors as f64 / total_bits as f64
            },
            frames,
        }
    }
}

/// Convenience wrapper: builds a [`Link`] and simulates `n_frames`.
pub fn simulate(cfg: &LinkConfig, n_frames: usize, master_seed: u64) -> Result<LinkReport> {
    Link::new(cfg.clone())?.simulate(n_frames, master_seed)
}
