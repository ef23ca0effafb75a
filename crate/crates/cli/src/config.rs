use std::fs;
use std::path::{Path, PathBuf};

use pnc_core::baseband::Modulation;
use pnc_core::channel::{default_probe_tone_hz, ChannelConfig, PhaseNoiseConfig};
use pnc_core::link::{LinkConfig, DEFAULT_PAYLOAD_SYMBOLS};
use pnc_core::metrics::{DEFAULT_PSD_NFFT, DEFAULT_PSD_OVERLAP};
use pnc_core::ofdm::{OfdmConfig, SubcarrierPlan};
use pnc_core::Complex64;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhyConfig {
    pub n_fft: usize,
    pub cp_len: usize,
    pub k_guard: usize,
    pub used_band: usize,
    pub sample_rate_hz: f64,
    pub n_payload_symbols: usize,
}

impl Default for PhyConfig {
    fn default() -> Self {
        Self {
            n_fft: 64,
            cp_len: 16,
            k_guard: 3,
            used_band: 26,
            sample_rate_hz: 25e6,
            n_payload_symbols: DEFAULT_PAYLOAD_SYMBOLS,
        }
    }
}

/// Channel settings; the sample rate comes from `phy` and the seed from the
/// top-level `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    /// `[re, im]` pairs.
    pub taps: Vec<Complex64>,
    /// `null` disables additive noise.
    pub snr_db: Option<f64>,
    pub phase_noise: PhaseNoiseConfig,
    pub cfo_hz: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        let c = ChannelConfig::default();
        Self {
            taps: c.taps,
            snr_db: c.snr_db,
            phase_noise: c.phase_noise,
            cfo_hz: c.cfo_hz,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureConfig {
    pub n_samples: usize,
    /// Probe tone; `null` picks fs/8.
    pub tone_hz: Option<f64>,
    pub psd_nfft: usize,
    pub psd_overlap: f64,
    pub pdf_bins: usize,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self {
            n_samples: 1_000_000,
            tone_hz: None,
            psd_nfft: DEFAULT_PSD_NFFT,
            psd_overlap: DEFAULT_PSD_OVERLAP,
            pdf_bins: 101,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub phy: PhyConfig,
    pub channel: ChannelSection,
    pub modulation: Modulation,
    pub n_frames: usize,
    pub pnc_enabled: bool,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub measure: MeasureConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            phy: PhyConfig::default(),
            channel: ChannelSection::default(),
            modulation: Modulation::Qpsk,
            n_frames: 200,
            pnc_enabled: true,
            seed: 0,
            output_dir: PathBuf::from("out"),
            measure: MeasureConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.link_config()?.validate().map_err(config_error)?;
        let m = &self.measure;
        if m.psd_nfft < 2 || m.pdf_bins == 0 || !(0.0..1.0).contains(&m.psd_overlap) {
            return Err(CliError::Config(
                "measure: psd_nfft >= 2, pdf_bins >= 1 and psd_overlap in [0, 1) required".into(),
            ));
        }
        if m.n_samples < m.psd_nfft {
            return Err(CliError::Config(format!(
                "measure.n_samples = {} is shorter than psd_nfft = {}",
                m.n_samples, m.psd_nfft
            )));
        }
        Ok(())
    }

    pub fn ofdm_config(&self) -> Result<OfdmConfig, CliError> {
        self.ofdm_config_with_guard(self.phy.k_guard)
    }

    pub fn ofdm_config_with_guard(&self, k_guard: usize) -> Result<OfdmConfig, CliError> {
        let p = &self.phy;
        let plan = SubcarrierPlan::new(p.n_fft, k_guard, p.used_band).map_err(config_error)?;
        OfdmConfig::new(plan, p.cp_len, p.sample_rate_hz).map_err(config_error)
    }

    pub fn channel_config(&self) -> ChannelConfig {
        let c = &self.channel;
        ChannelConfig {
            taps: c.taps.clone(),
            snr_db: c.snr_db,
            phase_noise: c.phase_noise.clone(),
            cfo_hz: c.cfo_hz,
            sample_rate_hz: self.phy.sample_rate_hz,
            seed: self.seed,
        }
    }

    pub fn link_config(&self) -> Result<LinkConfig, CliError> {
        Ok(LinkConfig {
            ofdm: self.ofdm_config()?,
            modulation: self.modulation,
            n_payload_symbols: self.phy.n_payload_symbols,
            channel: self.channel_config(),
            pnc_enabled: self.pnc_enabled,
        })
    }

    pub fn probe_tone_hz(&self) -> f64 {
        self.measure
            .tone_hz
            .unwrap_or_else(|| default_probe_tone_hz(self.phy.sample_rate_hz))
    }
}

fn config_error(e: pnc_core::Error) -> CliError {
    CliError::Config(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        let link = cfg.link_config().unwrap();
        assert_eq!(link.ofdm.plan.payload_indices.len(), 46);
        assert_eq!(link.channel.snr_db, Some(40.0));
    }

    #[test]
    fn defaults_round_trip() {
        let text = serde_json::to_string(&ExperimentConfig::default()).unwrap();
        assert_eq!(
            ExperimentConfig::from_json(&text).unwrap(),
            ExperimentConfig::default()
        );
    }

    #[test]
    fn null_snr_disables_noise() {
        let cfg = ExperimentConfig::from_json(r#"{"channel": {"snr_db": null}}"#).unwrap();
        assert_eq!(cfg.channel.snr_db, None);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            r#"{"bogus": 1}"#,
            r#"{"phy": {"nfft": 64}}"#,
            r#"{"channel": {"seed": 3}}"#,
            r#"{"channel": {"phase_noise": {"model": "NONE", "sigma": 0, "bandwidth_hz": 1, "x": 0}}}"#,
        ] {
            let err = ExperimentConfig::from_json(text).unwrap_err();
            assert!(matches!(err, CliError::Config(_)), "{text}");
        }
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = ExperimentConfig::from_json("{\n  \"n_frames\": \"ten\"\n}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn invalid_geometry_is_a_config_error() {
        let err = ExperimentConfig::from_json(r#"{"phy": {"k_guard": 26}}"#).unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
        let err = ExperimentConfig::from_json(r#"{"phy": {"n_fft": 48}}"#).unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
    }
}
