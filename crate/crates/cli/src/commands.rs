use std::fs;
use std::io::{self, Read};
use std::path::Path;

use pnc_core::baseband::Modulation;
use pnc_core::channel::single_tone_probe;
use pnc_core::link::{simulate, LinkConfig, LinkReport};
use pnc_core::linklayer::{stream_bytes, StreamReport};
use pnc_core::metrics::{
    extract_tone_phase, gaussian_fit, histogram_density, psd_welch, GaussianFit,
};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::CliError;

pub const DEFAULT_K_LIST: [usize; 7] = [0, 1, 2, 3, 4, 6, 8];

fn output_dir(cfg: &ExperimentConfig) -> Result<&Path, CliError> {
    let dir = cfg.output_dir.as_path();
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub n_frames: usize,
    pub modulation: Modulation,
    pub pnc_enabled: bool,
    pub seed: u64,
    /// Mean of the per-frame EVM in dB.
    pub evm_db: f64,
    pub mean_residual_phase_std: f64,
    pub tracking_residual_std: f64,
    pub bit_error_rate: f64,
}

impl SimulationSummary {
    fn new(cfg: &ExperimentConfig, report: &LinkReport) -> Self {
        Self {
            n_frames: report.n_frames,
            modulation: cfg.modulation,
            pnc_enabled: cfg.pnc_enabled,
            seed: cfg.seed,
            evm_db: report.mean_evm_db,
            mean_residual_phase_std: report.mean_residual_phase_std,
            tracking_residual_std: report.tracking_residual_std,
            bit_error_rate: report.bit_error_rate,
        }
    }
}

/// Writes `evm.csv`, `constellation.csv` and `summary.json`.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<SimulationSummary, CliError> {
    let link = cfg.link_config()?;
    let report = simulate(&link, cfg.n_frames, cfg.seed)?;
    let dir = output_dir(cfg)?;

    let mut evm = csv::Writer::from_path(dir.join("evm.csv"))?;
    evm.write_record(["frame", "evm_db", "residual_phase_std"])?;
    for f in &report.frames {
        evm.serialize((f.frame, f.evm_db, f.residual_phase_std))?;
    }
    evm.flush()?;

    let mut points = csv::Writer::from_path(dir.join("constellation.csv"))?;
    points.write_record(["frame", "re", "im"])?;
    for f in &report.frames {
        for z in &f.points {
            points.serialize((f.frame, z.re, z.im))?;
        }
    }
    points.flush()?;

    let summary = SimulationSummary::new(cfg, &report);
    write_json(&dir.join("summary.json"), &summary)?;
    log::info!(
        "simulate: {} frames, mean EVM {:.2} dB, BER {:.3e}",
        summary.n_frames,
        summary.evm_db,
        summary.bit_error_rate
    );
    Ok(summary)
}

/// Probes the channel with a tone and writes `pn_pdf.csv`, `pn_psd.csv`
/// and `pn_fit.json`.
pub fn cmd_measure_pn(cfg: &ExperimentConfig) -> Result<GaussianFit, CliError> {
    let m = &cfg.measure;
    let fs = cfg.phy.sample_rate_hz;
    let tone = cfg.probe_tone_hz();
    let probe = single_tone_probe(tone, m.n_samples, &cfg.channel_config())?;
    let theta = extract_tone_phase(&probe.samples, tone, fs)?;
    let fit = gaussian_fit(&theta)?;
    let pdf = histogram_density(&theta, m.pdf_bins)?;
    let psd = psd_welch(&theta, fs, m.psd_nfft, m.psd_overlap)?;
    let dir = output_dir(cfg)?;

    let mut w = csv::Writer::from_path(dir.join("pn_pdf.csv"))?;
    w.write_record(["bin_center", "density"])?;
    for row in &pdf {
        w.serialize(row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("pn_psd.csv"))?;
    w.write_record(["freq_hz", "power_db"])?;
    for row in psd.freqs_hz.iter().zip(&psd.power_db) {
        w.serialize(row)?;
    }
    w.flush()?;

    write_json(&dir.join("pn_fit.json"), &fit)?;
    log::info!(
        "measure-pn: std {:.4} rad, mean {:.2e} rad, {:.1}% of power below {} Hz",
        fit.std,
        fit.mean,
        100.0 * psd.fraction_below(cfg.channel.phase_noise.bandwidth_hz),
        cfg.channel.phase_noise.bandwidth_hz
    );
    Ok(fit)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KSweepRow {
    pub k: usize,
    pub mean_evm_db: f64,
}

/// One simulation per guard count, all with the configured seed.
pub fn cmd_sweep_k(cfg: &ExperimentConfig, k_list: &[usize]) -> Result<Vec<KSweepRow>, CliError> {
    if k_list.is_empty() {
        return Err(CliError::Config("K list is empty".into()));
    }
    let links = k_list
        .iter()
        .map(|&k| {
            Ok(LinkConfig {
                ofdm: cfg.ofdm_config_with_guard(k)?,
                ..cfg.link_config()?
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let mut rows = Vec::with_capacity(k_list.len());
    for (&k, link) in k_list.iter().zip(&links) {
        let report = simulate(link, cfg.n_frames, cfg.seed)?;
        log::info!("sweep-k: K = {k}, mean EVM {:.2} dB", report.mean_evm_db);
        rows.push(KSweepRow {
            k,
            mean_evm_db: report.mean_evm_db,
        });
    }

    let dir = output_dir(cfg)?;
    let mut w = csv::Writer::from_path(dir.join("ksweep.csv"))?;
    w.write_record(["k", "mean_evm_db"])?;
    for r in &rows {
        w.serialize((r.k, r.mean_evm_db))?;
    }
    w.flush()?;
    Ok(rows)
}

/// Streams a file (`-` for standard input) over the link, writes the
/// recovered bytes to `output` and the report to `stream_report.json`.
pub fn cmd_stream(
    cfg: &ExperimentConfig,
    input: &Path,
    output: &Path,
) -> Result<StreamReport, CliError> {
    let link = cfg.link_config()?;
    let data = if input == Path::new("-") {
        let mut buf = Vec::new();
        io::stdin().read_to_end(&mut buf)?;
        buf
    } else {
        fs::read(input)
            .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", input.display())))?
    };
    let (recovered, report) = stream_bytes(&data, &link)?;
    fs::write(output, &recovered)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", output.display())))?;
    let dir = output_dir(cfg)?;
    write_json(&dir.join("stream_report.json"), &report)?;
    log::info!(
        "stream: {} packets, PER {:.4}, mean EVM {:.2} dB",
        report.packets_sent,
        report.per,
        report.mean_evm_db
    );
    Ok(report)
}
