//! Subcarrier planning, OFDM modulation with cyclic prefix, and frame
//! assembly.
//!
//! Subcarriers are addressed by signed index `k` in `-N/2..N/2`; bin `k`
//! lives at DFT index `k mod N`. The pilot sits on DC and the `K` bins on
//! each side of it are left empty so that the low-pass spread of the pilot
//! caused by phase noise stays separable from the payload.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::baseband::{map_bits, Modulation};
use crate::{Error, Result, SampleBuffer};

/// Seed of the fixed preamble training sequence.
pub const TRAINING_SEED: u64 = 0x005E_ED0F_D1A1;

/// Number of identical preamble symbols at the start of every frame.
pub const PREAMBLE_SYMBOLS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubcarrierPlan {
    pub n_fft: usize,
    pub k_guard: usize,
    pub pilot_index: usize,
    pub used_band: usize,
    /// DFT bins carrying payload, ordered by subcarrier from `-used_band` up.
    pub payload_indices: Vec<usize>,
    /// DFT bins of the guard subcarriers `±1..=±k_guard`.
    pub guard_indices: Vec<usize>,
    /// DFT bins outside the occupied band.
    pub null_indices: Vec<usize>,
}

/// Bin role within a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinRole {
    Pilot,
    Guard,
    Payload,
    Null,
}

impl SubcarrierPlan {
    /// Validates geometry and lays out pilot, guard, payload and edge nulls.
    pub fn new(n_fft: usize, k_guard: usize, used_band: usize) -> Result<Self> {
        if !n_fft.is_power_of_two() || n_fft < 4 {
            return Err(Error::InvalidGeometry(format!(
                "n_fft = {n_fft} must be a power of two >= 4"
            )));
        }
        if used_band == 0 || used_band > n_fft / 2 - 1 {
            return Err(Error::InvalidGeometry(format!(
                "used_band = {used_band} must lie in 1..={}",
                n_fft / 2 - 1
            )));
        }
        if k_guard >= used_band {
            return Err(Error::InvalidGeometry(format!(
                "k_guard = {k_guard} leaves no payload inside used_band = {used_band}"
            )));
        }

        let n = n_fft as isize;
        let used = used_band as isize;
        let k = k_guard as isize;
        let bin = |sc: isize| sc.rem_euclid(n) as usize;

        let payload_indices = (-used..=used).filter(|sc| sc.abs() > k).map(bin).collect();
        let guard_indices = (-k..=k).filter(|&sc| sc != 0).map(bin).collect();
        let null_indices = (-n / 2..n / 2)
            .filter(|sc| sc.abs() > used)
            .map(bin)
            .collect();

        let plan = Self {
            n_fft,
            k_guard,
            pilot_index: 0,
            used_band,
            payload_indices,
            guard_indices,
            null_indices,
        };
        plan.assert_partition();
        Ok(plan)
    }

    fn assert_partition(&self) {
        let mut seen = vec![0u8; self.n_fft];
        seen[self.pilot_index] += 1;
        for &i in self
            .payload_indices
            .iter()
            .chain(&self.guard_indices)
            .chain(&self.null_indices)
        {
            seen[i] += 1;
        }
        assert!(
            seen.iter().all(|&c| c == 1),
            "subcarrier sets do not partition the {} bins",
            self.n_fft
        );
    }

    pub fn role(&self, bin: usize) -> BinRole {
        if bin == self.pilot_index {
            BinRole::Pilot
        } else if self.guard_indices.contains(&bin) {
            BinRole::Guard
        } else if self.payload_indices.contains(&bin) {
            BinRole::Payload
        } else {
            BinRole::Null
        }
    }

    /// Pilot followed by the payload bins: every bin the preamble trains.
    pub fn occupied_indices(&self) -> Vec<usize> {
        std::iter::once(self.pilot_index)
            .chain(self.payload_indices.iter().copied())
            .collect()
    }

    /// Guard count suggested for a phase-noise bandwidth: `ceil(B_pn / Δf)`.
    pub fn guard_for_bandwidth(bandwidth_hz: f64, subcarrier_spacing_hz: f64) -> usize {
        (bandwidth_hz / subcarrier_spacing_hz).ceil().max(0.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfdmConfig {
    pub plan: SubcarrierPlan,
    pub cp_len: usize,
    pub sample_rate_hz: f64,
    pub pilot_value: Complex64,
}

impl OfdmConfig {
    pub fn new(plan: SubcarrierPlan, cp_len: usize, sample_rate_hz: f64) -> Result<Self> {
        if cp_len >= plan.n_fft {
            return Err(Error::InvalidConfig(format!(
                "cp_len = {cp_len} must be below n_fft = {}",
                plan.n_fft
            )));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sample rate {sample_rate_hz} must be positive"
            )));
        }
        Ok(Self {
            plan,
            cp_len,
            sample_rate_hz,
            pilot_value: Complex64::new(1.0, 0.0),
        })
    }

    pub fn n_fft(&self) -> usize {
        self.plan.n_fft
    }

    /// Samples per OFDM symbol including the cyclic prefix.
    pub fn symbol_len(&self) -> usize {
        self.plan.n_fft + self.cp_len
    }

    pub fn subcarrier_spacing_hz(&self) -> f64 {
        self.sample_rate_hz / self.plan.n_fft as f64
    }

    /// Payload bits per OFDM symbol.
    pub fn bits_per_ofdm_symbol(&self, m: Modulation) -> usize {
        self.plan.payload_indices.len() * m.bits_per_symbol()
    }
}

impl Default for OfdmConfig {
    /// 64-point FFT, 16-sample CP, 25 MHz, `K = 3`, occupied band ±26.
    fn default() -> Self {
        let plan = SubcarrierPlan::new(64, 3, 26).expect("default plan is valid");
        Self::new(plan, 16, 25e6).expect("default config is valid")
    }
}

/// Forward and inverse DFT scaled by `1/sqrt(N)` in both directions.
#[derive(Clone)]
pub struct UnitaryDft {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl fmt::Debug for UnitaryDft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UnitaryDft").field("n", &self.n).finish()
    }
}

impl UnitaryDft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            scale: 1.0 / (n as f64).sqrt(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                actual: len,
            });
        }
        Ok(())
    }

    pub fn forward(&self, time: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check(time.len())?;
        let mut buf = time.to_vec();
        self.forward.process(&mut buf);
        buf.iter_mut().for_each(|v| *v *= self.scale);
        Ok(buf)
    }

    pub fn inverse(&self, freq: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check(freq.len())?;
        let mut buf = freq.to_vec();
        self.inverse.process(&mut buf);
        buf.iter_mut().for_each(|v| *v *= self.scale);
        Ok(buf)
    }
}

/// OFDM modulator/demodulator bound to one configuration.
#[derive(Debug, Clone)]
pub struct OfdmModem {
    cfg: OfdmConfig,
    dft: UnitaryDft,
}

impl OfdmModem {
    pub fn new(cfg: OfdmConfig) -> Self {
        let dft = UnitaryDft::new(cfg.n_fft());
        Self { cfg, dft }
    }

    pub fn config(&self) -> &OfdmConfig {
        &self.cfg
    }

    pub fn dft(&self) -> &UnitaryDft {
        &self.dft
    }

    /// Inverse transform of one symbol's bins, then cyclic prefix.
    pub fn modulate_symbol(&self, freq_data: &[Complex64]) -> Result<SampleBuffer> {
        let body = self.dft.inverse(freq_data)?;
        let n = body.len();
        let mut out = Vec::with_capacity(n + self.cfg.cp_len);
        out.extend_from_slice(&body[n - self.cfg.cp_len..]);
        out.extend_from_slice(&body);
        Ok(out)
    }

    /// Symbol body without the cyclic prefix.
    pub fn strip_cp<'a>(&self, time_samples: &'a [Complex64]) -> Result<&'a [Complex64]> {
        if time_samples.len() != self.cfg.symbol_len() {
            return Err(Error::LengthMismatch {
                expected: self.cfg.symbol_len(),
                actual: time_samples.len(),
            });
        }
        Ok(&time_samples[self.cfg.cp_len..])
    }

    /// Drops the cyclic prefix and returns the N bins.
    pub fn demodulate_symbol(&self, time_samples: &[Complex64]) -> Result<Vec<Complex64>> {
        self.dft.forward(self.strip_cp(time_samples)?)
    }

    /// Bins of one payload symbol: pilot on DC, `payload` on the payload
    /// bins in plan order, zeros elsewhere.
    pub fn payload_bins(&self, payload: &[Complex64]) -> Result<Vec<Complex64>> {
        let plan = &self.cfg.plan;
        if payload.len() != plan.payload_indices.len() {
            return Err(Error::LengthMismatch {
                expected: plan.payload_indices.len(),
                actual: payload.len(),
            });
        }
        let mut bins = vec![Complex64::new(0.0, 0.0); plan.n_fft];
        bins[plan.pilot_index] = self.cfg.pilot_value;
        for (&idx, &v) in plan.payload_indices.iter().zip(payload) {
            bins[idx] = v;
        }
        Ok(bins)
    }

    /// Known preamble bins: the pilot on DC and unit-magnitude QPSK phases on
    /// every payload bin. Guard and edge bins stay empty.
    pub fn training_bins(&self) -> Vec<Complex64> {
        let plan = &self.cfg.plan;
        let mut rng = ChaCha8Rng::seed_from_u64(TRAINING_SEED);
        let mut bins = vec![Complex64::new(0.0, 0.0); plan.n_fft];
        bins[plan.pilot_index] = self.cfg.pilot_value;
        for &idx in &plan.payload_indices {
            let quadrant: u8 = rng.random_range(0..4);
            bins[idx] = Complex64::from_polar(
                1.0,
                std::f64::consts::FRAC_PI_4 + std::f64::consts::FRAC_PI_2 * f64::from(quadrant),
            );
        }
        bins
    }

    /// Assembles a frame of two training symbols followed by
    /// `n_payload_symbols` payload symbols. Bits shorter than the frame are
    /// zero-padded only within the final symbol.
    pub fn build_frame(
        &self,
        bits: &[u8],
        modulation: Modulation,
        n_payload_symbols: usize,
    ) -> Result<Frame> {
        let per_symbol = self.cfg.bits_per_ofdm_symbol(modulation);
        let padded_len = bits.len().div_ceil(per_symbol) * per_symbol;
        if padded_len != n_payload_symbols * per_symbol {
            return Err(Error::Capacity {
                bits: bits.len(),
                symbols: n_payload_symbols,
                per_symbol,
            });
        }
        let mut payload_bits = bits.to_vec();
        payload_bits.resize(padded_len, 0);

        let training = self.modulate_symbol(&self.training_bins())?;
        let preamble_symbols = vec![training; PREAMBLE_SYMBOLS];
        let payload_symbols = payload_bits
            .chunks_exact(per_symbol)
            .map(|chunk| {
                let points = map_bits(chunk, modulation)?;
                self.modulate_symbol(&self.payload_bins(&points)?)
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(Frame {
            preamble_symbols,
            payload_symbols,
            payload_bits,
            modulation,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub preamble_symbols: Vec<SampleBuffer>,
    pub payload_symbols: Vec<SampleBuffer>,
    pub payload_bits: Vec<u8>,
    pub modulation: Modulation,
}

impl Frame {
    pub fn symbol_count(&self) -> usize {
        self.preamble_symbols.len() + self.payload_symbols.len()
    }

    /// Contiguous time-domain samples, preamble first.
    pub fn samples(&self) -> SampleBuffer {
        self.preamble_symbols
            .iter()
            .chain(&self.payload_symbols)
            .flatten()
            .copied()
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_bins(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    /// Direct O(N^2) unitary DFT.
    fn dft_oracle(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(t, &v)| {
                        v * Complex64::from_polar(
                            1.0,
                            -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64,
                        )
                    })
                    .sum::<Complex64>()
                    / (n as f64).sqrt()
            })
            .collect()
    }

    #[test]
    fn plan_counts() {
        let plan = SubcarrierPlan::new(64, 3, 26).unwrap();
        assert_eq!(plan.payload_indices.len(), 46);
        assert_eq!(plan.guard_indices.len(), 6);
        assert_eq!(plan.null_indices.len(), 64 - 53);
        for k in [0usize, 1, 2, 3, 61, 62, 63] {
            assert!(!plan.payload_indices.contains(&k));
        }
        assert_eq!(plan.payload_indices.first(), Some(&(64 - 26)));
        assert_eq!(plan.payload_indices.last(), Some(&26));

        let plan = SubcarrierPlan::new(64, 0, 26).unwrap();
        assert_eq!(plan.payload_indices.len(), 52);
        assert!(plan.guard_indices.is_empty());
        assert!(!plan.payload_indices.contains(&0));
    }

    #[test]
    fn plan_rejects_bad_geometry() {
        assert!(matches!(
            SubcarrierPlan::new(64, 26, 26),
            Err(Error::InvalidGeometry(_))
        ));
        assert!(SubcarrierPlan::new(60, 3, 26).is_err());
        assert!(SubcarrierPlan::new(64, 3, 32).is_err());
        assert!(SubcarrierPlan::new(64, 0, 0).is_err());
        assert!(SubcarrierPlan::new(64, 30, 31).is_ok());
    }

    #[test]
    fn plan_partitions_for_every_geometry() {
        for n in [8usize, 16, 64, 256] {
            for used in 1..n / 2 {
                for k in 0..used {
                    let plan = SubcarrierPlan::new(n, k, used).unwrap();
                    assert_eq!(plan.payload_indices.len(), 2 * used - 2 * k);
                    let roles = (0..n).filter(|&b| plan.role(b) == BinRole::Pilot).count();
                    assert_eq!(roles, 1);
                }
            }
        }
    }

    #[test]
    fn guard_guideline() {
        let cfg = OfdmConfig::default();
        assert_abs_diff_eq!(cfg.subcarrier_spacing_hz(), 390_625.0);
        assert_eq!(
            SubcarrierPlan::guard_for_bandwidth(1e6, cfg.subcarrier_spacing_hz()),
            3
        );
    }

    #[test]
    fn zero_bins_give_zero_symbol() {
        let modem = OfdmModem::new(OfdmConfig::default());
        let out = modem
            .modulate_symbol(&vec![Complex64::new(0.0, 0.0); 64])
            .unwrap();
        assert_eq!(out.len(), 80);
        assert!(out.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn dc_bin_gives_constant() {
        let modem = OfdmModem::new(OfdmConfig::default());
        let mut bins = vec![Complex64::new(0.0, 0.0); 64];
        bins[0] = Complex64::new(1.0, 0.0);
        let out = modem.modulate_symbol(&bins).unwrap();
        for v in out {
            assert_abs_diff_eq!(v.re, 0.125, epsilon = 1e-15);
            assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn round_trip_and_energy() {
        let modem = OfdmModem::new(OfdmConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let bins = random_bins(&mut rng, 64);
            let time = modem.modulate_symbol(&bins).unwrap();
            let back = modem.demodulate_symbol(&time).unwrap();
            for (a, b) in bins.iter().zip(&back) {
                assert!((a - b).norm() < 1e-10);
            }
            let e_freq: f64 = bins.iter().map(|v| v.norm_sqr()).sum();
            let e_time: f64 = time[16..].iter().map(|v| v.norm_sqr()).sum();
            assert_abs_diff_eq!(e_freq, e_time, epsilon = 1e-9);
        }
    }

    #[test]
    fn transform_matches_direct_dft() {
        let dft = UnitaryDft::new(64);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_bins(&mut rng, 64);
        for (a, b) in dft.forward(&x).unwrap().iter().zip(dft_oracle(&x)) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn cyclic_delay_is_phase_ramp() {
        let modem = OfdmModem::new(OfdmConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let bins = random_bins(&mut rng, 64);
        let tx = modem.modulate_symbol(&bins).unwrap();
        for d in [1usize, 5, 16] {
            // Pure delay of d samples; the previous symbol is a copy of tx so
            // the window stays inside a cyclic extension.
            let mut stream = tx.clone();
            stream.extend_from_slice(&tx);
            let rx = &stream[80 - d..160 - d];
            let got = modem.demodulate_symbol(rx).unwrap();
            let body: Vec<Complex64> = rx[16..].to_vec();
            let oracle = dft_oracle(&body);
            for k in 0..64 {
                let ramp =
                    Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * (k * d) as f64 / 64.0);
                assert!((got[k] - bins[k] * ramp).norm() < 1e-10, "d={d} k={k}");
                assert!((got[k] - oracle[k]).norm() < 1e-10);
                // One-tap equalization recovers the bin.
                assert!((got[k] / ramp - bins[k]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn length_errors() {
        let modem = OfdmModem::new(OfdmConfig::default());
        assert!(matches!(
            modem.modulate_symbol(&[Complex64::new(0.0, 0.0); 10]),
            Err(Error::LengthMismatch {
                expected: 64,
                actual: 10
            })
        ));
        assert!(modem
            .demodulate_symbol(&[Complex64::new(0.0, 0.0); 64])
            .is_err());
    }

    #[test]
    fn training_is_unit_magnitude_on_occupied_bins() {
        let modem = OfdmModem::new(OfdmConfig::default());
        let t = modem.training_bins();
        let plan = &modem.config().plan;
        for (b, v) in t.iter().enumerate() {
            match plan.role(b) {
                BinRole::Pilot => assert_eq!(*v, Complex64::new(1.0, 0.0)),
                BinRole::Payload => assert_abs_diff_eq!(v.norm(), 1.0, epsilon = 1e-15),
                _ => assert_eq!(v.norm(), 0.0),
            }
        }
    }

    #[test]
    fn frame_layout() {
        let modem = OfdmModem::new(OfdmConfig::default());
        let bits = vec![1u8; 92];
        let frame = modem.build_frame(&bits, Modulation::Qpsk, 1).unwrap();
        assert_eq!(frame.symbol_count(), 3);
        assert_eq!(frame.payload_bits.len(), 92);
        assert_eq!(frame.samples().len(), 240);
        assert_eq!(frame.preamble_symbols[0], frame.preamble_symbols[1]);

        let empty = modem.build_frame(&[], Modulation::Qpsk, 0).unwrap();
        assert_eq!(empty.symbol_count(), 2);
        assert!(empty.payload_symbols.is_empty());

        let again = modem.build_frame(&bits, Modulation::Qpsk, 1).unwrap();
        assert_eq!(frame, again);
    }

    #[test]
    fn frame_padding_rules() {
        let modem = OfdmModem::new(OfdmConfig::default());
        let frame = modem.build_frame(&[1u8; 100], Modulation::Qpsk, 2).unwrap();
        assert_eq!(frame.payload_bits.len(), 184);
        assert!(frame.payload_bits[100..].iter().all(|&b| b == 0));
        assert!(matches!(
            modem.build_frame(&[1u8; 50], Modulation::Qpsk, 2),
            Err(Error::Capacity { .. })
        ));
        assert!(modem.build_frame(&[1u8; 200], Modulation::Qpsk, 2).is_err());
    }
}
