//! Gray-coded constellation mapping, hard-decision demapping and EVM.
//!
//! All constellations are square products of per-axis Gray codes with unit
//! average energy. A symbol label is the integer formed by its bits,
//! first bit most significant; the first half of the bits selects the
//! in-phase level and the second half the quadrature level.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// EVM reported for a zero error vector.
pub const EVM_FLOOR_DB: f64 = -120.0;

/// Distances closer than this (in units of the unscaled integer grid) are
/// treated as a decision tie.
const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modulation {
    #[serde(rename = "BPSK")]
    Bpsk,
    #[serde(rename = "QPSK")]
    Qpsk,
    #[serde(rename = "QAM16")]
    Qam16,
    #[serde(rename = "QAM64")]
    Qam64,
}

// Per-axis level for each bit pattern, indexed by the pattern's value.
const BPSK_AXIS: [f64; 2] = [-1.0, 1.0];
const QPSK_AXIS: [f64; 2] = [1.0, -1.0];
const QAM16_AXIS: [f64; 4] = [-3.0, -1.0, 3.0, 1.0];
const QAM64_AXIS: [f64; 8] = [-7.0, -5.0, -1.0, -3.0, 7.0, 5.0, 1.0, 3.0];

impl Modulation {
    pub const ALL: [Modulation; 4] = [
        Modulation::Bpsk,
        Modulation::Qpsk,
        Modulation::Qam16,
        Modulation::Qam64,
    ];

    pub fn bits_per_symbol(self) -> usize {
        match self {
            Modulation::Bpsk => 1,
            Modulation::Qpsk => 2,
            Modulation::Qam16 => 4,
            Modulation::Qam64 => 6,
        }
    }

    pub fn order(self) -> usize {
        1 << self.bits_per_symbol()
    }

    fn axis_levels(self) -> &'static [f64] {
        match self {
            Modulation::Bpsk => &BPSK_AXIS,
            Modulation::Qpsk => &QPSK_AXIS,
            Modulation::Qam16 => &QAM16_AXIS,
            Modulation::Qam64 => &QAM64_AXIS,
        }
    }

    /// Bits carried on the in-phase and quadrature axes.
    fn axis_bits(self) -> (usize, usize) {
        match self {
            Modulation::Bpsk => (1, 0),
            m => {
                let half = m.bits_per_symbol() / 2;
                (half, half)
            }
        }
    }

    /// Normalization applied to the integer grid for unit average energy.
    pub fn scale(self) -> f64 {
        match self {
            Modulation::Bpsk => 1.0,
            Modulation::Qpsk => 1.0 / 2f64.sqrt(),
            Modulation::Qam16 => 1.0 / 10f64.sqrt(),
            Modulation::Qam64 => 1.0 / 42f64.sqrt(),
        }
    }

    /// Constellation point carrying `label`.
    pub fn point(self, label: usize) -> Complex64 {
        let (_, q_bits) = self.axis_bits();
        let levels = self.axis_levels();
        let i_pattern = label >> q_bits;
        let q_pattern = label & ((1 << q_bits) - 1);
        let im = if q_bits == 0 { 0.0 } else { levels[q_pattern] };
        Complex64::new(levels[i_pattern], im) * self.scale()
    }

    /// All points, indexed by label.
    pub fn constellation(self) -> Vec<Complex64> {
        (0..self.order()).map(|label| self.point(label)).collect()
    }

    /// Label of the nearest constellation point. Ties go to the smaller label.
    pub fn decide(self, z: Complex64) -> usize {
        let (_, q_bits) = self.axis_bits();
        let levels = self.axis_levels();
        let inv = 1.0 / self.scale();
        let i_pattern = nearest_level(levels, z.re * inv);
        if q_bits == 0 {
            i_pattern
        } else {
            (i_pattern << q_bits) | nearest_level(levels, z.im * inv)
        }
    }
}

/// Index of the closest level; the lowest index wins a tie.
fn nearest_level(levels: &[f64], u: f64) -> usize {
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (idx, &level) in levels.iter().enumerate() {
        let dist = (u - level).abs();
        if dist < best_dist - TIE_TOLERANCE {
            best = idx;
            best_dist = dist;
        }
    }
    best
}

fn bits_to_label(bits: &[u8]) -> usize {
    bits.iter()
        .fold(0, |acc, &b| (acc << 1) | usize::from(b != 0))
}

fn push_label_bits(out: &mut Vec<u8>, label: usize, width: usize) {
    for shift in (0..width).rev() {
        out.push(((label >> shift) & 1) as u8);
    }
}

/// Map a bit sequence (one bit per byte, nonzero = 1) onto constellation points.
pub fn map_bits(bits: &[u8], m: Modulation) -> Result<Vec<Complex64>> {
    let bps = m.bits_per_symbol();
    if !bits.len().is_multiple_of(bps) {
        return Err(Error::BitLength {
            len: bits.len(),
            bits_per_symbol: bps,
        });
    }
    Ok(bits
        .chunks_exact(bps)
        .map(|chunk| m.point(bits_to_label(chunk)))
        .collect())
}

/// Minimum-distance hard decisions.
pub fn demap_hard(symbols: &[Complex64], m: Modulation) -> Vec<u8> {
    let bps = m.bits_per_symbol();
    let mut bits = Vec::with_capacity(symbols.len() * bps);
    for &z in symbols {
        push_label_bits(&mut bits, m.decide(z), bps);
    }
    bits
}

/// `20 log10(rms(received - reference) / rms(reference))`, floored at
/// [`EVM_FLOOR_DB`].
pub fn evm_db(received: &[Complex64], reference: &[Complex64]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::EmptyInput);
    }
    if received.len() != reference.len() {
        return Err(Error::LengthMismatch {
            expected: reference.len(),
            actual: received.len(),
        });
    }
    let ref_power: f64 = reference.iter().map(|r| r.norm_sqr()).sum();
    if ref_power <= 0.0 {
        return Err(Error::ZeroReferencePower);
    }
    let err_power: f64 = received
        .iter()
        .zip(reference)
        .map(|(rx, r)| (rx - r).norm_sqr())
        .sum();
    Ok(power_ratio_db(err_power / ref_power))
}

/// Power ratio in dB with the EVM floor applied.
pub(crate) fn power_ratio_db(ratio: f64) -> f64 {
    if ratio <= 0.0 {
        EVM_FLOOR_DB
    } else {
        (10.0 * ratio.log10()).max(EVM_FLOOR_DB)
    }
}

/// MSB-first bit expansion of a byte slice.
pub fn bytes_to_bits(bytes: &[u8]) -> Vec<u8> {
    let mut bits = Vec::with_capacity(bytes.len() * 8);
    for &byte in bytes {
        push_label_bits(&mut bits, byte as usize, 8);
    }
    bits
}

/// Inverse of [`bytes_to_bits`]; a trailing partial byte is dropped.
pub fn bits_to_bytes(bits: &[u8]) -> Vec<u8> {
    bits.chunks_exact(8)
        .map(|c| bits_to_label(c) as u8)
        .collect()
}
