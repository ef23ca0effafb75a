//! Link-level simulator for a pilot/guard-subcarrier OFDM physical layer
//! impaired by oscillator phase noise.
//!
//! The transmit chain maps bits onto a Gray-coded constellation
//! ([`baseband`]), places them on the payload subcarriers of an OFDM
//! symbol that reserves DC for a phase pilot and `K` guard bins on each side
//! ([`ofdm`]), and sends the frame through a multipath channel with
//! multiplicative phase noise and AWGN ([`channel`]). The receiver removes
//! the phase noise per symbol from the low-pass content around the pilot
//! ([`pnc`]), then estimates the channel, equalizes and demaps
//! ([`receiver`]). [`metrics`] holds the phase-noise instrumentation and
//! [`linklayer`] carries an arbitrary byte stream over the PHY.

pub mod baseband;
pub mod channel;
mod error;
pub mod link;
pub mod linklayer;
pub mod metrics;
pub mod ofdm;
pub mod pnc;
pub mod receiver;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Complex baseband samples.
pub type SampleBuffer = Vec<Complex64>;
