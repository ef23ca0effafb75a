//! Byte-stream transport over the PHY: packet framing with CRC-32,
//! reassembly, and packet error / goodput accounting.
//!
//! Wire format, big-endian: `seq: u32 | payload_len: u16 | payload | crc32: u32`.
//! The CRC covers header and payload.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseband::{bits_to_bytes, bytes_to_bits, EVM_FLOOR_DB};
use crate::link::{derive_seed, Link, LinkConfig};
use crate::{Error, Result};

pub const HEADER_LEN: usize = 6;
pub const CRC_LEN: usize = 4;
pub const PACKET_OVERHEAD: usize = HEADER_LEN + CRC_LEN;

/// CRC-32 (IEEE 802.3, reflected, init and final XOR 0xFFFFFFFF).
pub fn crc32(data: &[u8]) -> u32 {
    crc32fast::hash(data)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    pub seq: u32,
    pub payload_len: u16,
    pub payload: Vec<u8>,
    pub crc32: u32,
}

impl Packet {
    /// Builds a packet with a valid CRC. Payloads longer than `u16::MAX`
    /// are rejected.
    pub fn new(seq: u32, payload: Vec<u8>) -> Result<Self> {
        let payload_len = u16::try_from(payload.len()).map_err(|_| {
            Error::InvalidConfig(format!("payload of {} bytes exceeds 65535", payload.len()))
        })?;
        let mut packet = Self {
            seq,
            payload_len,
            payload,
            crc32: 0,
        };
        packet.crc32 = packet.computed_crc();
        Ok(packet)
    }

    fn header(&self) -> [u8; HEADER_LEN] {
        let mut h = [0u8; HEADER_LEN];
        h[..4].copy_from_slice(&self.seq.to_be_bytes());
        h[4..].copy_from_slice(&self.payload_len.to_be_bytes());
        h
    }

    pub fn computed_crc(&self) -> u32 {
        let mut hasher = crc32fast::Hasher::new();
        hasher.update(&self.header());
        hasher.update(&self.payload);
        hasher.finalize()
    }

    /// True when the length field agrees with the payload and the CRC matches.
    pub fn is_valid(&self) -> bool {
        self.payload_len as usize == self.payload.len() && self.crc32 == self.computed_crc()
    }

    pub fn wire_len(&self) -> usize {
        PACKET_OVERHEAD + self.payload.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.wire_len());
        out.extend_from_slice(&self.header());
        out.extend_from_slice(&self.payload);
        out.extend_from_slice(&self.crc32.to_be_bytes());
        out
    }

    /// Parses a packet from the front of `buf`; trailing bytes are ignored.
    /// Returns `None` when the length field points past the buffer.
    pub fn from_bytes(buf: &[u8]) -> Option<Self> {
        if buf.len() < PACKET_OVERHEAD {
            return None;
        }
        let seq = u32::from_be_bytes(buf[..4].try_into().ok()?);
        let payload_len = u16::from_be_bytes(buf[4..6].try_into().ok()?);
        let end = HEADER_LEN + payload_len as usize;
        if end + CRC_LEN > buf.len() {
            return None;
        }
        let crc32 = u32::from_be_bytes(buf[end..end + CRC_LEN].try_into().ok()?);
        Some(Self {
            seq,
            payload_len,
            payload: buf[HEADER_LEN..end].to_vec(),
            crc32,
        })
    }
}

/// Splits `bytes` into packets of at most `max_payload` bytes, numbered from 0.
pub fn packetize(bytes: &[u8], max_payload: usize) -> Result<Vec<Packet>> {
    if max_payload == 0 || max_payload > u16::MAX as usize {
        return Err(Error::InvalidConfig(format!(
            "max_payload = {max_payload} must lie in 1..=65535"
        )));
    }
    bytes
        .chunks(max_payload)
        .enumerate()
        .map(|(i, chunk)| Packet::new(i as u32, chunk.to_vec()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PacketStatus {
    Ok,
    CrcFail,
    Missing,
}

/// What the receiver knows about the stream in advance: how it was cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamLayout {
    pub total_bytes: usize,
    pub max_payload: usize,
}

impl StreamLayout {
    pub fn packet_count(&self) -> usize {
        self.total_bytes.div_ceil(self.max_payload.max(1))
    }

    pub fn payload_len(&self, seq: usize) -> usize {
        let start = seq * self.max_payload;
        self.max_payload.min(self.total_bytes.saturating_sub(start))
    }
}

/// Reassembles the stream. Valid packets land at their sequence slot; slots
/// with only corrupt packets are zero-filled and marked `CrcFail`, slots
/// with no packet at all are zero-filled and marked `Missing`. Packets whose
/// sequence number lies outside the layout are ignored.
pub fn depacketize(packets: &[Packet], layout: StreamLayout) -> (Vec<u8>, Vec<PacketStatus>) {
    let count = layout.packet_count();
    let mut status = vec![PacketStatus::Missing; count];
    let mut out = vec![0u8; layout.total_bytes];
    for p in packets {
        let seq = p.seq as usize;
        if seq >= count || status[seq] == PacketStatus::Ok {
            continue;
        }
        if p.is_valid() && p.payload.len() == layout.payload_len(seq) {
            let start = seq * layout.max_payload;
            out[start..start + p.payload.len()].copy_from_slice(&p.payload);
            status[seq] = PacketStatus::Ok;
        } else {
            status[seq] = PacketStatus::CrcFail;
        }
    }
    (out, status)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamReport {
    pub packets_sent: usize,
    pub packets_ok: usize,
    pub packets_crc_fail: usize,
    pub per: f64,
    /// Correctly delivered payload bits per transmitted sample.
    pub goodput_bits_per_channel_use: f64,
    /// Arithmetic mean of the per-frame EVM in dB.
    pub mean_evm_db: f64,
}

/// Largest packet payload that fits one frame.
pub fn max_payload_for(cfg: &LinkConfig) -> Result<usize> {
    let capacity = cfg.frame_capacity_bits() / 8;
    if capacity <= PACKET_OVERHEAD {
        return Err(Error::InvalidConfig(format!(
            "frame carries {capacity} bytes, needs more than {PACKET_OVERHEAD} for one packet"
        )));
    }
    Ok((capacity - PACKET_OVERHEAD).min(u16::MAX as usize))
}

/// Sends `bytes` one packet per frame and returns the recovered stream.
/// Frame `i` uses the channel seed `derive_seed(cfg.channel.seed, i)`.
pub fn stream_bytes(bytes: &[u8], cfg: &LinkConfig) -> Result<(Vec<u8>, StreamReport)> {
    let max_payload = max_payload_for(cfg)?;
    let link = Link::new(cfg.clone())?;
    let packets = packetize(bytes, max_payload)?;
    let master = cfg.channel.seed;

    let received = packets
        .par_iter()
        .map(|packet| {
            let index = packet.seq;
            let outcome = link.transmit(
                &bytes_to_bits(&packet.to_bytes()),
                derive_seed(master, index as u64),
            )?;
            let rx_bytes = bits_to_bytes(&outcome.report.bits);
            // Frames are genie-aligned, so a packet that does not survive
            // is still attributed to the frame that carried it.
            let rx = match Packet::from_bytes(&rx_bytes) {
                Some(p) if p.is_valid() => p,
                Some(p) => Packet { seq: index, ..p },
                None => Packet {
                    seq: index,
                    payload_len: 0,
                    payload: Vec::new(),
                    crc32: !0,
                },
            };
            Ok((rx, outcome.report.evm_db))
        })
        .collect::<Result<Vec<_>>>()?;

    let layout = StreamLayout {
        total_bytes: bytes.len(),
        max_payload,
    };
    let evm: Vec<f64> = received.iter().map(|(_, e)| *e).collect();
    let rx_packets: Vec<Packet> = received.into_iter().map(|(p, _)| p).collect();
    let (out, status) = depacketize(&rx_packets, layout);

    let sent = packets.len();
    let ok = status.iter().filter(|s| **s == PacketStatus::Ok).count();
    let channel_uses = sent * cfg.frame_samples();
    let delivered_bits: usize = status
        .iter()
        .enumerate()
        .filter(|(_, s)| **s == PacketStatus::Ok)
        .map(|(i, _)| 8 * layout.payload_len(i))
        .sum();
    let report = StreamReport {
        packets_sent: sent,
        packets_ok: ok,
        packets_crc_fail: status
            .iter()
            .filter(|s| **s == PacketStatus::CrcFail)
            .count(),
        per: if sent == 0 {
            0.0
        } else {
            1.0 - ok as f64 / sent as f64
        },
        goodput_bits_per_channel_use: if channel_uses == 0 {
            0.0
        } else {
            delivered_bits as f64 / channel_uses as f64
        },
        mean_evm_db: if evm.is_empty() {
            EVM_FLOOR_DB
        } else {
            evm.iter().sum::<f64>() / evm.len() as f64
        },
    };
    Ok((out, report))
}
