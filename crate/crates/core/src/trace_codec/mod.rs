//! Compressed execution-trace wire format (`.etr`) and its exact decoder.
//!
//! Encoding rules, in packet order per record:
//!
//! 1. A SYNC burst anchors the stream at the first record and again after
//!    every `sync_period` records, at the next record boundary.
//! 2. Conditional branches append one taken/not-taken atom bit; the bit
//!    buffer flushes as an ATOMS packet at 64 bits or before any other
//!    packet is emitted.
//! 3. Indirect transfers (`calli`, `ret`) flush atoms and emit TARGET.
//! 4. Direct branches, calls and sequential flow emit nothing.
//! 5. A thread switch emits CTX (unless a burst just re-anchored it).
//! 6. Stores emit DATA per the data-trace mode; `out` emits OUTPUT when
//!    configured; `emit` always emits ITM.
//! 7. Pending atoms flush at end of stream. A stream cut while a thread
//!    could still run ends in OVERFLOW to mark the capture loss.

mod decoder;
mod encoder;
mod wire;

pub use decoder::{DataMode, DecodeParams, DecodeStats, Decoder, FlowEntry, ReconstructedFlow};
pub use encoder::{EncodedPacket, EncodeError, Encoder};
pub use wire::{packet_bytes, DecodeError, TracePacket};

use crate::program_model::BinaryImage;
use crate::target_sim::ExecRecord;
use std::collections::BTreeSet;

pub const DEFAULT_SYNC_PERIOD: u64 = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum DataTrace {
    #[default]
    Off,
    /// Trace stores to the given cells; every store costs one atom bit.
    Watched(BTreeSet<usize>),
    Full,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderConfig {
    /// Records between SYNC bursts.
    pub sync_period: u64,
    pub data_trace: DataTrace,
    pub outputs_in_trace: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            sync_period: DEFAULT_SYNC_PERIOD,
            data_trace: DataTrace::Off,
            outputs_in_trace: true,
        }
    }
}

impl EncoderConfig {
    /// The decode-side view of this configuration.
    pub fn decode_params(&self) -> DecodeParams {
        DecodeParams {
            data: match self.data_trace {
                DataTrace::Off => DataMode::Off,
                DataTrace::Watched(_) => DataMode::Watched,
                DataTrace::Full => DataMode::Full,
            },
            outputs_in_trace: self.outputs_in_trace,
        }
    }
}

/// Compression accounting against the naive 32-bits-per-instruction
/// address stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionReport {
    pub instruction_count: u64,
    pub naive_bits: u64,
    pub compressed_bits: u64,
    pub ratio: f64,
}

impl CompressionReport {
    pub fn ratio_2dp(&self) -> f64 {
        (self.ratio * 100.0).round() / 100.0
    }
}

impl std::fmt::Display for CompressionReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} instructions, naive {} bits, compressed {} bits, ratio {:.2}",
            self.instruction_count, self.naive_bits, self.compressed_bits, self.ratio_2dp()
        )
    }
}

pub fn encode(
    trace: &[ExecRecord],
    image: &BinaryImage,
    config: &EncoderConfig,
) -> Result<Vec<u8>, EncodeError> {
    let mut enc = Encoder::new(image, config.clone());
    for rec in trace {
        enc.feed(rec)?;
    }
    let packets = enc.finish();
    let mut bytes = Vec::new();
    for p in &packets {
        bytes.extend_from_slice(&p.bytes);
    }
    Ok(bytes)
}

pub fn decode(
    bytes: &[u8],
    image: &BinaryImage,
    params: DecodeParams,
) -> Result<ReconstructedFlow, DecodeError> {
    let mut dec = Decoder::new(image, params);
    dec.feed(bytes)?;
    let (flow, _) = dec.finish()?;
    Ok(flow)
}

pub fn measure(trace_len: u64, bytes: &[u8]) -> CompressionReport {
    measure_counts(trace_len, bytes.len() as u64)
}

pub fn measure_counts(instruction_count: u64, compressed_bytes: u64) -> CompressionReport {
    let naive_bits = 32 * instruction_count;
    let compressed_bits = 8 * compressed_bytes;
    let ratio = if instruction_count == 0 {
        1.0
    } else {
        naive_bits as f64 / compressed_bits as f64
    };
    CompressionReport {
        instruction_count,
        naive_bits,
        compressed_bits,
        ratio,
    }
}
