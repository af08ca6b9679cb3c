//! Byte-level packet layout of the `.etr` stream.
//!
//! Every packet is a 1-byte header followed by its fields. Multi-byte
//! integers are base-128 varints, low 7 bits first, continuation flag in
//! the high bit. `DATA` values are zigzag-mapped. `OUTPUT`/`ITM` values
//! carry a 1-byte type tag: 0 = zigzag varint integer, 1 = raw IEEE-754
//! bits, 8 bytes little-endian.
//!
//! The `SYNC` address field packs the resume state of its thread:
//! `(pc << 1) | lock_pending`, where the pending bit marks a thread whose
//! next record is the acquisition step of an issued lock request.

use crate::value::Value;

pub const HDR_OVERFLOW: u8 = 0x00;
pub const HDR_SYNC: u8 = 0x01;
pub const HDR_ATOMS: u8 = 0x02;
pub const HDR_TARGET: u8 = 0x03;
pub const HDR_CTX: u8 = 0x04;
pub const HDR_ITM: u8 = 0x05;
pub const HDR_DATA: u8 = 0x06;
pub const HDR_OUTPUT: u8 = 0x07;

pub const MAX_ATOM_BITS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub enum TracePacket {
    Overflow,
    Sync {
        addr: usize,
        lock_pending: bool,
        thread: usize,
        cycle: u64,
    },
    Atoms {
        bits: Vec<bool>,
    },
    Target {
        addr: usize,
    },
    Ctx {
        thread: usize,
        cycle: u64,
    },
    Itm {
        channel: u8,
        value: Value,
    },
    Data {
        addr: usize,
        value: i64,
    },
    Output {
        port: u8,
        value: Value,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("offset {offset}: malformed varint")]
    MalformedVarint { offset: usize },
    #[error("offset {offset}: unknown packet header {header:#04x}")]
    UnknownHeader { offset: usize, header: u8 },
    #[error("offset {offset}: truncated packet")]
    TruncatedPacket { offset: usize },
    #[error("offset {offset}: stream does not begin with a SYNC packet")]
    MissingLeadingSync { offset: usize },
    #[error("offset {offset}: desync: {detail}")]
    Desync { offset: usize, detail: String },
    #[error("offset {offset}: conditional outcome needed but no atom bits left")]
    AtomUnderflow { offset: usize },
}

pub fn zigzag(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

pub fn unzigzag(u: u64) -> i64 {
    ((u >> 1) as i64) ^ -((u & 1) as i64)
}

pub fn put_varint(buf: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7F) as u8;
        v >>= 7;
        if v == 0 {
            buf.push(byte);
            break;
        }
        buf.push(byte | 0x80);
    }
}

pub fn packet_bytes(p: &TracePacket) -> Vec<u8> {
    let mut buf = Vec::with_capacity(12);
    match p {
        TracePacket::Overflow => buf.push(HDR_OVERFLOW),
        TracePacket::Sync {
            addr,
            lock_pending,
            thread,
            cycle,
        } => {
            buf.push(HDR_SYNC);
            put_varint(&mut buf, ((*addr as u64) << 1) | *lock_pending as u64);
            put_varint(&mut buf, *thread as u64);
            put_varint(&mut buf, *cycle);
        }
        TracePacket::Atoms { bits } => {
            debug_assert!(!bits.is_empty() && bits.len() <= MAX_ATOM_BITS);
            buf.push(HDR_ATOMS);
            buf.push(bits.len() as u8);
            let mut bytes = vec![0u8; bits.len().div_ceil(8)];
            for (i, &bit) in bits.iter().enumerate() {
                if bit {
                    bytes[i / 8] |= 1 << (i % 8);
                }
            }
            buf.extend_from_slice(&bytes);
        }
        TracePacket::Target { addr } => {
            buf.push(HDR_TARGET);
            put_varint(&mut buf, *addr as u64);
        }
        TracePacket::Ctx { thread, cycle } => {
            buf.push(HDR_CTX);
            put_varint(&mut buf, *thread as u64);
            put_varint(&mut buf, *cycle);
        }
        TracePacket::Itm { channel, value } => {
            buf.push(HDR_ITM);
            put_varint(&mut buf, *channel as u64);
            put_value(&mut buf, value);
        }
        TracePacket::Data { addr, value } => {
            buf.push(HDR_DATA);
            put_varint(&mut buf, *addr as u64);
            put_varint(&mut buf, zigzag(*value));
        }
        TracePacket::Output { port, value } => {
            buf.push(HDR_OUTPUT);
            put_varint(&mut buf, *port as u64);
            put_value(&mut buf, value);
        }
    }
    buf
}

fn put_value(buf: &mut Vec<u8>, v: &Value) {
    match v {
        Value::Int(i) => {
            buf.push(0);
            put_varint(buf, zigzag(*i));
        }
        Value::Float(f) => {
            buf.push(1);
            buf.extend_from_slice(&f.to_bits().to_le_bytes());
        }
    }
}

/// Incremental packet parser: feed bytes, pull whole packets. Offsets in
/// errors are absolute positions in the stream.
#[derive(Debug, Default)]
pub struct PacketReader {
    buf: Vec<u8>,
    /// Absolute stream offset of `buf[0]`.
    base: usize,
}

impl PacketReader {
    pub fn feed(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Absolute offset of the next unparsed packet.
    pub fn offset(&self) -> usize {
        self.base
    }

    pub fn pending_bytes(&self) -> usize {
        self.buf.len()
    }

    /// Parse the next whole packet, or `None` when more bytes are needed.
    pub fn next_packet(&mut self) -> Result<Option<(TracePacket, usize)>, DecodeError> {
        let Some((packet, len)) = self.peek_packet()? else {
            return Ok(None);
        };
        let at = self.base;
        self.buf.drain(..len);
        self.base += len;
        Ok(Some((packet, at)))
    }

    fn peek_packet(&self) -> Result<Option<(TracePacket, usize)>, DecodeError> {
        let buf = &self.buf;
        if buf.is_empty() {
            return Ok(None);
        }
        let header = buf[0];
        let mut pos = 1usize;
        let mut varint = |pos: &mut usize| -> Result<Option<u64>, DecodeError> {
            let mut v: u64 = 0;
            let mut shift = 0u32;
            loop {
                let Some(&byte) = buf.get(*pos) else {
                    return Ok(None);
                };
                *pos += 1;
                if shift >= 63 && byte > 1 {
                    return Err(DecodeError::MalformedVarint {
                        offset: self.base,
                    });
                }
                v |= ((byte & 0x7F) as u64) << shift;
                if byte & 0x80 == 0 {
                    return Ok(Some(v));
                }
                shift += 7;
                if shift > 63 {
                    return Err(DecodeError::MalformedVarint {
                        offset: self.base,
                    });
                }
            }
        };

        macro_rules! need {
            ($e:expr) => {
                match $e? {
                    Some(v) => v,
                    None => return Ok(None),
                }
            };
        }

        let packet = match header {
            HDR_OVERFLOW => TracePacket::Overflow,
            HDR_SYNC => {
                let packed = need!(varint(&mut pos));
                let thread = need!(varint(&mut pos)) as usize;
                let cycle = need!(varint(&mut pos));
                TracePacket::Sync {
                    addr: (packed >> 1) as usize,
                    lock_pending: packed & 1 == 1,
                    thread,
                    cycle,
                }
            }
            HDR_ATOMS => {
                let Some(&count) = buf.get(pos) else {
                    return Ok(None);
                };
                pos += 1;
                if count == 0 || count as usize > MAX_ATOM_BITS {
                    return Err(DecodeError::Desync {
                        offset: self.base,
                        detail: format!("atom count {count} outside 1..=64"),
                    });
                }
                let nbytes = (count as usize).div_ceil(8);
                if buf.len() < pos + nbytes {
                    return Ok(None);
                }
                let payload = &buf[pos..pos + nbytes];
                pos += nbytes;
                let mut bits = Vec::with_capacity(count as usize);
                for i in 0..count as usize {
                    bits.push(payload[i / 8] & (1 << (i % 8)) != 0);
                }
                // Trailing pad bits must be zero.
                for i in count as usize..nbytes * 8 {
                    if payload[i / 8] & (1 << (i % 8)) != 0 {
                        return Err(DecodeError::Desync {
                            offset: self.base,
                            detail: "nonzero atom pad bits".into(),
                        });
                    }
                }
                TracePacket::Atoms { bits }
            }
            HDR_TARGET => TracePacket::Target {
                addr: need!(varint(&mut pos)) as usize,
            },
            HDR_CTX => {
                let thread = need!(varint(&mut pos)) as usize;
                let cycle = need!(varint(&mut pos));
                TracePacket::Ctx { thread, cycle }
            }
            HDR_ITM => {
                let channel = need!(varint(&mut pos)) as u8;
                let value = match self.peek_value(&mut pos, &mut varint)? {
                    Some(v) => v,
                    None => return Ok(None),
                };
                TracePacket::Itm { channel, value }
            }
            HDR_DATA => {
                let addr = need!(varint(&mut pos)) as usize;
                let value = unzigzag(need!(varint(&mut pos)));
                TracePacket::Data { addr, value }
            }
            HDR_OUTPUT => {
                let port = need!(varint(&mut pos)) as u8;
                let value = match self.peek_value(&mut pos, &mut varint)? {
                    Some(v) => v,
                    None => return Ok(None),
                };
                TracePacket::Output { port, value }
            }
            other => {
                return Err(DecodeError::UnknownHeader {
                    offset: self.base,
                    header: other,
                })
            }
        };
        Ok(Some((packet, pos)))
    }

    fn peek_value(
        &self,
        pos: &mut usize,
        varint: &mut impl FnMut(&mut usize) -> Result<Option<u64>, DecodeError>,
    ) -> Result<Option<Value>, DecodeError> {
        let Some(&tag) = self.buf.get(*pos) else {
            return Ok(None);
        };
        *pos += 1;
        match tag {
            0 => match varint(pos)? {
                Some(u) => Ok(Some(Value::Int(unzigzag(u)))),
                None => Ok(None),
            },
            1 => {
                if self.buf.len() < *pos + 8 {
                    return Ok(None);
                }
                let mut le = [0u8; 8];
                le.copy_from_slice(&self.buf[*pos..*pos + 8]);
                *pos += 8;
                Ok(Some(Value::Float(f64::from_bits(u64::from_le_bytes(le)))))
            }
            other => Err(DecodeError::Desync {
                offset: self.base,
                detail: format!("unknown value tag {other}"),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn varint_boundaries() {
        for v in [0u64, 1, 127, 128, 16383, 16384, u64::MAX] {
            let mut buf = Vec::new();
            put_varint(&mut buf, v);
            let mut r = PacketReader::default();
            r.feed(&[HDR_TARGET]);
            r.feed(&buf);
            let (p, _) = r.next_packet().unwrap().unwrap();
            assert_eq!(p, TracePacket::Target { addr: v as usize });
        }
    }

    #[test]
    fn truncated_packet_returns_none_until_complete() {
        let bytes = packet_bytes(&TracePacket::Sync {
            addr: 300,
            lock_pending: true,
            thread: 2,
            cycle: 70000,
        });
        let mut r = PacketReader::default();
        for (i, b) in bytes.iter().enumerate() {
            r.feed(std::slice::from_ref(b));
            let got = r.next_packet().unwrap();
            if i + 1 < bytes.len() {
                assert!(got.is_none(), "complete after {} of {} bytes", i + 1, bytes.len());
            } else {
                let (p, at) = got.unwrap();
                assert_eq!(at, 0);
                assert!(matches!(p, TracePacket::Sync { addr: 300, .. }));
            }
        }
    }

    #[test]
    fn unknown_header_is_position_reported() {
        let mut r = PacketReader::default();
        r.feed(&packet_bytes(&TracePacket::Overflow));
        r.feed(&[0x4F]);
        assert!(r.next_packet().unwrap().is_some());
        assert_eq!(
            r.next_packet().unwrap_err(),
            DecodeError::UnknownHeader {
                offset: 1,
                header: 0x4F
            }
        );
    }

    #[test]
    fn nonzero_pad_bits_rejected() {
        // count = 3 bits but the pad carries a stray high bit
        let mut r = PacketReader::default();
        r.feed(&[HDR_ATOMS, 3, 0b0001_1011]);
        assert!(matches!(
            r.next_packet(),
            Err(DecodeError::Desync { offset: 0, .. })
        ));
    }

    proptest! {
        #[test]
        fn packet_roundtrip(packets in proptest::collection::vec(arb_packet(), 1..40),
                            cuts in proptest::collection::vec(1usize..7, 0..40)) {
            let mut stream = Vec::new();
            for p in &packets {
                stream.extend_from_slice(&packet_bytes(p));
            }
            // feed in irregular chunks
            let mut r = PacketReader::default();
            let mut got = Vec::new();
            let mut pos = 0usize;
            let mut cut_iter = cuts.into_iter().chain(std::iter::repeat(3));
            while pos < stream.len() {
                let n = cut_iter.next().unwrap().min(stream.len() - pos);
                r.feed(&stream[pos..pos + n]);
                pos += n;
                while let Some((p, _)) = r.next_packet().unwrap() {
                    got.push(p);
                }
            }
            prop_assert_eq!(got, packets);
            prop_assert_eq!(r.pending_bytes(), 0);
        }
    }

    fn arb_packet() -> impl Strategy<Value = TracePacket> {
        prop_oneof![
            Just(TracePacket::Overflow),
            (any::<u32>(), any::<bool>(), 0usize..8, any::<u64>()).prop_map(
                |(addr, lock_pending, thread, cycle)| TracePacket::Sync {
                    addr: addr as usize,
                    lock_pending,
                    thread,
                    cycle
                }
            ),
            proptest::collection::vec(any::<bool>(), 1..=64)
                .prop_map(|bits| TracePacket::Atoms { bits }),
            (any::<u32>()).prop_map(|a| TracePacket::Target { addr: a as usize }),
            (0usize..8, any::<u64>()).prop_map(|(thread, cycle)| TracePacket::Ctx {
                thread,
                cycle
            }),
            (any::<u8>(), arb_value()).prop_map(|(channel, value)| TracePacket::Itm {
                channel,
                value
            }),
            (any::<u32>(), any::<i64>()).prop_map(|(addr, value)| TracePacket::Data {
                addr: addr as usize,
                value
            }),
            (any::<u8>(), arb_value()).prop_map(|(port, value)| TracePacket::Output {
                port,
                value
            }),
        ]
    }

    fn arb_value() -> impl Strategy<Value = Value> {
        prop_oneof![
            any::<i64>().prop_map(Value::Int),
            any::<u64>().prop_map(|bits| Value::Float(f64::from_bits(bits))),
        ]
    }
}
