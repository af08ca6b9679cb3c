//! `.clip` file format.
//!
//! Layout (little-endian, varints as in the `.etr` format):
//!
//! ```text
//! magic "ETCL" | version u16 | image_hash u64 | spec_hash u64
//! sync_period varint | data_mode u8 | outputs_in_trace u8
//! capacity varint | post_trigger varint
//! raw pre  section: varint count, per packet: flags u8, varint len, bytes
//! raw post section: same
//! event pre  section: varint count, serialized events
//! event post section: same
//! violation: name, ts, summary
//! ```

use crate::event_extract::{Event, EventKind, Ts};
use crate::rv_engine::Violation;
use crate::trace_codec::{DataMode, DecodeParams};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClipMeta {
    pub image_hash: u64,
    pub spec_hash: u64,
    pub sync_period: u64,
    pub data_mode: DataMode,
    pub outputs_in_trace: bool,
    pub capacity: u64,
    pub post_trigger: u64,
}

impl ClipMeta {
    pub fn decode_params(&self) -> DecodeParams {
        DecodeParams {
            data: self.data_mode,
            outputs_in_trace: self.outputs_in_trace,
        }
    }
}

/// Frozen capture: raw wire packets (with burst-head flags) and refined
/// events on both sides of the trigger.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceClip {
    pub meta: ClipMeta,
    /// (packet bytes, burst_head)
    pub pre_raw: Vec<(Vec<u8>, bool)>,
    pub post_raw: Vec<(Vec<u8>, bool)>,
    pub pre_events: Vec<Event>,
    pub post_events: Vec<Event>,
    pub violation: Violation,
}

impl TraceClip {
    /// The raw region as one decodable `.etr` stream.
    pub fn raw_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for (bytes, _) in self.pre_raw.iter().chain(&self.post_raw) {
            out.extend_from_slice(bytes);
        }
        out
    }

    pub fn all_events(&self) -> Vec<Event> {
        self.pre_events
            .iter()
            .chain(&self.post_events)
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClipError {
    #[error("offset {offset}: corrupt clip: {detail}")]
    Corrupt { offset: usize, detail: String },
    #[error("{what} hash mismatch: clip has {expected:#018x}, got {actual:#018x}")]
    HashMismatch {
        what: String,
        expected: u64,
        actual: u64,
    },
}

const MAGIC: &[u8; 4] = b"ETCL";
const VERSION: u16 = 1;

fn put_varint(buf: &mut Vec<u8>, mut v: u64) {
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

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_varint(buf, s.len() as u64);
    buf.extend_from_slice(s.as_bytes());
}

fn put_ts(buf: &mut Vec<u8>, ts: Ts) {
    put_varint(buf, ts.cycle);
    put_varint(buf, ts.seq as u64);
}

fn put_value(buf: &mut Vec<u8>, v: &Value) {
    match v {
        Value::Int(i) => {
            buf.push(0);
            put_varint(buf, ((*i << 1) ^ (*i >> 63)) as u64);
        }
        Value::Float(f) => {
            buf.push(1);
            buf.extend_from_slice(&f.to_bits().to_le_bytes());
        }
    }
}

fn put_event(buf: &mut Vec<u8>, ev: &Event) {
    put_ts(buf, ev.ts);
    put_varint(buf, ev.thread as u64);
    match &ev.kind {
        EventKind::FuncEnter(f) => {
            buf.push(0);
            put_varint(buf, *f as u64);
        }
        EventKind::FuncExit(f) => {
            buf.push(1);
            put_varint(buf, *f as u64);
        }
        EventKind::Branch { addr, taken } => {
            buf.push(2);
            put_varint(buf, *addr as u64);
            buf.push(*taken as u8);
        }
        EventKind::VarWrite { addr, value } => {
            buf.push(3);
            put_varint(buf, *addr as u64);
            put_varint(buf, ((*value << 1) ^ (*value >> 63)) as u64);
        }
        EventKind::Output { port, value } => {
            buf.push(4);
            buf.push(*port);
            put_value(buf, value);
        }
        EventKind::Itm { channel, value } => {
            buf.push(5);
            buf.push(*channel);
            put_value(buf, value);
        }
        EventKind::LockReq(m) => {
            buf.push(6);
            buf.push(*m);
        }
        EventKind::LockAcq(m) => {
            buf.push(7);
            buf.push(*m);
        }
        EventKind::LockRel(m) => {
            buf.push(8);
            buf.push(*m);
        }
        EventKind::Gap => buf.push(9),
    }
}

pub fn export_clip(clip: &TraceClip) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&clip.meta.image_hash.to_le_bytes());
    buf.extend_from_slice(&clip.meta.spec_hash.to_le_bytes());
    put_varint(&mut buf, clip.meta.sync_period);
    buf.push(match clip.meta.data_mode {
        DataMode::Off => 0,
        DataMode::Watched => 1,
        DataMode::Full => 2,
    });
    buf.push(clip.meta.outputs_in_trace as u8);
    put_varint(&mut buf, clip.meta.capacity);
    put_varint(&mut buf, clip.meta.post_trigger);

    for section in [&clip.pre_raw, &clip.post_raw] {
        put_varint(&mut buf, section.len() as u64);
        for (bytes, head) in section {
            buf.push(*head as u8);
            put_varint(&mut buf, bytes.len() as u64);
            buf.extend_from_slice(bytes);
        }
    }
    for section in [&clip.pre_events, &clip.post_events] {
        put_varint(&mut buf, section.len() as u64);
        for ev in section {
            put_event(&mut buf, ev);
        }
    }
    put_str(&mut buf, &clip.violation.assertion);
    put_ts(&mut buf, clip.violation.ts);
    put_str(&mut buf, &clip.violation.summary);
    buf
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn corrupt<T>(&self, detail: &str) -> Result<T, ClipError> {
        Err(ClipError::Corrupt {
            offset: self.pos,
            detail: detail.to_string(),
        })
    }

    fn byte(&mut self) -> Result<u8, ClipError> {
        match self.buf.get(self.pos) {
            Some(&b) => {
                self.pos += 1;
                Ok(b)
            }
            None => self.corrupt("unexpected end of clip"),
        }
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8], ClipError> {
        if self.pos + n > self.buf.len() {
            return self.corrupt("unexpected end of clip");
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn varint(&mut self) -> Result<u64, ClipError> {
        let mut v = 0u64;
        let mut shift = 0u32;
        loop {
            let b = self.byte()?;
            if shift >= 63 && b > 1 {
                return self.corrupt("varint overflow");
            }
            v |= ((b & 0x7F) as u64) << shift;
            if b & 0x80 == 0 {
                return Ok(v);
            }
            shift += 7;
            if shift > 63 {
                return self.corrupt("varint overflow");
            }
        }
    }

    fn zigzag(&mut self) -> Result<i64, ClipError> {
        let u = self.varint()?;
        Ok(((u >> 1) as i64) ^ -((u & 1) as i64))
    }

    fn string(&mut self) -> Result<String, ClipError> {
        let len = self.varint()? as usize;
        if len > self.buf.len() {
            return self.corrupt("string length exceeds clip");
        }
        let raw = self.bytes(len)?;
        String::from_utf8(raw.to_vec()).or_else(|_| self.corrupt("invalid utf-8"))
    }

    fn ts(&mut self) -> Result<Ts, ClipError> {
        let cycle = self.varint()?;
        let seq = self.varint()? as u32;
        Ok(Ts::new(cycle, seq))
    }

    fn value(&mut self) -> Result<Value, ClipError> {
        match self.byte()? {
            0 => Ok(Value::Int(self.zigzag()?)),
            1 => {
                let mut le = [0u8; 8];
                le.copy_from_slice(self.bytes(8)?);
                Ok(Value::Float(f64::from_bits(u64::from_le_bytes(le))))
            }
            _ => self.corrupt("unknown value tag"),
        }
    }

    fn event(&mut self) -> Result<Event, ClipError> {
        let ts = self.ts()?;
        let thread = self.varint()? as usize;
        let kind = match self.byte()? {
            0 => EventKind::FuncEnter(self.varint()? as usize),
            1 => EventKind::FuncExit(self.varint()? as usize),
            2 => EventKind::Branch {
                addr: self.varint()? as usize,
                taken: self.byte()? != 0,
            },
            3 => EventKind::VarWrite {
                addr: self.varint()? as usize,
                value: self.zigzag()?,
            },
            4 => EventKind::Output {
                port: self.byte()?,
                value: self.value()?,
            },
            5 => EventKind::Itm {
                channel: self.byte()?,
                value: self.value()?,
            },
            6 => EventKind::LockReq(self.byte()?),
            7 => EventKind::LockAcq(self.byte()?),
            8 => EventKind::LockRel(self.byte()?),
            9 => EventKind::Gap,
            _ => return self.corrupt("unknown event tag"),
        };
        Ok(Event { ts, thread, kind })
    }
}

pub fn import_clip(bytes: &[u8]) -> Result<TraceClip, ClipError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.bytes(4)? != MAGIC {
        return Err(ClipError::Corrupt {
            offset: 0,
            detail: "bad magic".into(),
        });
    }
    let mut ver = [0u8; 2];
    ver.copy_from_slice(r.bytes(2)?);
    if u16::from_le_bytes(ver) != VERSION {
        return r.corrupt("unsupported version");
    }
    let mut u64buf = [0u8; 8];
    u64buf.copy_from_slice(r.bytes(8)?);
    let image_hash = u64::from_le_bytes(u64buf);
    u64buf.copy_from_slice(r.bytes(8)?);
    let spec_hash = u64::from_le_bytes(u64buf);
    let sync_period = r.varint()?;
    let data_mode = match r.byte()? {
        0 => DataMode::Off,
        1 => DataMode::Watched,
        2 => DataMode::Full,
        _ => return r.corrupt("unknown data mode"),
    };
    let outputs_in_trace = r.byte()? != 0;
    let capacity = r.varint()?;
    let post_trigger = r.varint()?;

    let mut raw_sections: Vec<Vec<(Vec<u8>, bool)>> = Vec::new();
    for _ in 0..2 {
        let count = r.varint()? as usize;
        if count > bytes.len() {
            return r.corrupt("packet count exceeds clip size");
        }
        let mut section = Vec::with_capacity(count);
        read_packet_section(&mut r, count, &mut section)?;
        raw_sections.push(section);
    }
    let post_raw = raw_sections.pop().unwrap();
    let pre_raw = raw_sections.pop().unwrap();

    let mut event_sections: Vec<Vec<Event>> = Vec::new();
    for _ in 0..2 {
        let count = r.varint()? as usize;
        if count > bytes.len() {
            return r.corrupt("event count exceeds clip size");
        }
        let mut section = Vec::with_capacity(count);
        for _ in 0..count {
            section.push(r.event()?);
        }
        event_sections.push(section);
    }
    let post_events = event_sections.pop().unwrap();
    let pre_events = event_sections.pop().unwrap();

    let assertion = r.string()?;
    let ts = r.ts()?;
    let summary = r.string()?;
    if r.pos != bytes.len() {
        return r.corrupt("trailing bytes after clip");
    }

    Ok(TraceClip {
        meta: ClipMeta {
            image_hash,
            spec_hash,
            sync_period,
            data_mode,
            outputs_in_trace,
            capacity,
            post_trigger,
        },
        pre_raw,
        post_raw,
        pre_events,
        post_events,
        violation: Violation {
            assertion,
            ts,
            summary,
        },
    })
}

fn read_packet_section(
    r: &mut Reader<'_>,
    count: usize,
    out: &mut Vec<(Vec<u8>, bool)>,
) -> Result<(), ClipError> {
    for _ in 0..count {
        let head = r.byte()? != 0;
        let len = r.varint()? as usize;
        let bytes = r.bytes(len)?.to_vec();
        out.push((bytes, head));
    }
    Ok(())
}
