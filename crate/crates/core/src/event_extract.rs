//! Lifts reconstructed control flow into a totally ordered stream of
//! timestamped events for the monitor.
//!
//! Timestamps are `(cycle, seq)` pairs: `seq` breaks ties between events
//! produced at the same cycle, in flow order, so the stream carries a
//! strict total order. `(0, 0)` is reserved for the monitor's built-in
//! `unit` event; record cycles start at 1.

use crate::program_model::{BinaryImage, Kind};
use crate::target_sim::{ExecRecord, Payload};
use crate::trace_codec::FlowEntry;
use crate::value::Value;
use std::collections::BTreeSet;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ts {
    pub cycle: u64,
    pub seq: u32,
}

impl Ts {
    pub const ZERO: Ts = Ts { cycle: 0, seq: 0 };

    pub fn new(cycle: u64, seq: u32) -> Self {
        Ts { cycle, seq }
    }
}

impl fmt::Display for Ts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.cycle, self.seq)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    /// Function index into the image's function table.
    FuncEnter(usize),
    FuncExit(usize),
    Branch { addr: usize, taken: bool },
    VarWrite { addr: usize, value: i64 },
    Output { port: u8, value: Value },
    Itm { channel: u8, value: Value },
    LockReq(u8),
    LockAcq(u8),
    LockRel(u8),
    Gap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub ts: Ts,
    pub thread: usize,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventStream {
    pub events: Vec<Event>,
    /// Structural anomalies that are not failures, e.g. a `ret` with no
    /// matching enter right after an observation gap.
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WatchConfig {
    /// Memory cells whose writes become VarWrite events.
    pub watched: BTreeSet<usize>,
    /// Restrict enter/exit events to these functions (indexes); None = all.
    pub functions: Option<BTreeSet<usize>>,
    pub branches: bool,
    pub locks: bool,
}

impl Default for WatchConfig {
    fn default() -> Self {
        WatchConfig {
            watched: BTreeSet::new(),
            functions: None,
            branches: false,
            locks: true,
        }
    }
}

/// Single-pass extractor; feed flow entries in order, drain events.
pub struct Extractor<'a> {
    image: &'a BinaryImage,
    watch: WatchConfig,
    cur_cycle: u64,
    cur_seq: u32,
    /// Per-thread: was the previous record a call/calli?
    after_call: Vec<bool>,
    /// Per-thread call nesting (function indexes).
    stacks: Vec<Vec<usize>>,
    out: Vec<Event>,
    warnings: Vec<String>,
}

impl<'a> Extractor<'a> {
    pub fn new(image: &'a BinaryImage, watch: WatchConfig) -> Self {
        let n = image.threads.len();
        Extractor {
            image,
            watch,
            cur_cycle: 0,
            cur_seq: 1, // (0,0) is reserved
            after_call: vec![false; n],
            stacks: vec![Vec::new(); n],
            out: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn feed(&mut self, entry: &FlowEntry) {
        match entry {
            FlowEntry::Gap => {
                let ts = self.next_ts(self.cur_cycle);
                self.out.push(Event {
                    ts,
                    thread: 0,
                    kind: EventKind::Gap,
                });
                for s in &mut self.stacks {
                    s.clear();
                }
                for a in &mut self.after_call {
                    *a = false;
                }
            }
            FlowEntry::Record(rec) => self.feed_record(rec),
        }
    }

    pub fn drain(&mut self) -> Vec<Event> {
        std::mem::take(&mut self.out)
    }

    pub fn finish(self) -> EventStream {
        EventStream {
            events: self.out,
            warnings: self.warnings,
        }
    }

    fn next_ts(&mut self, cycle: u64) -> Ts {
        if cycle > self.cur_cycle {
            self.cur_cycle = cycle;
            self.cur_seq = 0;
        }
        let ts = Ts::new(self.cur_cycle, self.cur_seq);
        self.cur_seq += 1;
        ts
    }

    fn push(&mut self, cycle: u64, thread: usize, kind: EventKind) {
        let ts = self.next_ts(cycle);
        self.out.push(Event { ts, thread, kind });
    }

    fn wants_function(&self, func: usize) -> bool {
        match &self.watch.functions {
            None => true,
            Some(set) => set.contains(&func),
        }
    }

    fn feed_record(&mut self, rec: &ExecRecord) {
        let t = rec.thread;
        if t >= self.stacks.len() {
            return;
        }

        // Entry detection: previous record of this thread was a call.
        if self.after_call[t] {
            self.after_call[t] = false;
            if let Some(func) = self
                .image
                .functions
                .iter()
                .position(|f| f.entry == rec.addr)
            {
                self.stacks[t].push(func);
                if self.wants_function(func) {
                    self.push(rec.cycle, t, EventKind::FuncEnter(func));
                }
            }
        }

        let kind = self.image.instructions.get(rec.addr).map(|i| i.kind());
        match (kind, &rec.payload) {
            (Some(Kind::Call), _) | (Some(Kind::Calli), Payload::IndirectTarget { .. }) => {
                self.after_call[t] = true;
            }
            (Some(Kind::Ret), Payload::IndirectTarget { .. }) => {
                let func = match self.stacks[t].pop() {
                    Some(f) => Some(f),
                    None => {
                        // Unbalanced exit, e.g. across a gap: resolve the
                        // function statically and warn instead of failing.
                        self.warnings.push(format!(
                            "cycle {}: thread {t}: return without matching enter",
                            rec.cycle
                        ));
                        self.image
                            .functions
                            .iter()
                            .position(|f| f.entry <= rec.addr && rec.addr < f.end)
                    }
                };
                if let Some(func) = func {
                    if self.wants_function(func) {
                        self.push(rec.cycle, t, EventKind::FuncExit(func));
                    }
                }
            }
            (_, Payload::Branch { taken }) => {
                if self.watch.branches {
                    self.push(
                        rec.cycle,
                        t,
                        EventKind::Branch {
                            addr: rec.addr,
                            taken: *taken,
                        },
                    );
                }
            }
            (_, Payload::Store { addr, value }) => {
                if self.watch.watched.contains(addr) {
                    self.push(
                        rec.cycle,
                        t,
                        EventKind::VarWrite {
                            addr: *addr,
                            value: *value,
                        },
                    );
                }
            }
            (_, Payload::Output { port, value }) => {
                self.push(
                    rec.cycle,
                    t,
                    EventKind::Output {
                        port: *port,
                        value: *value,
                    },
                );
            }
            (_, Payload::Itm { channel, value }) => {
                self.push(
                    rec.cycle,
                    t,
                    EventKind::Itm {
                        channel: *channel,
                        value: *value,
                    },
                );
            }
            (_, Payload::LockReq { mutex }) => {
                if self.watch.locks {
                    self.push(rec.cycle, t, EventKind::LockReq(*mutex));
                }
            }
            (_, Payload::LockAcq { mutex }) => {
                if self.watch.locks {
                    self.push(rec.cycle, t, EventKind::LockAcq(*mutex));
                }
            }
            (_, Payload::LockRel { mutex }) => {
                if self.watch.locks {
                    self.push(rec.cycle, t, EventKind::LockRel(*mutex));
                }
            }
            _ => {}
        }
    }
}

/// Extract from a decoded flow.
pub fn extract(
    flow: &crate::trace_codec::ReconstructedFlow,
    image: &BinaryImage,
    watch: WatchConfig,
) -> EventStream {
    let mut ex = Extractor::new(image, watch);
    for entry in &flow.entries {
        ex.feed(entry);
    }
    ex.finish()
}

/// Bypass path: extract directly from a ground-truth trace. Trap records
/// carry no event kind and are skipped.
pub fn extract_records(
    trace: &[ExecRecord],
    image: &BinaryImage,
    watch: WatchConfig,
) -> EventStream {
    let mut ex = Extractor::new(image, watch);
    for rec in trace {
        if matches!(rec.payload, Payload::Trap { .. }) {
            continue;
        }
        ex.feed(&FlowEntry::Record(*rec));
    }
    ex.finish()
}

/// Diagnostic dump line: `cycle.seq thread KIND args`.
pub fn format_event(image: &BinaryImage, ev: &Event) -> String {
    let name = |f: &usize| image.functions[*f].name.clone();
    let body = match &ev.kind {
        EventKind::FuncEnter(f) => format!("ENTER {}", name(f)),
        EventKind::FuncExit(f) => format!("EXIT {}", name(f)),
        EventKind::Branch { addr, taken } => format!("BRANCH {addr} {taken}"),
        EventKind::VarWrite { addr, value } => format!("WRITE mem[{addr}] {value}"),
        EventKind::Output { port, value } => format!("OUT {port} {value}"),
        EventKind::Itm { channel, value } => format!("ITM {channel} {value}"),
        EventKind::LockReq(m) => format!("LOCKREQ m{m}"),
        EventKind::LockAcq(m) => format!("LOCKACQ m{m}"),
        EventKind::LockRel(m) => format!("LOCKREL m{m}"),
        EventKind::Gap => "GAP".into(),
    };
    format!("{} {} {}", ev.ts, ev.thread, body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program_model::load_image;
    use crate::target_sim::{run, SimConfig};
    use crate::trace_codec::{decode, encode, EncoderConfig};

    fn image(src: &str) -> BinaryImage {
        load_image(src).unwrap()
    }

    #[test]
    fn call_and_ret_nest_properly() {
        let src = "\
func m:
  call f
  call f
  halt
func f:
  set r1, 1
  ret
thread t entry m
";
        let img = image(src);
        let out = run(&img, &SimConfig::default()).unwrap();
        let stream = extract_records(&out.trace, &img, WatchConfig::default());
        let kinds: Vec<&EventKind> = stream.events.iter().map(|e| &e.kind).collect();
        let f = img.functions.iter().position(|f| f.name == "f").unwrap();
        assert_eq!(
            kinds,
            vec![
                &EventKind::FuncEnter(f),
                &EventKind::FuncExit(f),
                &EventKind::FuncEnter(f),
                &EventKind::FuncExit(f),
            ]
        );
        assert!(stream.warnings.is_empty());
    }

    #[test]
    fn watch_filter_limits_varwrites() {
        let src = "\
func m:
  set r1, 5
  set r2, 7
  store r2, [r1]
  set r1, 6
  store r2, [r1]
  halt
thread t entry m
";
        let img = image(src);
        let out = run(&img, &SimConfig::default()).unwrap();
        let watch = WatchConfig {
            watched: [6].into(),
            ..WatchConfig::default()
        };
        let stream = extract_records(&out.trace, &img, watch);
        assert_eq!(stream.events.len(), 1);
        assert_eq!(
            stream.events[0].kind,
            EventKind::VarWrite { addr: 6, value: 7 }
        );
    }

    #[test]
    fn empty_watch_yields_only_outputs_and_itm() {
        let src = "\
func m:
  set r1, 3
  store r1, [r1]
  out 1, r1
  emit 2, r1
  lock 0
  unlock 0
  brc r0, skip
skip:
  halt
thread t entry m
";
        let img = image(src);
        let out = run(&img, &SimConfig::default()).unwrap();
        let watch = WatchConfig {
            watched: BTreeSet::new(),
            functions: None,
            branches: false,
            locks: false,
        };
        let stream = extract_records(&out.trace, &img, watch);
        assert!(stream.events.iter().all(|e| matches!(
            e.kind,
            EventKind::Output { .. } | EventKind::Itm { .. }
        )));
        assert_eq!(stream.events.len(), 2);
    }

    #[test]
    fn timestamps_strictly_increase() {
        let src = "\
func m:
  call f
  halt
func f:
  out 1, r0
  ret
thread t entry m
";
        let img = image(src);
        let out = run(&img, &SimConfig::default()).unwrap();
        let stream = extract_records(&out.trace, &img, WatchConfig::default());
        for pair in stream.events.windows(2) {
            assert!(pair[0].ts < pair[1].ts);
        }
        // The enter and the out happen on the same record: same cycle,
        // consecutive seq.
        assert_eq!(stream.events[0].ts.cycle, stream.events[1].ts.cycle);
        assert_eq!(stream.events[0].ts.seq + 1, stream.events[1].ts.seq);
    }

    #[test]
    fn pipeline_stream_equals_bypass_stream() {
        let src = "\
func m:
  set r1, 9
  set r2, 1
l:
  call f
  store r1, [r2]
  sub r1, r1, r2
  brc r1, l
  halt
func f:
  emit 1, r5
  ret
thread t entry m
";
        let img = image(src);
        let out = run(&img, &SimConfig::default()).unwrap();
        let config = EncoderConfig {
            data_trace: crate::trace_codec::DataTrace::Full,
            ..EncoderConfig::default()
        };
        let bytes = encode(&out.trace, &img, &config).unwrap();
        let flow = decode(&bytes, &img, config.decode_params()).unwrap();
        let watch = WatchConfig {
            watched: [1].into(),
            branches: true,
            ..WatchConfig::default()
        };
        let bypass = extract_records(&out.trace, &img, watch.clone());
        let piped = extract(&flow, &img, watch);
        assert_eq!(bypass, piped);
    }
}
