//! End-to-end save-on-trigger pipeline: simulate, encode, decode on the
//! fly, extract events, monitor, and freeze a clip on the first
//! violation.
//!
//! Stages run either in one thread (`Staging::Serial`) or as a thread per
//! stage connected by channels (`Staging::Concurrent`). Items flow in
//! order and are consumed exactly once, so both modes produce identical
//! results; a test pins that equality.

use crate::event_extract::{Event, EventKind, Extractor, Ts, WatchConfig};
use crate::program_model::{fnv1a64, BinaryImage};
use crate::rv_engine::{
    bind_events, parse_bindings, parse_spec, OnlineMonitor, RvError, Violation,
};
use crate::target_sim::{Machine, OutputLog, SimConfig, TerminationStatus};
use crate::trace_codec::{CompressionReport, Decoder, EncodedPacket, Encoder, EncoderConfig};
use crate::trigger_buffer::{ClipMeta, RingBuffer, RingItem, TraceClip};
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Staging {
    #[default]
    Concurrent,
    Serial,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub sim: SimConfig,
    pub encoder: EncoderConfig,
    pub watch: WatchConfig,
    pub capacity: usize,
    pub post_trigger: usize,
    pub staging: Staging,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            sim: SimConfig::default(),
            encoder: EncoderConfig::default(),
            watch: WatchConfig::default(),
            capacity: crate::trigger_buffer::DEFAULT_CAPACITY,
            post_trigger: crate::trigger_buffer::DEFAULT_POST_TRIGGER,
            staging: Staging::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub status: TerminationStatus,
    pub outputs: OutputLog,
    pub compression: CompressionReport,
    pub event_count: usize,
    pub violations: Vec<Violation>,
    pub clip: Option<TraceClip>,
    pub warnings: Vec<String>,
    pub instructions: u64,
    pub cycles: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("spec: {0}")]
    Spec(#[from] RvError),
    #[error("sim: {0}")]
    Sim(#[from] crate::target_sim::SimError),
    #[error("encode: {0}")]
    Encode(#[from] crate::trace_codec::EncodeError),
    #[error("decode: {0}")]
    Decode(#[from] crate::trace_codec::DecodeError),
    #[error("stage channel closed early: {0}")]
    Channel(String),
    #[error("clip: {0}")]
    Clip(#[from] crate::trigger_buffer::ClipError),
}

pub fn clip_meta(image: &BinaryImage, spec_text: &str, config: &PipelineConfig) -> ClipMeta {
    ClipMeta {
        image_hash: image.source_hash,
        spec_hash: fnv1a64(spec_text.as_bytes()),
        sync_period: config.encoder.sync_period,
        data_mode: config.encoder.decode_params().data,
        outputs_in_trace: config.encoder.outputs_in_trace,
        capacity: config.capacity as u64,
        post_trigger: config.post_trigger as u64,
    }
}

/// The tail of the pipeline shared by both stagings: ring capture,
/// binding, monitoring, violation-triggered freeze.
struct Tail<'a> {
    ring: Option<RingBuffer>,
    monitor: OnlineMonitor<'a>,
    lanes: Vec<(usize, crate::rv_engine::Selector, Option<usize>)>,
    clip: Option<TraceClip>,
    violations: Vec<Violation>,
    event_count: usize,
}

impl<'a> Tail<'a> {
    fn record(&mut self, item: RingItem) {
        if let Some(ring) = self.ring.as_mut() {
            match ring.record(item) {
                Ok(Some(clip)) => self.clip = Some(clip),
                Ok(None) => {}
                Err(_) => self.ring = None, // frozen: capture is complete
            }
        }
        if self.clip.is_some() {
            self.ring = None;
        }
    }

    fn on_event(&mut self, event: Event) -> Result<(), PipelineError> {
        self.event_count += 1;
        self.record(RingItem::Event(event.clone()));
        let batch = bind_one(&self.lanes, &event);
        if !batch.is_empty() {
            self.monitor.feed(event.ts, &batch)?;
            self.deliver_violations();
        }
        Ok(())
    }

    fn deliver_violations(&mut self) {
        for v in self.monitor.drain_violations() {
            if self.violations.is_empty() {
                if let Some(ring) = self.ring.as_mut() {
                    match ring.on_violation(v.clone()) {
                        Ok(Some(clip)) => {
                            self.clip = Some(clip);
                            self.ring = None;
                        }
                        Ok(None) => {}
                        Err(_) => {}
                    }
                }
            }
            self.violations.push(v);
        }
    }

    fn finish(mut self) -> (Option<TraceClip>, Vec<Violation>, usize) {
        self.monitor.finish();
        self.deliver_violations();
        let clip = self
            .clip
            .take()
            .or_else(|| self.ring.take().and_then(|r| r.finish()));
        (clip, self.violations, self.event_count)
    }
}

/// Events can map onto several input streams; all share the event's
/// timestamp and feed the monitor as one batch.
fn bind_one(
    lanes: &[(usize, crate::rv_engine::Selector, Option<usize>)],
    event: &Event,
) -> Vec<(usize, crate::rv_engine::Val)> {
    use crate::rv_engine::{Selector, Val};
    let mut out = Vec::new();
    for (stream, selector, func) in lanes {
        let value = match (selector, &event.kind) {
            (Selector::VarWrite { addr }, EventKind::VarWrite { addr: a, value }) if addr == a => {
                Some(Val::Int(*value))
            }
            (Selector::Output { port }, EventKind::Output { port: p, value }) if port == p => {
                Some(match value {
                    Value::Int(i) => Val::Int(*i),
                    Value::Float(f) => Val::Float(*f),
                })
            }
            (Selector::Itm { channel }, EventKind::Itm { channel: c, value }) if channel == c => {
                Some(match value {
                    Value::Int(i) => Val::Int(*i),
                    Value::Float(f) => Val::Float(*f),
                })
            }
            (Selector::LockReq { mutex }, EventKind::LockReq(m)) if mutex == m => Some(Val::Unit),
            (Selector::LockAcq { mutex }, EventKind::LockAcq(m)) if mutex == m => Some(Val::Unit),
            (Selector::LockRel { mutex }, EventKind::LockRel(m)) if mutex == m => Some(Val::Unit),
            (Selector::FuncEnter { .. }, EventKind::FuncEnter(f)) if *func == Some(*f) => {
                Some(Val::Unit)
            }
            (Selector::FuncExit { .. }, EventKind::FuncExit(f)) if *func == Some(*f) => {
                Some(Val::Unit)
            }
            (Selector::Branch { addr }, EventKind::Branch { addr: a, taken }) if addr == a => {
                Some(Val::Bool(*taken))
            }
            (Selector::Gap, EventKind::Gap) => Some(Val::Unit),
            _ => None,
        };
        if let Some(v) = value {
            out.push((*stream, v));
        }
    }
    out
}

pub fn run_pipeline(
    image: &BinaryImage,
    spec_text: &str,
    bindings_text: &str,
    config: &PipelineConfig,
) -> Result<PipelineReport, PipelineError> {
    let graph = parse_spec(spec_text)?;
    let bindings = parse_bindings(bindings_text)?;
    // Resolve binding lanes once, up front, the same way bind_events does.
    let probe = bind_events(&graph, &bindings, image, &[])?;
    drop(probe);
    let mut lanes = Vec::new();
    for input in &graph.inputs {
        let b = bindings
            .iter()
            .find(|b| b.stream == input.name)
            .expect("validated by bind_events");
        let func = match &b.selector {
            crate::rv_engine::Selector::FuncEnter { name }
            | crate::rv_engine::Selector::FuncExit { name } => {
                image.functions.iter().position(|f| &f.name == name)
            }
            _ => None,
        };
        let idx = graph
            .inputs
            .iter()
            .position(|i| i.name == input.name)
            .expect("input exists");
        lanes.push((idx, b.selector.clone(), func));
    }

    let meta = clip_meta(image, spec_text, config);
    let tail = Tail {
        ring: Some(RingBuffer::new(config.capacity, config.post_trigger, meta)),
        monitor: OnlineMonitor::new(&graph)?,
        lanes,
        clip: None,
        violations: Vec::new(),
        event_count: 0,
    };

    match config.staging {
        Staging::Serial => run_serial(image, config, tail),
        Staging::Concurrent => run_concurrent(image, config, tail),
    }
}

fn run_serial(
    image: &BinaryImage,
    config: &PipelineConfig,
    mut tail: Tail<'_>,
) -> Result<PipelineReport, PipelineError> {
    let mut machine = Machine::new(image, config.sim.clone())?;
    let mut encoder = Encoder::new(image, config.encoder.clone());
    let mut decoder = Decoder::new(image, config.encoder.decode_params());
    let mut extractor = Extractor::new(image, config.watch.clone());
    let mut compressed_bytes = 0u64;

    let summary = {
        let mut step = |rec: crate::target_sim::ExecRecord| -> Result<(), PipelineError> {
            encoder.feed(&rec)?;
            for pkt in encoder.drain_packets() {
                compressed_bytes += pkt.bytes.len() as u64;
                decoder.feed(&pkt.bytes)?;
                tail.record(RingItem::Raw(pkt));
            }
            for entry in decoder.drain_flow() {
                extractor.feed(&entry);
            }
            for event in extractor.drain() {
                tail.on_event(event)?;
            }
            Ok(())
        };
        let mut pending_err = None;
        let summary = machine.run_to_end(&mut |rec| {
            if pending_err.is_none() {
                if let Err(e) = step(rec) {
                    pending_err = Some(e);
                }
            }
        })?;
        if let Some(e) = pending_err {
            return Err(e);
        }
        summary
    };

    for pkt in encoder.finish() {
        compressed_bytes += pkt.bytes.len() as u64;
        decoder.feed(&pkt.bytes)?;
        tail.record(RingItem::Raw(pkt));
    }
    let (flow, _) = decoder.finish()?;
    for entry in flow.entries {
        extractor.feed(&entry);
    }
    let stream = extractor.finish();
    for event in stream.events {
        tail.on_event(event)?;
    }

    let (clip, violations, event_count) = tail.finish();
    Ok(PipelineReport {
        status: summary.status,
        outputs: summary.outputs,
        compression: crate::trace_codec::measure_counts(summary.instructions, compressed_bytes),
        event_count,
        violations,
        clip,
        warnings: stream.warnings,
        instructions: summary.instructions,
        cycles: summary.cycles,
    })
}

enum StageItem {
    Packet(EncodedPacket),
    Event(Event),
}

fn run_concurrent(
    image: &BinaryImage,
    config: &PipelineConfig,
    mut tail: Tail<'_>,
) -> Result<PipelineReport, PipelineError> {
    use std::sync::mpsc;

    let (rec_tx, rec_rx) = mpsc::sync_channel::<crate::target_sim::ExecRecord>(1024);
    let (pkt_tx, pkt_rx) = mpsc::sync_channel::<EncodedPacket>(1024);
    let (mix_tx, mix_rx) = mpsc::sync_channel::<StageItem>(1024);

    std::thread::scope(|scope| -> Result<PipelineReport, PipelineError> {
        // Stage 1: simulator.
        let sim_handle = scope.spawn({
            let sim = config.sim.clone();
            move || -> Result<crate::target_sim::RunSummary, PipelineError> {
                let mut machine = Machine::new(image, sim)?;
                let summary = machine.run_to_end(&mut |rec| {
                    let _ = rec_tx.send(rec);
                })?;
                Ok(summary)
            }
        });

        // Stage 2: encoder.
        let enc_handle = scope.spawn({
            let encoder_config = config.encoder.clone();
            move || -> Result<u64, PipelineError> {
                let mut encoder = Encoder::new(image, encoder_config);
                let mut bytes = 0u64;
                for rec in rec_rx.iter() {
                    encoder.feed(&rec)?;
                    for pkt in encoder.drain_packets() {
                        bytes += pkt.bytes.len() as u64;
                        let _ = pkt_tx.send(pkt);
                    }
                }
                for pkt in encoder.finish() {
                    bytes += pkt.bytes.len() as u64;
                    let _ = pkt_tx.send(pkt);
                }
                Ok(bytes)
            }
        });

        // Stage 3: decoder + extractor; forwards packets for the ring.
        let dec_handle = scope.spawn({
            let params = config.encoder.decode_params();
            let watch = config.watch.clone();
            move || -> Result<Vec<String>, PipelineError> {
                let mut decoder = Decoder::new(image, params);
                let mut extractor = Extractor::new(image, watch);
                for pkt in pkt_rx.iter() {
                    decoder.feed(&pkt.bytes)?;
                    let _ = mix_tx.send(StageItem::Packet(pkt));
                    for entry in decoder.drain_flow() {
                        extractor.feed(&entry);
                    }
                    for event in extractor.drain() {
                        let _ = mix_tx.send(StageItem::Event(event));
                    }
                }
                let (flow, _) = decoder.finish()?;
                for entry in flow.entries {
                    extractor.feed(&entry);
                }
                let stream = extractor.finish();
                for event in stream.events {
                    let _ = mix_tx.send(StageItem::Event(event));
                }
                Ok(stream.warnings)
            }
        });

        // Stage 4 (this thread): ring + monitor + trigger.
        for item in mix_rx.iter() {
            match item {
                StageItem::Packet(pkt) => tail.record(RingItem::Raw(pkt)),
                StageItem::Event(event) => tail.on_event(event)?,
            }
        }

        let summary = sim_handle
            .join()
            .map_err(|_| PipelineError::Channel("simulator stage panicked".into()))??;
        let compressed_bytes = enc_handle
            .join()
            .map_err(|_| PipelineError::Channel("encoder stage panicked".into()))??;
        let warnings = dec_handle
            .join()
            .map_err(|_| PipelineError::Channel("decoder stage panicked".into()))??;

        let (clip, violations, event_count) = tail.finish();
        Ok(PipelineReport {
            status: summary.status,
            outputs: summary.outputs,
            compression: crate::trace_codec::measure_counts(summary.instructions, compressed_bytes),
            event_count,
            violations,
            clip,
            warnings,
            instructions: summary.instructions,
            cycles: summary.cycles,
        })
    })
}

/// Replay a clip's event section through a spec: the recorded violation
/// must reproduce at the identical timestamp.
pub fn replay_clip(
    clip: &TraceClip,
    image: &BinaryImage,
    spec_text: &str,
    bindings_text: &str,
) -> Result<ReplayOutcome, PipelineError> {
    use crate::trigger_buffer::ClipError;
    let image_hash = image.source_hash;
    let spec_hash = fnv1a64(spec_text.as_bytes());
    if image_hash != clip.meta.image_hash {
        return Err(ClipError::HashMismatch {
            what: "image".into(),
            expected: clip.meta.image_hash,
            actual: image_hash,
        }
        .into());
    }
    if spec_hash != clip.meta.spec_hash {
        return Err(ClipError::HashMismatch {
            what: "spec".into(),
            expected: clip.meta.spec_hash,
            actual: spec_hash,
        }
        .into());
    }
    let graph = parse_spec(spec_text)?;
    let bindings = parse_bindings(bindings_text)?;
    let events = clip.all_events();
    let inputs = bind_events(&graph, &bindings, image, &events)?;
    let (result, _) = crate::rv_engine::evaluate_online(&graph, &inputs)?;
    let reproduced = result
        .violations
        .iter()
        .any(|v| v.assertion == clip.violation.assertion && v.ts == clip.violation.ts);
    Ok(ReplayOutcome {
        reproduced,
        first_violation: result.violations.first().cloned(),
        violations: result.violations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub reproduced: bool,
    pub first_violation: Option<Violation>,
    pub violations: Vec<Violation>,
}

/// Transition index of a violation: the value of the latest transition
/// marker (ITM channel 0) at or before the violation.
pub fn transition_of(events: &[Event], ts: Ts) -> Option<usize> {
    events
        .iter()
        .filter(|e| e.ts <= ts)
        .filter_map(|e| match &e.kind {
            EventKind::Itm {
                channel: 0,
                value: Value::Int(k),
            } => Some(*k as usize),
            _ => None,
        })
        .last()
}
