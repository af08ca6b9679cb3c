//! Save-on-trigger capture: ring buffers of recent raw packets and
//! refined events, frozen into an exportable clip when the monitor
//! reports a violation.
//!
//! Two parallel ring lanes (raw wire packets, extracted events) share one
//! control state: `Armed` until a violation arrives, then
//! `CapturingPost` for a configured number of further records, then
//! `Frozen`. The raw lane of the resulting clip is trimmed to start at a
//! SYNC burst head so it decodes on its own.

mod clip;

pub use clip::{export_clip, import_clip, ClipError, ClipMeta, TraceClip};

use crate::event_extract::Event;
use crate::rv_engine::Violation;
use crate::trace_codec::EncodedPacket;
use std::collections::VecDeque;

pub const DEFAULT_CAPACITY: usize = 65_536;
pub const DEFAULT_POST_TRIGGER: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BufferState {
    Armed,
    CapturingPost { remaining: usize },
    Frozen,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RingItem {
    Raw(EncodedPacket),
    Event(Event),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BufferError {
    #[error("buffer is frozen")]
    Frozen,
    #[error("buffer is not armed")]
    NotArmed,
}

#[derive(Debug)]
pub struct RingBuffer {
    capacity: usize,
    post_trigger: usize,
    meta: ClipMeta,
    raw: VecDeque<EncodedPacket>,
    events: VecDeque<Event>,
    state: BufferState,
    violation: Option<Violation>,
    post_raw: Vec<EncodedPacket>,
    post_events: Vec<Event>,
}

impl RingBuffer {
    pub fn new(capacity: usize, post_trigger: usize, meta: ClipMeta) -> Self {
        RingBuffer {
            capacity,
            post_trigger,
            meta,
            raw: VecDeque::new(),
            events: VecDeque::new(),
            state: BufferState::Armed,
            violation: None,
            post_raw: Vec::new(),
            post_events: Vec::new(),
        }
    }

    pub fn state(&self) -> BufferState {
        self.state
    }

    /// Append an item; in post-trigger capture the buffer freezes by
    /// itself once the configured number of items has been recorded, and
    /// the finished clip is returned.
    pub fn record(&mut self, item: RingItem) -> Result<Option<TraceClip>, BufferError> {
        match self.state {
            BufferState::Frozen => Err(BufferError::Frozen),
            BufferState::Armed => {
                match item {
                    RingItem::Raw(p) => {
                        self.raw.push_back(p);
                        if self.raw.len() > self.capacity {
                            self.raw.pop_front();
                        }
                    }
                    RingItem::Event(e) => {
                        self.events.push_back(e);
                        if self.events.len() > self.capacity {
                            self.events.pop_front();
                        }
                    }
                }
                Ok(None)
            }
            BufferState::CapturingPost { remaining } => {
                match item {
                    RingItem::Raw(p) => self.post_raw.push(p),
                    RingItem::Event(e) => self.post_events.push(e),
                }
                let remaining = remaining - 1;
                if remaining == 0 {
                    return Ok(Some(self.freeze()));
                }
                self.state = BufferState::CapturingPost { remaining };
                Ok(None)
            }
        }
    }

    /// Violation trigger: freeze pre-trigger history and start the
    /// post-trigger window (immediately frozen when it is zero).
    pub fn on_violation(&mut self, v: Violation) -> Result<Option<TraceClip>, BufferError> {
        if self.state != BufferState::Armed {
            return Err(BufferError::NotArmed);
        }
        self.violation = Some(v);
        if self.post_trigger == 0 {
            return Ok(Some(self.freeze()));
        }
        self.state = BufferState::CapturingPost {
            remaining: self.post_trigger,
        };
        Ok(None)
    }

    /// End of stream while capturing: freeze with however many
    /// post-trigger items arrived.
    pub fn finish(mut self) -> Option<TraceClip> {
        match self.state {
            BufferState::CapturingPost { .. } => Some(self.freeze()),
            _ => None,
        }
    }

    fn freeze(&mut self) -> TraceClip {
        self.state = BufferState::Frozen;
        let pre_raw: Vec<EncodedPacket> = std::mem::take(&mut self.raw).into();
        let pre_events: Vec<Event> = std::mem::take(&mut self.events).into();
        let post_raw = std::mem::take(&mut self.post_raw);
        let post_events = std::mem::take(&mut self.post_events);

        // SYNC-trim: the raw region must begin at a burst head. Leading
        // packets that cannot anchor a decode are discarded (up to one
        // sync period of history); the event lane is unaffected.
        let mut all_raw: Vec<EncodedPacket> = pre_raw;
        let pre_len = all_raw.len();
        all_raw.extend(post_raw);
        let first_head = all_raw.iter().position(|p| p.burst_head);
        let (raw_pre, raw_post): (Vec<EncodedPacket>, Vec<EncodedPacket>) = match first_head {
            Some(at) => {
                let kept: Vec<EncodedPacket> = all_raw.split_off(at);
                let split = pre_len.saturating_sub(at);
                let mut kept = kept;
                let post = kept.split_off(split.min(kept.len()));
                (kept, post)
            }
            None => (Vec::new(), Vec::new()),
        };

        TraceClip {
            meta: self.meta.clone(),
            pre_raw: raw_pre.into_iter().map(|p| (p.bytes, p.burst_head)).collect(),
            post_raw: raw_post.into_iter().map(|p| (p.bytes, p.burst_head)).collect(),
            pre_events,
            post_events,
            violation: self.violation.clone().expect("frozen implies violation"),
        }
    }
}
