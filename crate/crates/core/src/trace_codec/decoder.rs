//! Control-flow reconstruction from the packet stream.
//!
//! The decoder walks the binary image and generates one record per
//! executed instruction. Sequential flow is inferred; a conditional
//! branch consumes one atom bit; indirect transfers consume a TARGET;
//! traced stores, outputs and instrumentation consume DATA/OUTPUT/ITM
//! packets. SYNC and CTX packets carry the cycle of the record they
//! anchor, which delimits how far the preceding silent run extends —
//! that is what makes preemption points reconstructible.
//!
//! Record generation is strictly demand-driven: a record is produced only
//! when forced by a consuming packet, a delimiter's cycle bound, or
//! end-of-stream. This keeps chunked feeding byte-for-byte equivalent to
//! whole-buffer decoding.
//!
//! Cycle accounting assumes the non-intrusive cost model (one cycle per
//! instruction): `cycle = SYNC cycle + records generated since the SYNC`.

use super::wire::{DecodeError, PacketReader, TracePacket};
use crate::program_model::{BinaryImage, Instruction};
use crate::target_sim::{ExecRecord, Payload};
use crate::value::Value;
use std::collections::VecDeque;

/// What the decoder assumes about optional packet lanes; must match the
/// encoder's configuration for the stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DataMode {
    #[default]
    Off,
    /// Every store consumes one outcome atom bit; watched stores carry a
    /// DATA packet with the address and value.
    Watched,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeParams {
    pub data: DataMode,
    pub outputs_in_trace: bool,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams {
            data: DataMode::Off,
            outputs_in_trace: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FlowEntry {
    Record(ExecRecord),
    /// Observation loss: packets were dropped before the next SYNC.
    Gap,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReconstructedFlow {
    pub entries: Vec<FlowEntry>,
}

impl ReconstructedFlow {
    pub fn records(&self) -> impl Iterator<Item = &ExecRecord> {
        self.entries.iter().filter_map(|e| match e {
            FlowEntry::Record(r) => Some(r),
            FlowEntry::Gap => None,
        })
    }
}

/// Counters for the atom-discipline invariant checks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DecodeStats {
    pub atom_bits_branch: u64,
    pub atom_bits_store: u64,
    pub records: u64,
    pub gaps: u64,
}

#[derive(Debug, Clone)]
struct DThread {
    anchored: bool,
    pc: usize,
    lock_pending: Option<u8>,
    halted: bool,
}

enum StepOutcome {
    Generated,
    /// Input exhausted at a consuming instruction.
    Starved,
    /// Thread cannot produce further records (halted or awaiting a lock).
    Parked,
}

pub struct Decoder<'a> {
    image: &'a BinaryImage,
    params: DecodeParams,
    reader: PacketReader,
    threads: Vec<DThread>,
    current: Option<usize>,
    cycle_base: u64,
    records_since_base: u64,
    started: bool,
    gap: bool,
    /// Genesis streams (first SYNC at cycle 1) have an exact mutex
    /// mirror; suffix decodes park conservatively at lock requests.
    trusted: bool,
    atoms: VecDeque<bool>,
    targets: VecDeque<usize>,
    datas: VecDeque<(usize, i64)>,
    outputs: VecDeque<(u8, Value)>,
    itms: VecDeque<(u8, Value)>,
    mutex_owner: Vec<Option<usize>>,
    mutex_waiters: Vec<VecDeque<usize>>,
    flow: Vec<FlowEntry>,
    stats: DecodeStats,
    offset: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(image: &'a BinaryImage, params: DecodeParams) -> Self {
        let threads = image
            .threads
            .iter()
            .map(|_| DThread {
                anchored: false,
                pc: 0,
                lock_pending: None,
                halted: false,
            })
            .collect();
        Decoder {
            image,
            params,
            reader: PacketReader::default(),
            threads,
            current: None,
            cycle_base: 0,
            records_since_base: 0,
            started: false,
            gap: false,
            trusted: false,
            atoms: VecDeque::new(),
            targets: VecDeque::new(),
            datas: VecDeque::new(),
            outputs: VecDeque::new(),
            itms: VecDeque::new(),
            mutex_owner: vec![None; 16],
            mutex_waiters: vec![VecDeque::new(); 16],
            flow: Vec::new(),
            stats: DecodeStats::default(),
            offset: 0,
        }
    }

    pub fn feed(&mut self, bytes: &[u8]) -> Result<(), DecodeError> {
        self.reader.feed(bytes);
        while let Some((packet, at)) = self.reader.next_packet()? {
            self.offset = at;
            self.process(packet)?;
        }
        Ok(())
    }

    /// Close the stream: walk the current thread to its natural stop and
    /// return the flow. Leftover bytes mean a packet was cut mid-frame.
    pub fn finish(mut self) -> Result<(ReconstructedFlow, DecodeStats), DecodeError> {
        if self.reader.pending_bytes() > 0 {
            return Err(DecodeError::TruncatedPacket {
                offset: self.reader.offset(),
            });
        }
        if !self.gap {
            if let Some(cur) = self.current {
                loop {
                    match self.generate_one(cur, true)? {
                        StepOutcome::Generated => {}
                        StepOutcome::Starved | StepOutcome::Parked => break,
                    }
                }
            }
        }
        Ok((ReconstructedFlow { entries: self.flow }, self.stats))
    }

    pub fn drain_flow(&mut self) -> Vec<FlowEntry> {
        std::mem::take(&mut self.flow)
    }

    fn next_cycle(&self) -> u64 {
        self.cycle_base + self.records_since_base
    }

    fn desync<T>(&self, detail: impl Into<String>) -> Result<T, DecodeError> {
        Err(DecodeError::Desync {
            offset: self.offset,
            detail: detail.into(),
        })
    }

    fn process(&mut self, packet: TracePacket) -> Result<(), DecodeError> {
        if !self.started {
            match packet {
                TracePacket::Sync { .. } => {}
                _ => {
                    return Err(DecodeError::MissingLeadingSync {
                        offset: self.offset,
                    })
                }
            }
        }
        if self.gap {
            // Skip everything until the stream re-anchors at a SYNC.
            if let TracePacket::Sync { .. } = packet {
                self.gap = false;
                self.current = None;
            } else {
                return Ok(());
            }
        }
        match packet {
            TracePacket::Overflow => {
                self.gap = true;
                self.trusted = false;
                self.stats.gaps += 1;
                self.flow.push(FlowEntry::Gap);
                for t in &mut self.threads {
                    t.anchored = false;
                }
                self.current = None;
                self.atoms.clear();
                self.targets.clear();
                self.datas.clear();
                self.outputs.clear();
                self.itms.clear();
            }
            TracePacket::Sync {
                addr,
                lock_pending,
                thread,
                cycle,
            } => {
                if thread >= self.threads.len() {
                    return self.desync(format!("SYNC for unknown thread {thread}"));
                }
                if !self.started {
                    self.started = true;
                    self.trusted = cycle == 1;
                } else if self.current.is_some() {
                    self.walk_to_cycle(cycle)?;
                }
                let t = &self.threads[thread];
                if t.anchored {
                    if t.halted {
                        return self.desync(format!("SYNC for halted thread {thread}"));
                    }
                    if t.pc != addr || t.lock_pending.is_some() != lock_pending {
                        return self.desync(format!(
                            "SYNC disagrees with reconstructed state of thread {thread}: \
                             pc {} vs {}, pending {} vs {}",
                            t.pc,
                            addr,
                            t.lock_pending.is_some(),
                            lock_pending
                        ));
                    }
                } else {
                    if addr >= self.image.len() {
                        return self.desync(format!("SYNC address {addr} outside image"));
                    }
                    let pending = if lock_pending {
                        match &self.image.instructions[addr] {
                            Instruction::Lock { mutex } => Some(*mutex),
                            _ => {
                                return self.desync(format!(
                                    "SYNC pending bit set at non-lock address {addr}"
                                ))
                            }
                        }
                    } else {
                        None
                    };
                    let t = &mut self.threads[thread];
                    t.anchored = true;
                    t.pc = addr;
                    t.lock_pending = pending;
                    t.halted = false;
                }
                self.current = Some(thread);
                self.cycle_base = cycle;
                self.records_since_base = 0;
            }
            TracePacket::Ctx { thread, cycle } => {
                if thread >= self.threads.len() {
                    return self.desync(format!("CTX to unknown thread {thread}"));
                }
                self.walk_to_cycle(cycle)?;
                let t = &self.threads[thread];
                if !t.anchored {
                    return self.desync(format!("CTX to unanchored thread {thread}"));
                }
                if t.halted {
                    return self.desync(format!("CTX to halted thread {thread}"));
                }
                self.current = Some(thread);
            }
            TracePacket::Atoms { bits } => {
                self.atoms.extend(bits);
            }
            TracePacket::Target { addr } => {
                self.targets.push_back(addr);
                self.walk_consumers()?;
            }
            TracePacket::Data { addr, value } => {
                self.datas.push_back((addr, value));
                self.walk_consumers()?;
            }
            TracePacket::Output { port, value } => {
                self.outputs.push_back((port, value));
                self.walk_consumers()?;
            }
            TracePacket::Itm { channel, value } => {
                self.itms.push_back((channel, value));
                self.walk_consumers()?;
            }
        }
        Ok(())
    }

    /// Generate records for the current thread until the next record
    /// would carry `cycle`. The bound must be met exactly.
    fn walk_to_cycle(&mut self, cycle: u64) -> Result<(), DecodeError> {
        let Some(cur) = self.current else {
            return self.desync("no current thread to walk");
        };
        while self.next_cycle() < cycle {
            match self.generate_one(cur, false)? {
                StepOutcome::Generated => {}
                StepOutcome::Starved => {
                    return self.desync(format!(
                        "segment ends at cycle {} but anchor claims {cycle}",
                        self.next_cycle()
                    ))
                }
                StepOutcome::Parked => {
                    return self.desync(format!(
                        "thread {cur} stopped at cycle {} before anchor cycle {cycle}",
                        self.next_cycle()
                    ))
                }
            }
        }
        if self.next_cycle() > cycle {
            return self.desync(format!(
                "anchor cycle {cycle} already passed (at {})",
                self.next_cycle()
            ));
        }
        Ok(())
    }

    /// Drain pending consuming packets by walking the current thread.
    fn walk_consumers(&mut self) -> Result<(), DecodeError> {
        let Some(cur) = self.current else {
            return self.desync("consuming packet before any SYNC");
        };
        while !(self.targets.is_empty()
            && self.datas.is_empty()
            && self.outputs.is_empty()
            && self.itms.is_empty())
        {
            match self.generate_one(cur, false)? {
                StepOutcome::Generated => {}
                StepOutcome::Starved => {
                    return self.desync("consuming packet cannot reach its instruction")
                }
                StepOutcome::Parked => {
                    return self.desync("consuming packet queued for a stopped thread")
                }
            }
        }
        Ok(())
    }

    /// Produce at most one record for thread `cur`. Mid-stream the walk
    /// is driven by packets whose cycle bounds prove how far execution
    /// went, so a pending lock always resolves as the acquisition step.
    /// At end of stream (`at_end`) nothing vouches for further progress:
    /// the acquisition is generated only when the mutex mirror of a
    /// genesis stream proves the thread owns the grant.
    fn generate_one(&mut self, cur: usize, at_end: bool) -> Result<StepOutcome, DecodeError> {
        if !self.threads[cur].anchored {
            return self.desync(format!("thread {cur} is not anchored"));
        }
        if self.threads[cur].halted {
            return Ok(StepOutcome::Parked);
        }

        if let Some(mutex) = self.threads[cur].lock_pending {
            if at_end {
                let owned = self.trusted && self.mutex_owner[mutex as usize] == Some(cur);
                if !owned {
                    return Ok(StepOutcome::Parked);
                }
            }
            let m = mutex as usize;
            self.mutex_owner[m] = Some(cur);
            if let Some(pos) = self.mutex_waiters[m].iter().position(|&w| w == cur) {
                self.mutex_waiters[m].remove(pos);
            }
            let addr = self.threads[cur].pc;
            self.threads[cur].lock_pending = None;
            self.threads[cur].pc = addr + 1;
            self.emit(cur, addr, Payload::LockAcq { mutex });
            return Ok(StepOutcome::Generated);
        }

        let addr = self.threads[cur].pc;
        if addr >= self.image.len() {
            return self.desync(format!("thread {cur} walked past the image at {addr}"));
        }
        let payload = match self.image.instructions[addr].clone() {
            Instruction::Brc { target, .. } => {
                let Some(taken) = self.atoms.pop_front() else {
                    // Mid-stream the encoder always flushes bits ahead of
                    // any packet, so running dry is corruption; at end of
                    // data it just means the capture stopped here.
                    if at_end {
                        return Ok(StepOutcome::Starved);
                    }
                    return Err(DecodeError::AtomUnderflow {
                        offset: self.offset,
                    });
                };
                self.stats.atom_bits_branch += 1;
                self.threads[cur].pc = if taken { target } else { addr + 1 };
                Payload::Branch { taken }
            }
            Instruction::Calli { .. } => {
                let Some(target) = self.targets.pop_front() else {
                    return Ok(StepOutcome::Starved);
                };
                if !self.image.is_function_entry(target) {
                    return self.desync(format!("indirect call target {target} is not an entry"));
                }
                self.threads[cur].pc = target;
                Payload::IndirectTarget { target }
            }
            Instruction::Ret => {
                let Some(target) = self.targets.pop_front() else {
                    return Ok(StepOutcome::Starved);
                };
                if target >= self.image.len() {
                    return self.desync(format!("return target {target} outside image"));
                }
                self.threads[cur].pc = target;
                Payload::IndirectTarget { target }
            }
            Instruction::Store { .. } => match self.params.data {
                DataMode::Off => {
                    self.threads[cur].pc = addr + 1;
                    Payload::Plain
                }
                DataMode::Watched => {
                    let Some(watched) = self.atoms.front().copied() else {
                        if at_end {
                            return Ok(StepOutcome::Starved);
                        }
                        return Err(DecodeError::AtomUnderflow {
                            offset: self.offset,
                        });
                    };
                    if watched {
                        let Some((mem, value)) = self.datas.pop_front() else {
                            return Ok(StepOutcome::Starved);
                        };
                        self.atoms.pop_front();
                        self.stats.atom_bits_store += 1;
                        self.threads[cur].pc = addr + 1;
                        Payload::Store { addr: mem, value }
                    } else {
                        self.atoms.pop_front();
                        self.stats.atom_bits_store += 1;
                        self.threads[cur].pc = addr + 1;
                        Payload::Plain
                    }
                }
                DataMode::Full => {
                    let Some((mem, value)) = self.datas.pop_front() else {
                        return Ok(StepOutcome::Starved);
                    };
                    self.threads[cur].pc = addr + 1;
                    Payload::Store { addr: mem, value }
                }
            },
            Instruction::Out { port, .. } => {
                if self.params.outputs_in_trace {
                    let Some((p, value)) = self.outputs.pop_front() else {
                        return Ok(StepOutcome::Starved);
                    };
                    if p != port {
                        return self.desync(format!(
                            "OUTPUT packet port {p} but instruction writes port {port}"
                        ));
                    }
                    self.threads[cur].pc = addr + 1;
                    Payload::Output { port, value }
                } else {
                    self.threads[cur].pc = addr + 1;
                    Payload::Plain
                }
            }
            Instruction::Emit { channel, .. } => {
                let Some((c, value)) = self.itms.pop_front() else {
                    return Ok(StepOutcome::Starved);
                };
                if c != channel {
                    return self.desync(format!(
                        "ITM packet channel {c} but instruction emits channel {channel}"
                    ));
                }
                self.threads[cur].pc = addr + 1;
                Payload::Itm { channel, value }
            }
            Instruction::Lock { mutex } => {
                // Fresh request. Ownership bookkeeping mirrors the
                // machine: a request on a free mutex reserves it.
                let m = mutex as usize;
                if self.mutex_owner[m].is_none() {
                    self.mutex_owner[m] = Some(cur);
                } else if self.mutex_owner[m] != Some(cur) {
                    self.mutex_waiters[m].push_back(cur);
                }
                self.threads[cur].lock_pending = Some(mutex);
                Payload::LockReq { mutex }
            }
            Instruction::Unlock { mutex } => {
                let m = mutex as usize;
                self.mutex_owner[m] = self.mutex_waiters[m].pop_front();
                self.threads[cur].pc = addr + 1;
                Payload::LockRel { mutex }
            }
            Instruction::Br { target } => {
                self.threads[cur].pc = target;
                Payload::Plain
            }
            Instruction::Call { target } => {
                self.threads[cur].pc = target;
                Payload::Plain
            }
            Instruction::Halt => {
                self.threads[cur].halted = true;
                Payload::Plain
            }
            _ => {
                self.threads[cur].pc = addr + 1;
                Payload::Plain
            }
        };
        self.emit(cur, addr, payload);
        Ok(StepOutcome::Generated)
    }

    fn emit(&mut self, thread: usize, addr: usize, payload: Payload) {
        let cycle = self.next_cycle();
        self.records_since_base += 1;
        self.stats.records += 1;
        self.flow.push(FlowEntry::Record(ExecRecord {
            cycle,
            thread,
            addr,
            payload,
        }));
    }
}
