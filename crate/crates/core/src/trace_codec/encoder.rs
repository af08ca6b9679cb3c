//! Execution trace compressor.
//!
//! Only diversions from inferable control flow go on the wire: taken bits
//! for conditional branches, targets for indirect transfers, periodic
//! SYNC anchors, thread switches, and the configured data/output/ITM
//! payloads. Everything else is reconstructed from the binary image.
//!
//! A SYNC emission is a *burst*: one SYNC per live thread (current thread
//! last) so that a stream suffix starting at a burst can re-anchor every
//! thread — the property ring-buffer clips rely on.

use super::wire::{packet_bytes, TracePacket, MAX_ATOM_BITS};
use super::{DataTrace, EncoderConfig};
use crate::program_model::{BinaryImage, Instruction, Kind};
use crate::target_sim::{ExecRecord, Payload};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EncodeError {
    #[error("trace does not match image: {detail}")]
    TraceImageMismatch { detail: String },
}

fn mismatch<T>(detail: impl Into<String>) -> Result<T, EncodeError> {
    Err(EncodeError::TraceImageMismatch {
        detail: detail.into(),
    })
}

/// One wire packet with ring-buffer metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPacket {
    pub bytes: Vec<u8>,
    /// First SYNC of a sync burst: a valid decode entry point.
    pub burst_head: bool,
    /// Cycle of the record that produced this packet.
    pub cycle: u64,
}

#[derive(Debug, Clone)]
struct ShadowThread {
    pc: usize,
    lock_pending: Option<u8>,
    halted: bool,
}

pub struct Encoder<'a> {
    image: &'a BinaryImage,
    config: EncoderConfig,
    threads: Vec<ShadowThread>,
    mutex_owner: Vec<Option<usize>>,
    mutex_waiters: Vec<Vec<usize>>,
    current: Option<usize>,
    records_since_sync: u64,
    atoms: Vec<bool>,
    out: Vec<EncodedPacket>,
    record_count: u64,
    last_cycle: u64,
}

impl<'a> Encoder<'a> {
    pub fn new(image: &'a BinaryImage, config: EncoderConfig) -> Self {
        let threads = image
            .threads
            .iter()
            .map(|t| ShadowThread {
                pc: image.functions[t.entry_fn].entry,
                lock_pending: None,
                halted: false,
            })
            .collect();
        Encoder {
            image,
            config,
            threads,
            mutex_owner: vec![None; 16],
            mutex_waiters: vec![Vec::new(); 16],
            current: None,
            records_since_sync: 0,
            atoms: Vec::new(),
            out: Vec::new(),
            record_count: 0,
            last_cycle: 0,
        }
    }

    /// Packets produced so far; the caller takes ownership of the chunk.
    pub fn drain_packets(&mut self) -> Vec<EncodedPacket> {
        std::mem::take(&mut self.out)
    }

    pub fn feed(&mut self, rec: &ExecRecord) -> Result<(), EncodeError> {
        if rec.thread >= self.threads.len() {
            return mismatch(format!("record thread {} not in image", rec.thread));
        }
        if rec.addr >= self.image.len() {
            return mismatch(format!("record address {} outside image", rec.addr));
        }
        if matches!(rec.payload, Payload::Trap { .. }) {
            return mismatch("trap records are not encodable".to_string());
        }
        if self.threads[rec.thread].halted {
            return mismatch(format!("record for halted thread {}", rec.thread));
        }
        let expected_pc = self.threads[rec.thread].pc;
        if expected_pc != rec.addr {
            return mismatch(format!(
                "thread {} executed {} but image flow expects {}",
                rec.thread, rec.addr, expected_pc
            ));
        }
        let ins = self.image.instructions[rec.addr].clone();
        check_payload(&ins, &rec.payload)?;

        // Periodic SYNC burst, at the next record boundary.
        if self.current.is_none() || self.records_since_sync >= self.config.sync_period {
            self.flush_atoms(rec.cycle);
            self.emit_burst(rec);
            self.records_since_sync = 0;
        } else if self.current != Some(rec.thread) {
            self.flush_atoms(rec.cycle);
            self.push(
                TracePacket::Ctx {
                    thread: rec.thread,
                    cycle: rec.cycle,
                },
                false,
                rec.cycle,
            );
        }
        self.current = Some(rec.thread);

        match &rec.payload {
            Payload::Branch { taken } => self.push_atom(*taken, rec.cycle),
            Payload::IndirectTarget { target } => {
                self.flush_atoms(rec.cycle);
                self.push(TracePacket::Target { addr: *target }, false, rec.cycle);
            }
            Payload::Store { addr, value } => match &self.config.data_trace {
                DataTrace::Off => {}
                DataTrace::Full => {
                    self.flush_atoms(rec.cycle);
                    self.push(
                        TracePacket::Data {
                            addr: *addr,
                            value: *value,
                        },
                        false,
                        rec.cycle,
                    );
                }
                DataTrace::Watched(set) => {
                    // One outcome bit per store keeps the walk exact;
                    // watched stores additionally carry their payload.
                    let watched = set.contains(addr);
                    self.push_atom(watched, rec.cycle);
                    if watched {
                        self.flush_atoms(rec.cycle);
                        self.push(
                            TracePacket::Data {
                                addr: *addr,
                                value: *value,
                            },
                            false,
                            rec.cycle,
                        );
                    }
                }
            },
            Payload::Output { port, value } => {
                if self.config.outputs_in_trace {
                    self.flush_atoms(rec.cycle);
                    self.push(
                        TracePacket::Output {
                            port: *port,
                            value: *value,
                        },
                        false,
                        rec.cycle,
                    );
                }
            }
            Payload::Itm { channel, value } => {
                self.flush_atoms(rec.cycle);
                self.push(
                    TracePacket::Itm {
                        channel: *channel,
                        value: *value,
                    },
                    false,
                    rec.cycle,
                );
            }
            Payload::Plain
            | Payload::LockReq { .. }
            | Payload::LockAcq { .. }
            | Payload::LockRel { .. } => {}
            Payload::Trap { .. } => unreachable!("rejected above"),
        }

        self.advance_shadow(rec);
        self.records_since_sync += 1;
        self.record_count += 1;
        self.last_cycle = rec.cycle;
        Ok(())
    }

    /// Flush pending atoms and close the stream. A trace that stops while
    /// a thread could still run is a capture loss and ends in OVERFLOW so
    /// the decoder will not extrapolate past the cut.
    pub fn finish(mut self) -> Vec<EncodedPacket> {
        self.flush_atoms(self.last_cycle);
        if self.record_count > 0 && self.any_thread_runnable() {
            self.push(TracePacket::Overflow, false, self.last_cycle);
        }
        self.out
    }

    pub fn record_count(&self) -> u64 {
        self.record_count
    }

    fn any_thread_runnable(&self) -> bool {
        self.threads.iter().enumerate().any(|(i, t)| {
            !t.halted
                && match t.lock_pending {
                    None => true,
                    Some(m) => self.mutex_owner[m as usize] == Some(i),
                }
        })
    }

    fn emit_burst(&mut self, rec: &ExecRecord) {
        let mut ids: Vec<usize> = (0..self.threads.len())
            .filter(|&t| t != rec.thread && !self.threads[t].halted)
            .collect();
        ids.push(rec.thread);
        for (i, t) in ids.into_iter().enumerate() {
            let sh = &self.threads[t];
            self.push(
                TracePacket::Sync {
                    addr: sh.pc,
                    lock_pending: sh.lock_pending.is_some(),
                    thread: t,
                    cycle: rec.cycle,
                },
                i == 0,
                rec.cycle,
            );
        }
    }

    fn push(&mut self, p: TracePacket, burst_head: bool, cycle: u64) {
        self.out.push(EncodedPacket {
            bytes: packet_bytes(&p),
            burst_head,
            cycle,
        });
    }

    fn push_atom(&mut self, bit: bool, cycle: u64) {
        self.atoms.push(bit);
        if self.atoms.len() >= MAX_ATOM_BITS {
            self.flush_atoms(cycle);
        }
    }

    fn flush_atoms(&mut self, cycle: u64) {
        if self.atoms.is_empty() {
            return;
        }
        let bits = std::mem::take(&mut self.atoms);
        self.push(TracePacket::Atoms { bits }, false, cycle);
    }

    fn advance_shadow(&mut self, rec: &ExecRecord) {
        let ins = &self.image.instructions[rec.addr];
        let t = rec.thread;
        match (&rec.payload, ins) {
            (Payload::Branch { taken }, Instruction::Brc { target, .. }) => {
                self.threads[t].pc = if *taken { *target } else { rec.addr + 1 };
            }
            (Payload::IndirectTarget { target }, _) => self.threads[t].pc = *target,
            (Payload::LockReq { mutex }, _) => {
                self.threads[t].lock_pending = Some(*mutex);
                let m = *mutex as usize;
                if self.mutex_owner[m].is_none() {
                    self.mutex_owner[m] = Some(t);
                } else {
                    self.mutex_waiters[m].push(t);
                }
            }
            (Payload::LockAcq { mutex }, _) => {
                self.threads[t].lock_pending = None;
                self.mutex_owner[*mutex as usize] = Some(t);
                self.threads[t].pc = rec.addr + 1;
            }
            (Payload::LockRel { mutex }, _) => {
                let m = *mutex as usize;
                self.mutex_owner[m] = if self.mutex_waiters[m].is_empty() {
                    None
                } else {
                    Some(self.mutex_waiters[m].remove(0))
                };
                self.threads[t].pc = rec.addr + 1;
            }
            (_, Instruction::Br { target }) | (_, Instruction::Call { target }) => {
                self.threads[t].pc = *target;
            }
            (_, Instruction::Halt) => self.threads[t].halted = true,
            _ => self.threads[t].pc = rec.addr + 1,
        }
    }
}

fn check_payload(ins: &Instruction, payload: &Payload) -> Result<(), EncodeError> {
    let kind = ins.kind();
    let ok = match payload {
        Payload::Branch { .. } => kind == Kind::Brc,
        Payload::IndirectTarget { .. } => kind == Kind::Calli || kind == Kind::Ret,
        Payload::Store { .. } => kind == Kind::Store,
        Payload::Output { .. } => kind == Kind::Out,
        Payload::Itm { .. } => kind == Kind::Emit,
        Payload::LockReq { .. } | Payload::LockAcq { .. } => kind == Kind::Lock,
        Payload::LockRel { .. } => kind == Kind::Unlock,
        Payload::Trap { .. } => false,
        Payload::Plain => !matches!(
            kind,
            Kind::Brc | Kind::Calli | Kind::Ret | Kind::Store | Kind::Out | Kind::Emit
                | Kind::Lock | Kind::Unlock
        ),
    };
    if ok {
        Ok(())
    } else {
        mismatch(format!("payload {payload:?} inconsistent with {kind:?}"))
    }
}
