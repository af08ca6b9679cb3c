//! Machine state and the instruction interpreter.

use super::{
    ExecRecord, OutputEntry, Payload, ProbeMode, RunSummary, SimConfig, SimError,
    TerminationStatus, TrapKind,
};
use crate::program_model::{BinaryImage, FloatOp, Imm, Instruction, IntOp, Reg, NUM_MUTEXES};
use crate::rng::SplitMix64;
use crate::value::Value;
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThreadStatus {
    Runnable,
    BlockedOn(u8),
    Halted,
}

#[derive(Debug, Clone)]
struct ThreadState {
    pc: usize,
    r: [i64; 16],
    f: [f64; 8],
    rstack: Vec<usize>,
    status: ThreadStatus,
    /// Set between a lock request and the matching acquisition step. While
    /// pending, the thread's next executed record is always the `acq` at
    /// the same address — the property the trace decoder relies on.
    lock_pending: Option<u8>,
}

#[derive(Debug, Clone, Default)]
struct MutexState {
    owner: Option<usize>,
    waiters: VecDeque<usize>,
}

/// Truncate toward zero at 2^-24 resolution, the fixed-point model used
/// by `fixmul`. Exposed so oracles can reuse the exact helper.
pub fn trunc24(v: f64) -> f64 {
    (v * 16_777_216.0).trunc() / 16_777_216.0
}

pub struct Machine<'a> {
    image: &'a BinaryImage,
    config: SimConfig,
    mem: Vec<i64>,
    threads: Vec<ThreadState>,
    mutexes: Vec<MutexState>,
    cycle: u64,
    instructions: u64,
    rng: SplitMix64,
    outputs: Vec<OutputEntry>,
    /// Set when the current thread must give up the CPU.
    resched: bool,
}

impl<'a> Machine<'a> {
    pub fn new(image: &'a BinaryImage, config: SimConfig) -> Result<Self, SimError> {
        if config.qmin < 1 || config.qmin > config.qmax {
            return Err(SimError::Config(format!(
                "quantum range [{}, {}] invalid (need 1 <= qmin <= qmax)",
                config.qmin, config.qmax
            )));
        }
        let mut mem = vec![0i64; config.mem_size];
        for &(idx, value) in &config.inputs {
            if idx >= mem.len() {
                return Err(SimError::Config(format!(
                    "input cell {idx} outside memory of {} cells",
                    mem.len()
                )));
            }
            mem[idx] = value;
        }
        let threads = image
            .threads
            .iter()
            .map(|t| ThreadState {
                pc: image.functions[t.entry_fn].entry,
                r: [0; 16],
                f: [0.0; 8],
                rstack: Vec::new(),
                status: ThreadStatus::Runnable,
                lock_pending: None,
            })
            .collect();
        let rng = SplitMix64::new(config.seed);
        Ok(Machine {
            image,
            config,
            mem,
            threads,
            mutexes: vec![MutexState::default(); NUM_MUTEXES as usize],
            cycle: 0,
            instructions: 0,
            rng,
            outputs: Vec::new(),
            resched: false,
        })
    }

    pub fn thread_status(&self, thread: usize) -> ThreadStatus {
        self.threads[thread].status
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn memory(&self) -> &[i64] {
        &self.mem
    }

    pub fn int_reg(&self, thread: usize, reg: u8) -> i64 {
        self.threads[thread].r[reg as usize]
    }

    pub fn float_reg(&self, thread: usize, reg: u8) -> f64 {
        self.threads[thread].f[reg as usize]
    }

    /// Execute exactly one instruction on `thread`.
    pub fn step(&mut self, thread: usize) -> Result<ExecRecord, SimError> {
        if self.threads[thread].status != ThreadStatus::Runnable {
            return Err(SimError::IllegalState(thread));
        }
        Ok(self.exec_one(thread))
    }

    /// Drive the scheduler until every thread halts or blocks, or the
    /// watchdog fires.
    pub fn run_to_end(
        &mut self,
        sink: &mut dyn FnMut(ExecRecord),
    ) -> Result<RunSummary, SimError> {
        // Round-robin pointer one behind thread 0, so the first declared
        // (main) thread is dispatched first.
        let mut current = self.threads.len() - 1;
        loop {
            let Some(next) = self.next_runnable(current) else {
                break;
            };
            current = next;
            let mut quantum = self
                .rng
                .range_inclusive(self.config.qmin, self.config.qmax);
            self.resched = false;
            while quantum > 0 {
                if self.cycle >= self.config.max_cycles {
                    return Ok(self.finish(TerminationStatus::WatchdogTruncated));
                }
                let before = self.cycle;
                let rec = self.exec_one(current);
                sink(rec);
                quantum = quantum.saturating_sub(self.cycle - before);
                if self.resched {
                    break;
                }
            }
        }
        let status = if self
            .threads
            .iter()
            .all(|t| t.status == ThreadStatus::Halted)
        {
            TerminationStatus::AllHalted
        } else {
            TerminationStatus::AllBlocked
        };
        Ok(self.finish(status))
    }

    fn finish(&mut self, status: TerminationStatus) -> RunSummary {
        RunSummary {
            outputs: std::mem::take(&mut self.outputs),
            status,
            wait_cycle: if status == TerminationStatus::AllBlocked {
                self.wait_for_cycle()
            } else {
                None
            },
            cycles: self.cycle,
            instructions: self.instructions,
        }
    }

    fn next_runnable(&self, current: usize) -> Option<usize> {
        let n = self.threads.len();
        (1..=n)
            .map(|off| (current + off) % n)
            .find(|&t| self.threads[t].status == ThreadStatus::Runnable)
    }

    /// Threads forming a cycle in the wait-for graph (thread waits on
    /// mutex, mutex held by thread), if one exists.
    pub fn wait_for_cycle(&self) -> Option<Vec<usize>> {
        let waits_on = |t: usize| -> Option<usize> {
            match self.threads[t].status {
                ThreadStatus::BlockedOn(m) => self.mutexes[m as usize].owner,
                _ => None,
            }
        };
        for start in 0..self.threads.len() {
            let mut path = vec![start];
            let mut cur = start;
            while let Some(next) = waits_on(cur) {
                if let Some(pos) = path.iter().position(|&p| p == next) {
                    return Some(path[pos..].to_vec());
                }
                path.push(next);
                cur = next;
            }
        }
        None
    }

    fn trap(&mut self, thread: usize, kind: TrapKind) -> Payload {
        self.threads[thread].status = ThreadStatus::Halted;
        self.resched = true;
        Payload::Trap { kind }
    }

    fn read_src(&self, thread: usize, src: Reg) -> Value {
        let t = &self.threads[thread];
        match src {
            Reg::Int(i) => Value::Int(t.r[i as usize]),
            Reg::Float(i) => Value::Float(t.f[i as usize]),
        }
    }

    fn exec_one(&mut self, thread: usize) -> ExecRecord {
        let addr = self.threads[thread].pc;
        let mut cost = 1u64;

        let payload = if addr >= self.image.len() {
            self.trap(thread, TrapKind::PcOutOfRange(addr))
        } else {
            match self.image.instructions[addr].clone() {
                Instruction::Set { dst, imm } => {
                    let t = &mut self.threads[thread];
                    match (dst, imm) {
                        (Reg::Int(i), Imm::Int(v)) => t.r[i as usize] = v,
                        (Reg::Float(i), Imm::Float(v)) => t.f[i as usize] = v,
                        (Reg::Float(i), Imm::Int(v)) => t.f[i as usize] = v as f64,
                        (Reg::Int(_), Imm::Float(_)) => unreachable!("rejected by assembler"),
                    }
                    t.pc += 1;
                    Payload::Plain
                }
                Instruction::IntOp { op, dst, a, b } => {
                    let t = &mut self.threads[thread];
                    let (x, y) = (t.r[a as usize], t.r[b as usize]);
                    t.r[dst as usize] = match op {
                        IntOp::Add => x.wrapping_add(y),
                        IntOp::Sub => x.wrapping_sub(y),
                        IntOp::Mul => x.wrapping_mul(y),
                    };
                    t.pc += 1;
                    Payload::Plain
                }
                Instruction::FloatOp { op, dst, a, b } => {
                    let t = &mut self.threads[thread];
                    let (x, y) = (t.f[a as usize], t.f[b as usize]);
                    t.f[dst as usize] = match op {
                        FloatOp::Addf => x + y,
                        FloatOp::Divf => x / y, // IEEE: 1/0 = inf, 0/0 = NaN
                        FloatOp::Fixmul => trunc24(x * y),
                    };
                    t.pc += 1;
                    Payload::Plain
                }
                Instruction::Load { dst, addr: areg } => {
                    let cell = self.threads[thread].r[areg as usize];
                    if cell < 0 || cell as usize >= self.mem.len() {
                        self.trap(thread, TrapKind::MemoryFault(cell as usize))
                    } else {
                        let raw = self.mem[cell as usize];
                        let t = &mut self.threads[thread];
                        match dst {
                            Reg::Int(i) => t.r[i as usize] = raw,
                            Reg::Float(i) => t.f[i as usize] = f64::from_bits(raw as u64),
                        }
                        t.pc += 1;
                        Payload::Plain
                    }
                }
                Instruction::Store { src, addr: areg } => {
                    let cell = self.threads[thread].r[areg as usize];
                    if cell < 0 || cell as usize >= self.mem.len() {
                        self.trap(thread, TrapKind::MemoryFault(cell as usize))
                    } else {
                        let t = &mut self.threads[thread];
                        let raw = match src {
                            Reg::Int(i) => t.r[i as usize],
                            Reg::Float(i) => t.f[i as usize].to_bits() as i64,
                        };
                        self.mem[cell as usize] = raw;
                        t.pc += 1;
                        Payload::Store {
                            addr: cell as usize,
                            value: raw,
                        }
                    }
                }
                Instruction::Br { target } => {
                    self.threads[thread].pc = target;
                    Payload::Plain
                }
                Instruction::Brc { cond, target } => {
                    let t = &mut self.threads[thread];
                    let taken = t.r[cond as usize] != 0;
                    t.pc = if taken { target } else { addr + 1 };
                    Payload::Branch { taken }
                }
                Instruction::Call { target } => {
                    let t = &mut self.threads[thread];
                    t.rstack.push(addr + 1);
                    t.pc = target;
                    Payload::Plain
                }
                Instruction::Calli { reg } => {
                    let target = self.threads[thread].r[reg as usize];
                    if target < 0 || !self.image.is_function_entry(target as usize) {
                        self.trap(thread, TrapKind::BadCallTarget(target as usize))
                    } else {
                        let t = &mut self.threads[thread];
                        t.rstack.push(addr + 1);
                        t.pc = target as usize;
                        Payload::IndirectTarget {
                            target: target as usize,
                        }
                    }
                }
                Instruction::Ret => match self.threads[thread].rstack.pop() {
                    Some(ra) => {
                        self.threads[thread].pc = ra;
                        Payload::IndirectTarget { target: ra }
                    }
                    None => self.trap(thread, TrapKind::BadReturn),
                },
                Instruction::Out { port, src } => {
                    let value = self.read_src(thread, src);
                    self.threads[thread].pc += 1;
                    Payload::Output { port, value }
                }
                Instruction::Emit { channel, src } => {
                    let value = self.read_src(thread, src);
                    if self.config.probe_mode == ProbeMode::Printf {
                        cost += self.config.probe_cost;
                    }
                    self.threads[thread].pc += 1;
                    Payload::Itm { channel, value }
                }
                Instruction::Lock { mutex } => {
                    let m = mutex as usize;
                    if self.threads[thread].lock_pending == Some(mutex) {
                        // Grant observation step: ownership was reserved at
                        // request time or transferred by unlock.
                        debug_assert_eq!(self.mutexes[m].owner, Some(thread));
                        let t = &mut self.threads[thread];
                        t.lock_pending = None;
                        t.pc += 1;
                        Payload::LockAcq { mutex }
                    } else if self.mutexes[m].owner == Some(thread) {
                        self.trap(thread, TrapKind::RelockHeld(mutex))
                    } else if self.mutexes[m].owner.is_none() {
                        self.mutexes[m].owner = Some(thread);
                        self.threads[thread].lock_pending = Some(mutex);
                        Payload::LockReq { mutex }
                    } else {
                        self.mutexes[m].waiters.push_back(thread);
                        let t = &mut self.threads[thread];
                        t.lock_pending = Some(mutex);
                        t.status = ThreadStatus::BlockedOn(mutex);
                        self.resched = true;
                        Payload::LockReq { mutex }
                    }
                }
                Instruction::Unlock { mutex } => {
                    let m = mutex as usize;
                    if self.mutexes[m].owner != Some(thread) {
                        self.trap(thread, TrapKind::BadUnlock(mutex))
                    } else {
                        // Ownership transfers to the first waiter at release
                        // time; the waiter observes the grant when scheduled.
                        match self.mutexes[m].waiters.pop_front() {
                            Some(w) => {
                                self.mutexes[m].owner = Some(w);
                                self.threads[w].status = ThreadStatus::Runnable;
                            }
                            None => self.mutexes[m].owner = None,
                        }
                        self.threads[thread].pc += 1;
                        Payload::LockRel { mutex }
                    }
                }
                Instruction::Yield => {
                    self.threads[thread].pc += 1;
                    self.resched = true;
                    Payload::Plain
                }
                Instruction::Halt => {
                    self.threads[thread].status = ThreadStatus::Halted;
                    self.resched = true;
                    Payload::Plain
                }
            }
        };

        self.cycle += cost;
        self.instructions += 1;
        if let Payload::Output { port, value } = payload {
            self.outputs.push(OutputEntry {
                cycle: self.cycle,
                port,
                value,
            });
        }
        ExecRecord {
            cycle: self.cycle,
            thread,
            addr,
            payload,
        }
    }
}
