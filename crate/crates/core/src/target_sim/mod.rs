//! Deterministic multi-threaded interpreter producing ground-truth
//! execution traces.
//!
//! Scheduling is round-robin over runnable threads with preemption after a
//! quantum of cycles drawn uniformly from `[qmin, qmax]` by a SplitMix64
//! generator, plus a reschedule on `yield`, `halt` and lock blocking.
//! Identical `(image, config)` always reproduce a bit-identical trace.
//!
//! In hardware-trace mode every instruction costs one cycle, so cycle
//! counts equal instruction counts and the trace decoder can reconstruct
//! timing exactly. Under `probe_mode = printf`, each `emit` models a
//! console print and costs `1 + probe_cost` cycles; since quanta are
//! measured in cycles, a print burns the remainder of its quantum and the
//! thread is preempted right after it. That relocation of preemption
//! points is the probe effect: interleavings shift, and races that
//! manifest under hardware trace can vanish when "printf-debugged".

mod machine;

pub use machine::{Machine, ThreadStatus};

use crate::program_model::BinaryImage;
use crate::value::Value;

pub const DEFAULT_QMIN: u64 = 20;
pub const DEFAULT_QMAX: u64 = 60;
pub const DEFAULT_MEM_SIZE: usize = 4096;
pub const DEFAULT_MAX_CYCLES: u64 = 100_000_000;
pub const DEFAULT_PROBE_COST: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeMode {
    /// Non-intrusive hardware trace; `emit` costs a single cycle.
    Off,
    /// printf-style instrumentation; `emit` costs `1 + probe_cost`.
    Printf,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub seed: u64,
    pub qmin: u64,
    pub qmax: u64,
    pub mem_size: usize,
    pub max_cycles: u64,
    pub probe_mode: ProbeMode,
    pub probe_cost: u64,
    /// Initial values for designated memory cells: `mem[idx] = value`.
    pub inputs: Vec<(usize, i64)>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            qmin: DEFAULT_QMIN,
            qmax: DEFAULT_QMAX,
            mem_size: DEFAULT_MEM_SIZE,
            max_cycles: DEFAULT_MAX_CYCLES,
            probe_mode: ProbeMode::Off,
            probe_cost: DEFAULT_PROBE_COST,
            inputs: Vec::new(),
        }
    }
}

impl SimConfig {
    pub fn with_seed(seed: u64) -> Self {
        SimConfig {
            seed,
            ..SimConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrapKind {
    /// Load/store address outside memory.
    MemoryFault(usize),
    /// `calli` to an address that is not a function entry.
    BadCallTarget(usize),
    /// `ret` with an empty return stack.
    BadReturn,
    /// `unlock` of a mutex the thread does not hold.
    BadUnlock(u8),
    /// `lock` of a mutex the thread already holds.
    RelockHeld(u8),
    /// Execution fell off the end of the image.
    PcOutOfRange(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Payload {
    Plain,
    Branch { taken: bool },
    IndirectTarget { target: usize },
    Store { addr: usize, value: i64 },
    Output { port: u8, value: Value },
    Itm { channel: u8, value: Value },
    LockReq { mutex: u8 },
    LockAcq { mutex: u8 },
    LockRel { mutex: u8 },
    Trap { kind: TrapKind },
}

/// One executed instruction step. `cycle` is the global cycle counter
/// after the step, strictly increasing across the whole trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecRecord {
    pub cycle: u64,
    pub thread: usize,
    pub addr: usize,
    pub payload: Payload,
}

pub type ExecutionTrace = Vec<ExecRecord>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutputEntry {
    pub cycle: u64,
    pub port: u8,
    pub value: Value,
}

pub type OutputLog = Vec<OutputEntry>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationStatus {
    AllHalted,
    WatchdogTruncated,
    /// Every non-halted thread is blocked on a mutex.
    AllBlocked,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub outputs: OutputLog,
    pub status: TerminationStatus,
    /// Threads forming a wait-for cycle when the run deadlocked.
    pub wait_cycle: Option<Vec<usize>>,
    /// Final value of the global cycle counter.
    pub cycles: u64,
    pub instructions: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub trace: ExecutionTrace,
    pub summary: RunSummary,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("thread {0} is not runnable")]
    IllegalState(usize),
}

/// Run to termination, collecting the full trace.
pub fn run(image: &BinaryImage, config: &SimConfig) -> Result<RunOutcome, SimError> {
    let mut trace = Vec::new();
    let summary = run_streaming(image, config, &mut |rec| trace.push(rec))?;
    Ok(RunOutcome { trace, summary })
}

/// Run to termination, handing each record to `sink` as it is produced.
pub fn run_streaming(
    image: &BinaryImage,
    config: &SimConfig,
    sink: &mut dyn FnMut(ExecRecord),
) -> Result<RunSummary, SimError> {
    let mut machine = Machine::new(image, config.clone())?;
    machine.run_to_end(sink)
}

/// `run` with printf-style instrumentation enabled.
pub fn run_with_probe(image: &BinaryImage, config: &SimConfig) -> Result<RunOutcome, SimError> {
    let mut probed = config.clone();
    probed.probe_mode = ProbeMode::Printf;
    run(image, &probed)
}

/// Diagnostic line format: `cycle thread addr kind [details]`.
pub fn format_record(image: &BinaryImage, rec: &ExecRecord) -> String {
    let kind = image
        .instructions
        .get(rec.addr)
        .map(|i| format!("{:?}", i.kind()).to_lowercase())
        .unwrap_or_else(|| "?".into());
    let detail = match rec.payload {
        Payload::Plain => String::new(),
        Payload::Branch { taken } => format!(" taken={taken}"),
        Payload::IndirectTarget { target } => format!(" target={target}"),
        Payload::Store { addr, value } => format!(" mem[{addr}]={value}"),
        Payload::Output { port, value } => format!(" port={port} value={value}"),
        Payload::Itm { channel, value } => format!(" chan={channel} value={value}"),
        Payload::LockReq { mutex } => format!(" req m{mutex}"),
        Payload::LockAcq { mutex } => format!(" acq m{mutex}"),
        Payload::LockRel { mutex } => format!(" rel m{mutex}"),
        Payload::Trap { kind } => format!(" trap {kind:?}"),
    };
    format!(
        "{} {} {} {}{}",
        rec.cycle, rec.thread, rec.addr, kind, detail
    )
}

#[cfg(test)]
mod tests;
