//! Argument surface.

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "tracelab",
    version,
    about = "Trace-based debugging lab: simulate, trace, monitor, capture"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Parse and validate a program; optionally print the call graph.
    Check {
        image: PathBuf,
        /// Print the labeled function call graph.
        #[arg(long)]
        call_graph: bool,
    },
    /// Run a program and print the run report (optionally the trace).
    Sim {
        image: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
        /// Print one line per executed record.
        #[arg(long)]
        dump: bool,
        /// Model printf-style instrumentation cost on `emit`.
        #[arg(long)]
        probe: bool,
    },
    /// Wire-format operations.
    #[command(subcommand)]
    Trace(TraceCommand),
    /// Extract and print the event stream of a run.
    Events {
        image: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        encoder: EncoderArgs,
        #[command(flatten)]
        watch: WatchArgs,
    },
    /// Evaluate a stream spec over a run's events.
    Monitor {
        image: PathBuf,
        spec: PathBuf,
        bindings: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        encoder: EncoderArgs,
        #[command(flatten)]
        watch: WatchArgs,
        /// Print output-stream timelines as well as violations.
        #[arg(long)]
        timelines: bool,
    },
    /// Full save-on-trigger loop; exits 1 when a violation is captured.
    Pipeline {
        image: PathBuf,
        spec: PathBuf,
        bindings: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        encoder: EncoderArgs,
        #[command(flatten)]
        watch: WatchArgs,
        /// Write the frozen clip here on violation.
        #[arg(long)]
        clip: Option<PathBuf>,
        /// Ring capacity (items per lane).
        #[arg(long, default_value_t = 65536)]
        capacity: usize,
        /// Post-trigger items before the buffer freezes.
        #[arg(long, default_value_t = 256)]
        post_trigger: usize,
        /// Run stages sequentially instead of concurrently.
        #[arg(long)]
        serial: bool,
    },
    /// Covering-array generation and execution.
    #[command(subcommand)]
    Ctest(CtestCommand),
    /// The shipped fault-scenario corpus.
    #[command(subcommand)]
    Lab(LabCommand),
    /// Frozen capture files.
    #[command(subcommand)]
    Clip(ClipCommand),
}

#[derive(Subcommand)]
pub enum TraceCommand {
    /// Simulate and write the compressed trace.
    Encode {
        image: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        encoder: EncoderArgs,
    },
    /// Reconstruct the flow from a trace file.
    Decode {
        image: PathBuf,
        trace: PathBuf,
        #[command(flatten)]
        encoder: EncoderArgs,
        /// Print one line per reconstructed record.
        #[arg(long)]
        dump: bool,
    },
    /// Compression statistics for a run.
    Stats {
        image: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        encoder: EncoderArgs,
    },
}

#[derive(Subcommand)]
pub enum CtestCommand {
    /// Generate a t-way covering array from a model file.
    Gen {
        model: PathBuf,
        #[arg(short = 't', long, default_value_t = 2)]
        strength: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the suite (tab-delimited with header) here.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check a suite file for full t-way coverage.
    Verify {
        model: PathBuf,
        suite: PathBuf,
        #[arg(short = 't', long, default_value_t = 2)]
        strength: usize,
    },
    /// Generate, adapt and run a suite against a program.
    Run {
        model: PathBuf,
        image: PathBuf,
        #[arg(short = 't', long, default_value_t = 2)]
        strength: usize,
        /// Seed for covering-array generation (the scheduler seed comes
        /// from --seed / TRACELAB_SEED).
        #[arg(long, default_value_t = 0)]
        array_seed: u64,
        #[command(flatten)]
        sim: SimArgs,
        /// Pass/fail oracle: `finite`, `expect:PORT=VALUE`, or
        /// `spec:SPEC.rvl:BINDINGS`.
        #[arg(long, default_value = "finite")]
        oracle: String,
    },
}

#[derive(Subcommand)]
pub enum LabCommand {
    /// List the shipped scenarios and their expectations.
    List,
    /// Run a scenario through the pipeline; exits 1 on violation.
    Run {
        name: String,
        #[arg(long, value_enum, default_value_t = SpecChoice::White)]
        spec: SpecChoice,
        /// Write the frozen clip here on violation.
        #[arg(long)]
        clip: Option<PathBuf>,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Manifestation-based classification of a scenario.
    Classify {
        name: String,
        /// Number of seed-varied runs.
        #[arg(long, default_value_t = 20)]
        runs: u64,
    },
}

#[derive(Subcommand)]
pub enum ClipCommand {
    /// Print a clip's metadata, violation and content counts.
    Show { clip: PathBuf },
    /// Verify a clip reproduces its violation; exits 0 when it does.
    Replay {
        clip: PathBuf,
        image: PathBuf,
        spec: PathBuf,
        bindings: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
pub enum SpecChoice {
    White,
    Black,
}

#[derive(Args, Clone)]
pub struct SimArgs {
    /// Scheduler seed; the TRACELAB_SEED environment variable wins.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub qmin: u64,
    #[arg(long, default_value_t = 60)]
    pub qmax: u64,
    #[arg(long, default_value_t = 4096)]
    pub mem_size: usize,
    #[arg(long, default_value_t = 100_000_000)]
    pub max_cycles: u64,
    /// Initial memory cells, `CELL=VALUE`, repeatable.
    #[arg(long = "input", value_name = "CELL=VALUE")]
    pub inputs: Vec<String>,
}

#[derive(Args, Clone)]
pub struct EncoderArgs {
    #[arg(long, default_value_t = 4096)]
    pub sync_period: u64,
    /// Data trace mode: `off`, `full`, or `watched:CELL,CELL,...`.
    #[arg(long, default_value = "off")]
    pub data: String,
    /// Leave `out` values off the wire.
    #[arg(long)]
    pub no_outputs: bool,
}

#[derive(Args, Clone)]
pub struct WatchArgs {
    /// Cells whose writes become events, comma separated.
    #[arg(long, value_name = "CELLS")]
    pub watch: Option<String>,
    /// Emit branch events.
    #[arg(long)]
    pub branches: bool,
    /// Drop lock request/acquire/release events.
    #[arg(long)]
    pub no_locks: bool,
}
