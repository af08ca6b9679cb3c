//! Desk-scale lab for non-intrusive trace-based debugging.
//!
//! The crate models the whole observation pipeline of a hardware-traced
//! embedded target in software: a small word-addressed ISA and its
//! deterministic multi-threaded simulator, a compressed control-flow trace
//! wire format with an exact decoder, extraction of higher-level events,
//! an online stream runtime-verification engine with a brute-force
//! reference evaluator, a save-on-trigger ring buffer producing replayable
//! trace clips, a t-way covering-array test generator, and a corpus of
//! fault scenarios (deterministic, race, deadlock, aging, overflow) with a
//! manifestation-based bug classifier.

pub mod anomaly_lab;
pub mod corpus;
pub mod ctest;
pub mod event_extract;
pub mod pipeline;
pub mod program_model;
pub mod rng;
pub mod rv_engine;
pub mod target_sim;
pub mod trace_codec;
pub mod trigger_buffer;
pub mod value;

pub use program_model::{BinaryImage, CallGraph, Instruction};
pub use target_sim::{ExecRecord, SimConfig, TerminationStatus};
pub use value::Value;
