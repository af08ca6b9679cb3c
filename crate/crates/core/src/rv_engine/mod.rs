//! Stream runtime-verification engine for the RVL-1 specification
//! language.
//!
//! RVL-1 is a small timestamped-stream dataflow language:
//!
//! ```text
//! in temp : events<int>
//! def hot = 90 < temp
//! def alarms = count(filter(temp, hot))
//! def ok = within(50, req, ack)
//! out alarms
//! assert ok
//! ```
//!
//! Declarations: `in NAME : events<TYPE>` with TYPE one of int, float,
//! bool, unit; `def NAME = EXPR`; `out NAME`; `assert NAME` (bool
//! streams; every false event is a violation).
//!
//! Operators: `unit`, `time(e)`, `last(v, t)`, `merge(a, b)`,
//! `filter(s, c)`, `count(s)`, `const(k, s)`, `within(d, a, b)`, infix
//! `+ - * < <= == && ||`, prefix `!`. Literals are events at time (0,0)
//! unless they are the first argument of `const` or `within`.
//!
//! Normative semantics (ties and simultaneity):
//! - `merge`: on simultaneous events the left argument wins.
//! - Arithmetic, comparisons and boolean operators are signal lifts: at
//!   any timestamp where either operand has an event and both have a
//!   current value (event at that timestamp or latest earlier), the
//!   operator applies to the current values.
//! - `last(v, t)`: at each `t` event, the value of the latest `v` event
//!   strictly earlier; nothing if none. Recursion is legal only through
//!   this first argument.
//! - `within(d, a, b)`: per `a` event at cycle `ta`, `true` at the first
//!   `b` event with `ta < tb <= ta+d` (cycle comparison), else `false`
//!   at timestamp `(ta+d, MAX)` once the input watermark passes `ta+d`
//!   or at end of stream. Verdicts resolving at one timestamp collapse
//!   into a single event.
//!
//! `evaluate_online` runs in a single pass with memory bounded by the
//! graph size plus pending deadlines; `evaluate_reference` materializes
//! full timelines with fixpoint iteration and quadratic scans, and must
//! agree exactly.

mod bindings;
mod graph;
mod online;
mod parser;
mod reference;
pub mod testgen;

pub use bindings::{bind_events, parse_bindings, Binding, Selector};
pub use graph::{BinOp, Node, NodeId, Op, StreamGraph, StreamType};
pub use online::{evaluate_online, EvalStats, OnlineMonitor};
pub use parser::parse_spec;
pub use reference::evaluate_reference;

use crate::event_extract::Ts;
use std::collections::BTreeMap;
use std::fmt;

/// A monitor stream value.
#[derive(Debug, Clone, Copy)]
pub enum Val {
    Int(i64),
    Float(f64),
    Bool(bool),
    Unit,
}

impl Val {
    pub fn type_of(&self) -> StreamType {
        match self {
            Val::Int(_) => StreamType::Int,
            Val::Float(_) => StreamType::Float,
            Val::Bool(_) => StreamType::Bool,
            Val::Unit => StreamType::Unit,
        }
    }
}

/// Structural equality: floats compare by bits so result timelines can be
/// compared exactly. The language-level `==` uses IEEE semantics instead.
impl PartialEq for Val {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Val::Int(a), Val::Int(b)) => a == b,
            (Val::Float(a), Val::Float(b)) => a.to_bits() == b.to_bits(),
            (Val::Bool(a), Val::Bool(b)) => a == b,
            (Val::Unit, Val::Unit) => true,
            _ => false,
        }
    }
}

impl Eq for Val {}

impl fmt::Display for Val {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Val::Int(v) => write!(f, "{v}"),
            Val::Float(v) => write!(f, "{v:?}"),
            Val::Bool(v) => write!(f, "{v}"),
            Val::Unit => write!(f, "()"),
        }
    }
}

/// One event delivered to a declared input stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputEvent {
    pub ts: Ts,
    /// Index into the graph's input table.
    pub stream: usize,
    pub value: Val,
}

pub type Timeline = Vec<(Ts, Val)>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub assertion: String,
    pub ts: Ts,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    /// Timelines of `out` streams, keyed by name.
    pub outputs: BTreeMap<String, Timeline>,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RvError {
    #[error("line {line}: {detail}")]
    Syntax { line: usize, detail: String },
    #[error("line {line}: unknown identifier `{name}`")]
    UnknownIdentifier { name: String, line: usize },
    #[error("line {line}: type error in `{expr}`: expected {expected}, got {got}")]
    Type {
        line: usize,
        expr: String,
        expected: String,
        got: String,
    },
    #[error("recursion not broken by `last`: cycle through {}", names.join(" -> "))]
    IllegalCycle { names: Vec<String> },
    #[error("input `{stream}` expected {expected} events, got {got}")]
    InputTypeMismatch {
        stream: String,
        expected: String,
        got: String,
    },
    #[error("input events not strictly ordered at {ts}")]
    NonMonotonicInput { ts: Ts },
    #[error("binding error: {0}")]
    Binding(String),
}

#[cfg(test)]
mod tests;
