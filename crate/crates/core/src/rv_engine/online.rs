//! Single-pass evaluator.
//!
//! Processing is organized in rounds, one per distinct timestamp: the
//! synthetic (0,0) init round (unit and literal events), one round per
//! input timestamp, and deadline-expiry rounds at `(ta+d, MAX)` for
//! `within` verdicts, interleaved in global timestamp order. Per-node
//! state is a constant-size signal cell plus the pending-deadline queues,
//! so memory is O(graph) + O(pending deadlines) regardless of stream
//! length.
//!
//! `OnlineMonitor` is the incremental form used by the live pipeline;
//! `evaluate_online` wraps it for whole-stream evaluation.

use super::graph::{BinOp, NodeId, Op, StreamGraph};
use super::{EvalResult, InputEvent, RvError, Timeline, Val, Violation};
use crate::event_extract::Ts;
use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalStats {
    pub nodes: usize,
    /// Maximum simultaneously pending `within` deadlines.
    pub peak_pending_within: usize,
    pub rounds: u64,
}

#[derive(Debug, Clone, Default)]
struct NodeState {
    /// Latest event on this stream (value, ts).
    cur: Option<(Val, Ts)>,
    /// The event before `cur`; what `last` sees when `cur` is this round.
    prev: Option<(Val, Ts)>,
    count: u64,
    /// Unresolved `within` request cycles, oldest first.
    pending: VecDeque<u64>,
}

pub(super) fn violation_summary(name: &str, ts: Ts) -> String {
    format!("assert {name} false at {ts}")
}

/// Incremental online evaluator: feed same-timestamp batches in order,
/// drain violations as they are found, `finish` to resolve pending
/// deadlines at end of stream.
pub struct OnlineMonitor<'g> {
    graph: &'g StreamGraph,
    order: Vec<NodeId>,
    state: Vec<NodeState>,
    fired: Vec<Option<Val>>,
    expiries: BinaryHeap<Reverse<(u64, NodeId)>>,
    outputs: BTreeMap<String, Timeline>,
    fresh_violations: Vec<Violation>,
    stats: EvalStats,
    last_ts: Ts,
    started: bool,
    finished: bool,
}

impl<'g> OnlineMonitor<'g> {
    pub fn new(graph: &'g StreamGraph) -> Result<Self, RvError> {
        let order = graph.topo_order()?;
        let n = graph.nodes.len();
        Ok(OnlineMonitor {
            graph,
            order,
            state: vec![NodeState::default(); n],
            fired: vec![None; n],
            expiries: BinaryHeap::new(),
            outputs: graph
                .outputs
                .iter()
                .map(|(name, _)| (name.clone(), Vec::new()))
                .collect(),
            fresh_violations: Vec::new(),
            stats: EvalStats {
                nodes: n,
                ..EvalStats::default()
            },
            last_ts: Ts::ZERO,
            started: false,
            finished: false,
        })
    }

    /// Deliver all events sharing one timestamp. Timestamps must be
    /// strictly increasing across calls and past (0,0).
    pub fn feed(&mut self, ts: Ts, events: &[(usize, Val)]) -> Result<(), RvError> {
        debug_assert!(!self.finished);
        self.ensure_init();
        if ts <= self.last_ts {
            return Err(RvError::NonMonotonicInput { ts });
        }
        for (i, (stream, value)) in events.iter().enumerate() {
            if *stream >= self.graph.inputs.len() {
                return Err(RvError::Binding(format!(
                    "event for undeclared input stream index {stream}"
                )));
            }
            let decl = &self.graph.inputs[*stream];
            if value.type_of() != decl.ty {
                return Err(RvError::InputTypeMismatch {
                    stream: decl.name.clone(),
                    expected: decl.ty.to_string(),
                    got: value.type_of().to_string(),
                });
            }
            if events[..i].iter().any(|(s, _)| s == stream) {
                return Err(RvError::NonMonotonicInput { ts });
            }
        }
        self.flush_expiries_before(ts.cycle);
        self.run_round(ts, events, &[]);
        self.last_ts = ts;
        Ok(())
    }

    /// Violations discovered since the previous drain, in order.
    pub fn drain_violations(&mut self) -> Vec<Violation> {
        std::mem::take(&mut self.fresh_violations)
    }

    /// End of stream: resolve every pending deadline as false.
    pub fn finish(&mut self) {
        self.ensure_init();
        self.finished = true;
        self.flush_expiries_before(u64::MAX);
    }

    pub fn into_result(mut self) -> (EvalResult, EvalStats) {
        if !self.finished {
            self.finish();
        }
        (
            EvalResult {
                outputs: self.outputs,
                violations: self.fresh_violations,
            },
            self.stats,
        )
    }

    pub fn stats(&self) -> EvalStats {
        self.stats
    }

    fn ensure_init(&mut self) {
        if !self.started {
            self.started = true;
            self.run_round(Ts::ZERO, &[], &[]);
        }
    }

    fn flush_expiries_before(&mut self, cycle_bound: u64) {
        while let Some(Reverse((cycle, _))) = self.expiries.peek().copied() {
            if cycle >= cycle_bound {
                break;
            }
            let mut due = Vec::new();
            while let Some(Reverse((c, node))) = self.expiries.peek().copied() {
                if c != cycle {
                    break;
                }
                self.expiries.pop();
                if !due.contains(&node) {
                    due.push(node);
                }
            }
            due.sort_unstable();
            self.run_round(Ts::new(cycle, u32::MAX), &[], &due);
        }
    }

    fn run_round(&mut self, ts: Ts, inputs: &[(usize, Val)], due: &[NodeId]) {
        self.fired.iter_mut().for_each(|f| *f = None);
        self.stats.rounds += 1;

        for idx in 0..self.order.len() {
            let id = self.order[idx];
            let val: Option<Val> = match &self.graph.nodes[id].op {
                Op::Input(i) => inputs.iter().find(|(s, _)| s == i).map(|(_, v)| *v),
                Op::Unit => (ts == Ts::ZERO).then_some(Val::Unit),
                Op::Literal(v) => (ts == Ts::ZERO).then_some(*v),
                Op::Alias(a) => self.fired[*a],
                Op::Const { value, over } => self.fired[*over].map(|_| *value),
                Op::Time(s) => self.fired[*s].map(|_| Val::Int(ts.cycle as i64)),
                Op::Merge(a, b) => self.fired[*a].or(self.fired[*b]),
                Op::Last { values, trigger } => self.fired[*trigger].and_then(|_| {
                    let st = &self.state[*values];
                    match st.cur {
                        Some((v, t)) if t < ts => Some(v),
                        _ => st.prev.map(|(v, _)| v),
                    }
                }),
                Op::Filter { stream, cond } => self.fired[*stream]
                    .filter(|_| matches!(self.current(*cond), Some(Val::Bool(true)))),
                Op::Count(s) => self.fired[*s].map(|_| {
                    self.state[id].count += 1;
                    Val::Int(self.state[id].count as i64)
                }),
                Op::Within { dist, a, b } => {
                    // An answer in this round wins over a deadline expiring
                    // in this round (tb <= ta+d is inclusive); only the
                    // leftover unanswered requests resolve false.
                    let mut verdict = None;
                    if self.fired[*b].is_some() {
                        let tb = ts.cycle;
                        let before = self.state[id].pending.len();
                        self.state[id]
                            .pending
                            .retain(|&ta| !(ta < tb && tb <= ta + dist));
                        if self.state[id].pending.len() < before {
                            verdict = Some(Val::Bool(true));
                        }
                    }
                    if due.contains(&id) {
                        let before = self.state[id].pending.len();
                        self.state[id].pending.retain(|&ta| ta + dist != ts.cycle);
                        if self.state[id].pending.len() < before {
                            verdict = Some(Val::Bool(false));
                        }
                    }
                    if self.fired[*a].is_some() {
                        self.state[id].pending.push_back(ts.cycle);
                        self.expiries.push(Reverse((ts.cycle + dist, id)));
                    }
                    verdict
                }
                Op::Binary { op, lhs, rhs } => {
                    if self.fired[*lhs].is_some() || self.fired[*rhs].is_some() {
                        match (self.current(*lhs), self.current(*rhs)) {
                            (Some(l), Some(r)) => Some(apply_binop(*op, l, r)),
                            _ => None,
                        }
                    } else {
                        None
                    }
                }
                Op::Not(s) => self.fired[*s].map(|v| match v {
                    Val::Bool(b) => Val::Bool(!b),
                    other => unreachable!("type checker admitted !{other}"),
                }),
            };
            self.fired[id] = val;
        }

        for id in 0..self.fired.len() {
            if let Some(v) = self.fired[id] {
                self.state[id].prev = self.state[id].cur;
                self.state[id].cur = Some((v, ts));
            }
        }
        for (name, id) in &self.graph.outputs {
            if let Some(v) = self.fired[*id] {
                self.outputs.get_mut(name).expect("prebuilt").push((ts, v));
            }
        }
        for (name, id) in &self.graph.asserts {
            if self.fired[*id] == Some(Val::Bool(false)) {
                self.fresh_violations.push(Violation {
                    assertion: name.clone(),
                    ts,
                    summary: violation_summary(name, ts),
                });
            }
        }
        let pending_total: usize = self.state.iter().map(|s| s.pending.len()).sum();
        self.stats.peak_pending_within = self.stats.peak_pending_within.max(pending_total);
    }

    /// Signal view: this round's event if any, else the latest earlier.
    fn current(&self, id: NodeId) -> Option<Val> {
        self.fired[id].or_else(|| self.state[id].cur.map(|(v, _)| v))
    }
}

pub fn evaluate_online(
    graph: &StreamGraph,
    events: &[InputEvent],
) -> Result<(EvalResult, EvalStats), RvError> {
    let mut monitor = OnlineMonitor::new(graph)?;
    let mut all_violations = Vec::new();
    let mut i = 0usize;
    while i < events.len() {
        let ts = events[i].ts;
        let mut batch: Vec<(usize, Val)> = Vec::new();
        while i < events.len() && events[i].ts == ts {
            batch.push((events[i].stream, events[i].value));
            i += 1;
        }
        monitor.feed(ts, &batch)?;
        all_violations.extend(monitor.drain_violations());
    }
    monitor.finish();
    all_violations.extend(monitor.drain_violations());
    let (result, stats) = monitor.into_result();
    // violations were drained incrementally; into_result holds the rest
    let mut merged = all_violations;
    merged.extend(result.violations);
    Ok((
        EvalResult {
            outputs: result.outputs,
            violations: merged,
        },
        stats,
    ))
}

/// Shared with the reference evaluator so IEEE semantics cannot drift
/// between the two routes.
pub(super) fn apply_binop(op: BinOp, l: Val, r: Val) -> Val {
    use Val::*;
    match (op, l, r) {
        (BinOp::Add, Int(a), Int(b)) => Int(a.wrapping_add(b)),
        (BinOp::Sub, Int(a), Int(b)) => Int(a.wrapping_sub(b)),
        (BinOp::Mul, Int(a), Int(b)) => Int(a.wrapping_mul(b)),
        (BinOp::Add, Float(a), Float(b)) => Float(a + b),
        (BinOp::Sub, Float(a), Float(b)) => Float(a - b),
        (BinOp::Mul, Float(a), Float(b)) => Float(a * b),
        (BinOp::Lt, Int(a), Int(b)) => Bool(a < b),
        (BinOp::Le, Int(a), Int(b)) => Bool(a <= b),
        (BinOp::Lt, Float(a), Float(b)) => Bool(a < b),
        (BinOp::Le, Float(a), Float(b)) => Bool(a <= b),
        (BinOp::Eq, Int(a), Int(b)) => Bool(a == b),
        // IEEE equality: NaN != NaN, unlike structural timeline equality.
        #[allow(clippy::float_cmp)]
        (BinOp::Eq, Float(a), Float(b)) => Bool(a == b),
        (BinOp::Eq, Bool(a), Bool(b)) => Bool(a == b),
        (BinOp::And, Bool(a), Bool(b)) => Bool(a && b),
        (BinOp::Or, Bool(a), Bool(b)) => Bool(a || b),
        (op, l, r) => unreachable!("type checker admitted {l} {} {r}", op.symbol()),
    }
}
