//! Brute-force reference evaluator.
//!
//! Materializes the complete timeline of every node, computing each
//! operator by direct quadratic scans over its operands' full timelines —
//! the defining semantics, spelled out with no incremental state. Cyclic
//! definitions (through `last`) are resolved by global fixpoint
//! iteration: re-evaluate all timelines from the previous approximation
//! until nothing changes. Timelines stabilize from the front, one
//! timestamp per sweep, so the iteration converges in at most
//! total-event-count sweeps.
//!
//! Must agree with `evaluate_online` exactly; the pair is the engine's
//! two-route correctness check.

use super::graph::{NodeId, Op, StreamGraph};
use super::online::{apply_binop, violation_summary};
use super::{EvalResult, InputEvent, RvError, Timeline, Val, Violation};
use crate::event_extract::Ts;
use std::collections::BTreeMap;

pub fn evaluate_reference(
    graph: &StreamGraph,
    events: &[InputEvent],
) -> Result<EvalResult, RvError> {
    // Structural validity (cycle legality) and input hygiene mirror the
    // online engine's checks.
    graph.topo_order()?;
    let mut last_ts = Ts::ZERO;
    let mut batch: Vec<usize> = Vec::new();
    for ev in events {
        if ev.ts < last_ts || (ev.ts == last_ts && ev.ts != Ts::ZERO && batch.contains(&ev.stream))
        {
            return Err(RvError::NonMonotonicInput { ts: ev.ts });
        }
        if ev.ts == Ts::ZERO {
            return Err(RvError::NonMonotonicInput { ts: ev.ts });
        }
        if ev.ts != last_ts {
            batch.clear();
            last_ts = ev.ts;
        }
        if ev.stream >= graph.inputs.len() {
            return Err(RvError::Binding(format!(
                "event for undeclared input stream index {}",
                ev.stream
            )));
        }
        let decl = &graph.inputs[ev.stream];
        if ev.value.type_of() != decl.ty {
            return Err(RvError::InputTypeMismatch {
                stream: decl.name.clone(),
                expected: decl.ty.to_string(),
                got: ev.value.type_of().to_string(),
            });
        }
        batch.push(ev.stream);
    }

    let n = graph.nodes.len();
    let mut timelines: Vec<Timeline> = vec![Vec::new(); n];

    // Fixpoint: total events are bounded by inputs + literals + within
    // verdicts, each sweep settles at least one more timestamp.
    let input_total = events.len();
    let max_sweeps = 2 * (input_total + n + 4);
    let mut converged = false;
    for _ in 0..max_sweeps {
        let mut next: Vec<Timeline> = Vec::with_capacity(n);
        for id in 0..n {
            next.push(eval_node(graph, id, &timelines, events));
        }
        if next == timelines {
            converged = true;
            break;
        }
        timelines = next;
    }
    assert!(converged, "reference evaluation did not reach a fixpoint");

    let mut outputs: BTreeMap<String, Timeline> = BTreeMap::new();
    for (name, id) in &graph.outputs {
        outputs.insert(name.clone(), timelines[*id].clone());
    }
    let mut violations: Vec<Violation> = Vec::new();
    for (name, id) in &graph.asserts {
        for (ts, v) in &timelines[*id] {
            if *v == Val::Bool(false) {
                violations.push(Violation {
                    assertion: name.clone(),
                    ts: *ts,
                    summary: violation_summary(name, *ts),
                });
            }
        }
    }
    // Global order: by timestamp, then assert declaration order, exactly
    // as the online engine emits them.
    let assert_rank: BTreeMap<&str, usize> = graph
        .asserts
        .iter()
        .enumerate()
        .map(|(i, (name, _))| (name.as_str(), i))
        .collect();
    violations.sort_by_key(|v| (v.ts, assert_rank[v.assertion.as_str()]));

    Ok(EvalResult {
        outputs,
        violations,
    })
}

/// Latest value at or before `ts` — the signal view of a timeline.
fn current_at(tl: &Timeline, ts: Ts) -> Option<Val> {
    tl.iter()
        .rev()
        .find(|(t, _)| *t <= ts)
        .map(|(_, v)| *v)
}

/// Latest value strictly before `ts` — what `last` observes.
fn before(tl: &Timeline, ts: Ts) -> Option<Val> {
    tl.iter()
        .rev()
        .find(|(t, _)| *t < ts)
        .map(|(_, v)| *v)
}

fn eval_node(
    graph: &StreamGraph,
    id: NodeId,
    timelines: &[Timeline],
    events: &[InputEvent],
) -> Timeline {
    match &graph.nodes[id].op {
        Op::Input(i) => events
            .iter()
            .filter(|e| e.stream == *i)
            .map(|e| (e.ts, e.value))
            .collect(),
        Op::Unit => vec![(Ts::ZERO, Val::Unit)],
        Op::Literal(v) => vec![(Ts::ZERO, *v)],
        Op::Alias(a) => timelines[*a].clone(),
        Op::Const { value, over } => timelines[*over]
            .iter()
            .map(|(ts, _)| (*ts, *value))
            .collect(),
        Op::Time(s) => timelines[*s]
            .iter()
            .map(|(ts, _)| (*ts, Val::Int(ts.cycle as i64)))
            .collect(),
        Op::Merge(a, b) => {
            let mut out: BTreeMap<Ts, Val> = BTreeMap::new();
            // right first so simultaneous left events overwrite: left wins
            for (ts, v) in &timelines[*b] {
                out.insert(*ts, *v);
            }
            for (ts, v) in &timelines[*a] {
                out.insert(*ts, *v);
            }
            out.into_iter().collect()
        }
        Op::Last { values, trigger } => timelines[*trigger]
            .iter()
            .filter_map(|(ts, _)| before(&timelines[*values], *ts).map(|v| (*ts, v)))
            .collect(),
        Op::Filter { stream, cond } => timelines[*stream]
            .iter()
            .filter(|(ts, _)| matches!(current_at(&timelines[*cond], *ts), Some(Val::Bool(true))))
            .copied()
            .collect(),
        Op::Count(s) => timelines[*s]
            .iter()
            .enumerate()
            .map(|(i, (ts, _))| (*ts, Val::Int(i as i64 + 1)))
            .collect(),
        Op::Within { dist, a, b } => {
            // Per request event: true at the first answer within the
            // window, else false at the deadline; verdicts landing on one
            // timestamp collapse into a single event.
            let mut out: BTreeMap<Ts, Val> = BTreeMap::new();
            for (ta, _) in &timelines[*a] {
                let answer = timelines[*b]
                    .iter()
                    .find(|(tb, _)| ta.cycle < tb.cycle && tb.cycle <= ta.cycle + dist);
                match answer {
                    Some((tb, _)) => out.insert(*tb, Val::Bool(true)),
                    None => out.insert(Ts::new(ta.cycle + dist, u32::MAX), Val::Bool(false)),
                };
            }
            out.into_iter().collect()
        }
        Op::Binary { op, lhs, rhs } => {
            let mut stamps: Vec<Ts> = timelines[*lhs]
                .iter()
                .chain(timelines[*rhs].iter())
                .map(|(ts, _)| *ts)
                .collect();
            stamps.sort_unstable();
            stamps.dedup();
            stamps
                .into_iter()
                .filter_map(|ts| {
                    let l = current_at(&timelines[*lhs], ts)?;
                    let r = current_at(&timelines[*rhs], ts)?;
                    Some((ts, apply_binop(*op, l, r)))
                })
                .collect()
        }
        Op::Not(s) => timelines[*s]
            .iter()
            .map(|(ts, v)| match v {
                Val::Bool(b) => (*ts, Val::Bool(!b)),
                other => unreachable!("type checker admitted !{other}"),
            })
            .collect(),
    }
}
