//! Input binding files: map declared `in` streams to event selectors.
//!
//! One binding per line: `NAME := SELECTOR(field=value)`, e.g.
//!
//! ```text
//! i3    := VarWrite(addr=7)
//! e2    := Output(port=2)
//! drift := Itm(channel=3)
//! req0  := LockReq(m=0)
//! enter := FuncEnter(name=sample)
//! taken := Branch(addr=12)
//! loss  := Gap()
//! ```
//!
//! Selector value types: `VarWrite` carries the stored integer; `Output`
//! and `Itm` carry the observed value (int or float, checked against the
//! stream declaration at evaluation); `Branch` carries the taken flag;
//! lock, function and gap selectors produce unit events.

use super::graph::{StreamGraph, StreamType};
use super::{InputEvent, RvError, Val};
use crate::event_extract::{Event, EventKind};
use crate::program_model::BinaryImage;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selector {
    VarWrite { addr: usize },
    Output { port: u8 },
    Itm { channel: u8 },
    LockReq { mutex: u8 },
    LockAcq { mutex: u8 },
    LockRel { mutex: u8 },
    FuncEnter { name: String },
    FuncExit { name: String },
    Branch { addr: usize },
    Gap,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Binding {
    pub stream: String,
    pub selector: Selector,
}

fn berr(line: usize, detail: &str) -> RvError {
    RvError::Binding(format!("line {line}: {detail}"))
}

pub fn parse_bindings(text: &str) -> Result<Vec<Binding>, RvError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (name, rest) = line
            .split_once(":=")
            .ok_or_else(|| berr(line_no, "expected `NAME := SELECTOR(...)`"))?;
        let name = name.trim().to_string();
        let rest = rest.trim();
        let (kind, args) = match rest.split_once('(') {
            Some((k, a)) => (
                k.trim(),
                a.trim()
                    .strip_suffix(')')
                    .ok_or_else(|| berr(line_no, "missing `)`"))?,
            ),
            None => return Err(berr(line_no, "selector needs `(...)`")),
        };
        let field = |want: &str| -> Result<String, RvError> {
            let (k, v) = args
                .split_once('=')
                .ok_or_else(|| berr(line_no, &format!("expected `{want}=...`")))?;
            if k.trim() != want {
                return Err(berr(line_no, &format!("expected field `{want}`")));
            }
            Ok(v.trim().to_string())
        };
        let num = |want: &str| -> Result<u64, RvError> {
            field(want)?
                .parse::<u64>()
                .map_err(|_| berr(line_no, &format!("`{want}` must be a number")))
        };
        let selector = match kind {
            "VarWrite" => Selector::VarWrite {
                addr: num("addr")? as usize,
            },
            "Output" => Selector::Output {
                port: num("port")? as u8,
            },
            "Itm" => Selector::Itm {
                channel: num("channel")? as u8,
            },
            "LockReq" => Selector::LockReq {
                mutex: num("m")? as u8,
            },
            "LockAcq" => Selector::LockAcq {
                mutex: num("m")? as u8,
            },
            "LockRel" => Selector::LockRel {
                mutex: num("m")? as u8,
            },
            "FuncEnter" => Selector::FuncEnter {
                name: field("name")?,
            },
            "FuncExit" => Selector::FuncExit {
                name: field("name")?,
            },
            "Branch" => Selector::Branch {
                addr: num("addr")? as usize,
            },
            "Gap" => {
                if !args.trim().is_empty() {
                    return Err(berr(line_no, "`Gap` takes no fields"));
                }
                Selector::Gap
            }
            other => return Err(berr(line_no, &format!("unknown selector `{other}`"))),
        };
        out.push(Binding {
            stream: name,
            selector,
        });
    }
    Ok(out)
}

/// The value type a selector produces, when statically fixed.
fn selector_type(s: &Selector) -> Option<StreamType> {
    match s {
        Selector::VarWrite { .. } => Some(StreamType::Int),
        Selector::Branch { .. } => Some(StreamType::Bool),
        Selector::Output { .. } | Selector::Itm { .. } => None, // int or float per event
        _ => Some(StreamType::Unit),
    }
}

/// Convert extracted events into engine input events for `graph`. Every
/// declared input must have a binding; bindings naming streams the spec
/// does not declare are ignored, so one binding file can serve several
/// specs over the same scenario.
pub fn bind_events(
    graph: &StreamGraph,
    bindings: &[Binding],
    image: &BinaryImage,
    events: &[Event],
) -> Result<Vec<InputEvent>, RvError> {
    struct Lane {
        stream: usize,
        selector: Selector,
        func: Option<usize>,
    }
    let mut lanes: Vec<Lane> = Vec::new();
    for input in &graph.inputs {
        let binding = bindings
            .iter()
            .find(|b| b.stream == input.name)
            .ok_or_else(|| {
                RvError::Binding(format!("input `{}` has no binding", input.name))
            })?;
        if let Some(ty) = selector_type(&binding.selector) {
            if ty != input.ty {
                return Err(RvError::InputTypeMismatch {
                    stream: input.name.clone(),
                    expected: input.ty.to_string(),
                    got: ty.to_string(),
                });
            }
        }
        let func = match &binding.selector {
            Selector::FuncEnter { name } | Selector::FuncExit { name } => Some(
                image
                    .functions
                    .iter()
                    .position(|f| &f.name == name)
                    .ok_or_else(|| {
                        RvError::Binding(format!("selector names unknown function `{name}`"))
                    })?,
            ),
            _ => None,
        };
        let idx = graph
            .inputs
            .iter()
            .position(|i| i.name == input.name)
            .expect("input exists");
        lanes.push(Lane {
            stream: idx,
            selector: binding.selector.clone(),
            func,
        });
    }

    let mut out = Vec::new();
    for ev in events {
        for lane in &lanes {
            let value = match (&lane.selector, &ev.kind) {
                (Selector::VarWrite { addr }, EventKind::VarWrite { addr: a, value })
                    if addr == a =>
                {
                    Some(Val::Int(*value))
                }
                (Selector::Output { port }, EventKind::Output { port: p, value })
                    if port == p =>
                {
                    Some(value_to_val(value))
                }
                (Selector::Itm { channel }, EventKind::Itm { channel: c, value })
                    if channel == c =>
                {
                    Some(value_to_val(value))
                }
                (Selector::LockReq { mutex }, EventKind::LockReq(m)) if mutex == m => {
                    Some(Val::Unit)
                }
                (Selector::LockAcq { mutex }, EventKind::LockAcq(m)) if mutex == m => {
                    Some(Val::Unit)
                }
                (Selector::LockRel { mutex }, EventKind::LockRel(m)) if mutex == m => {
                    Some(Val::Unit)
                }
                (Selector::FuncEnter { .. }, EventKind::FuncEnter(f)) if lane.func == Some(*f) => {
                    Some(Val::Unit)
                }
                (Selector::FuncExit { .. }, EventKind::FuncExit(f)) if lane.func == Some(*f) => {
                    Some(Val::Unit)
                }
                (Selector::Branch { addr }, EventKind::Branch { addr: a, taken })
                    if addr == a =>
                {
                    Some(Val::Bool(*taken))
                }
                (Selector::Gap, EventKind::Gap) => Some(Val::Unit),
                _ => None,
            };
            if let Some(value) = value {
                out.push(InputEvent {
                    ts: ev.ts,
                    stream: lane.stream,
                    value,
                });
            }
        }
    }
    Ok(out)
}

fn value_to_val(v: &crate::value::Value) -> Val {
    match v {
        crate::value::Value::Int(i) => Val::Int(*i),
        crate::value::Value::Float(f) => Val::Float(*f),
    }
}
