//! Randomized specification/stream corpus for the online-vs-reference
//! equivalence check.

use super::graph::StreamType;
use super::{InputEvent, Val};
use crate::event_extract::Ts;
use crate::rng::SplitMix64;
use std::fmt::Write;

pub struct GeneratedCase {
    pub spec: String,
    pub events: Vec<InputEvent>,
}

const SCALARS: [StreamType; 3] = [StreamType::Int, StreamType::Float, StreamType::Bool];

struct Gen {
    rng: SplitMix64,
    /// (name, type) of everything referencable so far.
    env: Vec<(String, StreamType)>,
}

impl Gen {
    fn pick_env(&mut self, ty: StreamType) -> Option<String> {
        let candidates: Vec<&(String, StreamType)> =
            self.env.iter().filter(|(_, t)| *t == ty).collect();
        if candidates.is_empty() {
            return None;
        }
        let i = self.rng.index(candidates.len());
        Some(candidates[i].0.clone())
    }

    fn literal(&mut self, ty: StreamType) -> String {
        match ty {
            StreamType::Int => (self.rng.index(41) as i64 - 20).to_string(),
            StreamType::Float => {
                format!("{:?}", (self.rng.index(65) as f64 - 32.0) / 4.0)
            }
            StreamType::Bool => if self.rng.index(2) == 0 { "true" } else { "false" }.into(),
            StreamType::Unit => "unit".into(),
        }
    }

    fn any_expr(&mut self, depth: usize) -> String {
        let ty = SCALARS[self.rng.index(3)];
        self.expr(ty, depth)
    }

    fn expr(&mut self, ty: StreamType, depth: usize) -> String {
        if depth == 0 {
            return match self.pick_env(ty) {
                Some(name) if self.rng.index(3) > 0 => name,
                _ => self.literal(ty),
            };
        }
        let d = depth - 1;
        match ty {
            StreamType::Int | StreamType::Float => match self.rng.index(8) {
                0 => {
                    let op = ["+", "-", "*"][self.rng.index(3)];
                    format!("({} {op} {})", self.expr(ty, d), self.expr(ty, d))
                }
                1 if ty == StreamType::Int => format!("count({})", self.any_expr(d)),
                2 if ty == StreamType::Int => format!("time({})", self.any_expr(d)),
                3 => format!("merge({}, {})", self.expr(ty, d), self.expr(ty, d)),
                4 => format!("last({}, {})", self.expr(ty, d), self.any_expr(d)),
                5 => format!(
                    "filter({}, {})",
                    self.expr(ty, d),
                    self.expr(StreamType::Bool, d)
                ),
                6 => format!("const({}, {})", self.literal(ty), self.any_expr(d)),
                _ => self.expr(ty, 0),
            },
            StreamType::Bool => match self.rng.index(10) {
                0 | 1 => {
                    let nt = if self.rng.index(2) == 0 {
                        StreamType::Int
                    } else {
                        StreamType::Float
                    };
                    let op = ["<", "<=", "=="][self.rng.index(3)];
                    format!("({} {op} {})", self.expr(nt, d), self.expr(nt, d))
                }
                2 => {
                    let op = ["&&", "||"][self.rng.index(2)];
                    format!("({} {op} {})", self.expr(ty, d), self.expr(ty, d))
                }
                3 => format!("!({})", self.expr(ty, d)),
                4 => format!(
                    "within({}, {}, {})",
                    self.rng.index(9),
                    self.any_expr(d),
                    self.any_expr(d)
                ),
                5 => format!("merge({}, {})", self.expr(ty, d), self.expr(ty, d)),
                6 => format!("last({}, {})", self.expr(ty, d), self.any_expr(d)),
                7 => format!(
                    "filter({}, {})",
                    self.expr(ty, d),
                    self.expr(StreamType::Bool, d)
                ),
                8 => format!("const({}, {})", self.literal(ty), self.any_expr(d)),
                _ => self.expr(ty, 0),
            },
            StreamType::Unit => "unit".into(),
        }
    }
}

/// Deterministic random (spec, stream) pair. Specs have 1..=3 inputs,
/// 2..=5 definitions of depth <= 4 (sometimes a recursive counter), all
/// outputs observed and every bool definition asserted.
pub fn random_case(seed: u64) -> GeneratedCase {
    let mut g = Gen {
        rng: SplitMix64::new(seed),
        env: Vec::new(),
    };
    let mut spec = String::new();

    let n_inputs = 1 + g.rng.index(3);
    let mut input_types = Vec::new();
    for i in 0..n_inputs {
        let ty = SCALARS[g.rng.index(3)];
        let _ = writeln!(spec, "in i{i} : events<{ty}>");
        g.env.push((format!("i{i}"), ty));
        input_types.push(ty);
    }

    let n_defs = 2 + g.rng.index(4);
    for j in 0..n_defs {
        let name = format!("d{j}");
        // occasionally the canonical recursive accumulator
        if g.rng.index(4) == 0 {
            let trigger = g.any_expr(1);
            let step = 1 + g.rng.index(3) as i64;
            let init = g.rng.index(5) as i64;
            let _ = writeln!(
                spec,
                "def {name} = merge(last({name}, {trigger}) + {step}, const({init}, {trigger}))"
            );
            g.env.push((name, StreamType::Int));
            continue;
        }
        let ty = SCALARS[g.rng.index(3)];
        let depth = 1 + g.rng.index(4);
        let body = g.expr(ty, depth);
        let _ = writeln!(spec, "def {name} = {body}");
        g.env.push((name, ty));
    }

    for (name, _) in g.env.iter().skip(n_inputs) {
        let _ = writeln!(spec, "out {name}");
    }
    for (name, ty) in g.env.iter().skip(n_inputs) {
        if *ty == StreamType::Bool {
            let _ = writeln!(spec, "assert {name}");
        }
    }

    // Event stream: rounds of simultaneous events on distinct streams.
    let mut events = Vec::new();
    let rounds = g.rng.index(28);
    let mut cycle = 1 + g.rng.index(3) as u64;
    let mut seq = 0u32;
    for _ in 0..rounds {
        let mut fired_any = false;
        for (i, ty) in input_types.iter().enumerate() {
            if g.rng.index(3) == 0 {
                fired_any = true;
                let value = match ty {
                    StreamType::Int => Val::Int(g.rng.index(13) as i64 - 6),
                    StreamType::Float => Val::Float((g.rng.index(25) as f64 - 12.0) / 2.0),
                    StreamType::Bool => Val::Bool(g.rng.index(2) == 0),
                    StreamType::Unit => Val::Unit,
                };
                events.push(InputEvent {
                    ts: Ts::new(cycle, seq),
                    stream: i,
                    value,
                });
            }
        }
        if !fired_any {
            // keep the stream moving: fire stream 0
            events.push(InputEvent {
                ts: Ts::new(cycle, seq),
                stream: 0,
                value: match input_types[0] {
                    StreamType::Int => Val::Int(g.rng.index(13) as i64 - 6),
                    StreamType::Float => Val::Float((g.rng.index(25) as f64 - 12.0) / 2.0),
                    StreamType::Bool => Val::Bool(true),
                    StreamType::Unit => Val::Unit,
                },
            });
        }
        // advance: same cycle with a later seq sometimes, else new cycle
        if g.rng.index(4) == 0 {
            seq += 1 + g.rng.index(2) as u32;
        } else {
            cycle += 1 + g.rng.index(4) as u64;
            seq = g.rng.index(2) as u32;
        }
    }

    GeneratedCase { spec, events }
}
