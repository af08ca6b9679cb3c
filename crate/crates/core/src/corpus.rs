//! Program corpus generators used by the test suites and benchmarks.
//!
//! `random_program` produces structurally valid, terminating (or cleanly
//! deadlocking) assembly programs: every loop is counter-bounded, every
//! memory access stays in the low cells, locks are acquired in balanced
//! non-reentrant blocks, and thread entry functions end in `halt`. Traps
//! cannot occur, which keeps the traces encodable.

use crate::rng::SplitMix64;
use std::fmt::Write;

struct Gen {
    rng: SplitMix64,
    out: String,
    label_seq: usize,
    instructions: usize,
}

impl Gen {
    fn line(&mut self, s: &str) {
        let _ = writeln!(self.out, "  {s}");
        self.instructions += 1;
    }

    fn label(&mut self) -> String {
        self.label_seq += 1;
        format!("l{}", self.label_seq)
    }
}

struct BodyCtx {
    depth: usize,
    counters: Vec<u8>,
    held: Vec<u8>,
    leaves: usize,
    budget: usize,
}

/// Deterministic random program: 1..=4 threads over shared leaf
/// functions, with branches, bounded loops, direct and indirect calls,
/// loads/stores, outputs, instrumentation and lock blocks.
pub fn random_program(seed: u64) -> String {
    let mut g = Gen {
        rng: SplitMix64::new(seed),
        out: String::new(),
        label_seq: 0,
        instructions: 0,
    };
    let n_threads = 1 + g.rng.index(4);
    let n_leaves = 1 + g.rng.index(3);

    for t in 0..n_threads {
        let _ = writeln!(g.out, "func thread{t}:");
        g.line("set r15, 1");
        let mut ctx = BodyCtx {
            depth: 0,
            counters: vec![10, 11, 12, 13, 14],
            held: Vec::new(),
            leaves: n_leaves,
            budget: 20 + g.rng.index(60),
        };
        while ctx.budget > 0 {
            emit_block(&mut g, &mut ctx);
        }
        g.line("halt");
    }

    for l in 0..n_leaves {
        let _ = writeln!(g.out, "func leaf{l}:");
        for _ in 0..1 + g.rng.index(4) {
            emit_arith(&mut g);
        }
        if g.rng.index(3) == 0 && l + 1 < n_leaves {
            g.line(&format!("call leaf{}", l + 1));
        }
        if g.rng.index(4) == 0 {
            let port = g.rng.index(4);
            let r = g.rng.index(10);
            g.line(&format!("out {port}, r{r}"));
        }
        g.line("ret");
    }

    for t in 0..n_threads {
        let _ = writeln!(g.out, "thread t{t} entry thread{t}");
    }
    g.out
}

fn emit_arith(g: &mut Gen) {
    match g.rng.index(6) {
        0 => {
            let d = g.rng.index(10);
            let v = g.rng.index(1000) as i64 - 200;
            g.line(&format!("set r{d}, {v}"));
        }
        1 | 2 => {
            let (d, a, b) = (g.rng.index(10), g.rng.index(10), g.rng.index(10));
            let op = ["add", "sub", "mul"][g.rng.index(3)];
            g.line(&format!("{op} r{d}, r{a}, r{b}"));
        }
        3 => {
            let d = g.rng.index(8);
            let v = g.rng.index(400) as f64 / 8.0;
            g.line(&format!("set f{d}, {v:?}"));
        }
        4 => {
            let (d, a, b) = (g.rng.index(8), g.rng.index(8), g.rng.index(8));
            let op = ["addf", "fixmul", "divf"][g.rng.index(3)];
            g.line(&format!("{op} f{d}, f{a}, f{b}"));
        }
        _ => {
            // memory access through a freshly set address register
            let cell = g.rng.index(64);
            g.line(&format!("set r8, {cell}"));
            if g.rng.index(2) == 0 {
                let s = g.rng.index(8);
                g.line(&format!("store r{s}, [r8]"));
            } else {
                let d = g.rng.index(8);
                g.line(&format!("load r{d}, [r8]"));
            }
        }
    }
}

fn emit_block(g: &mut Gen, ctx: &mut BodyCtx) {
    ctx.budget = ctx.budget.saturating_sub(1);
    match g.rng.index(12) {
        0..=4 => emit_arith(g),
        5 => {
            let port = g.rng.index(4);
            let r = g.rng.index(10);
            g.line(&format!("out {port}, r{r}"));
        }
        6 => {
            let chan = g.rng.index(4);
            let r = g.rng.index(10);
            g.line(&format!("emit {chan}, r{r}"));
        }
        7 => {
            let leaf = g.rng.index(ctx.leaves);
            if g.rng.index(2) == 0 {
                g.line(&format!("call leaf{leaf}"));
            } else {
                g.line(&format!("set r9, @leaf{leaf}"));
                g.line("calli r9");
            }
        }
        8 => g.line("yield"),
        9 if ctx.depth < 2 && !ctx.counters.is_empty() => {
            let counter = ctx.counters.pop().unwrap();
            let count = 1 + g.rng.index(4);
            let label = g.label();
            g.line(&format!("set r{counter}, {count}"));
            let _ = writeln!(g.out, "{label}:");
            ctx.depth += 1;
            let inner = 1 + g.rng.index(3);
            for _ in 0..inner {
                emit_block(g, ctx);
            }
            ctx.depth -= 1;
            g.line(&format!("sub r{counter}, r{counter}, r15"));
            g.line(&format!("brc r{counter}, {label}"));
            ctx.counters.push(counter);
        }
        10 if ctx.held.len() < 2 => {
            let mutex = (g.rng.index(4)) as u8;
            if ctx.held.contains(&mutex) {
                emit_arith(g);
                return;
            }
            g.line(&format!("lock {mutex}"));
            ctx.held.push(mutex);
            let inner = 1 + g.rng.index(2);
            for _ in 0..inner {
                emit_block(g, ctx);
            }
            ctx.held.pop();
            g.line(&format!("unlock {mutex}"));
        }
        _ => {
            // short conditional skip over a couple of instructions
            let r = g.rng.index(10);
            let label = g.label();
            g.line(&format!("brc r{r}, {label}"));
            emit_arith(g);
            let _ = writeln!(g.out, "{label}:");
        }
    }
}

/// The documented compression benchmark: a counted loop of ten
/// instructions per iteration, exactly one of them a conditional branch.
pub fn loop_benchmark(iterations: u64) -> String {
    format!(
        "\
func bench:
  set r1, {iterations}
  set r2, 1
loop:
  add r3, r3, r2
  add r4, r4, r2
  add r5, r5, r2
  add r6, r6, r2
  add r7, r7, r2
  add r8, r8, r2
  add r9, r9, r2
  add r10, r10, r2
  sub r1, r1, r2
  brc r1, loop
  halt
thread main entry bench
"
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program_model::load_image;
    use crate::target_sim::{run, SimConfig, TerminationStatus};

    #[test]
    fn generated_programs_parse_and_terminate_without_traps() {
        for seed in 0..60 {
            let src = random_program(seed);
            let img = load_image(&src).unwrap_or_else(|e| panic!("seed {seed}: {e}\n{src}"));
            let sim = SimConfig {
                seed: seed ^ 0xABCD,
                ..SimConfig::default()
            };
            let out = run(&img, &sim).unwrap();
            assert_ne!(
                out.summary.status,
                TerminationStatus::WatchdogTruncated,
                "seed {seed} hit the watchdog"
            );
            for rec in &out.trace {
                assert!(
                    !matches!(rec.payload, crate::target_sim::Payload::Trap { .. }),
                    "seed {seed} trapped: {rec:?}"
                );
            }
        }
    }

    #[test]
    fn generator_is_deterministic() {
        assert_eq!(random_program(7), random_program(7));
        assert_ne!(random_program(7), random_program(8));
    }

    #[test]
    fn benchmark_iteration_accounting() {
        let img = load_image(&loop_benchmark(100)).unwrap();
        let out = run(&img, &SimConfig::default()).unwrap();
        // 2 setup + 10 per iteration + halt
        assert_eq!(out.trace.len(), 2 + 100 * 10 + 1);
        let branches = out
            .trace
            .iter()
            .filter(|r| matches!(r.payload, crate::target_sim::Payload::Branch { .. }))
            .count();
        assert_eq!(branches, 100);
    }
}
