use super::machine::trunc24;
use super::*;
use crate::program_model::{load_image, static_successors};
use crate::target_sim::machine::Machine;

fn image(src: &str) -> crate::program_model::BinaryImage {
    load_image(src).expect("test image parses")
}

#[test]
fn set_advances_cycle_by_one() {
    let img = image("func m:\n  set r1, 7\n  halt\nthread t entry m\n");
    let mut machine = Machine::new(&img, SimConfig::default()).unwrap();
    let rec = machine.step(0).unwrap();
    assert_eq!(rec.cycle, 1);
    assert_eq!(rec.payload, Payload::Plain);
    assert_eq!(machine.int_reg(0, 1), 7);
}

#[test]
fn brc_not_taken_falls_through() {
    let img = image("func m:\n  brc r0, l\n  halt\nl:\n  halt\nthread t entry m\n");
    let mut machine = Machine::new(&img, SimConfig::default()).unwrap();
    let rec = machine.step(0).unwrap();
    assert_eq!(rec.payload, Payload::Branch { taken: false });
    let rec = machine.step(0).unwrap();
    assert_eq!(rec.addr, 1); // fell through to addr+1
    let _ = rec;
}

#[test]
fn emit_under_printf_costs_probe_cycles() {
    let img = image("func m:\n  emit 2, r3\n  halt\nthread t entry m\n");
    let config = SimConfig {
        probe_mode: ProbeMode::Printf,
        probe_cost: 10_000,
        ..SimConfig::default()
    };
    let mut machine = Machine::new(&img, config).unwrap();
    let rec = machine.step(0).unwrap();
    assert_eq!(rec.cycle, 10_001);
}

#[test]
fn minimal_halt_program() {
    let img = image("func m: halt\nthread t entry m\n");
    let out = run(&img, &SimConfig::default()).unwrap();
    assert_eq!(out.trace.len(), 1);
    assert_eq!(out.summary.status, TerminationStatus::AllHalted);
}

#[test]
fn runs_are_bit_identical() {
    let src = "\
func m:
  set r1, 5
  set r2, 1
loop:
  sub r1, r1, r2
  out 1, r1
  brc r1, loop
  halt
func w:
  set r3, 3
  set r4, 1
w2:
  sub r3, r3, r4
  yield
  brc r3, w2
  halt
thread t0 entry m
thread t1 entry w
";
    let img = image(src);
    let config = SimConfig {
        seed: 9,
        ..SimConfig::default()
    };
    let a = run(&img, &config).unwrap();
    let b = run(&img, &config).unwrap();
    assert_eq!(a, b);
}

#[test]
fn dynamic_successors_are_statically_predicted() {
    let src = "\
func m:
  set r1, 3
  set r2, 1
loop:
  sub r1, r1, r2
  call f
  brc r1, loop
  halt
func f:
  ret
thread t0 entry m
thread t1 entry m
";
    let img = image(src);
    let config = SimConfig {
        seed: 4,
        qmin: 1,
        qmax: 4,
        ..SimConfig::default()
    };
    let out = run(&img, &config).unwrap();
    let mut last_by_thread: Vec<Option<&ExecRecord>> = vec![None; img.threads.len()];
    for rec in &out.trace {
        if let Some(prev) = last_by_thread[rec.thread] {
            let lock_stall = matches!(prev.payload, Payload::LockReq { .. });
            if !lock_stall {
                let succ = static_successors(&img, prev.addr).unwrap();
                assert!(
                    succ.contains(&rec.addr),
                    "thread {} went {} -> {} which is not in {:?}",
                    rec.thread,
                    prev.addr,
                    rec.addr,
                    succ
                );
            }
        }
        last_by_thread[rec.thread] = Some(rec);
    }
}

#[test]
fn divf_produces_infinity_and_nan_without_trapping() {
    let src = "\
func m:
  set f0, 1.0
  set f1, 0.0
  divf f2, f0, f1
  out 1, f2
  divf f3, f1, f1
  out 2, f3
  halt
thread t entry m
";
    let out = run(&image(src), &SimConfig::default()).unwrap();
    assert_eq!(out.summary.status, TerminationStatus::AllHalted);
    assert_eq!(out.summary.outputs.len(), 2);
    assert_eq!(out.summary.outputs[0].value, Value::Float(f64::INFINITY));
    let nan = out.summary.outputs[1].value.as_float().unwrap();
    assert!(nan.is_nan());
}

#[test]
fn fixmul_truncates_toward_zero_at_2_pow_neg_24() {
    assert_eq!(trunc24(0.1), 1_677_721.0 / 16_777_216.0);
    assert_eq!(trunc24(-0.1), -1_677_721.0 / 16_777_216.0);
    assert_eq!(trunc24(2.0), 2.0);
    let src = "\
func m:
  set f0, 0.1
  set f1, 1.0
  fixmul f2, f0, f1
  out 1, f2
  halt
thread t entry m
";
    let out = run(&image(src), &SimConfig::default()).unwrap();
    assert_eq!(
        out.summary.outputs[0].value,
        Value::Float(1_677_721.0 / 16_777_216.0)
    );
}

#[test]
fn probe_with_zero_cost_single_thread_matches_bare_run() {
    let src = "\
func m:
  set r1, 3
  set r2, 1
loop:
  emit 0, r1
  sub r1, r1, r2
  out 1, r1
  brc r1, loop
  halt
thread t entry m
";
    let img = image(src);
    let config = SimConfig {
        probe_cost: 0,
        ..SimConfig::default()
    };
    let bare = run(&img, &config).unwrap();
    let probed = run_with_probe(&img, &config).unwrap();
    assert_eq!(bare.summary.outputs, probed.summary.outputs);
    assert_eq!(bare.summary.cycles, probed.summary.cycles);
}

#[test]
fn probe_cost_adds_exactly_per_emit_single_thread() {
    let src = "\
func m:
  set r1, 4
  set r2, 1
loop:
  emit 0, r1
  sub r1, r1, r2
  brc r1, loop
  halt
thread t entry m
";
    let img = image(src);
    let config = SimConfig::default();
    let bare = run(&img, &config).unwrap();
    let probed = run_with_probe(&img, &config).unwrap();
    let emits = bare
        .trace
        .iter()
        .filter(|r| matches!(r.payload, Payload::Itm { .. }))
        .count() as u64;
    assert_eq!(
        probed.summary.cycles,
        bare.summary.cycles + emits * config.probe_cost
    );
}

#[test]
fn deadlock_detected_with_wait_for_cycle() {
    let src = "\
func a:
  lock 0
  set r1, 1
  set r1, 2
  set r1, 3
  lock 1
  unlock 1
  unlock 0
  halt
func b:
  lock 1
  set r1, 1
  set r1, 2
  set r1, 3
  lock 0
  unlock 0
  unlock 1
  halt
thread ta entry a
thread tb entry b
";
    let img = image(src);
    let mut manifested = None;
    for seed in 0..100 {
        let config = SimConfig {
            seed,
            qmin: 1,
            qmax: 6,
            ..SimConfig::default()
        };
        let out = run(&img, &config).unwrap();
        match out.summary.status {
            TerminationStatus::AllBlocked => {
                let cycle = out.summary.wait_cycle.expect("deadlock implies wait cycle");
                assert_eq!(cycle.len(), 2);
                manifested = Some(seed);
                break;
            }
            TerminationStatus::AllHalted => assert!(out.summary.wait_cycle.is_none()),
            TerminationStatus::WatchdogTruncated => panic!("unexpected watchdog"),
        }
    }
    assert!(manifested.is_some(), "no seed in 0..100 deadlocked");
}

#[test]
fn uncontended_lock_is_req_then_acq_back_to_back() {
    let src = "func m:\n  lock 3\n  unlock 3\n  halt\nthread t entry m\n";
    let out = run(&image(src), &SimConfig::default()).unwrap();
    let payloads: Vec<Payload> = out.trace.iter().map(|r| r.payload).collect();
    assert_eq!(
        payloads,
        vec![
            Payload::LockReq { mutex: 3 },
            Payload::LockAcq { mutex: 3 },
            Payload::LockRel { mutex: 3 },
            Payload::Plain,
        ]
    );
    // The req and acq both carry the lock instruction's address.
    assert_eq!(out.trace[0].addr, out.trace[1].addr);
}

#[test]
fn blocked_thread_resumes_with_acq_as_next_record() {
    let src = "\
func a:
  lock 0
  yield
  yield
  unlock 0
  halt
func b:
  lock 0
  unlock 0
  halt
thread ta entry a
thread tb entry b
";
    let img = image(src);
    let out = run(&img, &SimConfig::with_seed(1)).unwrap();
    assert_eq!(out.summary.status, TerminationStatus::AllHalted);
    // For every thread, a LockReq record is followed (within that thread)
    // by a LockAcq at the same address.
    for t in 0..img.threads.len() {
        let recs: Vec<&ExecRecord> = out.trace.iter().filter(|r| r.thread == t).collect();
        for pair in recs.windows(2) {
            if let Payload::LockReq { mutex } = pair[0].payload {
                assert_eq!(pair[1].payload, Payload::LockAcq { mutex });
                assert_eq!(pair[0].addr, pair[1].addr);
            }
        }
    }
}

#[test]
fn memory_fault_traps_and_halts_thread() {
    let src = "func m:\n  set r1, 99999\n  load r2, [r1]\n  halt\nthread t entry m\n";
    let out = run(&image(src), &SimConfig::default()).unwrap();
    assert_eq!(out.trace.len(), 2);
    assert!(matches!(
        out.trace[1].payload,
        Payload::Trap {
            kind: TrapKind::MemoryFault(99999)
        }
    ));
    assert_eq!(out.summary.status, TerminationStatus::AllHalted);
}

#[test]
fn step_on_halted_thread_is_illegal() {
    let img = image("func m: halt\nthread t entry m\n");
    let mut machine = Machine::new(&img, SimConfig::default()).unwrap();
    machine.step(0).unwrap();
    assert_eq!(machine.step(0), Err(SimError::IllegalState(0)));
}

#[test]
fn watchdog_truncates_infinite_loop() {
    let src = "func m:\nloop:\n  br loop\nthread t entry m\n";
    let config = SimConfig {
        max_cycles: 500,
        ..SimConfig::default()
    };
    let out = run(&image(src), &config).unwrap();
    assert_eq!(out.summary.status, TerminationStatus::WatchdogTruncated);
    assert_eq!(out.summary.cycles, 500);
}

#[test]
fn float_store_load_roundtrips_bit_pattern() {
    let src = "\
func m:
  set f0, 0.1
  set r1, 10
  store f0, [r1]
  load f2, [r1]
  addf f3, f2, f0
  out 1, f2
  halt
thread t entry m
";
    let out = run(&image(src), &SimConfig::default()).unwrap();
    assert_eq!(out.summary.outputs[0].value, Value::Float(0.1));
}

#[test]
fn input_vector_preloads_memory() {
    let src = "func m:\n  set r1, 7\n  load r2, [r1]\n  out 0, r2\n  halt\nthread t entry m\n";
    let config = SimConfig {
        inputs: vec![(7, 42)],
        ..SimConfig::default()
    };
    let out = run(&image(src), &config).unwrap();
    assert_eq!(out.summary.outputs[0].value, Value::Int(42));
}

#[test]
fn cycles_strictly_increase() {
    let src = "\
func m:
  set r1, 9
  set r2, 1
l:
  sub r1, r1, r2
  yield
  brc r1, l
  halt
thread a entry m
thread b entry m
";
    let out = run(&image(src), &SimConfig::with_seed(3)).unwrap();
    for pair in out.trace.windows(2) {
        assert!(pair[0].cycle < pair[1].cycle);
    }
}
