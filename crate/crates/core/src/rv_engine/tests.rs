use super::*;
use crate::event_extract::Ts;

fn ie(cycle: u64, seq: u32, stream: usize, value: Val) -> InputEvent {
    InputEvent {
        ts: Ts::new(cycle, seq),
        stream,
        value,
    }
}

fn both(spec: &str, events: &[InputEvent]) -> EvalResult {
    let graph = parse_spec(spec).expect("spec parses");
    let (online, _) = evaluate_online(&graph, events).expect("online evaluates");
    let reference = evaluate_reference(&graph, events).expect("reference evaluates");
    assert_eq!(online, reference, "evaluator disagreement");
    online
}

#[test]
fn count_spec_has_two_nodes_one_output() {
    let graph = parse_spec("in a : events<int>\ndef n = count(a)\nout n\n").unwrap();
    assert_eq!(graph.node_count(), 2);
    assert_eq!(graph.outputs.len(), 1);
}

#[test]
fn undeclared_identifier_is_reported() {
    let err = parse_spec("def x = y\n").unwrap_err();
    assert_eq!(
        err,
        RvError::UnknownIdentifier {
            name: "y".into(),
            line: 1
        }
    );
}

#[test]
fn count_emits_running_totals() {
    let result = both(
        "in a : events<int>\ndef n = count(a)\nout n\n",
        &[
            ie(3, 0, 0, Val::Int(7)),
            ie(5, 0, 0, Val::Int(7)),
            ie(9, 0, 0, Val::Int(7)),
        ],
    );
    assert_eq!(
        result.outputs["n"],
        vec![
            (Ts::new(3, 0), Val::Int(1)),
            (Ts::new(5, 0), Val::Int(2)),
            (Ts::new(9, 0), Val::Int(3)),
        ]
    );
}

#[test]
fn recursive_counter_counts_one_two_three() {
    let spec = "\
in a : events<unit>
def c = merge(last(c, a) + 1, const(1, a))
out c
";
    let result = both(
        spec,
        &[
            ie(1, 0, 0, Val::Unit),
            ie(4, 0, 0, Val::Unit),
            ie(9, 0, 0, Val::Unit),
        ],
    );
    assert_eq!(
        result.outputs["c"],
        vec![
            (Ts::new(1, 0), Val::Int(1)),
            (Ts::new(4, 0), Val::Int(2)),
            (Ts::new(9, 0), Val::Int(3)),
        ]
    );
}

#[test]
fn within_true_on_answer_false_on_deadline() {
    let spec = "\
in req : events<unit>
in ack : events<unit>
def ok = within(10, req, ack)
out ok
assert ok
";
    let result = both(
        spec,
        &[
            ie(100, 0, 0, Val::Unit),
            ie(105, 0, 1, Val::Unit),
            ie(200, 0, 0, Val::Unit),
            ie(300, 0, 1, Val::Unit),
        ],
    );
    assert_eq!(
        result.outputs["ok"],
        vec![
            (Ts::new(105, 0), Val::Bool(true)),
            (Ts::new(210, u32::MAX), Val::Bool(false)),
        ]
    );
    assert_eq!(result.violations.len(), 1);
    assert_eq!(result.violations[0].assertion, "ok");
    assert_eq!(result.violations[0].ts, Ts::new(210, u32::MAX));
}

#[test]
fn within_expires_at_end_of_stream() {
    let spec = "\
in req : events<unit>
in ack : events<unit>
def ok = within(10, req, ack)
out ok
";
    let result = both(spec, &[ie(50, 0, 0, Val::Unit)]);
    assert_eq!(
        result.outputs["ok"],
        vec![(Ts::new(60, u32::MAX), Val::Bool(false))]
    );
}

#[test]
fn simultaneous_answer_does_not_count() {
    // ta < tb is strict on cycles: an answer in the same cycle is no
    // answer, and one at exactly ta+d still is.
    let spec = "\
in req : events<unit>
in ack : events<unit>
def ok = within(5, req, ack)
out ok
";
    let result = both(
        spec,
        &[
            ie(10, 0, 0, Val::Unit),
            ie(10, 1, 1, Val::Unit),
            ie(15, 0, 1, Val::Unit),
        ],
    );
    assert_eq!(
        result.outputs["ok"],
        vec![(Ts::new(15, 0), Val::Bool(true))]
    );
}

#[test]
fn merge_left_wins_on_simultaneity() {
    let spec = "\
in a : events<int>
in b : events<int>
def m = merge(a, b)
out m
";
    let result = both(
        spec,
        &[
            ie(1, 0, 0, Val::Int(10)),
            ie(1, 0, 1, Val::Int(20)),
            ie(2, 0, 1, Val::Int(30)),
        ],
    );
    assert_eq!(
        result.outputs["m"],
        vec![
            (Ts::new(1, 0), Val::Int(10)),
            (Ts::new(2, 0), Val::Int(30)),
        ]
    );
}

#[test]
fn last_sees_strictly_earlier_values_only() {
    let spec = "\
in v : events<int>
in t : events<unit>
def l = last(v, t)
out l
";
    let result = both(
        spec,
        &[
            ie(1, 0, 1, Val::Unit),      // no earlier v: nothing
            ie(2, 0, 0, Val::Int(5)),
            ie(2, 1, 1, Val::Unit),      // v@2.0 is earlier than 2.1
            ie(3, 0, 0, Val::Int(7)),
            ie(3, 0, 1, Val::Unit),      // simultaneous v does not count
        ],
    );
    assert_eq!(
        result.outputs["l"],
        vec![
            (Ts::new(2, 1), Val::Int(5)),
            (Ts::new(3, 0), Val::Int(5)),
        ]
    );
}

#[test]
fn signal_lift_uses_current_values() {
    let spec = "\
in a : events<int>
in b : events<int>
def s = a + b
out s
";
    let result = both(
        spec,
        &[
            ie(1, 0, 0, Val::Int(1)),   // b has no value yet: no event
            ie(2, 0, 1, Val::Int(10)),  // a current = 1: 11
            ie(3, 0, 0, Val::Int(2)),   // b current = 10: 12
            ie(4, 0, 0, Val::Int(3)),
            ie(4, 0, 1, Val::Int(30)),  // both at once: 33
        ],
    );
    assert_eq!(
        result.outputs["s"],
        vec![
            (Ts::new(2, 0), Val::Int(11)),
            (Ts::new(3, 0), Val::Int(12)),
            (Ts::new(4, 0), Val::Int(33)),
        ]
    );
}

#[test]
fn filter_passes_on_true_current_condition() {
    let spec = "\
in v : events<int>
def pos = 0 < v
def kept = filter(v, pos)
out kept
";
    let result = both(
        spec,
        &[
            ie(1, 0, 0, Val::Int(5)),
            ie(2, 0, 0, Val::Int(-3)),
            ie(3, 0, 0, Val::Int(9)),
        ],
    );
    assert_eq!(
        result.outputs["kept"],
        vec![(Ts::new(1, 0), Val::Int(5)), (Ts::new(3, 0), Val::Int(9))]
    );
}

#[test]
fn literals_fire_once_at_time_zero() {
    let spec = "\
in a : events<int>
def k = 42
def seen = count(k)
out seen
out k
";
    let result = both(spec, &[ie(5, 0, 0, Val::Int(1))]);
    assert_eq!(result.outputs["k"], vec![(Ts::ZERO, Val::Int(42))]);
    assert_eq!(result.outputs["seen"], vec![(Ts::ZERO, Val::Int(1))]);
}

#[test]
fn asserted_false_literal_violates_at_time_zero() {
    let result = both("def bad = false\nassert bad\n", &[]);
    assert_eq!(result.violations.len(), 1);
    assert_eq!(result.violations[0].ts, Ts::ZERO);
}

#[test]
fn illegal_cycle_not_through_last() {
    let err = parse_spec("in a : events<int>\ndef x = merge(x, a)\nout x\n").unwrap_err();
    match err {
        RvError::IllegalCycle { names } => assert!(names.contains(&"x".to_string())),
        other => panic!("expected IllegalCycle, got {other:?}"),
    }
}

#[test]
fn type_errors_are_reported() {
    let err = parse_spec("def x = 1 + true\n").unwrap_err();
    assert!(matches!(err, RvError::Type { line: 1, .. }), "{err:?}");

    let err = parse_spec("in a : events<int>\nassert a\n").unwrap_err();
    assert!(matches!(err, RvError::Type { line: 2, .. }), "{err:?}");

    let err = parse_spec("in a : events<int>\ndef x = filter(a, a)\nout x\n").unwrap_err();
    assert!(matches!(err, RvError::Type { .. }), "{err:?}");
}

#[test]
fn input_type_mismatch_detected_at_evaluation() {
    let graph = parse_spec("in a : events<int>\ndef n = count(a)\nout n\n").unwrap();
    let err = evaluate_online(&graph, &[ie(1, 0, 0, Val::Float(1.0))]).unwrap_err();
    assert!(matches!(err, RvError::InputTypeMismatch { .. }));
}

#[test]
fn non_monotonic_input_rejected() {
    let graph = parse_spec("in a : events<int>\ndef n = count(a)\nout n\n").unwrap();
    let events = [ie(5, 0, 0, Val::Int(1)), ie(4, 0, 0, Val::Int(1))];
    assert!(matches!(
        evaluate_online(&graph, &events),
        Err(RvError::NonMonotonicInput { .. })
    ));
}

#[test]
fn nan_detection_idiom_works() {
    // !(v == v) is the NaN test under IEEE equality.
    let spec = "\
in v : events<float>
def is_nan = !(v == v)
def ok = v == v
out is_nan
assert ok
";
    let result = both(
        spec,
        &[
            ie(1, 0, 0, Val::Float(1.5)),
            ie(2, 0, 0, Val::Float(f64::NAN)),
        ],
    );
    assert_eq!(
        result.outputs["is_nan"],
        vec![
            (Ts::new(1, 0), Val::Bool(false)),
            (Ts::new(2, 0), Val::Bool(true)),
        ]
    );
    assert_eq!(result.violations.len(), 1);
    assert_eq!(result.violations[0].ts, Ts::new(2, 0));
}

#[test]
fn online_memory_is_bounded_by_graph_not_stream() {
    let spec = "\
in a : events<int>
def n = count(a)
def big = last(n, a)
out n
";
    let graph = parse_spec(spec).unwrap();
    let events: Vec<InputEvent> = (1..=20_000)
        .map(|c| ie(c, 0, 0, Val::Int(c as i64)))
        .collect();
    let (_, stats) = evaluate_online(&graph, &events).unwrap();
    assert_eq!(stats.peak_pending_within, 0);

    // With deadlines: pending never exceeds the number of unanswered
    // requests in flight, which this stream keeps at one.
    let spec = "\
in req : events<unit>
in ack : events<unit>
def ok = within(3, req, ack)
out ok
";
    let graph = parse_spec(spec).unwrap();
    let mut events = Vec::new();
    for k in 0..5_000u64 {
        events.push(ie(10 * k + 1, 0, 0, Val::Unit));
        events.push(ie(10 * k + 3, 0, 1, Val::Unit));
    }
    let (_, stats) = evaluate_online(&graph, &events).unwrap();
    assert!(stats.peak_pending_within <= 1, "{stats:?}");
}

#[test]
fn online_equals_reference_on_random_corpus() {
    for seed in 0..150 {
        let case = testgen::random_case(seed);
        let graph = match parse_spec(&case.spec) {
            Ok(g) => g,
            Err(e) => panic!("seed {seed}: generated spec failed to parse: {e}\n{}", case.spec),
        };
        let online = evaluate_online(&graph, &case.events);
        let reference = evaluate_reference(&graph, &case.events);
        match (online, reference) {
            (Ok((on, _)), Ok(re)) => assert_eq!(on, re, "seed {seed}\n{}", case.spec),
            (o, r) => panic!("seed {seed}: online {o:?} vs reference {r:?}"),
        }
    }
}

#[test]
fn violation_count_matches_false_assert_events() {
    let spec = "\
in v : events<int>
def ok = v < 10
out ok
assert ok
";
    let events = [
        ie(1, 0, 0, Val::Int(5)),
        ie(2, 0, 0, Val::Int(15)),
        ie(3, 0, 0, Val::Int(20)),
        ie(4, 0, 0, Val::Int(1)),
    ];
    let result = both(spec, &events);
    let false_events = result.outputs["ok"]
        .iter()
        .filter(|(_, v)| *v == Val::Bool(false))
        .count();
    assert_eq!(result.violations.len(), false_events);
    assert_eq!(result.violations.len(), 2);
}

#[test]
fn bindings_parse_and_convert_events() {
    use crate::event_extract::{Event, EventKind};
    use crate::program_model::load_image;

    let bindings = parse_bindings(
        "\
# figure-style bindings
i3 := VarWrite(addr=7)
e2 := Output(port=2)
go := FuncEnter(name=m)
",
    )
    .unwrap();
    assert_eq!(bindings.len(), 3);

    let image = load_image("func m: halt\nthread t entry m\n").unwrap();
    let graph = parse_spec(
        "\
in i3 : events<int>
in e2 : events<int>
def ok = i3 == e2
out ok
assert ok
",
    )
    .unwrap();
    let events = vec![
        Event {
            ts: Ts::new(4, 0),
            thread: 0,
            kind: EventKind::VarWrite { addr: 7, value: 9 },
        },
        Event {
            ts: Ts::new(6, 0),
            thread: 0,
            kind: EventKind::Output {
                port: 2,
                value: crate::value::Value::Int(9),
            },
        },
        Event {
            ts: Ts::new(7, 0),
            thread: 0,
            kind: EventKind::Output {
                port: 3,
                value: crate::value::Value::Int(1),
            },
        },
    ];
    let inputs = bind_events(&graph, &bindings, &image, &events).unwrap();
    assert_eq!(inputs.len(), 2);
    let result = both(
        "\
in i3 : events<int>
in e2 : events<int>
def ok = i3 == e2
out ok
assert ok
",
        &inputs,
    );
    assert!(result.violations.is_empty());
}

#[test]
fn missing_binding_is_an_error() {
    use crate::program_model::load_image;
    let image = load_image("func m: halt\nthread t entry m\n").unwrap();
    let graph = parse_spec("in x : events<int>\ndef n = count(x)\nout n\n").unwrap();
    let err = bind_events(&graph, &[], &image, &[]).unwrap_err();
    assert!(matches!(err, RvError::Binding(_)));
}
