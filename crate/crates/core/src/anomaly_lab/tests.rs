use super::classify::{classify, ClassifyConfig, ClassifyOutcome};
use super::latency::{detection_latency, SpecKind};
use super::*;
use crate::target_sim::run;

#[test]
fn all_scenarios_parse_and_have_expectations() {
    let list = scenarios();
    assert_eq!(list.len(), 6);
    for s in &list {
        let image = s.image();
        assert!(!image.threads.is_empty(), "{}", s.name);
        for spec in [s.white_spec, s.black_spec].into_iter().flatten() {
            crate::rv_engine::parse_spec(spec)
                .unwrap_or_else(|e| panic!("{}: spec fails: {e}", s.name));
        }
        crate::rv_engine::parse_bindings(s.bindings)
            .unwrap_or_else(|e| panic!("{}: bindings fail: {e}", s.name));
    }
}

#[test]
fn figure2_single_thread_file_shape() {
    let image = crate::program_model::load_image(FIGURE2_SINGLE_THREAD).unwrap();
    // main plus six transition functions, one thread
    assert_eq!(image.functions.len(), 7);
    assert_eq!(image.threads.len(), 1);
    let transitions = image
        .functions
        .iter()
        .filter(|f| f.name != "main")
        .count();
    assert_eq!(transitions, 6);
}

#[test]
fn figure2_infection_exposes_late_in_output_log() {
    // Single-threaded variant: with the internal mistake active, the
    // output log diverges from the clean run only at the final output.
    let image = crate::program_model::load_image(FIGURE2_SINGLE_THREAD).unwrap();
    let mut clean_sim = crate::target_sim::SimConfig::default();
    clean_sim.inputs = vec![(8, 5), (9, 3), (10, 0), (12, 0)];
    let clean = run(&image, &clean_sim).unwrap();

    let mut infected_sim = clean_sim.clone();
    infected_sim.inputs = vec![(8, 5), (9, 3), (10, 1), (12, 0)];
    let infected = run(&image, &infected_sim).unwrap();

    assert_eq!(clean.summary.outputs.len(), infected.summary.outputs.len());
    let diverging: Vec<usize> = clean
        .summary
        .outputs
        .iter()
        .zip(&infected.summary.outputs)
        .enumerate()
        .filter(|(_, (c, i))| c.value != i.value)
        .map(|(k, _)| k)
        .collect();
    let last = clean.summary.outputs.len() - 1;
    assert_eq!(diverging, vec![last], "divergence only at the final output");
    // The infected cell holds the wrong value right after the first
    // transition: verified through the white-box latency test below.
}

#[test]
fn figure2_detection_gap_is_four_transitions() {
    let s = scenario("figure2_infection").unwrap();
    let white = detection_latency(&s, SpecKind::White).unwrap();
    let black = detection_latency(&s, SpecKind::Black).unwrap();
    assert_eq!(white.transition, 1, "white-box fires at the infection");
    assert_eq!(black.transition, 5, "black-box fires at the exposure");
    assert_eq!(black.transition - white.transition, 4);
    assert!(white.ts < black.ts);
}

#[test]
fn passing_variant_raises_no_violation() {
    let mut s = scenario("figure2_infection").unwrap();
    // mistakes disabled
    s.sim.inputs = vec![(8, 5), (9, 3), (10, 0), (11, 1), (12, 0), (13, 0)];
    let err = detection_latency(&s, SpecKind::White).unwrap_err();
    assert!(matches!(err, super::latency::LatencyError::NoViolation));
    let err = detection_latency(&s, SpecKind::Black).unwrap_err();
    assert!(matches!(err, super::latency::LatencyError::NoViolation));
}

#[test]
fn code_b_variant_is_immediately_visible_at_the_output() {
    // The wrong-output mistake is caught by the black-box spec at the
    // very transition that produces it.
    let mut s = scenario("figure2_infection").unwrap();
    s.sim.inputs = vec![(8, 5), (9, 3), (10, 0), (11, 1), (12, 1), (13, 0)];
    let black = detection_latency(&s, SpecKind::Black).unwrap();
    assert_eq!(black.transition, 1);
}

#[test]
fn div_scenario_classifies_bohrbug() {
    let s = scenario("div_bohrbug").unwrap();
    let m = classify(&s, &ClassifyConfig::default());
    assert_eq!(m.bare_hits, m.runs);
    match m.outcome {
        ClassifyOutcome::Class(c) => {
            assert_eq!(c.base, BugBase::Bohrbug);
            assert!(!c.heisen);
            assert!(!c.aging);
        }
        other => panic!("expected class, got {other:?}"),
    }
}

#[test]
fn div_passing_inputs_do_not_manifest() {
    let mut s = scenario("div_bohrbug").unwrap();
    s.classify_inputs = vec![(16, 3), (17, 1), (18, 1)]; // divide by 1.0
    let m = classify(&s, &ClassifyConfig::default());
    assert_eq!(m.outcome, ClassifyOutcome::NotManifested);
}

#[test]
fn latency_dominance_white_before_black() {
    for s in scenarios() {
        if s.white_spec.is_some() && s.black_spec.is_some() {
            let white = detection_latency(&s, SpecKind::White).unwrap();
            let black = detection_latency(&s, SpecKind::Black).unwrap();
            assert!(
                white.ts <= black.ts,
                "{}: white {:?} after black {:?}",
                s.name,
                white,
                black
            );
        }
    }
}
