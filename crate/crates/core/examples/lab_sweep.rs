//! Seed-sweep diagnostics for the lab scenarios: prints per-seed
//! manifestation patterns (bare and probed), classification evidence and
//! detection latencies in the golden-file format. Used to pick scenario
//! constants and regenerate `tests/golden/scenarios.txt`.

use tracelab_core::anomaly_lab::{
    classify, detection_latency, scenarios, ClassifyConfig, ClassifyOutcome, SpecKind,
};
use tracelab_core::target_sim::{run, run_with_probe, SimConfig};

fn main() {
    let config = ClassifyConfig::default();
    for s in scenarios() {
        let image = s.image();
        let mut bare = String::new();
        let mut probed = String::new();
        for &seed in &config.seeds {
            let sim = SimConfig {
                seed,
                inputs: s.classify_inputs.clone(),
                ..s.sim.clone()
            };
            let b = run(&image, &sim).unwrap();
            bare.push(if (s.predicate)(&b.summary.outputs, b.summary.status) {
                '1'
            } else {
                '0'
            });
            let p = run_with_probe(&image, &sim).unwrap();
            probed.push(if (s.predicate)(&p.summary.outputs, p.summary.status) {
                '1'
            } else {
                '0'
            });
        }

        let m = classify(&s, &config);
        let class = match &m.outcome {
            ClassifyOutcome::NotManifested => "NotManifested".to_string(),
            ClassifyOutcome::Class(c) => c.label(),
        };
        let sweep = m
            .sweep_rates
            .iter()
            .map(|r| format!("{r:.2}"))
            .collect::<Vec<_>>()
            .join(",");

        let mut line = format!(
            "{} class={} bare={} probed={} sweep={}",
            s.name, class, bare, probed, sweep
        );
        if s.white_spec.is_some() && s.black_spec.is_some() {
            if let Ok(w) = detection_latency(&s, SpecKind::White) {
                line.push_str(&format!(" white={}", w.transition));
            }
            if let Ok(b) = detection_latency(&s, SpecKind::Black) {
                line.push_str(&format!(" black={}", b.transition));
            }
        }
        println!("{line}");
    }
}
