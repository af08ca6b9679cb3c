//! Manifestation-based classification.
//!
//! The class is determined by observable failure rates, not root-cause
//! analysis: run the scenario under R seed-varied schedules at fixed
//! input; a failure in every run is a Bohrbug, in some runs a Mandelbug.
//! The heisen flag compares bare runs against printf-instrumented runs
//! over the same seeds; the aging flag looks for a run-length threshold
//! in a four-point sweep. An aging bug is a Mandelbug subclass, so the
//! flag forces the base.

use super::Scenario;
use super::{BugBase, BugClass};
use crate::target_sim::{run, run_with_probe, SimConfig};

#[derive(Debug, Clone)]
pub struct ClassifyConfig {
    pub seeds: Vec<u64>,
    /// Minimum bare-vs-probed rate gap for the heisen flag.
    pub heisen_gap: f64,
    /// Minimum manifestation rate above the run-length threshold.
    pub aging_high: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            seeds: (0..20).collect(),
            heisen_gap: 0.5,
            aging_high: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassifyOutcome {
    NotManifested,
    Class(BugClass),
}

/// Full evidence gathered by a classification run.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifestation {
    pub outcome: ClassifyOutcome,
    pub bare_hits: usize,
    pub probed_hits: usize,
    pub runs: usize,
    /// Seeds whose bare run manifested.
    pub manifesting_seeds: Vec<u64>,
    /// Manifestation rate at each sweep length (bare runs).
    pub sweep_rates: Vec<f64>,
}

pub fn classify(scenario: &Scenario, config: &ClassifyConfig) -> Manifestation {
    let image = scenario.image();
    let base_sim = SimConfig {
        inputs: scenario.classify_inputs.clone(),
        ..scenario.sim.clone()
    };
    let r = config.seeds.len();

    let mut bare_hits = 0usize;
    let mut probed_hits = 0usize;
    let mut manifesting_seeds = Vec::new();
    for &seed in &config.seeds {
        let sim = SimConfig {
            seed,
            ..base_sim.clone()
        };
        let bare = run(&image, &sim).expect("scenario runs");
        if (scenario.predicate)(&bare.summary.outputs, bare.summary.status) {
            bare_hits += 1;
            manifesting_seeds.push(seed);
        }
        let probed = run_with_probe(&image, &sim).expect("scenario runs probed");
        if (scenario.predicate)(&probed.summary.outputs, probed.summary.status) {
            probed_hits += 1;
        }
    }

    // Run-length sweep; without a length input the rate is flat by
    // construction and the flag cannot set.
    let sweep_rates: Vec<f64> = match scenario.length_sweep {
        None => vec![bare_hits as f64 / r as f64; 4],
        Some((cell, lengths)) => lengths
            .iter()
            .map(|&len| {
                let mut hits = 0usize;
                for &seed in &config.seeds {
                    let mut sim = SimConfig {
                        seed,
                        ..base_sim.clone()
                    };
                    for slot in sim.inputs.iter_mut() {
                        if slot.0 == cell {
                            slot.1 = len;
                        }
                    }
                    let out = run(&image, &sim).expect("sweep run");
                    if (scenario.predicate)(&out.summary.outputs, out.summary.status) {
                        hits += 1;
                    }
                }
                hits as f64 / r as f64
            })
            .collect(),
    };

    let aging = (1..sweep_rates.len()).any(|split| {
        sweep_rates[..split].iter().all(|&rate| rate == 0.0)
            && sweep_rates[split..]
                .iter()
                .all(|&rate| rate >= config.aging_high)
    });

    let bare_rate = bare_hits as f64 / r as f64;
    let probed_rate = probed_hits as f64 / r as f64;
    let heisen = (bare_rate - probed_rate).abs() >= config.heisen_gap;

    let outcome = if bare_hits == 0 && sweep_rates.iter().all(|&rate| rate == 0.0) {
        ClassifyOutcome::NotManifested
    } else {
        let base = if aging {
            // Aging-related bugs are a Mandelbug subclass by definition.
            BugBase::Mandelbug
        } else if bare_hits == r {
            BugBase::Bohrbug
        } else {
            BugBase::Mandelbug
        };
        ClassifyOutcome::Class(BugClass {
            base,
            heisen,
            aging,
        })
    };

    Manifestation {
        outcome,
        bare_hits,
        probed_hits,
        runs: r,
        manifesting_seeds,
        sweep_rates,
    }
}
