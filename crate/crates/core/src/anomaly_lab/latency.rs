//! Detection latency: the transition at which a spec first fires.
//!
//! The scenario programs announce each transition on ITM channel 0; a
//! violation is attributed to the transition of the latest marker at or
//! before its timestamp. Markers ride the trace stream, so the whole
//! measurement runs over the decoded pipeline, not simulator ground
//! truth.

use super::Scenario;
use crate::event_extract::Ts;
use crate::pipeline::{run_pipeline, transition_of, PipelineConfig, PipelineError, Staging};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectionPoint {
    pub ts: Ts,
    pub transition: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum LatencyError {
    #[error("scenario has no {0} spec")]
    NoSuchSpec(&'static str),
    #[error("no violation was raised")]
    NoViolation,
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecKind {
    White,
    Black,
}

pub fn detection_latency(
    scenario: &Scenario,
    kind: SpecKind,
) -> Result<DetectionPoint, LatencyError> {
    let spec = match kind {
        SpecKind::White => scenario
            .white_spec
            .ok_or(LatencyError::NoSuchSpec("white-box"))?,
        SpecKind::Black => scenario
            .black_spec
            .ok_or(LatencyError::NoSuchSpec("black-box"))?,
    };
    let image = scenario.image();
    let config = PipelineConfig {
        sim: scenario.sim.clone(),
        encoder: scenario.encoder_config(),
        watch: scenario.watch.clone(),
        staging: Staging::Serial,
        ..PipelineConfig::default()
    };
    let report = run_pipeline(&image, spec, scenario.bindings, &config)?;
    let first = report
        .violations
        .first()
        .ok_or(LatencyError::NoViolation)?;

    // Markers are ITM events; the clip event lane holds the full history
    // for scenario-sized runs, violation-triggered or not. Fall back to
    // transition 0 when a violation precedes every marker.
    let events = report
        .clip
        .as_ref()
        .map(|c| c.all_events())
        .unwrap_or_default();
    let transition = transition_of(&events, first.ts).unwrap_or(0);
    Ok(DetectionPoint {
        ts: first.ts,
        transition,
    })
}
