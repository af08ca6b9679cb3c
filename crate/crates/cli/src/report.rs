//! Line-oriented machine-readable output: one record per line, one JSON
//! summary object at the end.

use serde_json::json;
use tracelab_core::pipeline::PipelineReport;
use tracelab_core::rv_engine::Violation;
use tracelab_core::target_sim::{OutputLog, TerminationStatus};

pub fn status_str(status: TerminationStatus) -> &'static str {
    match status {
        TerminationStatus::AllHalted => "all-halted",
        TerminationStatus::WatchdogTruncated => "watchdog-truncated",
        TerminationStatus::AllBlocked => "all-blocked",
    }
}

pub fn print_outputs(outputs: &OutputLog) {
    for o in outputs {
        println!("output cycle={} port={} value={}", o.cycle, o.port, o.value);
    }
}

pub fn print_violations(violations: &[Violation]) {
    for v in violations {
        println!("violation assert={} ts={} summary=\"{}\"", v.assertion, v.ts, v.summary);
    }
}

pub fn print_pipeline_summary(report: &PipelineReport, clip_path: Option<&str>) {
    print_outputs(&report.outputs);
    print_violations(&report.violations);
    let summary = json!({
        "status": status_str(report.status),
        "instructions": report.instructions,
        "cycles": report.cycles,
        "events": report.event_count,
        "violations": report.violations.len(),
        "compression": {
            "instruction_count": report.compression.instruction_count,
            "naive_bits": report.compression.naive_bits,
            "compressed_bits": report.compression.compressed_bits,
            "ratio": format!("{:.2}", report.compression.ratio_2dp()),
        },
        "clip": clip_path,
        "warnings": report.warnings,
    });
    println!("summary {summary}");
}
