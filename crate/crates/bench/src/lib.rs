//! Shared fixtures for the benchmarks.

use tracelab_core::corpus::loop_benchmark;
use tracelab_core::program_model::{load_image, BinaryImage};
use tracelab_core::target_sim::{run, ExecutionTrace, SimConfig};
use tracelab_core::trace_codec::{encode, EncoderConfig};

pub fn bench_image(iterations: u64) -> BinaryImage {
    load_image(&loop_benchmark(iterations)).expect("benchmark program parses")
}

pub fn bench_trace(image: &BinaryImage) -> ExecutionTrace {
    run(image, &SimConfig::default()).expect("benchmark runs").trace
}

pub fn bench_stream(image: &BinaryImage, trace: &ExecutionTrace) -> Vec<u8> {
    encode(trace, image, &EncoderConfig::default()).expect("benchmark encodes")
}
