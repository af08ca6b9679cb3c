//! Throughput of the four hot paths: simulation, trace encode, trace
//! decode, and online monitoring.

use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use std::hint::black_box;
use tracelab_bench::{bench_image, bench_stream, bench_trace};
use tracelab_core::rv_engine::{evaluate_online, parse_spec, testgen};
use tracelab_core::target_sim::{run, SimConfig};
use tracelab_core::trace_codec::{decode, DecodeParams};

const ITERATIONS: u64 = 20_000;

fn sim_throughput(c: &mut Criterion) {
    let image = bench_image(ITERATIONS);
    let records = 2 + ITERATIONS * 10 + 1;
    let mut group = c.benchmark_group("sim");
    group.throughput(Throughput::Elements(records));
    group.bench_function("loop_benchmark", |b| {
        b.iter(|| black_box(run(&image, &SimConfig::default()).unwrap().trace.len()))
    });
    group.finish();
}

fn encode_throughput(c: &mut Criterion) {
    let image = bench_image(ITERATIONS);
    let trace = bench_trace(&image);
    let mut group = c.benchmark_group("encode");
    group.throughput(Throughput::Elements(trace.len() as u64));
    group.bench_function("loop_benchmark", |b| {
        b.iter(|| black_box(bench_stream(&image, &trace).len()))
    });
    group.finish();
}

fn decode_throughput(c: &mut Criterion) {
    let image = bench_image(ITERATIONS);
    let trace = bench_trace(&image);
    let bytes = bench_stream(&image, &trace);
    let mut group = c.benchmark_group("decode");
    group.throughput(Throughput::Elements(trace.len() as u64));
    group.bench_function("loop_benchmark", |b| {
        b.iter(|| {
            let flow = decode(&bytes, &image, DecodeParams::default()).unwrap();
            black_box(flow.entries.len())
        })
    });
    group.finish();
}

fn monitor_throughput(c: &mut Criterion) {
    // A fixed medium-size generated case, evaluated online.
    let case = testgen::random_case(42);
    let graph = parse_spec(&case.spec).unwrap();
    let mut group = c.benchmark_group("monitor");
    group.throughput(Throughput::Elements(case.events.len().max(1) as u64));
    group.bench_function("generated_spec", |b| {
        b.iter(|| black_box(evaluate_online(&graph, &case.events).unwrap().0.violations.len()))
    });
    group.finish();
}

criterion_group!(
    benches,
    sim_throughput,
    encode_throughput,
    decode_throughput,
    monitor_throughput
);
criterion_main!(benches);
