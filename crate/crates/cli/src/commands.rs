//! Subcommand implementations.

use crate::args::*;
use crate::report;
use anyhow::{anyhow, bail, Context, Result};
use serde_json::json;
use std::path::Path;
use std::process::ExitCode;
use tracelab_core::anomaly_lab::{
    classify, scenario, scenarios, ClassifyConfig, ClassifyOutcome,
};
use tracelab_core::ctest;
use tracelab_core::event_extract::{extract, format_event, WatchConfig};
use tracelab_core::pipeline::{replay_clip, run_pipeline, PipelineConfig, Staging};
use tracelab_core::program_model::{derive_call_graph, load_image, BinaryImage, EdgeLabel};
use tracelab_core::rv_engine::{bind_events, evaluate_online, parse_bindings, parse_spec};
use tracelab_core::target_sim::{format_record, run, SimConfig};
use tracelab_core::trace_codec::{decode, encode, measure, DataTrace, EncoderConfig};
use tracelab_core::trigger_buffer::{export_clip, import_clip};
use tracelab_core::value::Value;

pub fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Check { image, call_graph } => cmd_check(&image, call_graph),
        Command::Sim {
            image,
            sim,
            dump,
            probe,
        } => cmd_sim(&image, &sim, dump, probe),
        Command::Trace(tc) => match tc {
            TraceCommand::Encode {
                image,
                output,
                sim,
                encoder,
            } => cmd_encode(&image, &output, &sim, &encoder),
            TraceCommand::Decode {
                image,
                trace,
                encoder,
                dump,
            } => cmd_decode(&image, &trace, &encoder, dump),
            TraceCommand::Stats {
                image,
                sim,
                encoder,
            } => cmd_stats(&image, &sim, &encoder),
        },
        Command::Events {
            image,
            sim,
            encoder,
            watch,
        } => cmd_events(&image, &sim, &encoder, &watch),
        Command::Monitor {
            image,
            spec,
            bindings,
            sim,
            encoder,
            watch,
            timelines,
        } => cmd_monitor(&image, &spec, &bindings, &sim, &encoder, &watch, timelines),
        Command::Pipeline {
            image,
            spec,
            bindings,
            sim,
            encoder,
            watch,
            clip,
            capacity,
            post_trigger,
            serial,
        } => cmd_pipeline(
            &image,
            &spec,
            &bindings,
            &sim,
            &encoder,
            &watch,
            clip.as_deref(),
            capacity,
            post_trigger,
            serial,
        ),
        Command::Ctest(cc) => match cc {
            CtestCommand::Gen {
                model,
                strength,
                seed,
                output,
            } => cmd_ctest_gen(&model, strength, seed, output.as_deref()),
            CtestCommand::Verify {
                model,
                suite,
                strength,
            } => cmd_ctest_verify(&model, &suite, strength),
            CtestCommand::Run {
                model,
                image,
                strength,
                array_seed,
                sim,
                oracle,
            } => cmd_ctest_run(&model, &image, strength, array_seed, &sim, &oracle),
        },
        Command::Lab(lc) => match lc {
            LabCommand::List => cmd_lab_list(),
            LabCommand::Run {
                name,
                spec,
                clip,
                seed,
            } => cmd_lab_run(&name, spec, clip.as_deref(), seed),
            LabCommand::Classify { name, runs } => cmd_lab_classify(&name, runs),
        },
        Command::Clip(cc) => match cc {
            ClipCommand::Show { clip } => cmd_clip_show(&clip),
            ClipCommand::Replay {
                clip,
                image,
                spec,
                bindings,
            } => cmd_clip_replay(&clip, &image, &spec, &bindings),
        },
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load(path: &Path) -> Result<BinaryImage> {
    load_image(&read(path)?).with_context(|| format!("loading {}", path.display()))
}

fn sim_config(args: &SimArgs) -> Result<SimConfig> {
    let mut inputs = Vec::new();
    for pair in &args.inputs {
        let (cell, value) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("--input expects CELL=VALUE, got `{pair}`"))?;
        inputs.push((
            cell.trim().parse::<usize>().context("input cell")?,
            value.trim().parse::<i64>().context("input value")?,
        ));
    }
    let seed = match std::env::var("TRACELAB_SEED") {
        Ok(s) => s
            .trim()
            .parse::<u64>()
            .context("TRACELAB_SEED must be an integer")?,
        Err(_) => args.seed,
    };
    Ok(SimConfig {
        seed,
        qmin: args.qmin,
        qmax: args.qmax,
        mem_size: args.mem_size,
        max_cycles: args.max_cycles,
        inputs,
        ..SimConfig::default()
    })
}

fn encoder_config(args: &EncoderArgs) -> Result<EncoderConfig> {
    let data_trace = match args.data.as_str() {
        "off" => DataTrace::Off,
        "full" => DataTrace::Full,
        other => match other.strip_prefix("watched:") {
            Some(cells) => {
                let set: Result<std::collections::BTreeSet<usize>> = cells
                    .split(',')
                    .map(|c| c.trim().parse::<usize>().context("watched cell"))
                    .collect();
                DataTrace::Watched(set?)
            }
            None => bail!("--data expects off, full or watched:CELLS, got `{other}`"),
        },
    };
    Ok(EncoderConfig {
        sync_period: args.sync_period,
        data_trace,
        outputs_in_trace: !args.no_outputs,
    })
}

fn watch_config(args: &WatchArgs) -> Result<WatchConfig> {
    let watched = match &args.watch {
        None => Default::default(),
        Some(cells) => cells
            .split(',')
            .map(|c| c.trim().parse::<usize>().context("watch cell"))
            .collect::<Result<_>>()?,
    };
    Ok(WatchConfig {
        watched,
        functions: None,
        branches: args.branches,
        locks: !args.no_locks,
    })
}

fn cmd_check(path: &Path, call_graph: bool) -> Result<ExitCode> {
    let image = load(path)?;
    println!(
        "image instructions={} functions={} threads={} hash={:#018x}",
        image.len(),
        image.functions.len(),
        image.threads.len(),
        image.source_hash
    );
    for f in &image.functions {
        println!("function name={} entry={} end={}", f.name, f.entry, f.end);
    }
    for t in &image.threads {
        println!(
            "thread name={} entry={}",
            t.name, image.functions[t.entry_fn].name
        );
    }
    if call_graph {
        let graph = derive_call_graph(&image);
        for e in &graph.edges {
            match &e.label {
                EdgeLabel::Direct => {
                    println!("call caller={} callee={} label=D", e.caller, e.callee)
                }
                EdgeLabel::Conditional(guards) => println!(
                    "call caller={} callee={} label=X guards={:?}",
                    e.caller, e.callee, guards
                ),
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sim(path: &Path, sim: &SimArgs, dump: bool, probe: bool) -> Result<ExitCode> {
    let image = load(path)?;
    let mut config = sim_config(sim)?;
    if probe {
        config.probe_mode = tracelab_core::target_sim::ProbeMode::Printf;
    }
    let out = run(&image, &config)?;
    if dump {
        for rec in &out.trace {
            println!("{}", format_record(&image, rec));
        }
    }
    report::print_outputs(&out.summary.outputs);
    let summary = json!({
        "status": report::status_str(out.summary.status),
        "instructions": out.summary.instructions,
        "cycles": out.summary.cycles,
        "wait_cycle": out.summary.wait_cycle,
    });
    println!("summary {summary}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_encode(
    path: &Path,
    output: &Path,
    sim: &SimArgs,
    encoder: &EncoderArgs,
) -> Result<ExitCode> {
    let image = load(path)?;
    let config = sim_config(sim)?;
    let enc = encoder_config(encoder)?;
    let out = run(&image, &config)?;
    let bytes = encode(&out.trace, &image, &enc)?;
    std::fs::write(output, &bytes).with_context(|| format!("writing {}", output.display()))?;
    let m = measure(out.trace.len() as u64, &bytes);
    println!("summary {}", json!({
        "records": out.trace.len(),
        "bytes": bytes.len(),
        "ratio": format!("{:.2}", m.ratio_2dp()),
        "file": output.display().to_string(),
    }));
    Ok(ExitCode::SUCCESS)
}

fn cmd_decode(path: &Path, trace: &Path, encoder: &EncoderArgs, dump: bool) -> Result<ExitCode> {
    let image = load(path)?;
    let enc = encoder_config(encoder)?;
    let bytes =
        std::fs::read(trace).with_context(|| format!("reading {}", trace.display()))?;
    let flow = decode(&bytes, &image, enc.decode_params())?;
    let mut records = 0usize;
    let mut gaps = 0usize;
    for entry in &flow.entries {
        match entry {
            tracelab_core::trace_codec::FlowEntry::Record(rec) => {
                records += 1;
                if dump {
                    println!("{}", format_record(&image, rec));
                }
            }
            tracelab_core::trace_codec::FlowEntry::Gap => {
                gaps += 1;
                if dump {
                    println!("gap");
                }
            }
        }
    }
    println!("summary {}", json!({ "records": records, "gaps": gaps }));
    Ok(ExitCode::SUCCESS)
}

fn cmd_stats(path: &Path, sim: &SimArgs, encoder: &EncoderArgs) -> Result<ExitCode> {
    let image = load(path)?;
    let config = sim_config(sim)?;
    let enc = encoder_config(encoder)?;
    let out = run(&image, &config)?;
    let bytes = encode(&out.trace, &image, &enc)?;
    let m = measure(out.trace.len() as u64, &bytes);
    println!("summary {}", json!({
        "instruction_count": m.instruction_count,
        "naive_bits": m.naive_bits,
        "compressed_bits": m.compressed_bits,
        "ratio": format!("{:.2}", m.ratio_2dp()),
        "status": report::status_str(out.summary.status),
    }));
    Ok(ExitCode::SUCCESS)
}

fn cmd_events(
    path: &Path,
    sim: &SimArgs,
    encoder: &EncoderArgs,
    watch: &WatchArgs,
) -> Result<ExitCode> {
    let image = load(path)?;
    let config = sim_config(sim)?;
    let enc = encoder_config(encoder)?;
    let out = run(&image, &config)?;
    let bytes = encode(&out.trace, &image, &enc)?;
    let flow = decode(&bytes, &image, enc.decode_params())?;
    let stream = extract(&flow, &image, watch_config(watch)?);
    for ev in &stream.events {
        println!("{}", format_event(&image, ev));
    }
    for w in &stream.warnings {
        println!("warning {w}");
    }
    println!("summary {}", json!({
        "events": stream.events.len(),
        "warnings": stream.warnings.len(),
    }));
    Ok(ExitCode::SUCCESS)
}

fn cmd_monitor(
    path: &Path,
    spec: &Path,
    bindings: &Path,
    sim: &SimArgs,
    encoder: &EncoderArgs,
    watch: &WatchArgs,
    timelines: bool,
) -> Result<ExitCode> {
    let image = load(path)?;
    let config = sim_config(sim)?;
    let enc = encoder_config(encoder)?;
    let graph = parse_spec(&read(spec)?)?;
    let binds = parse_bindings(&read(bindings)?)?;
    let out = run(&image, &config)?;
    let bytes = encode(&out.trace, &image, &enc)?;
    let flow = decode(&bytes, &image, enc.decode_params())?;
    let stream = extract(&flow, &image, watch_config(watch)?);
    let inputs = bind_events(&graph, &binds, &image, &stream.events)?;
    let (result, stats) = evaluate_online(&graph, &inputs)?;
    if timelines {
        for (name, timeline) in &result.outputs {
            for (ts, v) in timeline {
                println!("stream name={name} ts={ts} value={v}");
            }
        }
    }
    report::print_violations(&result.violations);
    println!("summary {}", json!({
        "events": stream.events.len(),
        "violations": result.violations.len(),
        "nodes": stats.nodes,
        "rounds": stats.rounds,
    }));
    Ok(if result.violations.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_pipeline(
    path: &Path,
    spec: &Path,
    bindings: &Path,
    sim: &SimArgs,
    encoder: &EncoderArgs,
    watch: &WatchArgs,
    clip_path: Option<&Path>,
    capacity: usize,
    post_trigger: usize,
    serial: bool,
) -> Result<ExitCode> {
    let image = load(path)?;
    let spec_text = read(spec)?;
    let bindings_text = read(bindings)?;
    let config = PipelineConfig {
        sim: sim_config(sim)?,
        encoder: encoder_config(encoder)?,
        watch: watch_config(watch)?,
        capacity,
        post_trigger,
        staging: if serial {
            Staging::Serial
        } else {
            Staging::Concurrent
        },
    };
    let report = run_pipeline(&image, &spec_text, &bindings_text, &config)?;
    let mut written = None;
    if let (Some(path), Some(clip)) = (clip_path, report.clip.as_ref()) {
        std::fs::write(path, export_clip(clip))
            .with_context(|| format!("writing {}", path.display()))?;
        written = Some(path.display().to_string());
    }
    report::print_pipeline_summary(&report, written.as_deref());
    Ok(if report.violations.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_ctest_gen(
    model_path: &Path,
    strength: usize,
    seed: u64,
    output: Option<&Path>,
) -> Result<ExitCode> {
    let model = ctest::parse_model(&read(model_path)?)?;
    let array = ctest::generate(&model, strength, seed)?;
    let text = ctest::export_suite(&model, &array);
    match output {
        Some(path) => {
            std::fs::write(path, &text)
                .with_context(|| format!("writing {}", path.display()))?;
        }
        None => print!("{text}"),
    }
    println!("summary {}", json!({
        "strength": strength,
        "tests": array.suite.len(),
        "cartesian": model.cartesian_size(),
    }));
    Ok(ExitCode::SUCCESS)
}

fn cmd_ctest_verify(model_path: &Path, suite_path: &Path, strength: usize) -> Result<ExitCode> {
    let model = ctest::parse_model(&read(model_path)?)?;
    let text = read(suite_path)?;
    let mut suite = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let mut test = Vec::new();
        for (p, tok) in model.parameters.iter().zip(line.split('\t')) {
            let value: i64 = tok.trim().parse().context("suite value")?;
            let idx = p
                .values
                .iter()
                .position(|&v| v == value)
                .ok_or_else(|| anyhow!("line {}: {value} not in `{}` domain", i + 1, p.name))?;
            test.push(idx);
        }
        suite.push(test);
    }
    let missing = ctest::verify_coverage(&suite, &model, strength)?;
    for tuple in &missing {
        let rendering: Vec<String> = tuple
            .iter()
            .map(|&(p, v)| {
                format!(
                    "{}={}",
                    model.parameters[p].name, model.parameters[p].values[v]
                )
            })
            .collect();
        println!("missing {}", rendering.join(" "));
    }
    println!("summary {}", json!({
        "tests": suite.len(),
        "missing": missing.len(),
    }));
    Ok(if missing.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_ctest_run(
    model_path: &Path,
    image_path: &Path,
    strength: usize,
    seed: u64,
    sim: &SimArgs,
    oracle: &str,
) -> Result<ExitCode> {
    use tracelab_core::target_sim::RunOutcome;

    let model = ctest::parse_model(&read(model_path)?)?;
    let image = load(image_path)?;
    let array = ctest::generate(&model, strength, seed)?;
    let base = sim_config(sim)?;

    let oracle_fn: Box<dyn Fn(&RunOutcome) -> ctest::TestVerdict> = if oracle == "finite" {
        Box::new(|out: &RunOutcome| {
            let bad = out.summary.outputs.iter().any(|o| match o.value {
                Value::Float(f) => f.is_nan() || f.is_infinite(),
                Value::Int(_) => false,
            });
            ctest::TestVerdict {
                pass: !bad,
                violations: Vec::new(),
                detail: if bad {
                    "non-finite output".into()
                } else {
                    String::new()
                },
            }
        })
    } else if let Some(rest) = oracle.strip_prefix("expect:") {
        let (port, value) = rest
            .split_once('=')
            .ok_or_else(|| anyhow!("--oracle expect:PORT=VALUE"))?;
        let port: u8 = port.parse().context("oracle port")?;
        let value: i64 = value.parse().context("oracle value")?;
        Box::new(move |out: &RunOutcome| {
            let last = out.summary.outputs.iter().filter(|o| o.port == port).last();
            let pass = last.map(|o| o.value == Value::Int(value)).unwrap_or(false);
            ctest::TestVerdict {
                pass,
                violations: Vec::new(),
                detail: last
                    .map(|o| format!("port {port} = {}", o.value))
                    .unwrap_or_else(|| format!("no output on port {port}")),
            }
        })
    } else if let Some(rest) = oracle.strip_prefix("spec:") {
        // Runtime monitor as test oracle: decode each run and fail the
        // test when the spec raises violations.
        let (spec_path, bind_path) = rest
            .split_once(':')
            .ok_or_else(|| anyhow!("--oracle spec:SPEC.rvl:BINDINGS"))?;
        let graph = parse_spec(&read(Path::new(spec_path))?)?;
        let binds = parse_bindings(&read(Path::new(bind_path))?)?;
        let oracle_image = load(image_path)?;
        let watch = WatchConfig {
            watched: (0..base.mem_size).collect(),
            ..WatchConfig::default()
        };
        let enc = EncoderConfig {
            data_trace: DataTrace::Full,
            ..EncoderConfig::default()
        };
        Box::new(move |out: &RunOutcome| {
            let verdict = (|| -> Result<ctest::TestVerdict> {
                let bytes = encode(&out.trace, &oracle_image, &enc)?;
                let flow = decode(&bytes, &oracle_image, enc.decode_params())?;
                let stream = extract(&flow, &oracle_image, watch.clone());
                let inputs = bind_events(&graph, &binds, &oracle_image, &stream.events)?;
                let (result, _) = evaluate_online(&graph, &inputs)?;
                Ok(ctest::TestVerdict {
                    pass: result.violations.is_empty(),
                    detail: result
                        .violations
                        .first()
                        .map(|v| v.summary.clone())
                        .unwrap_or_default(),
                    violations: result.violations,
                })
            })();
            verdict.unwrap_or_else(|e| ctest::TestVerdict {
                pass: false,
                violations: Vec::new(),
                detail: format!("oracle error: {e}"),
            })
        })
    } else {
        bail!("unknown oracle `{oracle}`");
    };

    let report = ctest::run_suite(&array, &model, &image, &base, oracle_fn.as_ref())?;
    for fail in &report.failures {
        let assignment: Vec<String> = fail
            .assignment
            .iter()
            .map(|(name, v)| format!("{name}={v}"))
            .collect();
        println!(
            "failure index={} {} status={} detail=\"{}\"",
            fail.index,
            assignment.join(" "),
            report::status_str(fail.status),
            fail.verdict.detail
        );
    }
    println!("summary {}", json!({
        "tests": report.total,
        "failures": report.failures.len(),
    }));
    Ok(if report.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_lab_list() -> Result<ExitCode> {
    for s in scenarios() {
        println!(
            "scenario name={} class={} specs={}{} seed={}",
            s.name,
            s.expected_class.label(),
            if s.white_spec.is_some() { "white" } else { "" },
            if s.black_spec.is_some() { "+black" } else { "" },
            s.sim.seed,
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_lab_run(
    name: &str,
    choice: SpecChoice,
    clip_path: Option<&Path>,
    seed: Option<u64>,
) -> Result<ExitCode> {
    let mut s = scenario(name)
        .ok_or_else(|| anyhow!("unknown scenario `{name}`; try `tracelab lab list`"))?;
    if let Some(seed) = seed {
        s.sim.seed = seed;
    }
    let spec_text = match choice {
        SpecChoice::White => s.white_spec,
        SpecChoice::Black => s.black_spec,
    }
    .ok_or_else(|| anyhow!("scenario `{name}` has no such spec"))?;
    let image = s.image();
    let config = PipelineConfig {
        sim: s.sim.clone(),
        encoder: s.encoder_config(),
        watch: s.watch.clone(),
        staging: Staging::Serial,
        ..PipelineConfig::default()
    };
    let report = run_pipeline(&image, spec_text, s.bindings, &config)?;
    let mut written = None;
    if let (Some(path), Some(clip)) = (clip_path, report.clip.as_ref()) {
        std::fs::write(path, export_clip(clip))
            .with_context(|| format!("writing {}", path.display()))?;
        written = Some(path.display().to_string());
    }
    report::print_pipeline_summary(&report, written.as_deref());
    Ok(if report.violations.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_lab_classify(name: &str, runs: u64) -> Result<ExitCode> {
    let s = scenario(name)
        .ok_or_else(|| anyhow!("unknown scenario `{name}`; try `tracelab lab list`"))?;
    let config = ClassifyConfig {
        seeds: (0..runs).collect(),
        ..ClassifyConfig::default()
    };
    let m = classify(&s, &config);
    println!(
        "manifestation bare={}/{} probed={}/{} seeds={:?}",
        m.bare_hits, m.runs, m.probed_hits, m.runs, m.manifesting_seeds
    );
    println!(
        "sweep rates={}",
        m.sweep_rates
            .iter()
            .map(|r| format!("{r:.2}"))
            .collect::<Vec<_>>()
            .join(",")
    );
    let class = match &m.outcome {
        ClassifyOutcome::NotManifested => "NotManifested".to_string(),
        ClassifyOutcome::Class(c) => c.label(),
    };
    println!("summary {}", json!({
        "scenario": name,
        "class": class,
        "expected": s.expected_class.label(),
    }));
    Ok(ExitCode::SUCCESS)
}

fn cmd_clip_show(path: &Path) -> Result<ExitCode> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let clip = import_clip(&bytes)?;
    println!(
        "clip image_hash={:#018x} spec_hash={:#018x} sync_period={} capacity={} post_trigger={}",
        clip.meta.image_hash,
        clip.meta.spec_hash,
        clip.meta.sync_period,
        clip.meta.capacity,
        clip.meta.post_trigger
    );
    println!(
        "violation assert={} ts={} summary=\"{}\"",
        clip.violation.assertion, clip.violation.ts, clip.violation.summary
    );
    println!("summary {}", json!({
        "raw_packets": clip.pre_raw.len() + clip.post_raw.len(),
        "raw_bytes": clip.raw_bytes().len(),
        "events": clip.pre_events.len() + clip.post_events.len(),
        "pre_events": clip.pre_events.len(),
        "post_events": clip.post_events.len(),
    }));
    Ok(ExitCode::SUCCESS)
}

fn cmd_clip_replay(
    clip_path: &Path,
    image_path: &Path,
    spec: &Path,
    bindings: &Path,
) -> Result<ExitCode> {
    let bytes =
        std::fs::read(clip_path).with_context(|| format!("reading {}", clip_path.display()))?;
    let clip = import_clip(&bytes)?;
    let image = load(image_path)?;
    let spec_text = read(spec)?;
    let bindings_text = read(bindings)?;
    let outcome = replay_clip(&clip, &image, &spec_text, &bindings_text)?;

    // The raw region must stand on its own as well.
    let flow = decode(&clip.raw_bytes(), &image, clip.meta.decode_params())?;
    let raw_records = flow.records().count();

    report::print_violations(&outcome.violations);
    println!("summary {}", json!({
        "reproduced": outcome.reproduced,
        "recorded_ts": clip.violation.ts.to_string(),
        "raw_records": raw_records,
    }));
    Ok(if outcome.reproduced {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
