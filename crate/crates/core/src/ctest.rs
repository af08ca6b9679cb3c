//! Pseudo-exhaustive t-way covering arrays and the suite runner.
//!
//! Generation is an AETG-style seeded greedy: while uncovered t-tuples
//! remain, build 50 candidate tests — the first parameter/value is the
//! pair occurring in the most uncovered tuples, the remaining parameters
//! are filled in seeded-random order with the value covering the most new
//! tuples (ties to the lowest domain index) — and keep the candidate
//! covering the most new tuples (ties to the first generated).

use crate::program_model::BinaryImage;
use crate::rng::SplitMix64;
use crate::rv_engine::Violation;
use crate::target_sim::{run, OutputLog, RunOutcome, SimConfig, TerminationStatus};
use std::collections::BTreeSet;
use std::fmt::Write as _;

pub const CANDIDATES_PER_ROUND: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parameter {
    pub name: String,
    /// Adapter target: the memory cell receiving this parameter's value.
    pub cell: usize,
    /// Ordered, finite value domain.
    pub values: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParameterModel {
    pub parameters: Vec<Parameter>,
}

impl ParameterModel {
    pub fn cartesian_size(&self) -> u64 {
        self.parameters
            .iter()
            .map(|p| p.values.len() as u64)
            .product()
    }
}

/// One test: a domain-value index per parameter, in model order.
pub type TestCase = Vec<usize>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoveringArray {
    pub strength: usize,
    pub suite: Vec<TestCase>,
}

/// A t-way tuple: (parameter index, value index) pairs, ascending by
/// parameter.
pub type Tuple = Vec<(usize, usize)>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CtestError {
    #[error("strength {t} out of range 1..={params}")]
    StrengthOutOfRange { t: usize, params: usize },
    #[error("model error: {0}")]
    Model(String),
    #[error("test {index} could not be adapted: {detail}")]
    AdapterError { index: usize, detail: String },
}

pub fn generate(
    model: &ParameterModel,
    t: usize,
    seed: u64,
) -> Result<CoveringArray, CtestError> {
    let k = model.parameters.len();
    if t < 1 || t > k {
        return Err(CtestError::StrengthOutOfRange { t, params: k });
    }
    for p in &model.parameters {
        if p.values.is_empty() {
            return Err(CtestError::Model(format!("parameter `{}` has an empty domain", p.name)));
        }
    }

    let combos = combinations(k, t);
    let mut uncovered: BTreeSet<Tuple> = BTreeSet::new();
    for combo in &combos {
        let mut values = vec![0usize; combo.len()];
        loop {
            uncovered.insert(combo.iter().copied().zip(values.iter().copied()).collect());
            if !advance(&mut values, combo, model) {
                break;
            }
        }
    }

    // pair_count[p][v] = uncovered tuples containing (p, v)
    let mut pair_count: Vec<Vec<usize>> = model
        .parameters
        .iter()
        .map(|p| vec![0usize; p.values.len()])
        .collect();
    for tuple in &uncovered {
        for &(p, v) in tuple {
            pair_count[p][v] += 1;
        }
    }

    let mut rng = SplitMix64::new(seed);
    let mut suite: Vec<TestCase> = Vec::new();

    while !uncovered.is_empty() {
        let mut best: Option<(usize, TestCase)> = None;
        for _ in 0..CANDIDATES_PER_ROUND {
            let candidate = build_candidate(model, t, &uncovered, &pair_count, &mut rng);
            let score = newly_covered(&candidate, t, &combos, &uncovered);
            if best.as_ref().map(|(s, _)| score > *s).unwrap_or(true) {
                best = Some((score, candidate));
            }
        }
        let (score, mut chosen) = best.expect("candidates were generated");
        if score == 0 {
            // Guaranteed progress: realize the first uncovered tuple.
            let tuple = uncovered.iter().next().expect("nonempty").clone();
            let mut direct = vec![0usize; k];
            for (p, v) in tuple {
                direct[p] = v;
            }
            chosen = direct;
        }
        for combo in &combos {
            let tuple: Tuple = combo.iter().map(|&p| (p, chosen[p])).collect();
            if uncovered.remove(&tuple) {
                for &(p, v) in &tuple {
                    pair_count[p][v] -= 1;
                }
            }
        }
        suite.push(chosen);
    }

    Ok(CoveringArray { strength: t, suite })
}

fn build_candidate(
    model: &ParameterModel,
    _t: usize,
    uncovered: &BTreeSet<Tuple>,
    pair_count: &[Vec<usize>],
    rng: &mut SplitMix64,
) -> TestCase {
    let k = model.parameters.len();
    let mut assigned: Vec<Option<usize>> = vec![None; k];

    // Seed parameter/value: the pair in the most uncovered tuples,
    // ties to the lowest parameter then value index.
    let (mut bp, mut bv, mut bc) = (0usize, 0usize, 0usize);
    for (p, counts) in pair_count.iter().enumerate() {
        for (v, &c) in counts.iter().enumerate() {
            if c > bc {
                (bp, bv, bc) = (p, v, c);
            }
        }
    }
    assigned[bp] = Some(bv);

    let mut rest: Vec<usize> = (0..k).filter(|&p| p != bp).collect();
    rng.shuffle(&mut rest);

    for p in rest {
        let domain = model.parameters[p].values.len();
        let (mut best_v, mut best_new) = (0usize, 0usize);
        for v in 0..domain {
            // Tuples containing (p, v) and consistent with the partial
            // assignment; not-yet-assigned coordinates are wildcards.
            let mut news = 0usize;
            for tuple in uncovered {
                let hits = tuple.iter().any(|&(tp, tv)| tp == p && tv == v);
                let consistent = tuple.iter().all(|&(tp, tv)| {
                    (tp == p && tv == v) || assigned[tp] == Some(tv) || assigned[tp].is_none()
                });
                if hits && consistent {
                    news += 1;
                }
            }
            if news > best_new {
                (best_v, best_new) = (v, news);
            }
        }
        assigned[p] = Some(best_v);
    }

    assigned.into_iter().map(|a| a.unwrap_or(0)).collect()
}

fn newly_covered(
    candidate: &TestCase,
    _t: usize,
    combos: &[Vec<usize>],
    uncovered: &BTreeSet<Tuple>,
) -> usize {
    combos
        .iter()
        .filter(|combo| {
            let tuple: Tuple = combo.iter().map(|&p| (p, candidate[p])).collect();
            uncovered.contains(&tuple)
        })
        .count()
}

/// All strictly-ascending index combinations of size `t` from `0..k`.
fn combinations(k: usize, t: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut combo: Vec<usize> = (0..t).collect();
    loop {
        out.push(combo.clone());
        // advance combination
        let mut i = t;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if combo[i] + 1 <= k - (t - i) {
                combo[i] += 1;
                for j in i + 1..t {
                    combo[j] = combo[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Odometer over the value indexes of `combo`'s parameters.
fn advance(values: &mut [usize], combo: &[usize], model: &ParameterModel) -> bool {
    for i in (0..values.len()).rev() {
        values[i] += 1;
        if values[i] < model.parameters[combo[i]].values.len() {
            return true;
        }
        values[i] = 0;
    }
    false
}

/// Exhaustively enumerate all t-way tuples and list those not covered by
/// the suite. Empty result means the suite is a valid covering array.
pub fn verify_coverage(
    suite: &[TestCase],
    model: &ParameterModel,
    t: usize,
) -> Result<Vec<Tuple>, CtestError> {
    let k = model.parameters.len();
    if t < 1 || t > k {
        return Err(CtestError::StrengthOutOfRange { t, params: k });
    }
    let mut missing = Vec::new();
    for combo in combinations(k, t) {
        let mut values = vec![0usize; combo.len()];
        loop {
            let covered = suite.iter().any(|test| {
                combo
                    .iter()
                    .zip(values.iter())
                    .all(|(&p, &v)| test.get(p) == Some(&v))
            });
            if !covered {
                missing.push(combo.iter().copied().zip(values.iter().copied()).collect());
            }
            if !advance(&mut values, &combo, model) {
                break;
            }
        }
    }
    Ok(missing)
}

/// Verdict the per-test oracle renders over a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TestVerdict {
    pub pass: bool,
    pub violations: Vec<Violation>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailureRow {
    pub index: usize,
    pub assignment: Vec<(String, i64)>,
    pub outputs: OutputLog,
    pub status: TerminationStatus,
    pub verdict: TestVerdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailureReport {
    pub total: usize,
    pub failures: Vec<FailureRow>,
}

/// Map a test case onto the simulator input vector.
pub fn adapt(
    model: &ParameterModel,
    test: &TestCase,
    base: &SimConfig,
    index: usize,
) -> Result<SimConfig, CtestError> {
    let mut config = base.clone();
    for (p, &v) in model.parameters.iter().zip(test.iter()) {
        let value = *p.values.get(v).ok_or_else(|| CtestError::AdapterError {
            index,
            detail: format!("value index {v} outside `{}` domain", p.name),
        })?;
        if p.cell >= config.mem_size {
            return Err(CtestError::AdapterError {
                index,
                detail: format!("cell {} outside memory of {}", p.cell, config.mem_size),
            });
        }
        config.inputs.push((p.cell, value));
    }
    Ok(config)
}

/// One deterministic simulator run per test; the oracle judges the run
/// (output log, termination status, or a monitor pass over the trace).
pub fn run_suite(
    array: &CoveringArray,
    model: &ParameterModel,
    image: &BinaryImage,
    base: &SimConfig,
    oracle: &dyn Fn(&RunOutcome) -> TestVerdict,
) -> Result<FailureReport, CtestError> {
    let mut failures = Vec::new();
    for (index, test) in array.suite.iter().enumerate() {
        let config = adapt(model, test, base, index)?;
        let out = run(image, &config).map_err(|e| CtestError::AdapterError {
            index,
            detail: e.to_string(),
        })?;
        let verdict = oracle(&out);
        if !verdict.pass {
            failures.push(FailureRow {
                index,
                assignment: model
                    .parameters
                    .iter()
                    .zip(test.iter())
                    .map(|(p, &v)| (p.name.clone(), p.values[v]))
                    .collect(),
                outputs: out.summary.outputs,
                status: out.summary.status,
                verdict,
            });
        }
    }
    Ok(FailureReport {
        total: array.suite.len(),
        failures,
    })
}

/// Model file: `param NAME mem[IDX] = v1, v2, ...` per line, `#` comments.
pub fn parse_model(text: &str) -> Result<ParameterModel, CtestError> {
    let mut parameters = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let body = line.strip_prefix("param ").ok_or_else(|| {
            CtestError::Model(format!("line {line_no}: expected `param NAME mem[IDX] = ...`"))
        })?;
        let (head, values) = body.split_once('=').ok_or_else(|| {
            CtestError::Model(format!("line {line_no}: missing `=` and domain"))
        })?;
        let mut head_parts = head.split_whitespace();
        let name = head_parts
            .next()
            .ok_or_else(|| CtestError::Model(format!("line {line_no}: missing name")))?
            .to_string();
        let cell_tok = head_parts
            .next()
            .ok_or_else(|| CtestError::Model(format!("line {line_no}: missing `mem[IDX]`")))?;
        let cell = cell_tok
            .strip_prefix("mem[")
            .and_then(|s| s.strip_suffix(']'))
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| {
                CtestError::Model(format!("line {line_no}: bad adapter target `{cell_tok}`"))
            })?;
        let values: Result<Vec<i64>, _> = values
            .split(',')
            .map(|v| v.trim().parse::<i64>())
            .collect();
        let values = values
            .map_err(|_| CtestError::Model(format!("line {line_no}: bad domain value")))?;
        if values.is_empty() {
            return Err(CtestError::Model(format!("line {line_no}: empty domain")));
        }
        parameters.push(Parameter { name, cell, values });
    }
    if parameters.is_empty() {
        return Err(CtestError::Model("model declares no parameters".into()));
    }
    Ok(ParameterModel { parameters })
}

/// Tab-delimited suite with a header row of parameter names.
pub fn export_suite(model: &ParameterModel, array: &CoveringArray) -> String {
    let mut out = String::new();
    let header: Vec<&str> = model.parameters.iter().map(|p| p.name.as_str()).collect();
    let _ = writeln!(out, "{}", header.join("\t"));
    for test in &array.suite {
        let row: Vec<String> = model
            .parameters
            .iter()
            .zip(test.iter())
            .map(|(p, &v)| p.values[v].to_string())
            .collect();
        let _ = writeln!(out, "{}", row.join("\t"));
    }
    out
}
