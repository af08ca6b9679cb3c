//! Line-oriented assembler for the mini-ISA.
//!
//! Grammar (one item per line, `;` starts a comment):
//!
//! ```text
//! func NAME:
//! LABEL:
//! set rX|fX, IMM            ; IMM: integer, float (fX only), or @FUNC
//! add|sub|mul rX, rY, rZ
//! addf|fixmul|divf fX, fY, fZ
//! load rX|fX, [rY]
//! store rX|fX, [rY]
//! br LABEL
//! brc rX, LABEL             ; branch when rX != 0
//! call NAME
//! calli rX
//! ret
//! out PORT, rX|fX
//! emit CHAN, rX|fX
//! lock M
//! unlock M
//! yield
//! halt
//! thread NAME entry FUNC
//! ```
//!
//! Labels are scoped to their function; function names are global. Float
//! registers move to and from memory by bit pattern, so a cell written by
//! `store fX` reads back exactly with `load fX`.

use super::{
    fnv1a64, BinaryImage, FloatOp, Function, Imm, Instruction, IntOp, Reg, ThreadSpec,
    NUM_FLOAT_REGS, NUM_INT_REGS, NUM_MUTEXES,
};
use std::collections::HashMap;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AsmError {
    #[error("line {line}: unknown mnemonic `{mnemonic}`")]
    UnknownMnemonic { line: usize, mnemonic: String },
    #[error("line {line}: undefined label `{name}`")]
    UndefinedLabel { name: String, line: usize },
    #[error("duplicate label `{name}`")]
    DuplicateLabel { name: String },
    #[error("duplicate thread `{name}`")]
    DuplicateThread { name: String },
    #[error("program declares no threads")]
    NoThreads,
    #[error("line {line}: operand out of range: {detail}")]
    OutOfRangeOperand { line: usize, detail: String },
    #[error("line {line}: {detail}")]
    Syntax { line: usize, detail: String },
}

/// Unresolved label reference produced by the first pass.
struct ProtoTarget(String);

enum ProtoIns {
    Ready(Instruction),
    Br { target: ProtoTarget },
    Brc { cond: u8, target: ProtoTarget },
    Call { name: String },
    SetFuncAddr { dst: Reg, name: String },
}

struct ProtoFunction {
    name: String,
    entry: usize,
    end: usize,
    labels: HashMap<String, usize>,
}

pub fn load_image(source: &str) -> Result<BinaryImage, AsmError> {
    let mut instructions: Vec<(usize, ProtoIns)> = Vec::new();
    let mut functions: Vec<ProtoFunction> = Vec::new();
    let mut threads: Vec<(String, String, usize)> = Vec::new();

    for (idx, raw) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find(';') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }

        let mut body = line;
        if let Some(rest) = body.strip_prefix("func ") {
            let colon = rest
                .find(':')
                .ok_or_else(|| syntax(line_no, "expected `func NAME:`"))?;
            let name = rest[..colon].trim().to_string();
            check_name(&name, line_no)?;
            if functions.iter().any(|f: &ProtoFunction| f.name == name) {
                return Err(AsmError::DuplicateLabel { name });
            }
            if let Some(prev) = functions.last_mut() {
                prev.end = instructions.len();
                if prev.entry == prev.end {
                    return Err(syntax(line_no, &format!("function `{}` is empty", prev.name)));
                }
            }
            functions.push(ProtoFunction {
                name,
                entry: instructions.len(),
                end: instructions.len(),
                labels: HashMap::new(),
            });
            body = rest[colon + 1..].trim();
            if body.is_empty() {
                continue;
            }
        }

        if let Some(rest) = line.strip_prefix("thread ") {
            let mut parts = rest.split_whitespace();
            let name = parts
                .next()
                .ok_or_else(|| syntax(line_no, "expected `thread NAME entry FUNC`"))?
                .to_string();
            let kw = parts.next();
            let func = parts.next();
            if kw != Some("entry") || func.is_none() || parts.next().is_some() {
                return Err(syntax(line_no, "expected `thread NAME entry FUNC`"));
            }
            if threads.iter().any(|(n, _, _)| *n == name) {
                return Err(AsmError::DuplicateThread { name });
            }
            threads.push((name, func.unwrap().to_string(), line_no));
            continue;
        }

        // `LABEL:` possibly followed by an instruction on the same line
        // (used by the compact one-line programs in tests).
        while let Some(colon) = find_label_colon(body) {
            let label = body[..colon].trim().to_string();
            check_name(&label, line_no)?;
            let func = functions
                .last_mut()
                .ok_or_else(|| syntax(line_no, "label outside of any function"))?;
            if func.labels.contains_key(&label) {
                return Err(AsmError::DuplicateLabel { name: label });
            }
            func.labels.insert(label, instructions.len());
            body = body[colon + 1..].trim();
            if body.is_empty() {
                break;
            }
        }
        if body.is_empty() {
            continue;
        }

        if functions.is_empty() {
            return Err(syntax(line_no, "instruction outside of any function"));
        }
        let ins = parse_instruction(body, line_no)?;
        instructions.push((line_no, ins));
    }

    if let Some(prev) = functions.last_mut() {
        prev.end = instructions.len();
        if prev.entry == prev.end {
            return Err(syntax(
                source.lines().count(),
                &format!("function `{}` is empty", prev.name),
            ));
        }
    }
    if threads.is_empty() {
        return Err(AsmError::NoThreads);
    }

    // Resolve names to addresses.
    let func_entries: HashMap<&str, usize> = functions
        .iter()
        .map(|f| (f.name.as_str(), f.entry))
        .collect();
    let enclosing = |addr: usize| -> &ProtoFunction {
        functions
            .iter()
            .find(|f| f.entry <= addr && addr < f.end)
            .expect("every instruction belongs to a function")
    };

    let mut resolved = Vec::with_capacity(instructions.len());
    for (addr, (line_no, proto)) in instructions.iter().enumerate() {
        let ins = match proto {
            ProtoIns::Ready(i) => i.clone(),
            ProtoIns::Br { target } => Instruction::Br {
                target: resolve_label(target, enclosing(addr), *line_no)?,
            },
            ProtoIns::Brc { cond, target } => Instruction::Brc {
                cond: *cond,
                target: resolve_label(target, enclosing(addr), *line_no)?,
            },
            ProtoIns::Call { name } => Instruction::Call {
                target: *func_entries.get(name.as_str()).ok_or_else(|| {
                    AsmError::UndefinedLabel {
                        name: name.clone(),
                        line: *line_no,
                    }
                })?,
            },
            ProtoIns::SetFuncAddr { dst, name } => Instruction::Set {
                dst: *dst,
                imm: Imm::Int(*func_entries.get(name.as_str()).ok_or_else(|| {
                    AsmError::UndefinedLabel {
                        name: name.clone(),
                        line: *line_no,
                    }
                })? as i64),
            },
        };
        resolved.push(ins);
    }

    let mut thread_specs = Vec::new();
    for (name, func, line_no) in threads {
        let entry_fn = functions
            .iter()
            .position(|f| f.name == func)
            .ok_or(AsmError::UndefinedLabel {
                name: func,
                line: line_no,
            })?;
        thread_specs.push(ThreadSpec { name, entry_fn });
    }

    Ok(BinaryImage {
        instructions: resolved,
        functions: functions
            .into_iter()
            .map(|f| Function {
                name: f.name,
                entry: f.entry,
                end: f.end,
            })
            .collect(),
        threads: thread_specs,
        source_hash: fnv1a64(source.as_bytes()),
    })
}

fn syntax(line: usize, detail: &str) -> AsmError {
    AsmError::Syntax {
        line,
        detail: detail.to_string(),
    }
}

fn check_name(name: &str, line: usize) -> Result<(), AsmError> {
    let ok = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !name.chars().next().unwrap().is_ascii_digit();
    if ok {
        Ok(())
    } else {
        Err(syntax(line, &format!("invalid name `{name}`")))
    }
}

/// Position of a label-introducing colon: the first colon that terminates
/// a leading identifier. Returns None for instruction lines.
fn find_label_colon(line: &str) -> Option<usize> {
    let colon = line.find(':')?;
    let head = line[..colon].trim();
    let is_ident = !head.is_empty()
        && head
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_');
    if is_ident && !head.chars().next().unwrap().is_ascii_digit() {
        Some(colon)
    } else {
        None
    }
}

fn resolve_label(
    target: &ProtoTarget,
    func: &ProtoFunction,
    line: usize,
) -> Result<usize, AsmError> {
    func.labels
        .get(&target.0)
        .copied()
        .ok_or(AsmError::UndefinedLabel {
            name: target.0.clone(),
            line,
        })
}

fn parse_instruction(body: &str, line: usize) -> Result<ProtoIns, AsmError> {
    let (mnemonic, rest) = match body.find(char::is_whitespace) {
        Some(pos) => (&body[..pos], body[pos..].trim()),
        None => (body, ""),
    };
    let ops: Vec<&str> = if rest.is_empty() {
        Vec::new()
    } else {
        rest.split(',').map(str::trim).collect()
    };

    let expect = |n: usize| -> Result<(), AsmError> {
        if ops.len() == n {
            Ok(())
        } else {
            Err(syntax(
                line,
                &format!("`{mnemonic}` expects {n} operand(s), got {}", ops.len()),
            ))
        }
    };

    match mnemonic {
        "set" => {
            expect(2)?;
            let dst = parse_reg(ops[0], line)?;
            if let Some(func) = ops[1].strip_prefix('@') {
                if matches!(dst, Reg::Float(_)) {
                    return Err(syntax(line, "function address requires an integer register"));
                }
                return Ok(ProtoIns::SetFuncAddr {
                    dst,
                    name: func.to_string(),
                });
            }
            let imm = match dst {
                Reg::Int(_) => Imm::Int(parse_int(ops[1], line)?),
                Reg::Float(_) => Imm::Float(parse_float(ops[1], line)?),
            };
            Ok(ProtoIns::Ready(Instruction::Set { dst, imm }))
        }
        "add" | "sub" | "mul" => {
            expect(3)?;
            let op = match mnemonic {
                "add" => IntOp::Add,
                "sub" => IntOp::Sub,
                _ => IntOp::Mul,
            };
            Ok(ProtoIns::Ready(Instruction::IntOp {
                op,
                dst: parse_int_reg(ops[0], line)?,
                a: parse_int_reg(ops[1], line)?,
                b: parse_int_reg(ops[2], line)?,
            }))
        }
        "addf" | "fixmul" | "divf" => {
            expect(3)?;
            let op = match mnemonic {
                "addf" => FloatOp::Addf,
                "fixmul" => FloatOp::Fixmul,
                _ => FloatOp::Divf,
            };
            Ok(ProtoIns::Ready(Instruction::FloatOp {
                op,
                dst: parse_float_reg(ops[0], line)?,
                a: parse_float_reg(ops[1], line)?,
                b: parse_float_reg(ops[2], line)?,
            }))
        }
        "load" => {
            expect(2)?;
            Ok(ProtoIns::Ready(Instruction::Load {
                dst: parse_reg(ops[0], line)?,
                addr: parse_mem(ops[1], line)?,
            }))
        }
        "store" => {
            expect(2)?;
            Ok(ProtoIns::Ready(Instruction::Store {
                src: parse_reg(ops[0], line)?,
                addr: parse_mem(ops[1], line)?,
            }))
        }
        "br" => {
            expect(1)?;
            Ok(ProtoIns::Br {
                target: ProtoTarget(ops[0].to_string()),
            })
        }
        "brc" => {
            expect(2)?;
            Ok(ProtoIns::Brc {
                cond: parse_int_reg(ops[0], line)?,
                target: ProtoTarget(ops[1].to_string()),
            })
        }
        "call" => {
            expect(1)?;
            Ok(ProtoIns::Call {
                name: ops[0].to_string(),
            })
        }
        "calli" => {
            expect(1)?;
            Ok(ProtoIns::Ready(Instruction::Calli {
                reg: parse_int_reg(ops[0], line)?,
            }))
        }
        "ret" => {
            expect(0)?;
            Ok(ProtoIns::Ready(Instruction::Ret))
        }
        "out" => {
            expect(2)?;
            Ok(ProtoIns::Ready(Instruction::Out {
                port: parse_u8(ops[0], 255, "port", line)?,
                src: parse_reg(ops[1], line)?,
            }))
        }
        "emit" => {
            expect(2)?;
            Ok(ProtoIns::Ready(Instruction::Emit {
                channel: parse_u8(ops[0], 255, "channel", line)?,
                src: parse_reg(ops[1], line)?,
            }))
        }
        "lock" => {
            expect(1)?;
            Ok(ProtoIns::Ready(Instruction::Lock {
                mutex: parse_u8(ops[0], NUM_MUTEXES - 1, "mutex", line)?,
            }))
        }
        "unlock" => {
            expect(1)?;
            Ok(ProtoIns::Ready(Instruction::Unlock {
                mutex: parse_u8(ops[0], NUM_MUTEXES - 1, "mutex", line)?,
            }))
        }
        "yield" => {
            expect(0)?;
            Ok(ProtoIns::Ready(Instruction::Yield))
        }
        "halt" => {
            expect(0)?;
            Ok(ProtoIns::Ready(Instruction::Halt))
        }
        other => Err(AsmError::UnknownMnemonic {
            line,
            mnemonic: other.to_string(),
        }),
    }
}

fn parse_reg(tok: &str, line: usize) -> Result<Reg, AsmError> {
    if let Some(n) = tok.strip_prefix('r') {
        if let Ok(i) = n.parse::<u8>() {
            if i < NUM_INT_REGS {
                return Ok(Reg::Int(i));
            }
            return Err(AsmError::OutOfRangeOperand {
                line,
                detail: format!("register {tok} (valid: r0..r{})", NUM_INT_REGS - 1),
            });
        }
    }
    if let Some(n) = tok.strip_prefix('f') {
        if let Ok(i) = n.parse::<u8>() {
            if i < NUM_FLOAT_REGS {
                return Ok(Reg::Float(i));
            }
            return Err(AsmError::OutOfRangeOperand {
                line,
                detail: format!("register {tok} (valid: f0..f{})", NUM_FLOAT_REGS - 1),
            });
        }
    }
    Err(syntax(line, &format!("expected a register, got `{tok}`")))
}

fn parse_int_reg(tok: &str, line: usize) -> Result<u8, AsmError> {
    match parse_reg(tok, line)? {
        Reg::Int(i) => Ok(i),
        Reg::Float(_) => Err(syntax(
            line,
            &format!("expected an integer register, got `{tok}`"),
        )),
    }
}

fn parse_float_reg(tok: &str, line: usize) -> Result<u8, AsmError> {
    match parse_reg(tok, line)? {
        Reg::Float(i) => Ok(i),
        Reg::Int(_) => Err(syntax(
            line,
            &format!("expected a float register, got `{tok}`"),
        )),
    }
}

fn parse_mem(tok: &str, line: usize) -> Result<u8, AsmError> {
    let inner = tok
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or_else(|| syntax(line, &format!("expected `[rY]`, got `{tok}`")))?;
    parse_int_reg(inner.trim(), line)
}

fn parse_int(tok: &str, line: usize) -> Result<i64, AsmError> {
    let parsed = if let Some(hex) = tok.strip_prefix("0x") {
        i64::from_str_radix(hex, 16)
    } else if let Some(hex) = tok.strip_prefix("-0x") {
        i64::from_str_radix(hex, 16).map(|v| -v)
    } else {
        tok.parse::<i64>()
    };
    parsed.map_err(|_| syntax(line, &format!("invalid integer `{tok}`")))
}

fn parse_float(tok: &str, line: usize) -> Result<f64, AsmError> {
    tok.parse::<f64>()
        .map_err(|_| syntax(line, &format!("invalid float `{tok}`")))
}

fn parse_u8(tok: &str, max: u8, what: &str, line: usize) -> Result<u8, AsmError> {
    let v: i64 = parse_int(tok, line)?;
    if (0..=max as i64).contains(&v) {
        Ok(v as u8)
    } else {
        Err(AsmError::OutOfRangeOperand {
            line,
            detail: format!("{what} {v} (valid: 0..{max})"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_program() {
        let img = load_image("func m: halt\nthread t0 entry m\n").unwrap();
        assert_eq!(img.instructions.len(), 1);
        assert_eq!(img.instructions[0], Instruction::Halt);
        assert_eq!(img.functions.len(), 1);
        assert_eq!(img.threads.len(), 1);
    }

    #[test]
    fn undefined_label_is_reported() {
        let err = load_image("func m:\n  br loop\n  halt\nthread t0 entry m\n").unwrap_err();
        assert_eq!(
            err,
            AsmError::UndefinedLabel {
                name: "loop".into(),
                line: 2
            }
        );
    }

    #[test]
    fn labels_are_function_scoped() {
        let src = "\
func a:
top:
  br top
func b:
  br top
thread t0 entry a
";
        let err = load_image(src).unwrap_err();
        assert!(matches!(err, AsmError::UndefinedLabel { name, .. } if name == "top"));
    }

    #[test]
    fn duplicate_label_rejected() {
        let src = "func m:\nx:\n  halt\nx:\n  halt\nthread t0 entry m\n";
        assert_eq!(
            load_image(src).unwrap_err(),
            AsmError::DuplicateLabel { name: "x".into() }
        );
    }

    #[test]
    fn no_threads_rejected() {
        assert_eq!(load_image("func m: halt\n").unwrap_err(), AsmError::NoThreads);
    }

    #[test]
    fn unknown_mnemonic_rejected() {
        let err = load_image("func m:\n  frob r1\nthread t0 entry m\n").unwrap_err();
        assert_eq!(
            err,
            AsmError::UnknownMnemonic {
                line: 2,
                mnemonic: "frob".into()
            }
        );
    }

    #[test]
    fn out_of_range_operands_rejected() {
        let err = load_image("func m:\n  lock 16\n  halt\nthread t0 entry m\n").unwrap_err();
        assert!(matches!(err, AsmError::OutOfRangeOperand { line: 2, .. }));
        let err = load_image("func m:\n  set r16, 1\nthread t0 entry m\n").unwrap_err();
        assert!(matches!(err, AsmError::OutOfRangeOperand { line: 2, .. }));
    }

    #[test]
    fn float_immediates_and_registers() {
        let img = load_image("func m:\n  set f0, 0.1\n  addf f1, f0, f0\n  halt\nthread t0 entry m\n")
            .unwrap();
        assert_eq!(
            img.instructions[0],
            Instruction::Set {
                dst: Reg::Float(0),
                imm: Imm::Float(0.1)
            }
        );
    }

    #[test]
    fn function_address_immediate() {
        let src = "func m:\n  set r1, @f\n  calli r1\n  halt\nfunc f:\n  ret\nthread t0 entry m\n";
        let img = load_image(src).unwrap();
        let f_entry = img.function_by_name("f").unwrap().entry as i64;
        assert_eq!(
            img.instructions[0],
            Instruction::Set {
                dst: Reg::Int(1),
                imm: Imm::Int(f_entry)
            }
        );
    }

    #[test]
    fn parsing_is_deterministic() {
        let src = "\
func m:
  set r1, 3
loop:
  sub r1, r1, r2
  brc r1, loop
  out 1, r1
  halt
thread t0 entry m
";
        let a = load_image(src).unwrap();
        let b = load_image(src).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.source_hash, b.source_hash);
    }

    #[test]
    fn addresses_are_dense_file_order() {
        let src = "func a:\n  set r0, 1\n  halt\nfunc b:\n  yield\n  halt\nthread t entry a\n";
        let img = load_image(src).unwrap();
        assert_eq!(img.len(), 4);
        assert_eq!(img.function_by_name("a").unwrap().entry, 0);
        assert_eq!(img.function_by_name("b").unwrap().entry, 2);
        assert_eq!(img.function_by_name("b").unwrap().end, 4);
    }
}
