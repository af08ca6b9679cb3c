//! Static model of a traced program: the mini-ISA, the parsed binary
//! image, per-instruction static successor sets, and the labeled call
//! graph.
//!
//! Images are word-addressed: address `i` is `instructions[i]`. The image
//! is immutable after `load_image` and safe to share across threads.

mod asm;
mod callgraph;

pub use asm::{load_image, AsmError};
pub use callgraph::{derive_call_graph, CallEdge, CallGraph, EdgeLabel};

use std::collections::BTreeSet;

pub const NUM_INT_REGS: u8 = 16;
pub const NUM_FLOAT_REGS: u8 = 8;
pub const NUM_MUTEXES: u8 = 16;

/// A register operand; the ISA has sixteen 64-bit integer registers
/// (`r0..r15`) and eight IEEE double registers (`f0..f7`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reg {
    Int(u8),
    Float(u8),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Imm {
    Int(i64),
    Float(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntOp {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FloatOp {
    /// IEEE double addition.
    Addf,
    /// Multiply, then truncate toward zero at 2^-24 resolution.
    Fixmul,
    /// IEEE double division: x/0 is ±Infinity, 0/0 is NaN, never a trap.
    Divf,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Instruction {
    Set { dst: Reg, imm: Imm },
    IntOp { op: IntOp, dst: u8, a: u8, b: u8 },
    FloatOp { op: FloatOp, dst: u8, a: u8, b: u8 },
    Load { dst: Reg, addr: u8 },
    Store { src: Reg, addr: u8 },
    Br { target: usize },
    Brc { cond: u8, target: usize },
    Call { target: usize },
    Calli { reg: u8 },
    Ret,
    Out { port: u8, src: Reg },
    Emit { channel: u8, src: Reg },
    Lock { mutex: u8 },
    Unlock { mutex: u8 },
    Yield,
    Halt,
}

/// Coarse instruction class used by the successor table and the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Set,
    Add,
    Sub,
    Mul,
    Addf,
    Fixmul,
    Divf,
    Load,
    Store,
    Br,
    Brc,
    Call,
    Calli,
    Ret,
    Out,
    Emit,
    Lock,
    Unlock,
    Yield,
    Halt,
}

impl Instruction {
    pub fn kind(&self) -> Kind {
        match self {
            Instruction::Set { .. } => Kind::Set,
            Instruction::IntOp { op: IntOp::Add, .. } => Kind::Add,
            Instruction::IntOp { op: IntOp::Sub, .. } => Kind::Sub,
            Instruction::IntOp { op: IntOp::Mul, .. } => Kind::Mul,
            Instruction::FloatOp { op: FloatOp::Addf, .. } => Kind::Addf,
            Instruction::FloatOp { op: FloatOp::Fixmul, .. } => Kind::Fixmul,
            Instruction::FloatOp { op: FloatOp::Divf, .. } => Kind::Divf,
            Instruction::Load { .. } => Kind::Load,
            Instruction::Store { .. } => Kind::Store,
            Instruction::Br { .. } => Kind::Br,
            Instruction::Brc { .. } => Kind::Brc,
            Instruction::Call { .. } => Kind::Call,
            Instruction::Calli { .. } => Kind::Calli,
            Instruction::Ret => Kind::Ret,
            Instruction::Out { .. } => Kind::Out,
            Instruction::Emit { .. } => Kind::Emit,
            Instruction::Lock { .. } => Kind::Lock,
            Instruction::Unlock { .. } => Kind::Unlock,
            Instruction::Yield => Kind::Yield,
            Instruction::Halt => Kind::Halt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    /// First instruction address.
    pub entry: usize,
    /// One past the last instruction address.
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreadSpec {
    pub name: String,
    /// Index into `functions`.
    pub entry_fn: usize,
}

/// Validated static program model. Instruction addresses are exactly
/// `0..instructions.len()` in source order.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryImage {
    pub instructions: Vec<Instruction>,
    pub functions: Vec<Function>,
    pub threads: Vec<ThreadSpec>,
    /// FNV-1a 64 hash of the source text, stamped into exported clips.
    pub source_hash: u64,
}

impl BinaryImage {
    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn function_by_name(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    /// The function whose range contains `addr`.
    pub fn enclosing_function(&self, addr: usize) -> Option<&Function> {
        self.functions.iter().find(|f| f.entry <= addr && addr < f.end)
    }

    pub fn is_function_entry(&self, addr: usize) -> bool {
        self.functions.iter().any(|f| f.entry == addr)
    }

    pub fn function_entries(&self) -> impl Iterator<Item = usize> + '_ {
        self.functions.iter().map(|f| f.entry)
    }

    /// Addresses of every `call` site targeting `entry`, plus every
    /// `calli` site (which may target any function).
    pub fn call_sites_of(&self, entry: usize) -> Vec<usize> {
        self.instructions
            .iter()
            .enumerate()
            .filter(|(_, ins)| match ins {
                Instruction::Call { target } => *target == entry,
                Instruction::Calli { .. } => true,
                _ => false,
            })
            .map(|(addr, _)| addr)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("address {0} out of range")]
    AddressOutOfRange(usize),
}

/// Set of addresses that may execute immediately after `addr` within the
/// same thread. This is exactly the inference table the trace decoder
/// relies on: anything listed here with a single element never needs a
/// packet on the wire.
pub fn static_successors(image: &BinaryImage, addr: usize) -> Result<BTreeSet<usize>, ModelError> {
    let ins = image
        .instructions
        .get(addr)
        .ok_or(ModelError::AddressOutOfRange(addr))?;
    let n = image.len();
    let mut set = BTreeSet::new();
    match ins {
        Instruction::Br { target } | Instruction::Call { target } => {
            set.insert(*target);
        }
        Instruction::Brc { target, .. } => {
            if addr + 1 < n {
                set.insert(addr + 1);
            }
            set.insert(*target);
        }
        Instruction::Calli { .. } => {
            set.extend(image.function_entries());
        }
        Instruction::Ret => {
            let entry = image
                .enclosing_function(addr)
                .expect("validated image: every address is inside a function")
                .entry;
            for site in image.call_sites_of(entry) {
                if site + 1 < n {
                    set.insert(site + 1);
                }
            }
        }
        Instruction::Halt => {}
        _ => {
            if addr + 1 < n {
                set.insert(addr + 1);
            }
        }
    }
    Ok(set)
}

/// FNV-1a 64-bit hash, used for image/spec fingerprints in clip files.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(src: &str) -> BinaryImage {
        load_image(src).expect("test image parses")
    }

    #[test]
    fn successors_of_plain_instruction() {
        let img = image("func m:\n  set r1, 7\n  halt\nthread t0 entry m\n");
        assert_eq!(
            static_successors(&img, 0).unwrap(),
            BTreeSet::from([1usize])
        );
    }

    #[test]
    fn successors_of_conditional_branch() {
        // brc at 3 with target at 9 -> {4, 9}
        let src = "\
func m:
  set r0, 0
  set r1, 1
  set r2, 2
  brc r1, l
  set r3, 3
  set r4, 4
  set r5, 5
  set r6, 6
  set r7, 7
l:
  halt
thread t0 entry m
";
        let img = image(src);
        assert_eq!(img.instructions[3].kind(), Kind::Brc);
        assert_eq!(
            static_successors(&img, 3).unwrap(),
            BTreeSet::from([4usize, 9usize])
        );
    }

    #[test]
    fn successors_of_ret_enumerate_call_sites() {
        // f called from addresses 2 and 11 -> ret successors {3, 12}.
        let src = "\
func m:
  set r0, 0
  set r1, 1
  call f
  set r2, 2
  set r3, 3
  set r4, 4
  set r5, 5
  set r6, 6
  set r7, 7
  set r8, 8
  set r9, 9
  call f
  halt
func f:
  ret
thread t0 entry m
";
        let img = image(src);
        let ret_addr = img.function_by_name("f").unwrap().entry;
        assert_eq!(img.instructions[ret_addr], Instruction::Ret);
        assert_eq!(
            static_successors(&img, ret_addr).unwrap(),
            BTreeSet::from([3usize, 12usize])
        );
    }

    #[test]
    fn successors_of_halt_is_empty() {
        let img = image("func m: halt\nthread t0 entry m\n");
        assert!(static_successors(&img, 0).unwrap().is_empty());
    }

    #[test]
    fn successors_out_of_range() {
        let img = image("func m: halt\nthread t0 entry m\n");
        assert_eq!(
            static_successors(&img, 5),
            Err(ModelError::AddressOutOfRange(5))
        );
    }

    #[test]
    fn calli_successors_are_all_entries() {
        let src = "\
func m:
  set r1, @f
  calli r1
  halt
func f:
  ret
thread t0 entry m
";
        let img = image(src);
        let entries: BTreeSet<usize> = img.function_entries().collect();
        assert_eq!(static_successors(&img, 1).unwrap(), entries);
    }
}
