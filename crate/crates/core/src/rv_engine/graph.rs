//! Typed dataflow graph and its structural checks.

use super::{RvError, Val};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamType {
    Int,
    Float,
    Bool,
    Unit,
}

impl fmt::Display for StreamType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StreamType::Int => "int",
            StreamType::Float => "float",
            StreamType::Bool => "bool",
            StreamType::Unit => "unit",
        };
        f.write_str(s)
    }
}

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Lt,
    Le,
    Eq,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(&self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Eq => "==",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    /// Declared input stream (index into `StreamGraph::inputs`).
    Input(usize),
    /// The single unit event at (0,0).
    Unit,
    /// A literal: one event at (0,0).
    Literal(Val),
    /// Pass-through of another stream (`def x = y`).
    Alias(NodeId),
    Const { value: Val, over: NodeId },
    Time(NodeId),
    Merge(NodeId, NodeId),
    /// Value of `values` strictly before each `trigger` event. The
    /// `values` edge is the only legal recursion back-edge.
    Last { values: NodeId, trigger: NodeId },
    Filter { stream: NodeId, cond: NodeId },
    Count(NodeId),
    Within { dist: u64, a: NodeId, b: NodeId },
    Binary { op: BinOp, lhs: NodeId, rhs: NodeId },
    Not(NodeId),
}

impl Op {
    /// Argument edges, with the flag marking `last`'s recursion edge.
    pub fn args(&self) -> Vec<(NodeId, bool)> {
        match self {
            Op::Input(_) | Op::Unit | Op::Literal(_) => vec![],
            Op::Alias(a) | Op::Time(a) | Op::Count(a) | Op::Not(a) => vec![(*a, false)],
            Op::Const { over, .. } => vec![(*over, false)],
            Op::Merge(a, b) => vec![(*a, false), (*b, false)],
            Op::Last { values, trigger } => vec![(*values, true), (*trigger, false)],
            Op::Filter { stream, cond } => vec![(*stream, false), (*cond, false)],
            Op::Within { a, b, .. } => vec![(*a, false), (*b, false)],
            Op::Binary { lhs, rhs, .. } => vec![(*lhs, false), (*rhs, false)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub op: Op,
    pub ty: StreamType,
    /// The `def`/`in` name this node was introduced under, for messages.
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputDecl {
    pub name: String,
    pub ty: StreamType,
    pub node: NodeId,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StreamGraph {
    pub nodes: Vec<Node>,
    pub inputs: Vec<InputDecl>,
    /// `out` declarations in order: (name, node).
    pub outputs: Vec<(String, NodeId)>,
    /// `assert` declarations in order: (name, node); always bool-typed.
    pub asserts: Vec<(String, NodeId)>,
}

impl StreamGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn input_by_name(&self, name: &str) -> Option<&InputDecl> {
        self.inputs.iter().find(|i| i.name == name)
    }

    /// Evaluation order: topological over all edges except `last`
    /// recursion edges, smallest node id first among ready nodes. Fails
    /// with the participating names when a cycle is not broken at a
    /// `last` first argument.
    pub fn topo_order(&self) -> Result<Vec<NodeId>, RvError> {
        let n = self.nodes.len();
        let mut indeg = vec![0usize; n];
        let mut succ: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        for (id, node) in self.nodes.iter().enumerate() {
            for (arg, is_last_edge) in node.op.args() {
                if !is_last_edge {
                    succ[arg].push(id);
                    indeg[id] += 1;
                }
            }
        }
        let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<NodeId>> = (0..n)
            .filter(|&i| indeg[i] == 0)
            .map(std::cmp::Reverse)
            .collect();
        let mut order = Vec::with_capacity(n);
        while let Some(std::cmp::Reverse(id)) = ready.pop() {
            order.push(id);
            for &s in &succ[id] {
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    ready.push(std::cmp::Reverse(s));
                }
            }
        }
        if order.len() == n {
            return Ok(order);
        }
        let names: Vec<String> = (0..n)
            .filter(|&i| indeg[i] > 0)
            .filter_map(|i| self.nodes[i].name.clone())
            .collect();
        Err(RvError::IllegalCycle { names })
    }
}
