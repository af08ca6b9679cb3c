//! RVL-1 text to typed graph.
//!
//! Lowering is structural first (definitions may reference each other and
//! themselves), then types are resolved by fixpoint propagation so that
//! recursive counters like `def c = merge(last(c, a) + 1, const(1, a))`
//! infer their type from the non-recursive side, and finally every
//! operator is validated strictly.

use super::graph::{BinOp, InputDecl, Node, NodeId, Op, StreamGraph, StreamType};
use super::{RvError, Val};
use std::collections::HashMap;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    Sym(&'static str),
}

fn lex(line: &str, line_no: usize) -> Result<Vec<Tok>, RvError> {
    let mut toks = Vec::new();
    let bytes: Vec<char> = line.chars().collect();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            ' ' | '\t' | '\r' => i += 1,
            '#' => break,
            '(' => {
                toks.push(Tok::Sym("("));
                i += 1;
            }
            ')' => {
                toks.push(Tok::Sym(")"));
                i += 1;
            }
            ',' => {
                toks.push(Tok::Sym(","));
                i += 1;
            }
            ':' => {
                toks.push(Tok::Sym(":"));
                i += 1;
            }
            '+' => {
                toks.push(Tok::Sym("+"));
                i += 1;
            }
            '-' => {
                toks.push(Tok::Sym("-"));
                i += 1;
            }
            '*' => {
                toks.push(Tok::Sym("*"));
                i += 1;
            }
            '>' => {
                toks.push(Tok::Sym(">"));
                i += 1;
            }
            '<' => {
                if bytes.get(i + 1) == Some(&'=') {
                    toks.push(Tok::Sym("<="));
                    i += 2;
                } else {
                    toks.push(Tok::Sym("<"));
                    i += 1;
                }
            }
            '=' => {
                if bytes.get(i + 1) == Some(&'=') {
                    toks.push(Tok::Sym("=="));
                    i += 2;
                } else {
                    toks.push(Tok::Sym("="));
                    i += 1;
                }
            }
            '&' => {
                if bytes.get(i + 1) == Some(&'&') {
                    toks.push(Tok::Sym("&&"));
                    i += 2;
                } else {
                    return Err(syntax(line_no, "stray `&`"));
                }
            }
            '|' => {
                if bytes.get(i + 1) == Some(&'|') {
                    toks.push(Tok::Sym("||"));
                    i += 2;
                } else {
                    return Err(syntax(line_no, "stray `|`"));
                }
            }
            '!' => {
                toks.push(Tok::Sym("!"));
                i += 1;
            }
            '0'..='9' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == '.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == 'e' || bytes[i] == 'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == '+' || bytes[j] == '-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j + 1;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = bytes[start..i].iter().collect();
                if text.contains(['.', 'e', 'E']) {
                    let v = text
                        .parse::<f64>()
                        .map_err(|_| syntax(line_no, &format!("bad float `{text}`")))?;
                    toks.push(Tok::Float(v));
                } else {
                    let v = text
                        .parse::<i64>()
                        .map_err(|_| syntax(line_no, &format!("bad integer `{text}`")))?;
                    toks.push(Tok::Int(v));
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == '_') {
                    i += 1;
                }
                toks.push(Tok::Ident(bytes[start..i].iter().collect()));
            }
            other => return Err(syntax(line_no, &format!("unexpected character `{other}`"))),
        }
    }
    Ok(toks)
}

fn syntax(line: usize, detail: &str) -> RvError {
    RvError::Syntax {
        line,
        detail: detail.to_string(),
    }
}

#[derive(Debug, Clone)]
enum Expr {
    Ident(String),
    Int(i64),
    Float(f64),
    Bool(bool),
    Unit,
    Call(String, Vec<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
}

impl Expr {
    fn describe(&self) -> String {
        match self {
            Expr::Ident(n) => n.clone(),
            Expr::Int(v) => v.to_string(),
            Expr::Float(v) => format!("{v:?}"),
            Expr::Bool(v) => v.to_string(),
            Expr::Unit => "unit".into(),
            Expr::Call(n, args) => format!(
                "{n}({})",
                args.iter().map(Expr::describe).collect::<Vec<_>>().join(", ")
            ),
            Expr::Binary(op, l, r) => {
                format!("{} {} {}", l.describe(), op.symbol(), r.describe())
            }
            Expr::Not(e) => format!("!{}", e.describe()),
        }
    }
}

struct ExprParser<'a> {
    toks: &'a [Tok],
    pos: usize,
    line: usize,
}

impl<'a> ExprParser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(t)) if *t == s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &'static str) -> Result<(), RvError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(syntax(
                self.line,
                &format!("expected `{s}`, found {:?}", self.peek()),
            ))
        }
    }

    fn expr(&mut self) -> Result<Expr, RvError> {
        let mut lhs = self.and_expr()?;
        while self.eat_sym("||") {
            let rhs = self.and_expr()?;
            lhs = Expr::Binary(BinOp::Or, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, RvError> {
        let mut lhs = self.cmp_expr()?;
        while self.eat_sym("&&") {
            let rhs = self.cmp_expr()?;
            lhs = Expr::Binary(BinOp::And, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn cmp_expr(&mut self) -> Result<Expr, RvError> {
        let lhs = self.add_expr()?;
        let op = match self.peek() {
            Some(Tok::Sym("<")) => Some(BinOp::Lt),
            Some(Tok::Sym("<=")) => Some(BinOp::Le),
            Some(Tok::Sym("==")) => Some(BinOp::Eq),
            _ => None,
        };
        if let Some(op) = op {
            self.pos += 1;
            let rhs = self.add_expr()?;
            return Ok(Expr::Binary(op, Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn add_expr(&mut self) -> Result<Expr, RvError> {
        let mut lhs = self.mul_expr()?;
        loop {
            if self.eat_sym("+") {
                let rhs = self.mul_expr()?;
                lhs = Expr::Binary(BinOp::Add, Box::new(lhs), Box::new(rhs));
            } else if matches!(self.peek(), Some(Tok::Sym("-"))) {
                self.pos += 1;
                let rhs = self.mul_expr()?;
                lhs = Expr::Binary(BinOp::Sub, Box::new(lhs), Box::new(rhs));
            } else {
                break;
            }
        }
        Ok(lhs)
    }

    fn mul_expr(&mut self) -> Result<Expr, RvError> {
        let mut lhs = self.unary_expr()?;
        while self.eat_sym("*") {
            let rhs = self.unary_expr()?;
            lhs = Expr::Binary(BinOp::Mul, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary_expr(&mut self) -> Result<Expr, RvError> {
        if self.eat_sym("!") {
            let inner = self.unary_expr()?;
            return Ok(Expr::Not(Box::new(inner)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, RvError> {
        if self.eat_sym("-") {
            return match self.bump() {
                Some(Tok::Int(v)) => Ok(Expr::Int(-v)),
                Some(Tok::Float(v)) => Ok(Expr::Float(-v)),
                other => Err(syntax(
                    self.line,
                    &format!("`-` must prefix a literal, found {other:?}"),
                )),
            };
        }
        match self.bump() {
            Some(Tok::Int(v)) => Ok(Expr::Int(v)),
            Some(Tok::Float(v)) => Ok(Expr::Float(v)),
            Some(Tok::Sym("(")) => {
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => match name.as_str() {
                "true" => Ok(Expr::Bool(true)),
                "false" => Ok(Expr::Bool(false)),
                "unit" => {
                    if self.eat_sym("(") {
                        self.expect_sym(")")?;
                    }
                    Ok(Expr::Unit)
                }
                _ if matches!(self.peek(), Some(Tok::Sym("("))) => {
                    self.pos += 1;
                    let mut args = Vec::new();
                    if !self.eat_sym(")") {
                        loop {
                            args.push(self.expr()?);
                            if self.eat_sym(")") {
                                break;
                            }
                            self.expect_sym(",")?;
                        }
                    }
                    Ok(Expr::Call(name, args))
                }
                _ => Ok(Expr::Ident(name)),
            },
            other => Err(syntax(self.line, &format!("unexpected token {other:?}"))),
        }
    }
}

enum Decl {
    In(String, StreamType),
    Def(String, Expr),
    Out(String),
    Assert(String),
}

pub fn parse_spec(text: &str) -> Result<StreamGraph, RvError> {
    let mut decls: Vec<(usize, Decl)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let toks = lex(raw, line_no)?;
        if toks.is_empty() {
            continue;
        }
        let head = match &toks[0] {
            Tok::Ident(s) => s.clone(),
            other => return Err(syntax(line_no, &format!("unexpected {other:?}"))),
        };
        let decl = match head.as_str() {
            "in" => {
                let name = ident_at(&toks, 1, line_no)?;
                let shape_ok = toks.len() == 7
                    && toks.get(2) == Some(&Tok::Sym(":"))
                    && matches!(toks.get(3), Some(Tok::Ident(ev)) if ev == "events")
                    && toks.get(4) == Some(&Tok::Sym("<"))
                    && toks.get(6) == Some(&Tok::Sym(">"));
                if !shape_ok {
                    return Err(syntax(line_no, "expected `in NAME : events<TYPE>`"));
                }
                let ty = match toks.get(5) {
                    Some(Tok::Ident(ty)) => match ty.as_str() {
                        "int" => StreamType::Int,
                        "float" => StreamType::Float,
                        "bool" => StreamType::Bool,
                        "unit" => StreamType::Unit,
                        other => return Err(syntax(line_no, &format!("unknown type `{other}`"))),
                    },
                    _ => return Err(syntax(line_no, "expected `in NAME : events<TYPE>`")),
                };
                Decl::In(name, ty)
            }
            "def" => {
                let name = ident_at(&toks, 1, line_no)?;
                if toks.get(2) != Some(&Tok::Sym("=")) {
                    return Err(syntax(line_no, "expected `def NAME = EXPR`"));
                }
                let mut p = ExprParser {
                    toks: &toks[3..],
                    pos: 0,
                    line: line_no,
                };
                let expr = p.expr()?;
                if p.pos != p.toks.len() {
                    return Err(syntax(line_no, "trailing tokens after expression"));
                }
                Decl::Def(name, expr)
            }
            "out" => {
                if toks.len() != 2 {
                    return Err(syntax(line_no, "expected `out NAME`"));
                }
                Decl::Out(ident_at(&toks, 1, line_no)?)
            }
            "assert" => {
                if toks.len() != 2 {
                    return Err(syntax(line_no, "expected `assert NAME`"));
                }
                Decl::Assert(ident_at(&toks, 1, line_no)?)
            }
            other => {
                return Err(syntax(
                    line_no,
                    &format!("expected in/def/out/assert, found `{other}`"),
                ))
            }
        };
        decls.push((line_no, decl));
    }

    lower(decls)
}

fn ident_at(toks: &[Tok], pos: usize, line: usize) -> Result<String, RvError> {
    match toks.get(pos) {
        Some(Tok::Ident(s)) => Ok(s.clone()),
        other => Err(syntax(line, &format!("expected a name, found {other:?}"))),
    }
}

struct Lowering {
    graph: StreamGraph,
    names: HashMap<String, NodeId>,
    /// (line, expression text) per node, for diagnostics.
    origins: Vec<(usize, String)>,
}

impl Lowering {
    fn add(&mut self, op: Op, line: usize, text: String) -> NodeId {
        self.graph.nodes.push(Node {
            op,
            ty: StreamType::Unit, // determined by inference
            name: None,
        });
        self.origins.push((line, text));
        self.graph.nodes.len() - 1
    }
}

fn lower(decls: Vec<(usize, Decl)>) -> Result<StreamGraph, RvError> {
    let mut lo = Lowering {
        graph: StreamGraph::default(),
        names: HashMap::new(),
        origins: Vec::new(),
    };

    // Inputs create nodes; defs reserve slots so definitions may
    // reference each other and themselves.
    let mut def_slots: Vec<(String, NodeId)> = Vec::new();
    for (line, decl) in &decls {
        match decl {
            Decl::In(name, ty) => {
                if lo.names.contains_key(name) {
                    return Err(syntax(*line, &format!("`{name}` declared twice")));
                }
                let idx = lo.graph.inputs.len();
                let node = lo.add(Op::Input(idx), *line, name.clone());
                lo.graph.nodes[node].ty = *ty;
                lo.graph.nodes[node].name = Some(name.clone());
                lo.graph.inputs.push(InputDecl {
                    name: name.clone(),
                    ty: *ty,
                    node,
                });
                lo.names.insert(name.clone(), node);
            }
            Decl::Def(name, _) => {
                if lo.names.contains_key(name) {
                    return Err(syntax(*line, &format!("`{name}` declared twice")));
                }
                let node = lo.add(Op::Unit, *line, name.clone());
                lo.graph.nodes[node].name = Some(name.clone());
                lo.names.insert(name.clone(), node);
                def_slots.push((name.clone(), node));
            }
            _ => {}
        }
    }

    let mut slot_iter = def_slots.iter();
    for (line, decl) in &decls {
        if let Decl::Def(name, expr) = decl {
            let (slot_name, slot) = slot_iter.next().expect("slot per def");
            debug_assert_eq!(slot_name, name);
            lower_expr(&mut lo, expr, *line, Some(*slot))?;
        }
    }

    infer_types(&mut lo)?;

    for (line, decl) in &decls {
        match decl {
            Decl::Out(name) => {
                let node = *lo.names.get(name).ok_or(RvError::UnknownIdentifier {
                    name: name.clone(),
                    line: *line,
                })?;
                lo.graph.outputs.push((name.clone(), node));
            }
            Decl::Assert(name) => {
                let node = *lo.names.get(name).ok_or(RvError::UnknownIdentifier {
                    name: name.clone(),
                    line: *line,
                })?;
                if lo.graph.nodes[node].ty != StreamType::Bool {
                    return Err(RvError::Type {
                        line: *line,
                        expr: format!("assert {name}"),
                        expected: "bool".into(),
                        got: lo.graph.nodes[node].ty.to_string(),
                    });
                }
                lo.graph.asserts.push((name.clone(), node));
            }
            _ => {}
        }
    }

    // Structural check: recursion must pass through a `last` first
    // argument.
    lo.graph.topo_order()?;
    Ok(lo.graph)
}

/// Lower an expression; `slot` is the reserved def node receiving the
/// root operator of a definition body.
fn lower_expr(
    lo: &mut Lowering,
    expr: &Expr,
    line: usize,
    slot: Option<NodeId>,
) -> Result<NodeId, RvError> {
    let text = expr.describe();
    let op = match expr {
        Expr::Ident(name) => {
            let id = *lo.names.get(name).ok_or(RvError::UnknownIdentifier {
                name: name.clone(),
                line,
            })?;
            match slot {
                Some(_) => Op::Alias(id),
                None => return Ok(id),
            }
        }
        Expr::Int(v) => Op::Literal(Val::Int(*v)),
        Expr::Float(v) => Op::Literal(Val::Float(*v)),
        Expr::Bool(v) => Op::Literal(Val::Bool(*v)),
        Expr::Unit => Op::Unit,
        Expr::Not(inner) => {
            let a = lower_expr(lo, inner, line, None)?;
            Op::Not(a)
        }
        Expr::Binary(op, l, r) => {
            let a = lower_expr(lo, l, line, None)?;
            let b = lower_expr(lo, r, line, None)?;
            Op::Binary {
                op: *op,
                lhs: a,
                rhs: b,
            }
        }
        Expr::Call(name, args) => {
            let argn = |want: usize| -> Result<(), RvError> {
                if args.len() == want {
                    Ok(())
                } else {
                    Err(syntax(
                        line,
                        &format!("`{name}` takes {want} argument(s), got {}", args.len()),
                    ))
                }
            };
            match name.as_str() {
                "time" => {
                    argn(1)?;
                    Op::Time(lower_expr(lo, &args[0], line, None)?)
                }
                "count" => {
                    argn(1)?;
                    Op::Count(lower_expr(lo, &args[0], line, None)?)
                }
                "merge" => {
                    argn(2)?;
                    let a = lower_expr(lo, &args[0], line, None)?;
                    let b = lower_expr(lo, &args[1], line, None)?;
                    Op::Merge(a, b)
                }
                "last" => {
                    argn(2)?;
                    let v = lower_expr(lo, &args[0], line, None)?;
                    let t = lower_expr(lo, &args[1], line, None)?;
                    Op::Last {
                        values: v,
                        trigger: t,
                    }
                }
                "filter" => {
                    argn(2)?;
                    let s = lower_expr(lo, &args[0], line, None)?;
                    let c = lower_expr(lo, &args[1], line, None)?;
                    Op::Filter { stream: s, cond: c }
                }
                "const" => {
                    argn(2)?;
                    let value = literal_value(&args[0]).ok_or_else(|| {
                        syntax(line, "first argument of `const` must be a literal")
                    })?;
                    let over = lower_expr(lo, &args[1], line, None)?;
                    Op::Const { value, over }
                }
                "within" => {
                    argn(3)?;
                    let dist = match literal_value(&args[0]) {
                        Some(Val::Int(d)) if d >= 0 => d as u64,
                        _ => {
                            return Err(syntax(
                                line,
                                "first argument of `within` must be a non-negative integer literal",
                            ))
                        }
                    };
                    let a = lower_expr(lo, &args[1], line, None)?;
                    let b = lower_expr(lo, &args[2], line, None)?;
                    Op::Within { dist, a, b }
                }
                other => {
                    return Err(RvError::UnknownIdentifier {
                        name: other.to_string(),
                        line,
                    })
                }
            }
        }
    };

    Ok(match slot {
        Some(s) => {
            lo.graph.nodes[s].op = op;
            lo.origins[s] = (line, text);
            s
        }
        None => lo.add(op, line, text),
    })
}

fn literal_value(e: &Expr) -> Option<Val> {
    match e {
        Expr::Int(v) => Some(Val::Int(*v)),
        Expr::Float(v) => Some(Val::Float(*v)),
        Expr::Bool(v) => Some(Val::Bool(*v)),
        _ => None,
    }
}

/// Fixpoint type propagation followed by strict validation.
fn infer_types(lo: &mut Lowering) -> Result<(), RvError> {
    let n = lo.graph.nodes.len();
    let mut tys: Vec<Option<StreamType>> = vec![None; n];

    // Inputs are declared; literals and fixed-result operators anchor.
    for pass in 0..n + 2 {
        let mut changed = false;
        for id in 0..n {
            if tys[id].is_some() {
                continue;
            }
            let t = match &lo.graph.nodes[id].op {
                Op::Input(i) => Some(lo.graph.inputs[*i].ty),
                Op::Unit => Some(StreamType::Unit),
                Op::Literal(v) => Some(v.type_of()),
                Op::Const { value, .. } => Some(value.type_of()),
                Op::Time(_) | Op::Count(_) => Some(StreamType::Int),
                Op::Within { .. } | Op::Not(_) => Some(StreamType::Bool),
                Op::Alias(a) => tys[*a],
                Op::Last { values, .. } => tys[*values],
                Op::Filter { stream, .. } => tys[*stream],
                Op::Merge(a, b) => tys[*a].or(tys[*b]),
                Op::Binary { op, lhs, rhs } => match op {
                    BinOp::Add | BinOp::Sub | BinOp::Mul => tys[*lhs].or(tys[*rhs]),
                    _ => Some(StreamType::Bool),
                },
            };
            if t.is_some() {
                tys[id] = t;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let _ = pass;
    }

    for id in 0..n {
        let (line, text) = lo.origins[id].clone();
        let err = |expected: &str, got: Option<StreamType>| RvError::Type {
            line,
            expr: text.clone(),
            expected: expected.to_string(),
            got: got.map(|t| t.to_string()).unwrap_or_else(|| "unresolved".into()),
        };
        let Some(ty) = tys[id] else {
            return Err(err("a resolvable type", None));
        };
        lo.graph.nodes[id].ty = ty;
        match &lo.graph.nodes[id].op {
            Op::Merge(a, b) => {
                if tys[*a] != tys[*b] {
                    return Err(err(&tys[*a].unwrap().to_string(), tys[*b]));
                }
            }
            Op::Filter { cond, .. } => {
                if tys[*cond] != Some(StreamType::Bool) {
                    return Err(err("bool condition", tys[*cond]));
                }
            }
            Op::Not(a) => {
                if tys[*a] != Some(StreamType::Bool) {
                    return Err(err("bool", tys[*a]));
                }
            }
            Op::Binary { op, lhs, rhs } => {
                let (ta, tb) = (tys[*lhs], tys[*rhs]);
                let numeric_pair = matches!(
                    (ta, tb),
                    (Some(StreamType::Int), Some(StreamType::Int))
                        | (Some(StreamType::Float), Some(StreamType::Float))
                );
                match op {
                    BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Lt | BinOp::Le => {
                        if !numeric_pair {
                            return Err(err("matching numeric operands", tb.or(ta)));
                        }
                    }
                    BinOp::Eq => {
                        if ta != tb || ta == Some(StreamType::Unit) {
                            return Err(err("matching comparable operands", tb));
                        }
                    }
                    BinOp::And | BinOp::Or => {
                        if ta != Some(StreamType::Bool) || tb != Some(StreamType::Bool) {
                            return Err(err("bool operands", tb.or(ta)));
                        }
                    }
                }
            }
            _ => {}
        }
    }
    Ok(())
}
