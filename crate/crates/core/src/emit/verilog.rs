//! Verilog netlist emission and a reader for the emitted subset.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::circuit::{
    active_set, topo_order, validate, CircuitError, CircuitGraph, FunctionNode, FunctionSet, GateFunction, NodeRef,
};

#[derive(Debug, Error, PartialEq)]
pub enum VerilogError {
    #[error("invalid module name {0:?}")]
    ModuleName(String),
    #[error("line {line}, column {col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerilogOptions {
    pub module_name: String,
    /// Adds comments naming the feature bit behind each input and the class behind each output code.
    pub include_port_comments: bool,
    pub input_labels: Vec<String>,
    /// `(code, class)` pairs, code written MSB-first.
    pub class_codes: Vec<(String, String)>,
    /// Free-form comment lines placed above the module.
    pub header_lines: Vec<String>,
}

impl VerilogOptions {
    pub fn named(name: impl Into<String>) -> Self {
        VerilogOptions { module_name: name.into(), ..Default::default() }
    }
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c == '_' || c.is_ascii_alphabetic())
        && chars.all(|c| c == '_' || c.is_ascii_alphanumeric())
}

fn render_ref(r: NodeRef) -> String {
    match r {
        NodeRef::Input(i) => format!("x[{i}]"),
        NodeRef::Node(j) => format!("n{j}"),
    }
}

/// Operator expression for a two-input gate. The four standard gates have
/// fixed shapes; anything else becomes a sum of products over its minterms.
pub fn gate_expression(table: [bool; 4], a: &str, b: &str) -> String {
    match table {
        [false, false, false, true] => format!("{a} & {b}"),
        [false, true, true, true] => format!("{a} | {b}"),
        [true, true, true, false] => format!("~({a} & {b})"),
        [true, false, false, false] => format!("~({a} | {b})"),
        [false, false, false, false] => "1'b0".into(),
        [true, true, true, true] => "1'b1".into(),
        _ => {
            let lit = |v: bool, s: &str| if v { s.to_string() } else { format!("~{s}") };
            (0..4)
                .filter(|&k| table[k])
                .map(|k| format!("({} & {})", lit(k & 2 != 0, a), lit(k & 1 != 0, b)))
                .collect::<Vec<_>>()
                .join(" | ")
        }
    }
}

/// Writes the active part of `g` as a flat module of `assign` statements.
/// `y[k]` carries bit `k` of the class code, most significant bit first.
pub fn emit_verilog(g: &CircuitGraph, fs: &FunctionSet, opts: &VerilogOptions) -> Result<String, VerilogError> {
    if !is_identifier(&opts.module_name) {
        return Err(VerilogError::ModuleName(opts.module_name.clone()));
    }
    let mut out = String::new();
    for line in &opts.header_lines {
        writeln!(out, "// {line}").unwrap();
    }
    writeln!(out, "// y[0] is the most significant bit of the class code.").unwrap();
    if opts.include_port_comments {
        for (i, label) in opts.input_labels.iter().enumerate().take(g.inputs) {
            writeln!(out, "// x[{i}]: {label}").unwrap();
        }
        for (code, class) in &opts.class_codes {
            writeln!(out, "// y = {code}: {class}").unwrap();
        }
    }
    writeln!(
        out,
        "module {}(input wire [{}:0] x, output wire [{}:0] y);",
        opts.module_name,
        g.inputs - 1,
        g.n_outputs() - 1
    )
    .unwrap();
    let active = active_set(g);
    for j in topo_order(g) {
        if !active.contains(j) {
            continue;
        }
        let node = &g.nodes[j];
        let [a, b] = node.args.map(render_ref);
        writeln!(out, "  wire n{j};").unwrap();
        writeln!(out, "  assign n{j} = {};", gate_expression(fs.gate(node.gate).table, &a, &b)).unwrap();
    }
    for (k, &r) in g.outputs.iter().enumerate() {
        writeln!(out, "  assign y[{k}] = {};", render_ref(r)).unwrap();
    }
    out.push_str("endmodule\n");
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(usize),
    Const(bool),
    Sym(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn syntax(line: usize, col: usize, message: impl Into<String>) -> VerilogError {
    VerilogError::Syntax { line, col, message: message.into() }
}

fn tokenize(text: &str) -> Result<Vec<Token>, VerilogError> {
    let mut toks = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let code = raw.find("//").map_or(raw, |p| &raw[..p]);
        let chars: Vec<char> = code.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let col = i + 1;
            if c.is_whitespace() {
                i += 1;
            } else if c == '_' || c.is_ascii_alphabetic() {
                let start = i;
                while i < chars.len() && (chars[i] == '_' || chars[i].is_ascii_alphanumeric()) {
                    i += 1;
                }
                toks.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), line, col });
            } else if c.is_ascii_digit() {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let digits: String = chars[start..i].iter().collect();
                if chars.get(i) == Some(&'\'') {
                    let lit: String = chars[start..chars.len().min(i + 3)].iter().collect();
                    match lit.as_str() {
                        "1'b0" => toks.push(Token { tok: Tok::Const(false), line, col }),
                        "1'b1" => toks.push(Token { tok: Tok::Const(true), line, col }),
                        _ => return Err(syntax(line, col, format!("unsupported literal {lit:?}"))),
                    }
                    i += 3;
                } else {
                    let n = digits.parse().map_err(|_| syntax(line, col, format!("integer {digits} out of range")))?;
                    toks.push(Token { tok: Tok::Int(n), line, col });
                }
            } else {
                // the parser rejects symbols outside the subset with a position
                toks.push(Token { tok: Tok::Sym(c), line, col });
                i += 1;
            }
        }
    }
    Ok(toks)
}

#[derive(Debug, Clone, PartialEq)]
enum Expr {
    Input(usize),
    Wire(usize),
    Const(bool),
    Not(Box<Expr>),
    Bin(char, Box<Expr>, Box<Expr>),
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    end: (usize, usize),
    inputs: usize,
    wires: HashMap<String, usize>,
    wire_names: Vec<String>,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn here(&self) -> (usize, usize) {
        self.peek().map_or(self.end, |t| (t.line, t.col))
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, VerilogError> {
        let (line, col) = self.here();
        Err(syntax(line, col, message))
    }

    fn describe(&self) -> String {
        match self.peek().map(|t| &t.tok) {
            None => "end of input".into(),
            Some(Tok::Ident(s)) => format!("`{s}`"),
            Some(Tok::Int(n)) => format!("`{n}`"),
            Some(Tok::Const(b)) => format!("`1'b{}`", u8::from(*b)),
            Some(Tok::Sym(c)) => format!("`{c}`"),
        }
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.tok.clone());
        self.pos += 1;
        t
    }

    fn sym(&mut self, c: char) -> Result<(), VerilogError> {
        if self.peek().map(|t| &t.tok) == Some(&Tok::Sym(c)) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected `{c}`, found {}", self.describe()))
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), VerilogError> {
        match self.peek().map(|t| &t.tok) {
            Some(Tok::Ident(s)) if s == kw => {
                self.pos += 1;
                Ok(())
            }
            _ => self.err(format!("expected `{kw}`, found {}", self.describe())),
        }
    }

    fn ident(&mut self) -> Result<String, VerilogError> {
        match self.peek().map(|t| &t.tok) {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.err(format!("expected identifier, found {}", self.describe())),
        }
    }

    fn int(&mut self) -> Result<usize, VerilogError> {
        match self.peek().map(|t| &t.tok) {
            Some(Tok::Int(n)) => {
                let n = *n;
                self.pos += 1;
                Ok(n)
            }
            _ => self.err(format!("expected integer, found {}", self.describe())),
        }
    }

    fn is_sym(&self, c: char) -> bool {
        self.peek().map(|t| &t.tok) == Some(&Tok::Sym(c))
    }

    // `[hi:0]` → width hi+1
    fn range(&mut self) -> Result<usize, VerilogError> {
        self.sym('[')?;
        let hi = self.int()?;
        self.sym(':')?;
        if self.int()? != 0 {
            self.pos -= 1;
            return self.err("port ranges must end at 0");
        }
        self.sym(']')?;
        Ok(hi + 1)
    }

    fn index(&mut self, width: usize, port: &str) -> Result<usize, VerilogError> {
        self.sym('[')?;
        let i = self.int()?;
        if i >= width {
            self.pos -= 1;
            return self.err(format!("{port}[{i}] is out of range for a {width}-bit port"));
        }
        self.sym(']')?;
        Ok(i)
    }

    fn expr(&mut self) -> Result<Expr, VerilogError> {
        let mut lhs = self.xor_expr()?;
        while self.is_sym('|') {
            self.pos += 1;
            lhs = Expr::Bin('|', Box::new(lhs), Box::new(self.xor_expr()?));
        }
        Ok(lhs)
    }

    fn xor_expr(&mut self) -> Result<Expr, VerilogError> {
        let mut lhs = self.and_expr()?;
        while self.is_sym('^') {
            self.pos += 1;
            lhs = Expr::Bin('^', Box::new(lhs), Box::new(self.and_expr()?));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, VerilogError> {
        let mut lhs = self.unary()?;
        while self.is_sym('&') {
            self.pos += 1;
            lhs = Expr::Bin('&', Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, VerilogError> {
        let at = self.pos;
        match self.next() {
            Some(Tok::Sym('~')) => Ok(Expr::Not(Box::new(self.unary()?))),
            Some(Tok::Sym('(')) => {
                let e = self.expr()?;
                self.sym(')')?;
                Ok(e)
            }
            Some(Tok::Const(b)) => Ok(Expr::Const(b)),
            Some(Tok::Ident(s)) if s == "x" => Ok(Expr::Input(self.index(self.inputs, "x")?)),
            Some(Tok::Ident(s)) => match self.wires.get(&s) {
                Some(&w) => Ok(Expr::Wire(w)),
                None => {
                    self.pos = at;
                    self.err(format!("undeclared wire `{s}`"))
                }
            },
            _ => {
                self.pos = at;
                self.err(format!("expected an operand, found {}", self.describe()))
            }
        }
    }
}

fn leaves(e: &Expr, out: &mut Vec<NodeRef>) {
    match e {
        Expr::Input(i) => push_unique(out, NodeRef::Input(*i)),
        Expr::Wire(w) => push_unique(out, NodeRef::Node(*w)),
        Expr::Const(_) => {}
        Expr::Not(a) => leaves(a, out),
        Expr::Bin(_, a, b) => {
            leaves(a, out);
            leaves(b, out);
        }
    }
}

fn push_unique(v: &mut Vec<NodeRef>, r: NodeRef) {
    if !v.contains(&r) {
        v.push(r);
    }
}

fn eval_expr(e: &Expr, env: &dyn Fn(NodeRef) -> bool) -> bool {
    match e {
        Expr::Input(i) => env(NodeRef::Input(*i)),
        Expr::Wire(w) => env(NodeRef::Node(*w)),
        Expr::Const(b) => *b,
        Expr::Not(a) => !eval_expr(a, env),
        Expr::Bin(op, a, b) => {
            let (x, y) = (eval_expr(a, env), eval_expr(b, env));
            match op {
                '&' => x & y,
                '|' => x | y,
                _ => x ^ y,
            }
        }
    }
}

struct Builder {
    gates: Vec<GateFunction>,
    nodes: Vec<FunctionNode>,
}

impl Builder {
    fn gate_for(&mut self, table: [bool; 4]) -> usize {
        if let Some(k) = self.gates.iter().position(|g| g.table == table) {
            return k;
        }
        let name: String = table.iter().map(|&b| if b { '1' } else { '0' }).collect();
        // weight of a custom table: one NAND2 per product term, at least one
        let terms = table.iter().filter(|&&b| b).count().max(1) as f64;
        self.gates.push(GateFunction::new(format!("tt{name}"), table, terms));
        self.gates.len() - 1
    }

    // Gate computing `e` over at most two distinct leaves.
    fn small(&mut self, e: &Expr, leaves: &[NodeRef], fallback: NodeRef) -> FunctionNode {
        let a = leaves.first().copied().unwrap_or(fallback);
        let b = leaves.get(1).copied().unwrap_or(a);
        let mut table = [false; 4];
        for (k, t) in table.iter_mut().enumerate() {
            let (va, vb) = (k & 2 != 0, k & 1 != 0);
            // with a single leaf both slots carry it, so only the first bit matters
            let vb = if leaves.len() == 2 { vb } else { va };
            *t = eval_expr(e, &|r| if r == a { va } else { vb });
        }
        FunctionNode { gate: self.gate_for(table), args: [a, b] }
    }

    // Single node computing `e`, with wider subexpressions lowered into fresh nodes.
    fn node_for(&mut self, e: &Expr, fallback: NodeRef) -> FunctionNode {
        let mut ls = Vec::new();
        leaves(e, &mut ls);
        if ls.len() <= 2 {
            return self.small(e, &ls, fallback);
        }
        match e {
            Expr::Not(a) => {
                let r = self.lower(a, fallback);
                FunctionNode { gate: self.gate_for([true, true, false, false]), args: [r, r] }
            }
            Expr::Bin(op, a, b) => {
                let (ra, rb) = (self.lower(a, fallback), self.lower(b, fallback));
                let table = match op {
                    '&' => [false, false, false, true],
                    '|' => [false, true, true, true],
                    _ => [false, true, true, false],
                };
                FunctionNode { gate: self.gate_for(table), args: [ra, rb] }
            }
            _ => unreachable!("leaves and constants have at most one signal"),
        }
    }

    // Reference computing `e`, adding nodes unless it is a plain signal.
    fn lower(&mut self, e: &Expr, fallback: NodeRef) -> NodeRef {
        match e {
            Expr::Input(i) => NodeRef::Input(*i),
            Expr::Wire(w) => NodeRef::Node(*w),
            _ => {
                let node = self.node_for(e, fallback);
                self.nodes.push(node);
                NodeRef::Node(self.nodes.len() - 1)
            }
        }
    }
}

/// Reads a module in the emitted format back into a circuit.
///
/// Wires become function nodes in declaration order. An expression over at
/// most two signals becomes one gate; larger expressions are split into
/// extra nodes. Gates outside the standard four are added to the returned
/// function set under names like `tt0110`.
pub fn parse_verilog_subset(text: &str) -> Result<(CircuitGraph, FunctionSet), VerilogError> {
    let toks = tokenize(text)?;
    let end = toks.last().map_or((1, 1), |t| (t.line, t.col + 1));
    let mut p = Parser { toks, pos: 0, end, inputs: 0, wires: HashMap::new(), wire_names: Vec::new() };

    p.keyword("module")?;
    let name = p.ident()?;
    debug_assert!(is_identifier(&name));
    p.sym('(')?;
    p.keyword("input")?;
    p.keyword("wire")?;
    let inputs = p.range()?;
    p.keyword("x")?;
    p.sym(',')?;
    p.keyword("output")?;
    p.keyword("wire")?;
    let outputs = p.range()?;
    p.keyword("y")?;
    p.sym(')')?;
    p.sym(';')?;
    p.inputs = inputs;

    let mut wire_exprs: BTreeMap<usize, Expr> = BTreeMap::new();
    let mut out_refs: Vec<Option<Expr>> = vec![None; outputs];
    loop {
        let (line, col) = p.here();
        match p.next() {
            Some(Tok::Ident(kw)) if kw == "endmodule" => break,
            Some(Tok::Ident(kw)) if kw == "wire" => loop {
                let (line, col) = p.here();
                let w = p.ident()?;
                if w == "x" || w == "y" || p.wires.contains_key(&w) {
                    return Err(syntax(line, col, format!("wire `{w}` declared twice")));
                }
                p.wires.insert(w.clone(), p.wire_names.len());
                p.wire_names.push(w);
                if p.is_sym(',') {
                    p.pos += 1;
                } else {
                    p.sym(';')?;
                    break;
                }
            },
            Some(Tok::Ident(kw)) if kw == "assign" => {
                let (line, col) = p.here();
                let target = p.ident()?;
                if target == "y" {
                    let k = p.index(outputs, "y")?;
                    p.sym('=')?;
                    let e = p.expr()?;
                    if out_refs[k].replace(e).is_some() {
                        return Err(syntax(line, col, format!("y[{k}] assigned twice")));
                    }
                } else {
                    let Some(&w) = p.wires.get(&target) else {
                        return Err(syntax(line, col, format!("assignment to undeclared wire `{target}`")));
                    };
                    p.sym('=')?;
                    let e = p.expr()?;
                    if wire_exprs.insert(w, e).is_some() {
                        return Err(syntax(line, col, format!("wire `{target}` assigned twice")));
                    }
                }
                p.sym(';')?;
            }
            Some(Tok::Ident(kw)) => return Err(syntax(line, col, format!("unsupported construct `{kw}`"))),
            Some(_) => {
                p.pos -= 1;
                return p.err(format!("unexpected {}", p.describe()));
            }
            None => return Err(syntax(line, col, "missing `endmodule`")),
        }
    }
    if p.peek().is_some() {
        return p.err(format!("unexpected {} after `endmodule`", p.describe()));
    }
    if let Some(w) = (0..p.wire_names.len()).find(|w| !wire_exprs.contains_key(w)) {
        return Err(syntax(end.0, end.1, format!("wire `{}` is never assigned", p.wire_names[w])));
    }
    if let Some(k) = out_refs.iter().position(Option::is_none) {
        return Err(syntax(end.0, end.1, format!("y[{k}] is never assigned")));
    }
    if inputs == 0 {
        return Err(syntax(1, 1, "input port must have at least one bit"));
    }

    let mut b = Builder {
        gates: FunctionSet::full().gates().to_vec(),
        nodes: vec![FunctionNode { gate: 0, args: [NodeRef::Input(0); 2] }; p.wire_names.len()],
    };
    let fallback = NodeRef::Input(0);
    for (&w, e) in &wire_exprs {
        b.nodes[w] = b.node_for(e, fallback);
    }
    let outputs = out_refs.into_iter().map(|e| b.lower(&e.unwrap(), fallback)).collect();
    let fs = FunctionSet::new(b.gates)?;
    let g = CircuitGraph { inputs, nodes: b.nodes, outputs };
    validate(&g, &fs)?;
    Ok((g, fs))
}
