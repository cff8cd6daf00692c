//! The circuit genotype: input nodes, binary function nodes and output nodes
//! joined by ordered edge slots.
//!
//! Edges are stored consumer to producer: a function node lists the nodes it
//! reads, and each output lists the node it reads. Function nodes may refer to
//! any node as long as no cycle forms, so node indices are not a topological
//! order in general.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{words_for, Partition};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CircuitError {
    #[error("function set is empty")]
    EmptyFunctionSet,
    #[error("duplicate gate name {0:?} in function set")]
    DuplicateGate(String),
    #[error("gate {name:?}: truth table entries must be 0 or 1")]
    BadTruthTable { name: String },
    #[error("gate {name:?}: nand2 weight must be finite and non-negative")]
    BadWeight { name: String },
    #[error("{owner} references {reference}, which does not exist")]
    DanglingReference { owner: String, reference: NodeRef },
    #[error("node n{node} uses gate {gate}, but the function set has {available} gates")]
    UnknownGate { node: usize, gate: usize, available: usize },
    #[error("cycle through nodes {}", fmt_cycle(.nodes))]
    Cycle { nodes: Vec<usize> },
    #[error("circuit declares {declared} outputs but lists {found} output targets")]
    OutputCount { declared: usize, found: usize },
    #[error("circuit has no outputs")]
    NoOutputs,
    #[error("invalid circuit document: {0}")]
    Schema(String),
}

fn fmt_cycle(nodes: &[usize]) -> String {
    nodes.iter().map(|n| format!("n{n}")).collect::<Vec<_>>().join(" -> ")
}

/// Reference to a node that produces a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeRef {
    #[serde(rename = "in")]
    Input(usize),
    #[serde(rename = "node")]
    Node(usize),
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeRef::Input(i) => write!(f, "x[{i}]"),
            NodeRef::Node(j) => write!(f, "n{j}"),
        }
    }
}

/// A two-input gate. `table[(a << 1) | b]` is the output for inputs `(a, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GateFunction {
    pub name: String,
    pub table: [bool; 4],
    pub nand2: f64,
}

impl GateFunction {
    pub fn new(name: impl Into<String>, table: [bool; 4], nand2: f64) -> Self {
        GateFunction { name: name.into(), table, nand2 }
    }

    pub fn and() -> Self {
        Self::new("and", [false, false, false, true], 2.0)
    }

    pub fn or() -> Self {
        Self::new("or", [false, true, true, true], 3.0)
    }

    pub fn nand() -> Self {
        Self::new("nand", [true, true, true, false], 1.0)
    }

    pub fn nor() -> Self {
        Self::new("nor", [true, false, false, false], 1.0)
    }

    /// Truth table packed into the low four bits.
    pub fn mask(&self) -> u8 {
        self.table.iter().enumerate().fold(0, |m, (i, &b)| m | (u8::from(b) << i))
    }

    pub fn eval(&self, a: bool, b: bool) -> bool {
        self.table[(usize::from(a) << 1) | usize::from(b)]
    }

    pub fn is_symmetric(&self) -> bool {
        self.table[1] == self.table[2]
    }
}

/// Applies a 4-bit truth table to 64 rows at once.
#[inline]
pub fn apply_word(mask: u8, a: u64, b: u64) -> u64 {
    let m = |i: u8| 0u64.wrapping_sub(u64::from((mask >> i) & 1));
    (m(0) & !a & !b) | (m(1) & !a & b) | (m(2) & a & !b) | (m(3) & a & b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionSet {
    gates: Vec<GateFunction>,
}

impl FunctionSet {
    pub fn new(gates: Vec<GateFunction>) -> Result<Self, CircuitError> {
        if gates.is_empty() {
            return Err(CircuitError::EmptyFunctionSet);
        }
        for (i, g) in gates.iter().enumerate() {
            if gates[..i].iter().any(|h| h.name == g.name) {
                return Err(CircuitError::DuplicateGate(g.name.clone()));
            }
            if !g.nand2.is_finite() || g.nand2 < 0.0 {
                return Err(CircuitError::BadWeight { name: g.name.clone() });
            }
        }
        Ok(FunctionSet { gates })
    }

    /// `{and, or, nand, nor}`.
    pub fn full() -> Self {
        FunctionSet { gates: vec![GateFunction::and(), GateFunction::or(), GateFunction::nand(), GateFunction::nor()] }
    }

    pub fn nand_only() -> Self {
        FunctionSet { gates: vec![GateFunction::nand()] }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "full" => Some(Self::full()),
            "nand" => Some(Self::nand_only()),
            _ => None,
        }
    }

    /// Name of the matching preset, if any.
    pub fn preset_name(&self) -> Option<&'static str> {
        ["full", "nand"].into_iter().find(|p| Self::preset(p).as_ref() == Some(self))
    }

    pub fn gates(&self) -> &[GateFunction] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn gate(&self, i: usize) -> &GateFunction {
        &self.gates[i]
    }

    pub fn max_weight(&self) -> f64 {
        self.gates.iter().map(|g| g.nand2).fold(0.0, f64::max)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.gates.iter().position(|g| g.name == name)
    }
}

/// Gate entry as stored in circuit documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateDocument {
    pub name: String,
    pub table: [u8; 4],
    pub nand2: f64,
}

impl TryFrom<GateDocument> for GateFunction {
    type Error = CircuitError;

    fn try_from(d: GateDocument) -> Result<Self, CircuitError> {
        if d.table.iter().any(|&b| b > 1) {
            return Err(CircuitError::BadTruthTable { name: d.name });
        }
        Ok(GateFunction { table: d.table.map(|b| b == 1), name: d.name, nand2: d.nand2 })
    }
}

impl From<&GateFunction> for GateDocument {
    fn from(g: &GateFunction) -> Self {
        GateDocument { name: g.name.clone(), table: g.table.map(u8::from), nand2: g.nand2 }
    }
}

/// A function set in configuration: either a preset name or explicit gates.
impl Serialize for FunctionSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.preset_name() {
            Some(name) => s.serialize_str(name),
            None => self.gates.iter().map(GateDocument::from).collect::<Vec<_>>().serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for FunctionSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Preset(String),
            Gates(Vec<GateDocument>),
        }
        match Repr::deserialize(d)? {
            Repr::Preset(name) => FunctionSet::preset(&name)
                .ok_or_else(|| serde::de::Error::custom(format!("unknown function set {name:?}"))),
            Repr::Gates(docs) => {
                let gates = docs
                    .into_iter()
                    .map(GateFunction::try_from)
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(serde::de::Error::custom)?;
                FunctionSet::new(gates).map_err(serde::de::Error::custom)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionNode {
    #[serde(rename = "fn")]
    pub gate: usize,
    pub args: [NodeRef; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CircuitGraph {
    pub inputs: usize,
    pub nodes: Vec<FunctionNode>,
    #[serde(rename = "output_targets")]
    pub outputs: Vec<NodeRef>,
}

/// Identifies one edge slot: a function node's argument or an output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeSlot {
    Node { node: usize, slot: usize },
    Output(usize),
}

impl CircuitGraph {
    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    /// `|E|`: two slots per function node plus one per output.
    pub fn edge_count(&self) -> usize {
        2 * self.nodes.len() + self.outputs.len()
    }

    /// Edge number `e` in `0..edge_count()`: node slots first, then outputs.
    pub fn edge_slot(&self, e: usize) -> EdgeSlot {
        if e < 2 * self.nodes.len() {
            EdgeSlot::Node { node: e / 2, slot: e % 2 }
        } else {
            EdgeSlot::Output(e - 2 * self.nodes.len())
        }
    }

    pub fn target(&self, edge: EdgeSlot) -> NodeRef {
        match edge {
            EdgeSlot::Node { node, slot } => self.nodes[node].args[slot],
            EdgeSlot::Output(k) => self.outputs[k],
        }
    }

    pub fn set_target(&mut self, edge: EdgeSlot, to: NodeRef) {
        match edge {
            EdgeSlot::Node { node, slot } => self.nodes[node].args[slot] = to,
            EdgeSlot::Output(k) => self.outputs[k] = to,
        }
    }

    fn ref_in_range(&self, r: NodeRef) -> bool {
        match r {
            NodeRef::Input(i) => i < self.inputs,
            NodeRef::Node(j) => j < self.nodes.len(),
        }
    }

    /// For each function node, the function nodes that read it (with multiplicity).
    pub fn consumers(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for (j, node) in self.nodes.iter().enumerate() {
            for arg in node.args {
                if let NodeRef::Node(k) = arg {
                    out[k].push(j);
                }
            }
        }
        out
    }
}

/// Checks reference ranges, gate indices and acyclicity.
pub fn validate(g: &CircuitGraph, fs: &FunctionSet) -> Result<(), CircuitError> {
    if g.outputs.is_empty() {
        return Err(CircuitError::NoOutputs);
    }
    for (j, node) in g.nodes.iter().enumerate() {
        if node.gate >= fs.len() {
            return Err(CircuitError::UnknownGate { node: j, gate: node.gate, available: fs.len() });
        }
        for (s, &arg) in node.args.iter().enumerate() {
            if !g.ref_in_range(arg) {
                return Err(CircuitError::DanglingReference { owner: format!("node n{j} slot {s}"), reference: arg });
            }
        }
    }
    for (k, &t) in g.outputs.iter().enumerate() {
        if !g.ref_in_range(t) {
            return Err(CircuitError::DanglingReference { owner: format!("output y[{k}]"), reference: t });
        }
    }
    if let Some(nodes) = find_cycle(g) {
        return Err(CircuitError::Cycle { nodes });
    }
    Ok(())
}

/// Iterative three-colour DFS over consumer→producer arcs.
fn find_cycle(g: &CircuitGraph) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Open,
        Done,
    }
    let n = g.nodes.len();
    let mut mark = vec![Mark::New; n];
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for root in 0..n {
        if mark[root] != Mark::New {
            continue;
        }
        mark[root] = Mark::Open;
        stack.push((root, 0));
        while let Some(&mut (v, ref mut slot)) = stack.last_mut() {
            if *slot == 2 {
                mark[v] = Mark::Done;
                stack.pop();
                continue;
            }
            let arg = g.nodes[v].args[*slot];
            *slot += 1;
            let NodeRef::Node(w) = arg else { continue };
            match mark[w] {
                Mark::New => {
                    mark[w] = Mark::Open;
                    stack.push((w, 0));
                }
                Mark::Open => {
                    let start = stack.iter().position(|&(u, _)| u == w).unwrap();
                    return Some(stack[start..].iter().map(|&(u, _)| u).collect());
                }
                Mark::Done => {}
            }
        }
    }
    None
}

/// Function nodes with a path to some output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveSet {
    pub mask: Vec<bool>,
    pub count: usize,
}

impl ActiveSet {
    pub fn contains(&self, node: usize) -> bool {
        self.mask[node]
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &a)| a).map(|(j, _)| j)
    }
}

pub fn active_set(g: &CircuitGraph) -> ActiveSet {
    let mut mask = vec![false; g.nodes.len()];
    let mut stack: Vec<usize> = g
        .outputs
        .iter()
        .filter_map(|r| match *r {
            NodeRef::Node(j) => Some(j),
            NodeRef::Input(_) => None,
        })
        .collect();
    let mut count = 0;
    while let Some(j) = stack.pop() {
        if mask[j] {
            continue;
        }
        mask[j] = true;
        count += 1;
        for arg in g.nodes[j].args {
            if let NodeRef::Node(k) = arg {
                if !mask[k] {
                    stack.push(k);
                }
            }
        }
    }
    ActiveSet { mask, count }
}

/// Active nodes in dependency order: depth-first post-order from the outputs.
pub fn topo_order(g: &CircuitGraph) -> Vec<usize> {
    let mut visited = vec![false; g.nodes.len()];
    let mut order = Vec::new();
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for out in &g.outputs {
        let NodeRef::Node(root) = *out else { continue };
        if visited[root] {
            continue;
        }
        visited[root] = true;
        stack.push((root, 0));
        while let Some(&mut (v, ref mut slot)) = stack.last_mut() {
            if *slot == 2 {
                order.push(v);
                stack.pop();
                continue;
            }
            let arg = g.nodes[v].args[*slot];
            *slot += 1;
            if let NodeRef::Node(w) = arg {
                if !visited[w] {
                    visited[w] = true;
                    stack.push((w, 0));
                }
            }
        }
    }
    order
}

/// Active nodes in dependency order via Kahn's algorithm (lowest ready index first).
pub fn topo_order_kahn(g: &CircuitGraph) -> Vec<usize> {
    let active = active_set(g);
    let mut pending = vec![0usize; g.nodes.len()];
    let mut readers: Vec<Vec<usize>> = vec![Vec::new(); g.nodes.len()];
    for j in active.iter() {
        for arg in g.nodes[j].args {
            if let NodeRef::Node(k) = arg {
                pending[j] += 1;
                readers[k].push(j);
            }
        }
    }
    let mut ready: std::collections::BTreeSet<usize> = active.iter().filter(|&j| pending[j] == 0).collect();
    let mut order = Vec::with_capacity(active.count);
    while let Some(j) = ready.pop_first() {
        order.push(j);
        for &r in &readers[j] {
            pending[r] -= 1;
            if pending[r] == 0 {
                ready.insert(r);
            }
        }
    }
    order
}

/// A single node forced to a constant value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fault {
    pub node: usize,
    pub stuck_at: bool,
}

/// Evaluates one input vector.
pub fn evaluate(g: &CircuitGraph, fs: &FunctionSet, input: &[bool]) -> Vec<bool> {
    evaluate_in_order(g, fs, input, &topo_order(g))
}

/// Evaluates one input vector with a caller-supplied topological order of the active nodes.
pub fn evaluate_in_order(g: &CircuitGraph, fs: &FunctionSet, input: &[bool], order: &[usize]) -> Vec<bool> {
    assert_eq!(input.len(), g.inputs, "input width mismatch");
    let mut value = vec![false; g.nodes.len()];
    let read = |value: &[bool], r: NodeRef| match r {
        NodeRef::Input(i) => input[i],
        NodeRef::Node(j) => value[j],
    };
    for &j in order {
        let node = &g.nodes[j];
        value[j] = fs.gate(node.gate).eval(read(&value, node.args[0]), read(&value, node.args[1]));
    }
    g.outputs.iter().map(|&r| read(&value, r)).collect()
}

/// Packed outputs: `words` 64-row words per output bit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedOutputs {
    pub rows: usize,
    pub words: usize,
    /// `data[k * words + w]` holds output bit `k`.
    pub data: Vec<u64>,
}

impl PackedOutputs {
    pub fn bit(&self, row: usize, output: usize) -> bool {
        (self.data[output * self.words + row / 64] >> (row % 64)) & 1 == 1
    }

    /// Output code of one row, `y[0]` as the most significant bit.
    pub fn code(&self, row: usize, n_outputs: usize) -> u64 {
        (0..n_outputs).fold(0, |acc, k| (acc << 1) | u64::from(self.bit(row, k)))
    }

    pub fn unpack(&self, n_outputs: usize) -> Vec<Vec<bool>> {
        (0..self.rows).map(|r| (0..n_outputs).map(|k| self.bit(r, k)).collect()).collect()
    }
}

/// Bit-parallel evaluation over a whole partition, optionally with one stuck-at fault.
pub fn evaluate_packed(g: &CircuitGraph, fs: &FunctionSet, data: &Partition, fault: Option<Fault>) -> PackedOutputs {
    let order = topo_order(g);
    evaluate_packed_in_order(g, fs, data, &order, fault)
}

pub fn evaluate_packed_in_order(
    g: &CircuitGraph,
    fs: &FunctionSet,
    data: &Partition,
    order: &[usize],
    fault: Option<Fault>,
) -> PackedOutputs {
    assert_eq!(data.n_inputs(), g.inputs, "partition width does not match circuit inputs");
    let words = data.words();
    let masks: Vec<u8> = fs.gates().iter().map(GateFunction::mask).collect();
    let mut values = vec![0u64; g.nodes.len() * words];
    for &j in order {
        let node = &g.nodes[j];
        if let Some(f) = fault.filter(|f| f.node == j) {
            values[j * words..(j + 1) * words].fill(if f.stuck_at { u64::MAX } else { 0 });
            continue;
        }
        let mask = masks[node.gate];
        for w in 0..words {
            let get = |r: NodeRef| match r {
                NodeRef::Input(i) => data.column(i)[w],
                NodeRef::Node(k) => values[k * words + w],
            };
            let v = apply_word(mask, get(node.args[0]), get(node.args[1]));
            values[j * words + w] = v;
        }
    }
    let mut out = Vec::with_capacity(g.outputs.len() * words);
    for &r in &g.outputs {
        match r {
            NodeRef::Input(i) => out.extend_from_slice(data.column(i)),
            NodeRef::Node(j) => out.extend_from_slice(&values[j * words..(j + 1) * words]),
        }
    }
    debug_assert_eq!(words, words_for(data.len()));
    PackedOutputs { rows: data.len(), words, data: out }
}

/// Per-row output bits for a partition.
pub fn evaluate_batch(g: &CircuitGraph, fs: &FunctionSet, data: &Partition) -> Vec<Vec<bool>> {
    evaluate_packed(g, fs, data, None).unpack(g.outputs.len())
}

pub fn count_active_gates(g: &CircuitGraph) -> usize {
    active_set(g).count
}

pub fn nand2_equivalent(g: &CircuitGraph, fs: &FunctionSet) -> f64 {
    active_set(g).iter().map(|j| fs.gate(g.nodes[j].gate).nand2).sum()
}

/// Circuit file layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitDocument {
    pub inputs: usize,
    pub outputs: usize,
    #[serde(default = "default_gate_documents")]
    pub function_set: Vec<GateDocument>,
    pub nodes: Vec<FunctionNode>,
    pub output_targets: Vec<NodeRef>,
}

fn default_gate_documents() -> Vec<GateDocument> {
    FunctionSet::full().gates().iter().map(GateDocument::from).collect()
}

pub fn to_document(g: &CircuitGraph, fs: &FunctionSet) -> CircuitDocument {
    CircuitDocument {
        inputs: g.inputs,
        outputs: g.outputs.len(),
        function_set: fs.gates().iter().map(GateDocument::from).collect(),
        nodes: g.nodes.clone(),
        output_targets: g.outputs.clone(),
    }
}

pub fn from_document(doc: CircuitDocument) -> Result<(CircuitGraph, FunctionSet), CircuitError> {
    if doc.outputs != doc.output_targets.len() {
        return Err(CircuitError::OutputCount { declared: doc.outputs, found: doc.output_targets.len() });
    }
    let gates = doc.function_set.into_iter().map(GateFunction::try_from).collect::<Result<Vec<_>, _>>()?;
    let fs = FunctionSet::new(gates)?;
    let g = CircuitGraph { inputs: doc.inputs, nodes: doc.nodes, outputs: doc.output_targets };
    validate(&g, &fs)?;
    Ok((g, fs))
}

pub fn serialize(g: &CircuitGraph, fs: &FunctionSet) -> String {
    let mut text = serde_json::to_string_pretty(&to_document(g, fs)).expect("circuit documents always serialize");
    text.push('\n');
    text
}

pub fn deserialize(text: &str) -> Result<(CircuitGraph, FunctionSet), CircuitError> {
    let doc: CircuitDocument = serde_json::from_str(text).map_err(|e| CircuitError::Schema(e.to_string()))?;
    from_document(doc)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn node(gate: usize, a: NodeRef, b: NodeRef) -> FunctionNode {
        FunctionNode { gate, args: [a, b] }
    }

    use NodeRef::{Input as I, Node as N};

    const AND: usize = 0;
    const OR: usize = 1;
    const NAND: usize = 2;
    const NOR: usize = 3;

    /// Random acyclic graph where node j reads only inputs and nodes < j, then
    /// relabelled by a random permutation so indices are not topological.
    pub(crate) fn random_graph(seed: u64, inputs: usize, n: usize, outputs: usize, gates: usize) -> CircuitGraph {
        let mut r = rng::stream(seed, 99, 99);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, r.random_range(0..=i));
        }
        let pick = |limit: usize, r: &mut rng::StreamRng| {
            let k = r.random_range(0..inputs + limit);
            if k < inputs {
                I(k)
            } else {
                N(perm[k - inputs])
            }
        };
        let mut nodes = vec![node(0, I(0), I(0)); n];
        for j in 0..n {
            nodes[perm[j]] = node(r.random_range(0..gates), pick(j, &mut r), pick(j, &mut r));
        }
        let outputs = (0..outputs).map(|_| pick(n, &mut r)).collect();
        CircuitGraph { inputs, nodes, outputs }
    }

    fn all_inputs(width: usize) -> Vec<Vec<bool>> {
        (0..1usize << width).map(|v| (0..width).map(|i| (v >> (width - 1 - i)) & 1 == 1).collect()).collect()
    }

    #[test]
    fn apply_word_matches_tables() {
        let a = 0b1100u64;
        let b = 0b1010u64;
        for mask in 0u8..16 {
            let out = apply_word(mask, a, b);
            for row in 0..4 {
                let (x, y) = ((a >> row) & 1 == 1, (b >> row) & 1 == 1);
                let expect = (mask >> ((usize::from(x) << 1) | usize::from(y))) & 1 == 1;
                assert_eq!((out >> row) & 1 == 1, expect);
            }
        }
    }

    #[test]
    fn self_loop_and_two_cycle() {
        let fs = FunctionSet::full();
        let g = CircuitGraph { inputs: 1, nodes: vec![node(AND, N(0), I(0))], outputs: vec![N(0)] };
        assert_eq!(validate(&g, &fs), Err(CircuitError::Cycle { nodes: vec![0] }));
        let g =
            CircuitGraph { inputs: 1, nodes: vec![node(AND, N(1), I(0)), node(OR, N(0), I(0))], outputs: vec![N(0)] };
        match validate(&g, &fs) {
            Err(CircuitError::Cycle { mut nodes }) => {
                nodes.sort();
                assert_eq!(nodes, vec![0, 1]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dangling_references() {
        let fs = FunctionSet::full();
        let g = CircuitGraph { inputs: 1, nodes: vec![node(AND, I(3), I(0))], outputs: vec![N(0)] };
        let err = validate(&g, &fs).unwrap_err();
        assert!(err.to_string().contains("n0"), "{err}");
        let g = CircuitGraph { inputs: 1, nodes: vec![], outputs: vec![N(2)] };
        assert!(matches!(validate(&g, &fs), Err(CircuitError::DanglingReference { .. })));
        let g = CircuitGraph { inputs: 1, nodes: vec![node(9, I(0), I(0))], outputs: vec![N(0)] };
        assert!(matches!(validate(&g, &fs), Err(CircuitError::UnknownGate { gate: 9, .. })));
    }

    #[test]
    fn active_sets() {
        let g = CircuitGraph { inputs: 2, nodes: vec![node(AND, I(0), I(1)); 3], outputs: vec![I(0), I(1)] };
        assert_eq!(active_set(&g).count, 0);
        let chain = CircuitGraph {
            inputs: 1,
            nodes: vec![node(AND, I(0), I(0)), node(OR, N(0), I(0)), node(NAND, N(1), N(0))],
            outputs: vec![N(2)],
        };
        assert_eq!(active_set(&chain).count, 3);
        assert_eq!(topo_order(&chain), vec![0, 1, 2]);
    }

    /// Two inputs, two outputs, with inactive material hanging off the side.
    #[test]
    fn inactive_material_is_excluded() {
        let g = CircuitGraph {
            inputs: 2,
            nodes: vec![
                node(AND, I(0), I(1)),  // n0 active (y0)
                node(OR, N(0), I(1)),   // n1 active (y1)
                node(NAND, N(1), I(0)), // n2 inactive
                node(NOR, N(2), N(0)),  // n3 inactive
            ],
            outputs: vec![N(0), N(1)],
        };
        let a = active_set(&g);
        assert_eq!(a.mask, vec![true, true, false, false]);
        assert_eq!(count_active_gates(&g), 2);
        assert_eq!(nand2_equivalent(&g, &FunctionSet::full()), 5.0);
    }

    #[test]
    fn nand_truth_table_and_wire() {
        let fs = FunctionSet::full();
        let g = CircuitGraph { inputs: 2, nodes: vec![node(NAND, I(0), I(1))], outputs: vec![N(0)] };
        assert_eq!(evaluate(&g, &fs, &[true, true]), vec![false]);
        assert_eq!(evaluate(&g, &fs, &[true, false]), vec![true]);
        let wire = CircuitGraph { inputs: 1, nodes: vec![], outputs: vec![I(0)] };
        assert_eq!(evaluate(&wire, &fs, &[true]), vec![true]);
        assert_eq!(evaluate(&wire, &fs, &[false]), vec![false]);
    }

    #[test]
    fn full_adder_reference_netlist() {
        // sum = a xor b xor c, carry = ab | c(a xor b); xor from and/or/nand
        let fs = FunctionSet::full();
        let g = CircuitGraph {
            inputs: 3,
            nodes: vec![
                node(OR, I(0), I(1)),   // n0 a|b
                node(NAND, I(0), I(1)), // n1 ~(ab)
                node(AND, N(0), N(1)),  // n2 a^b
                node(OR, N(2), I(2)),   // n3
                node(NAND, N(2), I(2)), // n4
                node(AND, N(3), N(4)),  // n5 sum
                node(AND, N(2), I(2)),  // n6 c(a^b)
                node(AND, I(0), I(1)),  // n7 ab
                node(OR, N(7), N(6)),   // n8 carry
            ],
            outputs: vec![N(8), N(5)],
        };
        validate(&g, &fs).unwrap();
        for row in all_inputs(3) {
            let total = row.iter().filter(|&&b| b).count();
            assert_eq!(evaluate(&g, &fs, &row), vec![total >= 2, total % 2 == 1], "{row:?}");
        }
    }

    #[test]
    fn packed_and_scalar_agree_on_random_graphs() {
        let fs = FunctionSet::full();
        let mut r = rng::stream(5, 0, 0);
        for seed in 0..20 {
            let g = random_graph(seed, 12, 50, 3, 4);
            validate(&g, &fs).unwrap();
            let rows: Vec<Vec<bool>> = (0..1000).map(|_| (0..12).map(|_| r.random()).collect()).collect();
            let part = Partition::from_rows(&rows, vec![0; rows.len()], 12);
            let batch = evaluate_batch(&g, &fs, &part);
            for (row, out) in rows.iter().zip(&batch) {
                assert_eq!(&evaluate(&g, &fs, row), out);
            }
        }
    }

    #[test]
    fn empty_and_single_row_batches() {
        let fs = FunctionSet::full();
        let g = random_graph(1, 4, 10, 2, 4);
        let empty = Partition::from_rows(&[], vec![], 4);
        assert!(evaluate_batch(&g, &fs, &empty).is_empty());
        let row = vec![true, false, true, true];
        let one = Partition::from_rows(std::slice::from_ref(&row), vec![0], 4);
        assert_eq!(evaluate_batch(&g, &fs, &one), vec![evaluate(&g, &fs, &row)]);
    }

    #[test]
    fn minimal_document_is_an_identity_circuit() {
        let text = r#"{"inputs":1,"outputs":1,"nodes":[],"output_targets":[{"in":0}]}"#;
        let (g, fs) = deserialize(text).unwrap();
        assert_eq!(fs, FunctionSet::full());
        assert_eq!(evaluate(&g, &fs, &[true]), vec![true]);
        assert_eq!(evaluate(&g, &fs, &[false]), vec![false]);
    }

    #[test]
    fn document_errors() {
        let bad_ref =
            r#"{"inputs":1,"outputs":1,"nodes":[{"fn":0,"args":[{"in":0},{"node":4}]}],"output_targets":[{"node":0}]}"#;
        let err = deserialize(bad_ref).unwrap_err();
        assert!(err.to_string().contains("n0") && err.to_string().contains("n4"), "{err}");
        let cyclic =
            r#"{"inputs":1,"outputs":1,"nodes":[{"fn":0,"args":[{"in":0},{"node":0}]}],"output_targets":[{"node":0}]}"#;
        assert!(matches!(deserialize(cyclic), Err(CircuitError::Cycle { .. })));
        let unknown = r#"{"inputs":1,"outputs":1,"nodes":[],"output_targets":[{"in":0}],"extra":1}"#;
        assert!(matches!(deserialize(unknown), Err(CircuitError::Schema(_))));
        let count = r#"{"inputs":1,"outputs":2,"nodes":[],"output_targets":[{"in":0}]}"#;
        assert!(matches!(deserialize(count), Err(CircuitError::OutputCount { .. })));
    }

    #[test]
    fn document_field_names() {
        let g = CircuitGraph { inputs: 2, nodes: vec![node(0, I(0), I(1))], outputs: vec![N(0)] };
        let v: serde_json::Value = serde_json::from_str(&serialize(&g, &FunctionSet::nand_only())).unwrap();
        assert_eq!(
            v,
            serde_json::json!({
                "inputs": 2, "outputs": 1,
                "function_set": [{"name": "nand", "table": [1, 1, 1, 0], "nand2": 1.0}],
                "nodes": [{"fn": 0, "args": [{"in": 0}, {"in": 1}]}],
                "output_targets": [{"node": 0}]
            })
        );
    }

    #[test]
    fn function_set_config_forms() {
        assert_eq!(serde_json::to_string(&FunctionSet::full()).unwrap(), r#""full""#);
        let fs: FunctionSet = serde_json::from_str(r#""nand""#).unwrap();
        assert_eq!(fs, FunctionSet::nand_only());
        let custom: FunctionSet = serde_json::from_str(r#"[{"name":"xor","table":[0,1,1,0],"nand2":4}]"#).unwrap();
        assert_eq!(custom.gate(0).mask(), 0b0110);
        assert!(serde_json::from_str::<FunctionSet>(r#""bogus""#).is_err());
        assert!(FunctionSet::new(vec![GateFunction::and(), GateFunction::and()]).is_err());
    }

    proptest! {
        #[test]
        fn serialization_round_trips(seed in any::<u64>(), n in 0usize..40, inputs in 1usize..8, outputs in 1usize..4) {
            let fs = FunctionSet::full();
            let g = random_graph(seed, inputs, n, outputs, 4);
            prop_assert!(validate(&g, &fs).is_ok());
            let (g2, fs2) = deserialize(&serialize(&g, &fs)).unwrap();
            prop_assert_eq!(g2, g);
            prop_assert_eq!(fs2, fs);
        }

        #[test]
        fn topological_orders_agree(seed in any::<u64>(), n in 0usize..60) {
            let fs = FunctionSet::full();
            let g = random_graph(seed, 5, n, 2, 4);
            let dfs = topo_order(&g);
            let kahn = topo_order_kahn(&g);
            prop_assert_eq!(dfs.len(), active_set(&g).count);
            prop_assert!(count_active_gates(&g) <= n);
            let mut a = dfs.clone();
            let mut b = kahn.clone();
            a.sort();
            b.sort();
            prop_assert_eq!(a, b);
            for row in all_inputs(5) {
                prop_assert_eq!(evaluate_in_order(&g, &fs, &row, &dfs), evaluate_in_order(&g, &fs, &row, &kahn));
            }
        }

        #[test]
        fn inactive_rewrites_do_not_change_semantics(seed in any::<u64>(), n in 1usize..40, gate in 0usize..4) {
            let fs = FunctionSet::full();
            let g = random_graph(seed, 6, n, 2, 4);
            let active = active_set(&g);
            let Some(j) = (0..n).find(|&j| !active.contains(j)) else { return Ok(()) };
            let mut h = g.clone();
            h.nodes[j].gate = gate;
            h.nodes[j].args = [I(seed as usize % 6), I(0)];
            prop_assert!(validate(&h, &fs).is_ok());
            for row in all_inputs(6) {
                prop_assert_eq!(evaluate(&g, &fs, &row), evaluate(&h, &fs, &row));
            }
        }
    }
}
