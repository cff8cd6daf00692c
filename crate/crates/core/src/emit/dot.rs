//! Graphviz rendering of a circuit.

use std::fmt::Write as _;

use crate::circuit::{active_set, CircuitGraph, FunctionSet, NodeRef};

const GREY: &str = "grey70";

fn id(r: NodeRef) -> String {
    match r {
        NodeRef::Input(i) => format!("x{i}"),
        NodeRef::Node(j) => format!("n{j}"),
    }
}

/// DOT digraph with arcs drawn from producer to consumer. Inactive gates
/// and the arcs into them are grey.
pub fn emit_dot(g: &CircuitGraph, fs: &FunctionSet) -> String {
    let active = active_set(g);
    let mut out = String::from("digraph circuit {\n  rankdir=LR;\n  node [fontname=\"Helvetica\"];\n");
    for i in 0..g.inputs {
        writeln!(out, "  x{i} [label=\"x[{i}]\", shape=box];").unwrap();
    }
    for (j, node) in g.nodes.iter().enumerate() {
        let name = &fs.gate(node.gate).name;
        if active.contains(j) {
            writeln!(out, "  n{j} [label=\"n{j}\\n{name}\", shape=ellipse];").unwrap();
        } else {
            writeln!(out, "  n{j} [label=\"n{j}\\n{name}\", shape=ellipse, color={GREY}, fontcolor={GREY}];").unwrap();
        }
    }
    for k in 0..g.n_outputs() {
        writeln!(out, "  y{k} [label=\"y[{k}]\", shape=box, style=bold];").unwrap();
    }
    for (j, node) in g.nodes.iter().enumerate() {
        let style = if active.contains(j) { String::new() } else { format!(" [color={GREY}]") };
        for a in node.args {
            writeln!(out, "  {} -> n{j}{style};", id(a)).unwrap();
        }
    }
    for (k, &r) in g.outputs.iter().enumerate() {
        writeln!(out, "  {} -> y{k};", id(r)).unwrap();
    }
    out.push_str("}\n");
    out
}
