use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::circuit::tests::random_graph;
use crate::circuit::NodeRef::{Input as I, Node as N};
use crate::circuit::{
    active_set, evaluate, evaluate_batch, CircuitError, CircuitGraph, FunctionNode, FunctionSet, GateFunction,
};
use crate::encoding::Partition;
use crate::rng;

fn random_rows(seed: u64, width: usize, rows: usize) -> Partition {
    let mut r = rng::stream(seed, 7, 7);
    let bits: Vec<Vec<bool>> = (0..rows).map(|_| (0..width).map(|_| r.random::<bool>()).collect()).collect();
    Partition::from_rows(&bits, vec![0; rows], width)
}

fn body(text: &str) -> Vec<&str> {
    text.lines()
        .map(str::trim)
        .skip_while(|l| !l.starts_with("module"))
        .skip(1)
        .take_while(|l| *l != "endmodule")
        .collect()
}

#[test]
fn direct_wire_body() {
    let g = CircuitGraph { inputs: 1, nodes: vec![], outputs: vec![I(0)] };
    let v = emit_verilog(&g, &FunctionSet::full(), &VerilogOptions::named("wire_only")).unwrap();
    assert!(v.contains("module wire_only(input wire [0:0] x, output wire [0:0] y);\n"));
    assert_eq!(body(&v), vec!["assign y[0] = x[0];"]);
    assert!(v.ends_with("endmodule\n"));
}

#[test]
fn nand_body() {
    let fs = FunctionSet::full();
    let nand = fs.position("nand").unwrap();
    let g =
        CircuitGraph { inputs: 2, nodes: vec![FunctionNode { gate: nand, args: [I(0), I(1)] }], outputs: vec![N(0)] };
    let v = emit_verilog(&g, &fs, &VerilogOptions::named("m")).unwrap();
    assert_eq!(body(&v), vec!["wire n0;", "assign n0 = ~(x[0] & x[1]);", "assign y[0] = n0;"]);
}

#[test]
fn gate_shapes() {
    assert_eq!(gate_expression(GateFunction::and().table, "a", "b"), "a & b");
    assert_eq!(gate_expression(GateFunction::or().table, "a", "b"), "a | b");
    assert_eq!(gate_expression(GateFunction::nor().table, "a", "b"), "~(a | b)");
    assert_eq!(gate_expression([false, true, true, false], "a", "b"), "(~a & b) | (a & ~b)");
    assert_eq!(gate_expression([false; 4], "a", "b"), "1'b0");
}

#[test]
fn bad_module_name() {
    let g = CircuitGraph { inputs: 1, nodes: vec![], outputs: vec![I(0)] };
    for name in ["", "9lives", "has space", "a-b"] {
        assert!(matches!(
            emit_verilog(&g, &FunctionSet::full(), &VerilogOptions::named(name)),
            Err(VerilogError::ModuleName(_))
        ));
    }
    assert!(is_identifier("_tiny9"));
}

#[test]
fn port_comments() {
    let g = CircuitGraph { inputs: 2, nodes: vec![], outputs: vec![I(1)] };
    let opts = VerilogOptions {
        module_name: "m".into(),
        include_port_comments: true,
        input_labels: vec!["a[1/1]".into(), "b[1/1]".into()],
        class_codes: vec![("0".into(), "no".into()), ("1".into(), "yes".into())],
        header_lines: vec!["seed 3".into()],
    };
    let v = emit_verilog(&g, &FunctionSet::full(), &opts).unwrap();
    assert!(v.starts_with("// seed 3\n"));
    assert!(v.contains("// x[1]: b[1/1]\n") && v.contains("// y = 1: yes\n"));
    let (h, _) = parse_verilog_subset(&v).unwrap();
    assert_eq!(h.outputs, vec![I(1)]);
}

fn check_round_trip(g: &CircuitGraph, fs: &FunctionSet, data: &Partition) {
    let text = emit_verilog(g, fs, &VerilogOptions::named("dut")).unwrap();
    let (h, hfs) = parse_verilog_subset(&text).unwrap();
    assert_eq!(evaluate_batch(g, fs, data), evaluate_batch(&h, &hfs, data), "{text}");
}

#[test]
fn random_circuits_survive_the_round_trip() {
    let fs = FunctionSet::full();
    let data = random_rows(1, 6, 1000);
    for seed in 0..100 {
        let g = random_graph(seed, 6, 1 + (seed as usize % 40), 3, fs.len());
        check_round_trip(&g, &fs, &data);
    }
}

#[test]
fn custom_tables_survive_the_round_trip() {
    let fs = FunctionSet::new(vec![
        GateFunction::new("xor", [false, true, true, false], 2.5),
        GateFunction::new("zero", [false; 4], 0.0),
        GateFunction::new("one", [true; 4], 0.0),
        GateFunction::new("anb", [false, false, true, false], 2.0),
    ])
    .unwrap();
    let data = random_rows(2, 5, 256);
    for seed in 0..50 {
        let g = random_graph(seed, 5, 12, 2, fs.len());
        check_round_trip(&g, &fs, &data);
    }
}

#[test]
fn emission_is_topological_and_active_only() {
    let fs = FunctionSet::full();
    for seed in 0..30 {
        let g = random_graph(seed, 4, 25, 2, fs.len());
        let text = emit_verilog(&g, &fs, &VerilogOptions::named("m")).unwrap();
        let mut assigned = BTreeSet::new();
        let mut declared = BTreeSet::new();
        for line in body(&text) {
            if let Some(w) = line.strip_prefix("wire n") {
                declared.insert(w.trim_end_matches(';').parse::<usize>().unwrap());
                continue;
            }
            let (lhs, rhs) = line.trim_start_matches("assign ").split_once(" = ").unwrap();
            for tok in rhs.split(|c: char| !c.is_ascii_alphanumeric()) {
                if let Some(j) = tok.strip_prefix('n') {
                    assert!(assigned.contains(&j.parse::<usize>().unwrap()), "{line} before its operands");
                }
            }
            if let Some(j) = lhs.strip_prefix('n') {
                assigned.insert(j.parse::<usize>().unwrap());
            }
        }
        let active: BTreeSet<usize> = active_set(&g).iter().collect();
        assert_eq!(declared, active);
        assert_eq!(assigned, active);
    }
}

#[test]
fn hand_written_expressions() {
    let text = "module h(input wire [2:0] x, output wire [1:0] y);
  wire t, u;
  assign t = (x[0] ^ x[1]) ^ x[2];
  assign u = ~(x[0] & x[1] | t & 1'b1);
  assign y[0] = t;
  assign y[1] = ~u;
endmodule
";
    let (g, fs) = parse_verilog_subset(text).unwrap();
    for v in 0..8usize {
        let x = [v & 1 != 0, v & 2 != 0, v & 4 != 0];
        let t = x[0] ^ x[1] ^ x[2];
        let u = !((x[0] & x[1]) | t);
        assert_eq!(evaluate(&g, &fs, &x), vec![t, !u], "row {v}");
    }
}

#[test]
fn cyclic_assignment_is_rejected() {
    let text = "module c(input wire [0:0] x, output wire [0:0] y);
  wire n0;
  assign n0 = n0 & x[0];
  assign y[0] = n0;
endmodule
";
    assert!(matches!(parse_verilog_subset(text), Err(VerilogError::Circuit(CircuitError::Cycle { .. }))));
}

#[test]
fn unsupported_constructs_name_the_token() {
    let text = "module c(input wire [0:0] x, output wire [0:0] y);\n  always @(x) begin end\nendmodule\n";
    let err = parse_verilog_subset(text).unwrap_err();
    assert_eq!(err, VerilogError::Syntax { line: 2, col: 3, message: "unsupported construct `always`".into() });
    assert!(err.to_string().contains("always"));

    let cases = [
        ("module c(input wire [0:0] x, output wire [0:0] y);\n  assign y[0] = x[1];\nendmodule\n", "out of range"),
        ("module c(input wire [0:0] x, output wire [0:0] y);\n  assign y[0] = q;\nendmodule\n", "undeclared wire `q`"),
        ("module c(input wire [0:0] x, output wire [0:0] y);\nendmodule\n", "y[0] is never assigned"),
        ("module c(input wire [0:0] x, output wire [0:0] y);\n  assign y[0] = x[0] + x[0];\nendmodule\n", "`+`"),
        ("module c(input wire [0:0] x, output wire [0:0] y);\n  assign y[0] = x[0];\n", "missing `endmodule`"),
        (
            "module c(input wire [0:0] x, output wire [0:0] y);\n  wire a;\n  assign y[0] = x[0];\nendmodule\n",
            "never assigned",
        ),
        ("module c(input wire [0:0] x, output wire [0:0] y);\n  assign y[0] = 2'b10;\nendmodule\n", "literal"),
    ];
    for (text, needle) in cases {
        let err = parse_verilog_subset(text).unwrap_err().to_string();
        assert!(err.contains(needle), "{err:?} should mention {needle:?}");
    }
}

#[test]
fn dot_output() {
    let fs = FunctionSet::full();
    let wire = CircuitGraph { inputs: 3, nodes: vec![], outputs: vec![I(0), I(2)] };
    let dot = emit_dot(&wire, &fs);
    assert_eq!(dot.lines().filter(|l| l.contains("shape=box")).count(), 5);
    assert_eq!(dot.matches("->").count(), 2);

    let g = random_graph(3, 4, 30, 2, fs.len());
    let dot = emit_dot(&g, &fs);
    let grey_nodes = dot.lines().filter(|l| l.contains("shape=ellipse") && l.contains("grey")).count();
    assert_eq!(grey_nodes, 30 - active_set(&g).count);
    assert_eq!(dot, emit_dot(&g, &fs));
    assert!(dot.starts_with("digraph circuit {") && dot.ends_with("}\n"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn emission_round_trips(seed in any::<u64>(), inputs in 1usize..8, n in 0usize..60, outputs in 1usize..4) {
        let fs = FunctionSet::full();
        let g = random_graph(seed, inputs, n, outputs, fs.len());
        let data = random_rows(seed, inputs, 130);
        let text = emit_verilog(&g, &fs, &VerilogOptions::named("p")).unwrap();
        let (h, hfs) = parse_verilog_subset(&text).unwrap();
        prop_assert_eq!(evaluate_batch(&g, &fs, &data), evaluate_batch(&h, &hfs, &data));
        // emitting the parsed circuit again is a fixed point up to wire numbering
        let again = emit_verilog(&h, &hfs, &VerilogOptions::named("p")).unwrap();
        prop_assert_eq!(again.lines().count(), text.lines().count());
    }
}
