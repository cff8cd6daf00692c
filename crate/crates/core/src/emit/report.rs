//! Plain-text run summaries and the per-generation trace.

use std::fmt::Write as _;

use crate::evolve::{RunReport, TraceEntry};
use crate::fitness::FitnessReport;

fn json_scalar(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Array(items) => items
            .iter()
            .map(|i| i.get("name").map_or_else(|| json_scalar(i), json_scalar))
            .collect::<Vec<_>>()
            .join(","),
        other => other.to_string(),
    }
}

/// Human-readable summary of a finished run. Deterministic for a given report.
pub fn emit_report(rr: &RunReport) -> String {
    let mut out = String::new();
    let w = &mut out;
    writeln!(w, "tiny classifier run report").unwrap();
    writeln!(w).unwrap();
    writeln!(w, "seed                  {}", rr.seed).unwrap();
    writeln!(w, "termination           {} after {} generations", rr.termination_reason, rr.generations_run).unwrap();
    writeln!(w, "best found at         generation {}", rr.best_generation).unwrap();
    writeln!(w, "improvements          {}", rr.improvements).unwrap();
    writeln!(w, "neutral replacements  {}", rr.neutral_replacements).unwrap();
    writeln!(w).unwrap();
    writeln!(w, "input bits            {}", rr.input_bits).unwrap();
    writeln!(w, "output bits           {}", rr.output_bits).unwrap();
    writeln!(w, "active gates          {} of {}", rr.active_gates, rr.best_circuit.nodes.len()).unwrap();
    writeln!(w, "nand2 equivalents     {}", rr.nand2_equivalent).unwrap();
    writeln!(w).unwrap();
    writeln!(w, "{:<12} {:>6} {:>13} {:>9} {:>9}", "partition", "rows", "balanced_acc", "accuracy", "fitness").unwrap();
    let mut row = |name: &str, m: Option<&FitnessReport>| match m {
        Some(m) => writeln!(w, "{name:<12} {:>6} {:>13.4} {:>9.4} {:>9.4}", m.rows, m.rho, m.accuracy, m.r).unwrap(),
        None => writeln!(w, "{name:<12} {:>6} {:>13} {:>9} {:>9}", 0, "-", "-", "-").unwrap(),
    };
    row("train", Some(&rr.metrics.train));
    row("validation", rr.metrics.validation.as_ref());
    row("test", rr.metrics.test.as_ref());
    writeln!(w).unwrap();

    writeln!(w, "classes").unwrap();
    for (k, label) in rr.class_labels.iter().enumerate() {
        writeln!(w, "  {k:<3} {label}").unwrap();
    }
    writeln!(w).unwrap();
    writeln!(w, "hyperparameters").unwrap();
    if let Ok(serde_json::Value::Object(map)) = serde_json::to_value(&rr.hyperparameters) {
        for (k, v) in &map {
            writeln!(w, "  {k:<16} {}", json_scalar(v)).unwrap();
        }
    }
    writeln!(w, "  {:<16} {}", "mutation_rate", rr.hyperparameters.mutation_rate()).unwrap();
    if !rr.warnings.is_empty() {
        writeln!(w).unwrap();
        writeln!(w, "warnings").unwrap();
        for warning in &rr.warnings {
            writeln!(w, "  {warning}").unwrap();
        }
    }
    if let Some(config) = &rr.config {
        writeln!(w).unwrap();
        writeln!(w, "config").unwrap();
        for line in serde_json::to_string_pretty(config).unwrap().lines() {
            writeln!(w, "  {line}").unwrap();
        }
    }
    out
}

/// CSV with one row per generation, generation 0 included.
pub fn trace_csv(trace: &[TraceEntry]) -> String {
    let mut out = String::from("generation,parent_train_fitness,best_val_fitness,active_gates\n");
    for t in trace {
        writeln!(out, "{},{},{},{}", t.generation, t.parent_train_fitness, t.best_val_fitness, t.active_gates).unwrap();
    }
    out
}
