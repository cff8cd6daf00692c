//! Text artifacts: Verilog, DOT and run reports.

mod dot;
mod report;
mod verilog;

pub use dot::emit_dot;
pub use report::{emit_report, trace_csv};
pub use verilog::{emit_verilog, gate_expression, is_identifier, parse_verilog_subset, VerilogError, VerilogOptions};

#[cfg(test)]
mod tests;
