//! Evolve tiny combinational classifier circuits from tabular data.
//!
//! The pipeline runs in five stages, each in its own module:
//!
//! - [`dataset`] loads CSV data and produces deterministic train/validation/test splits.
//! - [`encoding`] binarizes feature columns and encodes class indices as output bit codes.
//! - [`circuit`] holds the acyclic gate-graph genotype and its bit-parallel evaluator.
//! - [`evolve`] runs the 1+λ search with neutral drift and stall-based termination.
//! - [`fitness`] scores circuits (balanced accuracy, regularized objectives, stuck-at faults).
//! - [`emit`] writes Verilog, DOT and text reports, and reads the emitted Verilog back.

pub mod circuit;
pub mod dataset;
pub mod emit;
pub mod encoding;
pub mod evolve;
pub mod fitness;
pub mod rng;

pub use circuit::{CircuitGraph, FunctionNode, FunctionSet, GateFunction, NodeRef};
pub use dataset::{RawDataset, SplitDataset, SplitFractions};
pub use encoding::{EncodedDataset, EncoderSpec, FittedEncoder, OutputCodec, Partition, Strategy};
pub use evolve::{Hyperparameters, RunReport};
pub use fitness::{FitnessReport, Objective, Secondary};
