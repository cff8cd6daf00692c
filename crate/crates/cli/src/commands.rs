//! The non-evolving subcommands: evaluate, faults, emit and encode-stats.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use tiny_circuits::circuit::{self, CircuitGraph, FunctionSet};
use tiny_circuits::dataset::RawDataset;
use tiny_circuits::emit::{emit_dot, emit_verilog, VerilogOptions};
use tiny_circuits::encoding::{encode_dataset, fit_encoder, EncodedDataset, EncoderDocument, FeatureEncoding};
use tiny_circuits::fitness::{fault_table, stuck_at_vulnerability, FaultRecord, FitnessReport, Objective};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::pipeline::{load_dataset, split_dataset};

fn read(path: &Path, what: &str) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {what} {}: {e}", path.display())))
}

pub fn load_circuit(path: &Path) -> Result<(CircuitGraph, FunctionSet)> {
    circuit::deserialize(&read(path, "circuit")?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn load_encoder(path: &Path) -> Result<EncoderDocument> {
    serde_json::from_str(&read(path, "encoder")?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// The circuit's port widths must match the encoder's input bits and code width.
pub fn check_widths(g: &CircuitGraph, doc: &EncoderDocument) -> Result<()> {
    let (inputs, outputs) = (doc.encoder.total_bits(), doc.output_codec.bits());
    if g.inputs != inputs || g.n_outputs() != outputs {
        return Err(CliError::Consistency(format!(
            "width mismatch: circuit has {} inputs and {} outputs, encoder produces {inputs} input bits and {outputs} output bits",
            g.inputs,
            g.n_outputs()
        )));
    }
    Ok(())
}

/// Loads the configured dataset in the encoder's class order, splits it and encodes it.
pub fn encode_with(cfg: &RunConfig, doc: &EncoderDocument) -> Result<EncodedDataset> {
    let raw = load_dataset(cfg)?;
    let raw: RawDataset = raw
        .with_class_order(doc.output_codec.class_labels())
        .map_err(|e| CliError::Consistency(format!("dataset does not match the encoder: {e}")))?;
    if raw.feature_names.len() != doc.encoder.features.len() {
        return Err(CliError::Consistency(format!(
            "dataset has {} feature columns, encoder expects {}",
            raw.feature_names.len(),
            doc.encoder.features.len()
        )));
    }
    let split = split_dataset(cfg, &raw)?;
    Ok(encode_dataset(&doc.encoder, &raw, &split, &doc.output_codec)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub train: FitnessReport,
    pub validation: Option<FitnessReport>,
    pub test: Option<FitnessReport>,
}

fn objective(cfg: &RunConfig, fs: &FunctionSet, doc: &EncoderDocument) -> Objective {
    Objective {
        function_set: fs.clone(),
        codec: doc.output_codec.clone(),
        secondary: cfg.hyperparameters.secondary,
        reg_weight: cfg.hyperparameters.reg_weight,
        rules: cfg.scoring,
    }
}

pub fn evaluate(cfg: &RunConfig, circuit: &Path, encoder: &Path) -> Result<Evaluation> {
    let (g, fs) = load_circuit(circuit)?;
    let doc = load_encoder(encoder)?;
    check_widths(&g, &doc)?;
    let data = encode_with(cfg, &doc)?;
    let obj = objective(cfg, &fs, &doc);
    let score = |p| (!tiny_circuits::Partition::is_empty(p)).then(|| obj.evaluate(&g, p));
    Ok(Evaluation {
        train: obj.evaluate(&g, &data.train),
        validation: score(&data.validation),
        test: score(&data.test),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PartitionName {
    Train,
    Validation,
    Test,
}

pub struct FaultAnalysis {
    pub records: Vec<FaultRecord>,
    pub vulnerability: f64,
    pub rows: usize,
}

pub fn faults(cfg: &RunConfig, circuit: &Path, encoder: &Path, which: PartitionName) -> Result<FaultAnalysis> {
    let (g, fs) = load_circuit(circuit)?;
    let doc = load_encoder(encoder)?;
    check_widths(&g, &doc)?;
    let data = encode_with(cfg, &doc)?;
    let part = match which {
        PartitionName::Train => &data.train,
        PartitionName::Validation => &data.validation,
        PartitionName::Test => &data.test,
    };
    if part.is_empty() {
        return Err(CliError::Input(format!("the {which:?} partition is empty").to_lowercase()));
    }
    let records = fault_table(&g, &fs, part, &doc.output_codec, cfg.scoring);
    let vulnerability = stuck_at_vulnerability(&g, &fs, part, &doc.output_codec, cfg.scoring);
    Ok(FaultAnalysis { records, vulnerability, rows: part.len() })
}

pub fn fault_csv(records: &[FaultRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["node", "stuck_at", "baseline_balanced_accuracy", "faulty_balanced_accuracy", "delta"])
        .map_err(CliError::internal)?;
    for r in records {
        w.write_record([
            format!("n{}", r.node),
            u8::from(r.stuck_at).to_string(),
            r.baseline_rho.to_string(),
            r.faulty_rho.to_string(),
            r.delta.to_string(),
        ])
        .map_err(CliError::internal)?;
    }
    String::from_utf8(w.into_inner().map_err(CliError::internal)?).map_err(CliError::internal)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EmitFormat {
    Verilog,
    Dot,
    Json,
}

pub fn emit(circuit: &Path, format: EmitFormat, module_name: &str, encoder: Option<&Path>) -> Result<String> {
    let (g, fs) = load_circuit(circuit)?;
    Ok(match format {
        EmitFormat::Json => circuit::serialize(&g, &fs),
        EmitFormat::Dot => emit_dot(&g, &fs),
        EmitFormat::Verilog => {
            let mut opts = VerilogOptions::named(module_name);
            if let Some(path) = encoder {
                let doc = load_encoder(path)?;
                check_widths(&g, &doc)?;
                let codec = &doc.output_codec;
                opts.include_port_comments = true;
                opts.input_labels = doc.encoder.input_bit_labels();
                opts.class_codes =
                    (0..codec.n_classes()).map(|k| (codec.code_string(k), codec.class_labels()[k].clone())).collect();
            }
            emit_verilog(&g, &fs, &opts)?
        }
    })
}

/// Summary of how the configured encoder sees the dataset.
pub fn encode_stats(cfg: &RunConfig) -> Result<String> {
    let raw = load_dataset(cfg)?;
    let split = split_dataset(cfg, &raw)?;
    let enc = fit_encoder(&raw, &split.train, cfg.encoder)?;
    let mut out = String::new();
    let w = &mut out;
    writeln!(w, "dataset      {}", cfg.dataset.path.display()).unwrap();
    writeln!(
        w,
        "rows         {} (train {}, validation {}, test {})",
        raw.n_rows(),
        split.train.len(),
        split.validation.len(),
        split.test.len()
    )
    .unwrap();
    writeln!(w, "encoding     {} with {} bits per input", enc.strategy, enc.bits_per_input).unwrap();
    writeln!(w, "input bits   {}", enc.total_bits()).unwrap();
    writeln!(w).unwrap();
    writeln!(w, "features").unwrap();
    for f in &enc.features {
        let detail = match f {
            FeatureEncoding::Numeric { thresholds, impute, .. } => {
                let t: Vec<String> = thresholds.iter().map(|t| format!("{t}")).collect();
                format!("numeric      thresholds [{}], impute {impute}", t.join(", "))
            }
            FeatureEncoding::Categorical { category_map, impute, .. } => {
                format!("categorical  {} categories, impute {impute:?}", category_map.len())
            }
        };
        let flag = if f.is_degenerate() { "  (degenerate: all-zero bits)" } else { "" };
        writeln!(w, "  {:<20} {detail}{flag}", f.name()).unwrap();
    }
    writeln!(w).unwrap();
    writeln!(w, "classes      {:>8} {:>8} {:>10} {:>8}", "total", "train", "validation", "test").unwrap();
    let count = |rows: &[usize], k: usize| rows.iter().filter(|&&r| raw.labels[r] == k).count();
    let all: Vec<usize> = (0..raw.n_rows()).collect();
    for (k, name) in raw.class_names.iter().enumerate() {
        writeln!(
            w,
            "  {name:<10} {:>8} {:>8} {:>10} {:>8}",
            count(&all, k),
            count(&split.train, k),
            count(&split.validation, k),
            count(&split.test, k)
        )
        .unwrap();
    }
    for warning in &enc.warnings {
        writeln!(w, "warning: {warning}").unwrap();
    }
    Ok(out)
}
