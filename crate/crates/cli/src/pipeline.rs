//! Dataset → encoding → evolution, and the artifacts a run leaves behind.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use tiny_circuits::circuit;
use tiny_circuits::dataset::{self, RawDataset, SplitDataset};
use tiny_circuits::emit::{emit_dot, emit_report, emit_verilog, trace_csv, VerilogOptions};
use tiny_circuits::encoding::{
    encode_dataset, fit_encoder, make_output_codec, EncodedDataset, EncoderDocument, EncoderSpec, FittedEncoder,
    Strategy,
};
use tiny_circuits::evolve::{self, RunOptions, RunReport};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

/// Bit widths tried by auto-encoding.
pub const AUTO_BITS: [usize; 2] = [2, 4];

pub fn auto_encode_candidates() -> Vec<EncoderSpec> {
    Strategy::ALL
        .into_iter()
        .flat_map(|strategy| AUTO_BITS.map(|bits_per_input| EncoderSpec { strategy, bits_per_input }))
        .collect()
}

pub fn load_dataset(cfg: &RunConfig) -> Result<RawDataset> {
    Ok(dataset::load_csv(&cfg.dataset.path, &cfg.dataset.label, cfg.dataset.csv_options())?)
}

pub fn split_dataset(cfg: &RunConfig, raw: &RawDataset) -> Result<SplitDataset> {
    Ok(dataset::split(raw, cfg.split.fractions(), cfg.split_seed(), cfg.split.stratified)?)
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub encoder: FittedEncoder,
    pub data: EncodedDataset,
}

impl Prepared {
    pub fn document(&self) -> EncoderDocument {
        EncoderDocument { encoder: self.encoder.clone(), output_codec: self.data.codec.clone() }
    }
}

/// Fits the encoder on the training rows and encodes every partition.
pub fn prepare(cfg: &RunConfig, raw: &RawDataset, split: &SplitDataset, spec: EncoderSpec) -> Result<Prepared> {
    let encoder = fit_encoder(raw, &split.train, spec)?;
    let codec = make_output_codec(raw.n_classes(), cfg.output_bits)?.with_labels(raw.class_names.clone())?;
    let data = encode_dataset(&encoder, raw, split, &codec)?;
    Ok(Prepared { encoder, data })
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub prepared: Prepared,
    pub report: RunReport,
}

fn pool(workers: usize) -> Result<Option<rayon::ThreadPool>> {
    if workers == 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().map(Some).map_err(CliError::internal)
}

/// Validation balanced accuracy, or training when there is no validation data.
fn selection_score(rr: &RunReport) -> f64 {
    rr.metrics.validation.as_ref().unwrap_or(&rr.metrics.train).rho
}

/// Runs the configured pipeline. Artifacts are not written.
pub fn run_config(cfg: &RunConfig) -> Result<Outcome> {
    cfg.validate()?;
    let raw = load_dataset(cfg)?;
    let split = split_dataset(cfg, &raw)?;
    let hp = &cfg.hyperparameters;

    let mut outcome = if cfg.auto_encode {
        let specs = auto_encode_candidates();
        let one = |spec: &EncoderSpec| -> Result<Outcome> {
            let prepared = prepare(cfg, &raw, &split, *spec)?;
            let report = evolve::run(&prepared.data, hp, cfg.scoring, RunOptions { workers: 1 })?;
            Ok(Outcome { prepared, report })
        };
        let runs: Vec<Result<Outcome>> = match pool(cfg.workers)? {
            Some(p) => p.install(|| specs.par_iter().map(one).collect()),
            None => specs.iter().map(one).collect(),
        };
        let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
        let mut best = 0;
        for (i, r) in runs.iter().enumerate() {
            if selection_score(&r.report) > selection_score(&runs[best].report) {
                best = i;
            }
        }
        let scores: Vec<String> = runs
            .iter()
            .map(|r| {
                let s = r.prepared.encoder.spec();
                format!("{}/{}={:.4}", s.strategy, s.bits_per_input, selection_score(&r.report))
            })
            .collect();
        let mut chosen = runs.into_iter().nth(best).unwrap();
        let spec = chosen.prepared.encoder.spec();
        chosen.report.warnings.push(format!(
            "auto-encode chose {}/{} by validation balanced accuracy ({})",
            spec.strategy,
            spec.bits_per_input,
            scores.join(", ")
        ));
        chosen
    } else {
        let prepared = prepare(cfg, &raw, &split, cfg.encoder)?;
        let report = evolve::run(&prepared.data, hp, cfg.scoring, RunOptions { workers: cfg.workers })?;
        Outcome { prepared, report }
    };
    let mut warnings = outcome.prepared.encoder.warnings.clone();
    warnings.append(&mut outcome.report.warnings);
    outcome.report.warnings = warnings;
    outcome.report.config = Some(cfg.echo());
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtifactPaths {
    pub circuit: PathBuf,
    pub encoder: PathBuf,
    pub run: PathBuf,
    pub trace: PathBuf,
    pub config: PathBuf,
    pub verilog: Option<PathBuf>,
    pub dot: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

impl ArtifactPaths {
    pub fn new(dir: &Path, name: &str, cfg: &RunConfig) -> Self {
        let file = |ext: &str| dir.join(format!("{name}.{ext}"));
        ArtifactPaths {
            circuit: file("circuit.json"),
            encoder: file("encoder.json"),
            run: file("run.json"),
            trace: file("trace.csv"),
            config: file("config.json"),
            verilog: cfg.emit.verilog.then(|| file("v")),
            dot: cfg.emit.dot.then(|| file("dot")),
            report: cfg.emit.report.then(|| file("report.txt")),
        }
    }

    pub fn all(&self) -> Vec<&Path> {
        let mut v = vec![&*self.circuit, &*self.encoder, &*self.run, &*self.trace, &*self.config];
        v.extend([&self.verilog, &self.dot, &self.report].into_iter().flatten().map(PathBuf::as_path));
        v
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))
}

pub fn pretty<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("artifact serializes");
    s.push('\n');
    s
}

fn compact(v: &serde_json::Value) -> String {
    serde_json::to_string(v).expect("json value serializes")
}

pub fn verilog_text(cfg: &RunConfig, outcome: &Outcome) -> Result<String> {
    let rr = &outcome.report;
    let codec = &outcome.prepared.data.codec;
    let opts = VerilogOptions {
        module_name: cfg.module_name().to_string(),
        include_port_comments: cfg.emit.port_comments,
        input_labels: outcome.prepared.encoder.input_bit_labels(),
        class_codes: (0..codec.n_classes()).map(|k| (codec.code_string(k), codec.class_labels()[k].clone())).collect(),
        header_lines: vec![format!("seed {}", rr.seed), format!("config {}", compact(&cfg.echo()))],
    };
    Ok(emit_verilog(&rr.best_circuit, &rr.function_set, &opts)?)
}

/// Writes every artifact of a run into `cfg.out_dir`.
pub fn write_artifacts(cfg: &RunConfig, outcome: &Outcome) -> Result<ArtifactPaths> {
    fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| CliError::Internal(format!("cannot create {}: {e}", cfg.out_dir.display())))?;
    let paths = ArtifactPaths::new(&cfg.out_dir, &cfg.name, cfg);
    let rr = &outcome.report;

    write(&paths.circuit, &circuit::serialize(&rr.best_circuit, &rr.function_set))?;
    write(&paths.encoder, &pretty(&outcome.prepared.document()))?;
    write(&paths.run, &pretty(rr))?;
    write(&paths.trace, &trace_csv(&rr.trace))?;
    write(&paths.config, &pretty(&cfg.echo()))?;
    if let Some(p) = &paths.verilog {
        write(p, &verilog_text(cfg, outcome)?)?;
    }
    if let Some(p) = &paths.dot {
        let dot = emit_dot(&rr.best_circuit, &rr.function_set);
        write(p, &format!("// seed {}\n// config {}\n{dot}", rr.seed, compact(&cfg.echo())))?;
    }
    if let Some(p) = &paths.report {
        write(p, &emit_report(rr))?;
    }
    Ok(paths)
}
