//! The run configuration and `--key value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tiny_circuits::dataset::{CsvOptions, LabelColumn, SplitFractions};
use tiny_circuits::emit::is_identifier;
use tiny_circuits::encoding::{EncoderSpec, MAX_BITS_PER_OUTPUT};
use tiny_circuits::evolve::Hyperparameters;
use tiny_circuits::fitness::ScoringRules;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub path: PathBuf,
    pub label: LabelColumn,
    pub delimiter: char,
    pub has_header: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig { path: PathBuf::new(), label: LabelColumn::default(), delimiter: ',', has_header: true }
    }
}

impl DatasetConfig {
    pub fn csv_options(&self) -> CsvOptions {
        CsvOptions { delimiter: self.delimiter as u8, has_header: self.has_header }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub train: f64,
    pub validation: f64,
    /// Defaults to the run seed.
    pub seed: Option<u64>,
    pub stratified: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        let f = SplitFractions::default();
        SplitConfig { train: f.train, validation: f.validation, seed: None, stratified: true }
    }
}

impl SplitConfig {
    pub fn fractions(&self) -> SplitFractions {
        SplitFractions { train: self.train, validation: self.validation }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmitConfig {
    pub verilog: bool,
    pub dot: bool,
    pub report: bool,
    pub port_comments: bool,
    /// Defaults to the run name.
    pub module_name: Option<String>,
}

impl Default for EmitConfig {
    fn default() -> Self {
        EmitConfig { verilog: true, dot: true, report: true, port_comments: true, module_name: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Artifact file stem.
    pub name: String,
    pub dataset: DatasetConfig,
    pub encoder: EncoderSpec,
    /// Try every strategy with 2 and 4 bits and keep the best on validation.
    pub auto_encode: bool,
    /// Output code width; the minimum binary width when unset.
    pub output_bits: Option<usize>,
    pub split: SplitConfig,
    pub hyperparameters: Hyperparameters,
    pub scoring: ScoringRules,
    pub emit: EmitConfig,
    // Neither changes any artifact, so neither is echoed.
    #[serde(skip_serializing)]
    pub out_dir: PathBuf,
    #[serde(skip_serializing)]
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            name: "tiny_classifier".into(),
            dataset: DatasetConfig::default(),
            encoder: EncoderSpec::default(),
            auto_encode: false,
            output_bits: None,
            split: SplitConfig::default(),
            hyperparameters: Hyperparameters::default(),
            scoring: ScoringRules::default(),
            emit: EmitConfig::default(),
            out_dir: PathBuf::from("out"),
            workers: 1,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))
    }

    pub fn split_seed(&self) -> u64 {
        self.split.seed.unwrap_or(self.hyperparameters.seed)
    }

    pub fn module_name(&self) -> &str {
        self.emit.module_name.as_deref().unwrap_or(&self.name)
    }

    /// The config as echoed into artifacts.
    pub fn echo(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Input(m));
        if self.dataset.path.as_os_str().is_empty() {
            return bad("no dataset given; set dataset.path or pass --dataset".into());
        }
        if !self.dataset.delimiter.is_ascii() {
            return bad(format!("delimiter {:?} is not a single ASCII character", self.dataset.delimiter));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad(format!("invalid run name {:?}", self.name));
        }
        if !is_identifier(self.module_name()) {
            return bad(format!("module name {:?} is not a Verilog identifier", self.module_name()));
        }
        self.encoder.validate()?;
        self.split.fractions().validate()?;
        self.hyperparameters.validate()?;
        if let Some(b) = self.output_bits {
            if b == 0 || b > MAX_BITS_PER_OUTPUT {
                return bad(format!("output_bits must be in 1..={MAX_BITS_PER_OUTPUT}, got {b}"));
            }
        }
        Ok(())
    }

    /// Applies `--key value` pairs. Keys are dotted paths (`hyperparameters.n`),
    /// unambiguous field names (`lambda`, `kappa`) or one of the short aliases
    /// (`dataset`, `label`, `strategy`, `bits`, `seed`, `p`, `split-seed`).
    pub fn apply_overrides(&mut self, overrides: &[(String, String)]) -> Result<()> {
        if overrides.is_empty() {
            return Ok(());
        }
        let mut v = self.echo();
        v["out_dir"] = Value::String(self.out_dir.to_string_lossy().into_owned());
        v["workers"] = self.workers.into();
        // fields skipped while unset still need a slot to resolve against
        if v["hyperparameters"].get("p").is_none() {
            v["hyperparameters"]["p"] = Value::Null;
        }
        for (key, raw) in overrides {
            let path = resolve_key(&v, key)?;
            let slot = path.iter().try_fold(&mut v, |node, k| node.get_mut(k.as_str())).expect("resolved path exists");
            *slot = parse_value(slot, &path, raw);
        }
        *self = serde_json::from_value(v).map_err(|e| CliError::Input(format!("invalid override: {e}")))?;
        Ok(())
    }
}

const ALIASES: &[(&str, &str)] = &[
    ("dataset", "dataset.path"),
    ("label", "dataset.label"),
    ("strategy", "encoder.strategy"),
    ("bits", "encoder.bits_per_input"),
    ("seed", "hyperparameters.seed"),
    ("split_seed", "split.seed"),
    ("p", "hyperparameters.p"),
];

fn resolve_key(v: &Value, key: &str) -> Result<Vec<String>> {
    let key = key.replace('-', "_");
    let dotted = ALIASES.iter().find(|(a, _)| *a == key).map_or(key.as_str(), |(_, p)| p);
    if dotted.contains('.') || v.get(dotted).is_some() {
        let path: Vec<String> = dotted.split('.').map(str::to_string).collect();
        let mut node = v;
        for k in &path {
            node = node.get(k).ok_or_else(|| CliError::Input(format!("unknown config key --{key}")))?;
        }
        return Ok(path);
    }
    let mut hits = Vec::new();
    if let Value::Object(top) = v {
        for (section, inner) in top {
            if let Value::Object(fields) = inner {
                if fields.contains_key(dotted) {
                    hits.push(vec![section.clone(), dotted.to_string()]);
                }
            }
        }
    }
    match hits.len() {
        1 => Ok(hits.pop().unwrap()),
        0 => Err(CliError::Input(format!("unknown config key --{key}"))),
        _ => {
            let names: Vec<String> = hits.iter().map(|p| p.join(".")).collect();
            Err(CliError::Input(format!("ambiguous config key --{key}; use one of {}", names.join(", "))))
        }
    }
}

fn parse_value(current: &Value, path: &[String], raw: &str) -> Value {
    let textual = matches!(current, Value::String(_)) && path.last().map(String::as_str) != Some("label");
    if textual {
        return Value::String(raw.to_string());
    }
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}
