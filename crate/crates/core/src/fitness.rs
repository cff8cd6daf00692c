//! Classification metrics, the regularized objective and stuck-at fault analysis.
//!
//! The objective combines a primary score `rho` (balanced accuracy) with a
//! secondary penalty `X` normalised into `[0, 1]`:
//!
//! ```text
//! R = a * rho - (1 - a) * X
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{
    active_set, count_active_gates, evaluate_packed, evaluate_packed_in_order, nand2_equivalent, topo_order,
    CircuitGraph, Fault, FunctionSet, PackedOutputs,
};
use crate::encoding::{InvalidCodePolicy, OutputCodec, Partition};

#[derive(Debug, Error, PartialEq)]
pub enum FitnessError {
    #[error("predictions and truth have different lengths ({predicted} vs {truth})")]
    LengthMismatch { predicted: usize, truth: usize },
    #[error("no rows to score")]
    Empty,
}

/// How classes with zero support enter the balanced-accuracy mean.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbsentClasses {
    #[default]
    Exclude,
    /// Count them as recall 0.
    Zero,
}

/// `counts[t * n + p]` is the number of rows of true class `t` predicted as `p`.
/// Predictions outside `0..n` (rejected output codes) are tallied in `rejected`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub n_classes: usize,
    pub counts: Vec<u64>,
    pub rejected: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        ConfusionMatrix { n_classes, counts: vec![0; n_classes * n_classes], rejected: vec![0; n_classes] }
    }

    pub fn from_predictions(predicted: &[usize], truth: &[usize], n_classes: usize) -> Result<Self, FitnessError> {
        if predicted.len() != truth.len() {
            return Err(FitnessError::LengthMismatch { predicted: predicted.len(), truth: truth.len() });
        }
        let mut m = ConfusionMatrix::new(n_classes);
        for (&p, &t) in predicted.iter().zip(truth) {
            m.record(t, p);
        }
        Ok(m)
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        if predicted < self.n_classes {
            self.counts[truth * self.n_classes + predicted] += 1;
        } else {
            self.rejected[truth] += 1;
        }
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.n_classes + predicted]
    }

    pub fn support(&self, class: usize) -> u64 {
        let row = &self.counts[class * self.n_classes..(class + 1) * self.n_classes];
        row.iter().sum::<u64>() + self.rejected[class]
    }

    pub fn total(&self) -> u64 {
        (0..self.n_classes).map(|c| self.support(c)).sum()
    }

    pub fn recall(&self, class: usize) -> Option<f64> {
        let s = self.support(class);
        (s > 0).then(|| self.get(class, class) as f64 / s as f64)
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        (0..self.n_classes).map(|c| self.get(c, c)).sum::<u64>() as f64 / total as f64
    }

    pub fn balanced_accuracy(&self, absent: AbsentClasses) -> f64 {
        let mut sum = 0.0;
        let mut classes = 0usize;
        for c in 0..self.n_classes {
            match (self.recall(c), absent) {
                (Some(r), _) => {
                    sum += r;
                    classes += 1;
                }
                (None, AbsentClasses::Zero) => classes += 1,
                (None, AbsentClasses::Exclude) => {}
            }
        }
        if classes == 0 {
            0.0
        } else {
            sum / classes as f64
        }
    }
}

/// Mean per-class recall over classes present in `truth`. Predicted values
/// outside `0..n_classes` count as wrong.
pub fn balanced_accuracy(predicted: &[usize], truth: &[usize], n_classes: usize) -> Result<f64, FitnessError> {
    if truth.is_empty() {
        return Err(FitnessError::Empty);
    }
    Ok(ConfusionMatrix::from_predictions(predicted, truth, n_classes)?.balanced_accuracy(AbsentClasses::Exclude))
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64, FitnessError> {
    if predicted.len() != truth.len() {
        return Err(FitnessError::LengthMismatch { predicted: predicted.len(), truth: truth.len() });
    }
    if truth.is_empty() {
        return Err(FitnessError::Empty);
    }
    Ok(predicted.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / truth.len() as f64)
}

pub fn regularized_fitness(rho: f64, secondary: f64, a: f64) -> f64 {
    a * rho - (1.0 - a) * secondary
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Secondary {
    #[default]
    None,
    GateCount,
    Nand2,
    StuckAt,
}

impl std::str::FromStr for Secondary {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.replace('-', "_").as_str() {
            "none" => Ok(Secondary::None),
            "gate_count" | "gates" => Ok(Secondary::GateCount),
            "nand2" => Ok(Secondary::Nand2),
            "stuck_at" => Ok(Secondary::StuckAt),
            _ => Err(format!("unknown secondary objective {s:?}")),
        }
    }
}

/// Active gates over genotype size.
pub fn secondary_gate_count(g: &CircuitGraph) -> f64 {
    if g.nodes.is_empty() {
        return 0.0;
    }
    count_active_gates(g) as f64 / g.nodes.len() as f64
}

/// NAND2-equivalent area over the largest possible area `n * max weight`.
pub fn secondary_nand2(g: &CircuitGraph, fs: &FunctionSet) -> f64 {
    let cap = g.nodes.len() as f64 * fs.max_weight();
    if cap <= 0.0 {
        return 0.0;
    }
    (nand2_equivalent(g, fs) / cap).clamp(0.0, 1.0)
}

/// Decoded class per row; rejected codes come back as `codec.n_classes()`.
pub fn decode_outputs(out: &PackedOutputs, codec: &OutputCodec, policy: InvalidCodePolicy) -> Vec<usize> {
    let reject = codec.n_classes();
    match codec.decode_table(policy) {
        Some(table) => (0..out.rows).map(|r| table[out.code(r, codec.bits()) as usize].unwrap_or(reject)).collect(),
        None => (0..out.rows).map(|r| codec.decode_code(out.code(r, codec.bits()), policy).unwrap_or(reject)).collect(),
    }
}

pub fn predict(
    g: &CircuitGraph,
    fs: &FunctionSet,
    data: &Partition,
    codec: &OutputCodec,
    policy: InvalidCodePolicy,
    fault: Option<Fault>,
) -> Vec<usize> {
    decode_outputs(&evaluate_packed(g, fs, data, fault), codec, policy)
}

/// Scoring rules shared by every metric in a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoringRules {
    #[serde(default)]
    pub invalid_codes: InvalidCodePolicy,
    #[serde(default)]
    pub absent_classes: AbsentClasses,
}

impl ScoringRules {
    fn confusion(&self, out: &PackedOutputs, data: &Partition, codec: &OutputCodec) -> ConfusionMatrix {
        let predicted = decode_outputs(out, codec, self.invalid_codes);
        let mut m = ConfusionMatrix::new(codec.n_classes());
        for (&p, &t) in predicted.iter().zip(&data.labels) {
            m.record(t, p);
        }
        m
    }

    fn rho(&self, out: &PackedOutputs, data: &Partition, codec: &OutputCodec) -> f64 {
        self.confusion(out, data, codec).balanced_accuracy(self.absent_classes)
    }
}

/// One row of a fault table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FaultRecord {
    pub node: usize,
    pub stuck_at: bool,
    pub baseline_rho: f64,
    pub faulty_rho: f64,
    /// `baseline_rho - faulty_rho`, unfloored.
    pub delta: f64,
}

/// Balanced accuracy under every single stuck-at fault on an active node,
/// in node order with stuck-at-0 before stuck-at-1.
pub fn fault_table(
    g: &CircuitGraph,
    fs: &FunctionSet,
    data: &Partition,
    codec: &OutputCodec,
    rules: ScoringRules,
) -> Vec<FaultRecord> {
    let order = topo_order(g);
    let baseline = rules.rho(&evaluate_packed_in_order(g, fs, data, &order, None), data, codec);
    active_set(g)
        .iter()
        .flat_map(|node| [false, true].map(|stuck_at| Fault { node, stuck_at }))
        .map(|fault| {
            let faulty = rules.rho(&evaluate_packed_in_order(g, fs, data, &order, Some(fault)), data, codec);
            FaultRecord {
                node: fault.node,
                stuck_at: fault.stuck_at,
                baseline_rho: baseline,
                faulty_rho: faulty,
                delta: baseline - faulty,
            }
        })
        .collect()
}

/// Mean relative balanced-accuracy loss over all single stuck-at faults on
/// active nodes. Zero with no active nodes or a zero baseline.
pub fn stuck_at_vulnerability(
    g: &CircuitGraph,
    fs: &FunctionSet,
    data: &Partition,
    codec: &OutputCodec,
    rules: ScoringRules,
) -> f64 {
    let table = fault_table(g, fs, data, codec, rules);
    match table.first() {
        Some(first) if first.baseline_rho > 0.0 => {
            let base = first.baseline_rho;
            table.iter().map(|f| f.delta.max(0.0) / base).sum::<f64>() / table.len() as f64
        }
        _ => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessReport {
    pub rho: f64,
    pub accuracy: f64,
    pub secondary: f64,
    pub r: f64,
    pub rows: usize,
    pub confusion: ConfusionMatrix,
}

/// Everything needed to score a circuit on a partition.
#[derive(Debug, Clone)]
pub struct Objective {
    pub function_set: FunctionSet,
    pub codec: OutputCodec,
    pub secondary: Secondary,
    pub reg_weight: f64,
    pub rules: ScoringRules,
}

impl Objective {
    pub fn secondary_value(&self, g: &CircuitGraph, data: &Partition) -> f64 {
        match self.secondary {
            Secondary::None => 0.0,
            Secondary::GateCount => secondary_gate_count(g),
            Secondary::Nand2 => secondary_nand2(g, &self.function_set),
            Secondary::StuckAt => stuck_at_vulnerability(g, &self.function_set, data, &self.codec, self.rules),
        }
    }

    pub fn evaluate(&self, g: &CircuitGraph, data: &Partition) -> FitnessReport {
        let out = evaluate_packed(g, &self.function_set, data, None);
        let confusion = self.rules.confusion(&out, data, &self.codec);
        let rho = confusion.balanced_accuracy(self.rules.absent_classes);
        let secondary = self.secondary_value(g, data);
        FitnessReport {
            rho,
            accuracy: confusion.accuracy(),
            secondary,
            r: regularized_fitness(rho, secondary, self.reg_weight),
            rows: data.len(),
            confusion,
        }
    }
}

/// A scalar score to maximise.
pub trait Fitness: Sync {
    fn fitness(&self, g: &CircuitGraph, data: &Partition) -> f64;
}

impl Fitness for Objective {
    fn fitness(&self, g: &CircuitGraph, data: &Partition) -> f64 {
        if self.secondary == Secondary::None && self.reg_weight == 1.0 {
            let out = evaluate_packed(g, &self.function_set, data, None);
            return self.rules.rho(&out, data, &self.codec);
        }
        self.evaluate(g, data).r
    }
}

impl<F: Fn(&CircuitGraph, &Partition) -> f64 + Sync> Fitness for F {
    fn fitness(&self, g: &CircuitGraph, data: &Partition) -> f64 {
        self(g, data)
    }
}

pub fn evaluate_fitness(g: &CircuitGraph, data: &Partition, objective: &Objective) -> FitnessReport {
    objective.evaluate(g, data)
}
