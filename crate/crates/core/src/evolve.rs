//! The 1+λ search over circuit graphs.
//!
//! Each generation mutates the parent λ times and scores the children on the
//! training partition. The best child whose fitness is at least the parent's
//! replaces it; accepting equal fitness lets the genotype drift across
//! neutral networks. The parent is scored on the validation partition
//! whenever it changes, and the best validation circuit is what a run returns.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{
    count_active_gates, nand2_equivalent, CircuitGraph, EdgeSlot, FunctionNode, FunctionSet, NodeRef,
};
use crate::encoding::{EncodedDataset, Partition};
use crate::fitness::{Fitness, FitnessReport, Objective, ScoringRules, Secondary};
use crate::rng::{self, StreamRng};

#[derive(Debug, Error, PartialEq)]
pub enum EvolveError {
    #[error("invalid hyperparameter: {0}")]
    Hyperparameter(String),
    #[error("training partition is empty")]
    EmptyTraining,
    #[error("dataset has {data} input bits but the run expects {expected}")]
    Width { data: usize, expected: usize },
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hyperparameters {
    /// Children per generation.
    pub lambda: usize,
    /// Function nodes in the genotype.
    pub n: usize,
    /// Per-node and per-edge mutation probability; `1/n` when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    pub function_set: FunctionSet,
    pub gamma: f64,
    pub kappa: usize,
    pub max_generations: usize,
    pub reg_weight: f64,
    pub secondary: Secondary,
    pub seed: u64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            lambda: 4,
            n: 300,
            p: None,
            function_set: FunctionSet::full(),
            gamma: 0.01,
            kappa: 300,
            max_generations: 8000,
            reg_weight: 1.0,
            secondary: Secondary::None,
            seed: 0,
        }
    }
}

impl Hyperparameters {
    pub fn mutation_rate(&self) -> f64 {
        self.p.unwrap_or(if self.n == 0 { 1.0 } else { 1.0 / self.n as f64 })
    }

    pub fn validate(&self) -> Result<(), EvolveError> {
        let bad = |msg: String| Err(EvolveError::Hyperparameter(msg));
        let p = self.mutation_rate();
        if self.lambda < 1 {
            return bad("lambda must be at least 1".into());
        }
        if !(p > 0.0 && p <= 1.0) {
            return bad(format!("mutation rate must be in (0, 1], got {p}"));
        }
        if self.gamma.is_nan() || self.gamma < 0.0 {
            return bad(format!("gamma must be non-negative, got {}", self.gamma));
        }
        if self.kappa < 1 {
            return bad("kappa must be at least 1".into());
        }
        if self.max_generations < 1 {
            return bad("max_generations must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.reg_weight) {
            return bad(format!("reg_weight must be in [0, 1], got {}", self.reg_weight));
        }
        Ok(())
    }
}

/// Builds a random genotype. Node `v_i` reads only inputs and earlier nodes,
/// so the result is acyclic by construction.
pub fn init_random<R: Rng>(inputs: usize, outputs: usize, n: usize, fs: &FunctionSet, rng: &mut R) -> CircuitGraph {
    assert!(inputs >= 1 && outputs >= 1, "need at least one input and one output");
    let pick = |rng: &mut R, limit: usize| {
        let k = rng.random_range(0..inputs + limit);
        if k < inputs {
            NodeRef::Input(k)
        } else {
            NodeRef::Node(k - inputs)
        }
    };
    let nodes = (0..n)
        .map(|i| {
            let gate = rng.random_range(0..fs.len());
            let args = [pick(rng, i), pick(rng, i)];
            FunctionNode { gate, args }
        })
        .collect();
    let outputs = (0..outputs).map(|_| pick(rng, n)).collect();
    CircuitGraph { inputs, nodes, outputs }
}

/// Draws `(m_n, m_e) ~ (B(n, p), B(|E|, p))`.
pub fn mutation_counts<R: Rng>(n: usize, edges: usize, p: f64, rng: &mut R) -> (usize, usize) {
    let draw = |trials: usize, rng: &mut R| {
        Binomial::new(trials as u64, p.clamp(0.0, 1.0)).map_or(0, |b| b.sample(rng) as usize)
    };
    let m_n = draw(n, rng);
    let m_e = draw(edges, rng);
    (m_n, m_e)
}

/// Replaces a random node's gate with a different one. No-op when `n = 0` or `|F| = 1`.
pub fn mutate_node<R: Rng>(g: &mut CircuitGraph, n_gates: usize, rng: &mut R) {
    if g.nodes.is_empty() || n_gates < 2 {
        return;
    }
    let j = rng.random_range(0..g.nodes.len());
    let cur = g.nodes[j].gate;
    let mut next = rng.random_range(0..n_gates - 1);
    if next >= cur {
        next += 1;
    }
    g.nodes[j].gate = next;
}

/// Legal new targets for an edge: every input or function node except the
/// current target and any node with a path to the edge's owner.
pub fn edge_candidates(g: &CircuitGraph, edge: EdgeSlot) -> Vec<NodeRef> {
    let current = g.target(edge);
    let mut blocked = vec![false; g.nodes.len()];
    if let EdgeSlot::Node { node: owner, .. } = edge {
        // owner and everything that (transitively) reads it
        let readers = g.consumers();
        let mut stack = vec![owner];
        blocked[owner] = true;
        while let Some(v) = stack.pop() {
            for &r in &readers[v] {
                if !blocked[r] {
                    blocked[r] = true;
                    stack.push(r);
                }
            }
        }
    }
    (0..g.inputs)
        .map(NodeRef::Input)
        .chain((0..g.nodes.len()).filter(|&j| !blocked[j]).map(NodeRef::Node))
        .filter(|&r| r != current)
        .collect()
}

/// Redirects a random edge to a uniform legal target; abandoned when none exists.
/// Returns whether the graph changed.
pub fn mutate_edge<R: Rng>(g: &mut CircuitGraph, rng: &mut R) -> bool {
    let edges = g.edge_count();
    if edges == 0 {
        return false;
    }
    let edge = g.edge_slot(rng.random_range(0..edges));
    let candidates = edge_candidates(g, edge);
    match candidates.len() {
        0 => false,
        k => {
            g.set_target(edge, candidates[rng.random_range(0..k)]);
            true
        }
    }
}

/// Applies `B(n, p)` node mutations and `B(|E|, p)` edge mutations in a shuffled order.
pub fn mutate<R: Rng>(parent: &CircuitGraph, fs: &FunctionSet, p: f64, rng: &mut R) -> CircuitGraph {
    let mut child = parent.clone();
    let (m_n, m_e) = mutation_counts(child.nodes.len(), child.edge_count(), p, rng);
    let mut tokens: Vec<bool> = std::iter::repeat_n(true, m_n).chain(std::iter::repeat_n(false, m_e)).collect();
    tokens.shuffle(rng);
    for is_node in tokens {
        if is_node {
            mutate_node(&mut child, fs.len(), rng);
        } else {
            mutate_edge(&mut child, rng);
        }
    }
    child
}

/// Index of the child that replaces the parent, if any: the highest fitness
/// among children scoring at least `parent`, ties broken uniformly.
pub fn select_child<R: Rng>(parent: f64, children: &[f64], rng: &mut R) -> Option<usize> {
    let best = children.iter().copied().filter(|&f| f >= parent).fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = (0..children.len()).filter(|&i| children[i] >= parent && children[i] == best).collect();
    match tied.len() {
        0 => None,
        1 => Some(tied[0]),
        k => Some(tied[rng.random_range(0..k)]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    Stalled,
    MaxGenerations,
}

impl std::fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TerminationReason::Stalled => "stalled",
            TerminationReason::MaxGenerations => "max_generations",
        })
    }
}

/// What happened to the parent in a generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Kept,
    /// Replaced by a different genotype of equal fitness.
    Neutral,
    Improved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub generation: usize,
    pub parent_train_fitness: f64,
    pub best_val_fitness: f64,
    pub active_gates: usize,
    pub selection: Selection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionMetrics {
    pub train: FitnessReport,
    pub validation: Option<FitnessReport>,
    pub test: Option<FitnessReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub termination_reason: TerminationReason,
    pub generations_run: usize,
    pub trace: Vec<TraceEntry>,
    pub best_circuit: CircuitGraph,
    pub function_set: FunctionSet,
    pub best_generation: usize,
    pub active_gates: usize,
    pub nand2_equivalent: f64,
    pub neutral_replacements: usize,
    pub improvements: usize,
    pub metrics: PartitionMetrics,
    pub input_bits: usize,
    pub output_bits: usize,
    pub class_labels: Vec<String>,
    pub seed: u64,
    pub hyperparameters: Hyperparameters,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    /// Resolved configuration of the front end that launched the run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Threads used to score children; 1 runs inline, 0 uses every core.
    pub workers: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { workers: 1 }
    }
}

struct Search<'a, F: Fitness> {
    hp: &'a Hyperparameters,
    fitness: &'a F,
    train: &'a Partition,
    validation: &'a Partition,
    p: f64,
    out_bits: usize,
}

impl<F: Fitness> Search<'_, F> {
    fn validation_fitness(&self, g: &CircuitGraph, train_fitness: f64) -> f64 {
        if self.validation.is_empty() {
            train_fitness
        } else {
            self.fitness.fitness(g, self.validation)
        }
    }

    fn child(&self, parent: &CircuitGraph, generation: usize, i: usize) -> (CircuitGraph, f64) {
        let mut r = rng::stream(self.hp.seed, generation as u64, i as u64 + 1);
        let child = mutate(parent, &self.hp.function_set, self.p, &mut r);
        let f = self.fitness.fitness(&child, self.train);
        (child, f)
    }

    fn run(&self, pool: Option<&rayon::ThreadPool>) -> (Vec<TraceEntry>, TerminationReason, EvolutionState) {
        let hp = self.hp;
        let mut init_rng: StreamRng = rng::stream(hp.seed, 0, 0);
        let parent = init_random(self.train.n_inputs(), self.out_bits, hp.n, &hp.function_set, &mut init_rng);
        let fit = self.fitness.fitness(&parent, self.train);
        let val = self.validation_fitness(&parent, fit);
        let mut state = EvolutionState::new(parent, fit, val);
        let mut trace = vec![state.trace_entry(Selection::Kept)];

        let mut reason = TerminationReason::MaxGenerations;
        for generation in 1..=hp.max_generations {
            state.generation = generation;
            let parent = &state.parent;
            let children: Vec<(CircuitGraph, f64)> = match pool {
                Some(pool) => {
                    pool.install(|| (0..hp.lambda).into_par_iter().map(|i| self.child(parent, generation, i)).collect())
                }
                None => (0..hp.lambda).map(|i| self.child(parent, generation, i)).collect(),
            };
            let scores: Vec<f64> = children.iter().map(|c| c.1).collect();
            let mut gen_rng = rng::stream(hp.seed, generation as u64, 0);
            let mut selection = Selection::Kept;
            if let Some(i) = select_child(state.parent_train_fitness, &scores, &mut gen_rng) {
                let (child, f) = children.into_iter().nth(i).unwrap();
                if f > state.parent_train_fitness {
                    selection = Selection::Improved;
                } else if child != state.parent {
                    selection = Selection::Neutral;
                }
                if child != state.parent {
                    let val = self.validation_fitness(&child, f);
                    state.replace_parent(child, f, val);
                }
            }
            let stalled = state.update_stall(hp.gamma, hp.kappa);
            trace.push(state.trace_entry(selection));
            if stalled {
                reason = TerminationReason::Stalled;
                break;
            }
        }
        (trace, reason, state)
    }
}

/// Everything the search carries from one generation to the next. The
/// random state is not stored: every draw comes from a stream keyed by
/// seed, generation and child index.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionState {
    pub parent: CircuitGraph,
    pub parent_train_fitness: f64,
    pub best_validation_fitness: f64,
    pub best_circuit: CircuitGraph,
    pub best_generation: usize,
    /// Best validation fitness at the last stall reset.
    pub baseline: f64,
    pub stall_counter: usize,
    pub generation: usize,
}

impl EvolutionState {
    pub fn new(parent: CircuitGraph, train_fitness: f64, validation_fitness: f64) -> Self {
        EvolutionState {
            best_circuit: parent.clone(),
            parent,
            parent_train_fitness: train_fitness,
            best_validation_fitness: validation_fitness,
            best_generation: 0,
            baseline: validation_fitness,
            stall_counter: 0,
            generation: 0,
        }
    }

    /// Installs a new parent and keeps it as the best circuit if its
    /// validation fitness beats every earlier one.
    pub fn replace_parent(&mut self, parent: CircuitGraph, train_fitness: f64, validation_fitness: f64) {
        if validation_fitness > self.best_validation_fitness {
            self.best_validation_fitness = validation_fitness;
            self.best_circuit = parent.clone();
            self.best_generation = self.generation;
        }
        self.parent = parent;
        self.parent_train_fitness = train_fitness;
    }

    /// Advances the stall window by one generation and reports whether it has run out.
    /// The window restarts whenever the best validation fitness has climbed at
    /// least `gamma` above the value at the previous restart.
    pub fn update_stall(&mut self, gamma: f64, kappa: usize) -> bool {
        // slack absorbs rounding in sums of per-class recalls
        if self.best_validation_fitness + 1e-12 >= self.baseline + gamma {
            self.baseline = self.best_validation_fitness;
            self.stall_counter = 0;
        } else {
            self.stall_counter += 1;
        }
        self.stall_counter >= kappa
    }

    fn trace_entry(&self, selection: Selection) -> TraceEntry {
        TraceEntry {
            generation: self.generation,
            parent_train_fitness: self.parent_train_fitness,
            best_val_fitness: self.best_validation_fitness,
            active_gates: count_active_gates(&self.parent),
            selection,
        }
    }
}

/// Runs the search with an arbitrary fitness function. Metrics in the report
/// are computed with `objective`.
pub fn run_with<F: Fitness>(
    data: &EncodedDataset,
    hp: &Hyperparameters,
    fitness: &F,
    objective: &Objective,
    options: RunOptions,
) -> Result<RunReport, EvolveError> {
    hp.validate()?;
    if data.train.is_empty() {
        return Err(EvolveError::EmptyTraining);
    }
    for part in [&data.train, &data.validation, &data.test] {
        if part.n_inputs() != data.n_inputs {
            return Err(EvolveError::Width { data: part.n_inputs(), expected: data.n_inputs });
        }
    }
    let mut warnings = Vec::new();
    if data.validation.is_empty() {
        warnings
            .push("validation partition is empty; best-circuit tracking and termination use training fitness".into());
    }
    let search = Search {
        hp,
        fitness,
        train: &data.train,
        validation: &data.validation,
        p: hp.mutation_rate(),
        out_bits: data.codec.bits(),
    };
    let pool = match options.workers {
        1 => None,
        w => {
            Some(rayon::ThreadPoolBuilder::new().num_threads(w).build().map_err(|e| EvolveError::Pool(e.to_string()))?)
        }
    };
    let (trace, reason, state) = search.run(pool.as_ref());
    let EvolutionState { best_circuit: best, best_generation, .. } = state;

    let score = |part: &Partition| (!part.is_empty()).then(|| objective.evaluate(&best, part));
    let metrics = PartitionMetrics {
        train: objective.evaluate(&best, &data.train),
        validation: score(&data.validation),
        test: score(&data.test),
    };
    let neutral_replacements = trace.iter().filter(|t| t.selection == Selection::Neutral).count();
    let improvements = trace.iter().filter(|t| t.selection == Selection::Improved).count();
    Ok(RunReport {
        termination_reason: reason,
        generations_run: trace.len() - 1,
        trace,
        active_gates: count_active_gates(&best),
        nand2_equivalent: nand2_equivalent(&best, &hp.function_set),
        best_circuit: best,
        function_set: hp.function_set.clone(),
        best_generation,
        neutral_replacements,
        improvements,
        metrics,
        input_bits: data.n_inputs,
        output_bits: data.codec.bits(),
        class_labels: data.codec.class_labels().to_vec(),
        seed: hp.seed,
        hyperparameters: hp.clone(),
        warnings,
        config: None,
    })
}

/// Runs the search with the standard objective built from `hp`.
pub fn run(
    data: &EncodedDataset,
    hp: &Hyperparameters,
    rules: ScoringRules,
    options: RunOptions,
) -> Result<RunReport, EvolveError> {
    let objective = Objective {
        function_set: hp.function_set.clone(),
        codec: data.codec.clone(),
        secondary: hp.secondary,
        reg_weight: hp.reg_weight,
        rules,
    };
    run_with(data, hp, &objective, &objective, options)
}
