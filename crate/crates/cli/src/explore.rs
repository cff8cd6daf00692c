//! Grid sweeps over the design space, written as a long-form CSV.

use std::collections::HashSet;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;
use tiny_circuits::encoding::Strategy;
use tiny_circuits::FunctionSet;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::pipeline::run_config;

pub const COLUMNS: [&str; 13] = [
    "dataset",
    "n",
    "F",
    "kappa",
    "G",
    "strategy",
    "bits",
    "seed",
    "test_balanced_accuracy",
    "active_gates",
    "generations",
    "encoding",
    "status",
];
/// Leading columns that identify a cell.
const KEY_COLUMNS: usize = 8;

pub const DEFAULT_SEEDS: usize = 5;

/// Value lists to sweep. An empty list holds that setting at the base config's value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Grid {
    pub n: Vec<usize>,
    pub function_set: Vec<String>,
    pub kappa: Vec<usize>,
    pub max_generations: Vec<usize>,
    pub strategy: Vec<Strategy>,
    pub bits: Vec<usize>,
    /// Seeds per cell; `DEFAULT_SEEDS` consecutive seeds from the base seed when empty.
    pub seeds: Vec<u64>,
    pub auto_encode: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub config: RunConfig,
    pub key: Vec<String>,
}

fn or_base<T: Clone>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

fn function_set_name(fs: &FunctionSet) -> String {
    fs.preset_name().map_or_else(|| "custom".to_string(), str::to_string)
}

/// The Cartesian product of the grid, in a fixed order.
pub fn cells(base: &RunConfig, grid: &Grid) -> Result<Vec<Cell>> {
    let hp = &base.hyperparameters;
    let sets: Vec<FunctionSet> = if grid.function_set.is_empty() {
        vec![hp.function_set.clone()]
    } else {
        grid.function_set
            .iter()
            .map(|name| {
                FunctionSet::preset(name).ok_or_else(|| CliError::Input(format!("unknown function set {name:?}")))
            })
            .collect::<Result<_>>()?
    };
    let seeds = if grid.seeds.is_empty() {
        (0..DEFAULT_SEEDS as u64).map(|k| hp.seed.wrapping_add(k)).collect()
    } else {
        grid.seeds.clone()
    };
    let auto = grid.auto_encode || base.auto_encode;
    let strategies: Vec<Option<Strategy>> =
        if auto { vec![None] } else { or_base(&grid.strategy, base.encoder.strategy).into_iter().map(Some).collect() };
    let bits: Vec<Option<usize>> = if auto {
        vec![None]
    } else {
        or_base(&grid.bits, base.encoder.bits_per_input).into_iter().map(Some).collect()
    };

    let mut out = Vec::new();
    for &n in &or_base(&grid.n, hp.n) {
        for fs in &sets {
            for &kappa in &or_base(&grid.kappa, hp.kappa) {
                for &g in &or_base(&grid.max_generations, hp.max_generations) {
                    for &strategy in &strategies {
                        for &b in &bits {
                            for &seed in &seeds {
                                let mut c = base.clone();
                                c.auto_encode = auto;
                                let h = &mut c.hyperparameters;
                                h.n = n;
                                h.function_set = fs.clone();
                                h.kappa = kappa;
                                h.max_generations = g;
                                h.seed = seed;
                                if let (Some(s), Some(b)) = (strategy, b) {
                                    c.encoder.strategy = s;
                                    c.encoder.bits_per_input = b;
                                }
                                c.workers = 1;
                                let key = vec![
                                    base.dataset.path.display().to_string(),
                                    n.to_string(),
                                    function_set_name(fs),
                                    kappa.to_string(),
                                    g.to_string(),
                                    strategy.map_or("auto".into(), |s| s.to_string()),
                                    b.map_or("auto".into(), |b| b.to_string()),
                                    seed.to_string(),
                                ];
                                out.push(Cell { config: c, key });
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Keys of cells already recorded in `path`.
fn existing_keys(path: &Path) -> Result<HashSet<Vec<String>>> {
    let mut keys = HashSet::new();
    if !path.exists() {
        return Ok(keys);
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let header = r.headers().map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    if !header.iter().eq(COLUMNS) {
        return Err(CliError::Consistency(format!(
            "{} has columns [{}], expected [{}]",
            path.display(),
            header.iter().collect::<Vec<_>>().join(","),
            COLUMNS.join(",")
        )));
    }
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        keys.insert(rec.iter().take(KEY_COLUMNS).map(str::to_string).collect());
    }
    Ok(keys)
}

fn csv_line(fields: &[String]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(fields).map_err(CliError::internal)?;
    w.into_inner().map_err(CliError::internal)
}

fn run_cell(cell: &Cell) -> Vec<String> {
    let mut row = cell.key.clone();
    match run_config(&cell.config) {
        Ok(o) => {
            let rr = &o.report;
            let test = rr.metrics.test.as_ref().map_or(String::new(), |m| m.rho.to_string());
            let spec = o.prepared.encoder.spec();
            row.extend([
                test,
                rr.active_gates.to_string(),
                rr.generations_run.to_string(),
                format!("{}/{}", spec.strategy, spec.bits_per_input),
                "ok".to_string(),
            ]);
        }
        Err(e) => row.extend([String::new(), String::new(), String::new(), String::new(), format!("error: {e}")]),
    }
    row
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExploreSummary {
    pub cells: usize,
    pub skipped: usize,
    pub failed: usize,
}

/// Runs every cell not already in `csv_path`, appending one row per finished cell.
/// Cells run in parallel on `base.workers` threads; each cell is deterministic on its own.
pub fn explore(base: &RunConfig, grid: &Grid, csv_path: &Path) -> Result<ExploreSummary> {
    let all = cells(base, grid)?;
    if all.is_empty() {
        return Err(CliError::Input("empty grid".into()));
    }
    for c in &all {
        c.config.validate()?;
    }
    let done = existing_keys(csv_path)?;
    let todo: Vec<&Cell> = all.iter().filter(|c| !done.contains(&c.key)).collect();
    if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Internal(format!("cannot create {}: {e}", dir.display())))?;
    }
    let fresh = !csv_path.exists();
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(csv_path)
        .map_err(|e| CliError::Internal(format!("cannot open {}: {e}", csv_path.display())))?;
    if fresh {
        let header: Vec<String> = COLUMNS.iter().map(|s| s.to_string()).collect();
        file.write_all(&csv_line(&header)?).map_err(CliError::internal)?;
    }
    let file = Mutex::new(file);
    let failed = Mutex::new(0usize);
    let work = |cell: &&Cell| -> Result<()> {
        let row = run_cell(cell);
        if row.last().is_some_and(|s| s != "ok") {
            *failed.lock().unwrap() += 1;
        }
        let line = csv_line(&row)?;
        let mut f = file.lock().unwrap();
        f.write_all(&line).and_then(|_| f.flush()).map_err(CliError::internal)
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(base.workers).build().map_err(CliError::internal)?;
    pool.install(|| todo.par_iter().try_for_each(work))?;
    Ok(ExploreSummary { cells: all.len(), skipped: all.len() - todo.len(), failed: failed.into_inner().unwrap() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_size() {
        let mut base = RunConfig::default();
        base.dataset.path = "d.csv".into();
        let grid = Grid {
            n: vec![50, 300],
            function_set: vec!["full".into(), "nand".into()],
            seeds: vec![1],
            ..Default::default()
        };
        let cells = cells(&base, &grid).unwrap();
        assert_eq!(cells.len(), 4);
        assert_eq!(cells[3].key, vec!["d.csv", "300", "nand", "300", "8000", "quantiles", "2", "1"]);
        let grid = Grid { n: vec![50, 300], ..Default::default() };
        assert_eq!(super::cells(&base, &grid).unwrap().len(), 2 * DEFAULT_SEEDS);
        let auto = Grid { auto_encode: true, strategy: vec![Strategy::Gray], seeds: vec![0], ..Default::default() };
        let c = super::cells(&base, &auto).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(&c[0].key[5..7], ["auto", "auto"]);
    }

    #[test]
    fn unknown_function_set() {
        let grid = Grid { function_set: vec!["xor".into()], ..Default::default() };
        assert!(cells(&RunConfig::default(), &grid).is_err());
    }
}
