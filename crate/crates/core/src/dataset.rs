//! Tabular CSV loading and deterministic train/validation/test partitioning.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv parse error: {0}")]
    Csv(#[from] csv::Error),
    #[error("ragged row at line {row}: expected {expected} cells, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("label column {0} not found")]
    MissingLabelColumn(String),
    #[error("line {row} has an empty label")]
    MissingLabel { row: usize },
    #[error("need at least 2 distinct labels, found {0}")]
    TooFewClasses(usize),
    #[error("dataset has no rows")]
    Empty,
    #[error("label {label:?} is not one of the known classes")]
    UnknownClass { label: String },
    #[error("invalid split fractions (train={train}, validation={validation})")]
    InvalidFractions { train: f64, validation: f64 },
    #[error("class {class:?} ({rows} rows) gets no training rows under the stratified split")]
    ClassMissingFromTrain { class: String, rows: usize },
}

/// Which column holds the class label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

impl LabelColumn {
    /// Interprets a command-line token: integers are indices, anything else a header name.
    pub fn parse(token: &str) -> Self {
        match token.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(token.to_string()),
        }
    }
}

impl Default for LabelColumn {
    fn default() -> Self {
        LabelColumn::Name("class".into())
    }
}

impl fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelColumn::Index(i) => write!(f, "#{i}"),
            LabelColumn::Name(n) => write!(f, "{n:?}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub has_header: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions { delimiter: b',', has_header: true }
    }
}

/// A single feature column. `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Column::Numeric(_))
    }

    pub fn cell(&self, row: usize) -> Cell<'_> {
        match self {
            Column::Numeric(v) => v[row].map_or(Cell::Missing, Cell::Number),
            Column::Categorical(v) => v[row].as_deref().map_or(Cell::Missing, Cell::Category),
        }
    }
}

/// Borrowed view of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell<'a> {
    Number(f64),
    Category(&'a str),
    Missing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub feature_names: Vec<String>,
    pub columns: Vec<Column>,
    /// Class index per row.
    pub labels: Vec<usize>,
    /// Class tokens in index order (first appearance in the file).
    pub class_names: Vec<String>,
}

impl RawDataset {
    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn row(&self, row: usize) -> Vec<Cell<'_>> {
        self.columns.iter().map(|c| c.cell(row)).collect()
    }

    /// Re-indexes labels against an existing class order, e.g. one saved with an encoder.
    pub fn with_class_order(&self, class_names: &[String]) -> Result<RawDataset, DatasetError> {
        let lookup: HashMap<&str, usize> = class_names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                let name = &self.class_names[l];
                lookup.get(name.as_str()).copied().ok_or_else(|| DatasetError::UnknownClass { label: name.clone() })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(RawDataset {
            feature_names: self.feature_names.clone(),
            columns: self.columns.clone(),
            labels,
            class_names: class_names.to_vec(),
        })
    }
}

pub fn load_csv(path: impl AsRef<Path>, label: &LabelColumn, options: CsvOptions) -> Result<RawDataset, DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
    read_csv(file, label, options)
}

pub fn read_csv<R: Read>(reader: R, label: &LabelColumn, options: CsvOptions) -> Result<RawDataset, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut records = rdr.records();
    let header: Option<Vec<String>> = if options.has_header {
        match records.next() {
            Some(r) => Some(r?.iter().map(str::to_string).collect()),
            None => return Err(DatasetError::Empty),
        }
    } else {
        None
    };

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut width = header.as_ref().map(Vec::len);
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        // a fully blank line is skipped by the csv reader; a line with a lone empty field is not
        if rec.len() == 1 && rec[0].is_empty() && width != Some(1) {
            continue;
        }
        let expected = *width.get_or_insert(rec.len());
        if rec.len() != expected {
            return Err(DatasetError::RaggedRow {
                row: i + 1 + usize::from(options.has_header),
                expected,
                found: rec.len(),
            });
        }
        rows.push(rec.iter().map(str::to_string).collect());
    }
    let width = match width {
        Some(w) if !rows.is_empty() => w,
        _ => return Err(DatasetError::Empty),
    };

    let label_idx = match label {
        LabelColumn::Index(i) if *i < width => *i,
        LabelColumn::Name(n) => header
            .as_ref()
            .and_then(|h| h.iter().position(|c| c == n))
            .ok_or_else(|| DatasetError::MissingLabelColumn(label.to_string()))?,
        _ => return Err(DatasetError::MissingLabelColumn(label.to_string())),
    };

    let mut class_names: Vec<String> = Vec::new();
    let mut class_index: HashMap<String, usize> = HashMap::new();
    let mut labels = Vec::with_capacity(rows.len());
    for (r, row) in rows.iter().enumerate() {
        let token = &row[label_idx];
        if token.is_empty() {
            return Err(DatasetError::MissingLabel { row: r + 1 + usize::from(options.has_header) });
        }
        let next = class_names.len();
        let idx = *class_index.entry(token.clone()).or_insert_with(|| {
            class_names.push(token.clone());
            next
        });
        labels.push(idx);
    }
    if class_names.len() < 2 {
        return Err(DatasetError::TooFewClasses(class_names.len()));
    }

    let mut feature_names = Vec::with_capacity(width - 1);
    let mut columns = Vec::with_capacity(width - 1);
    for c in (0..width).filter(|&c| c != label_idx) {
        feature_names.push(match &header {
            Some(h) => h[c].clone(),
            None => format!("f{c}"),
        });
        columns.push(type_column(rows.iter().map(|r| r[c].as_str())));
    }

    Ok(RawDataset { feature_names, columns, labels, class_names })
}

fn type_column<'a>(cells: impl Iterator<Item = &'a str> + Clone) -> Column {
    let parse = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite());
    let numeric = cells.clone().all(|s| s.is_empty() || parse(s).is_some());
    if numeric {
        Column::Numeric(cells.map(|s| if s.is_empty() { None } else { parse(s) }).collect())
    } else {
        Column::Categorical(cells.map(|s| if s.is_empty() { None } else { Some(s.to_string()) }).collect())
    }
}

/// `train` is the share kept out of the test set; `validation` is the share of
/// that remainder reserved for validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions { train: 0.8, validation: 0.5 }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let ok = self.train > 0.0 && self.train < 1.0 && self.validation >= 0.0 && self.validation < 1.0;
        if ok {
            Ok(())
        } else {
            Err(DatasetError::InvalidFractions { train: self.train, validation: self.validation })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDataset {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
    pub fractions: SplitFractions,
}

// Guards ceil/floor against representation error, e.g. (1 - 0.7) * 10 = 3.0000000000000004.
const ROUNDING_SLACK: f64 = 1e-9;

fn test_count(n: usize, f: &SplitFractions) -> usize {
    (((1.0 - f.train) * n as f64 - ROUNDING_SLACK).ceil().max(0.0) as usize).min(n)
}

fn validation_count(remaining: usize, f: &SplitFractions) -> usize {
    ((f.validation * remaining as f64 + ROUNDING_SLACK).floor() as usize).min(remaining)
}

/// Distributes `total` over buckets proportionally to `weights` (largest remainder,
/// ties to the lower index). Exact integer arithmetic.
fn apportion(total: usize, weights: &[usize]) -> Vec<usize> {
    let sum: usize = weights.iter().sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let mut out: Vec<usize> = weights.iter().map(|&w| total * w / sum).collect();
    let mut rema: Vec<(usize, usize)> = weights.iter().enumerate().map(|(i, &w)| (total * w % sum, i)).collect();
    rema.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let short = total - out.iter().sum::<usize>();
    for &(_, i) in rema.iter().take(short) {
        out[i] += 1;
    }
    out
}

pub fn split(
    raw: &RawDataset,
    fractions: SplitFractions,
    seed: u64,
    stratified: bool,
) -> Result<SplitDataset, DatasetError> {
    split_labels(&raw.labels, &raw.class_names, fractions, seed, stratified)
}

/// Partitions row indices `0..labels.len()`.
///
/// The test partition receives `⌈(1 − train)·n⌉` rows and validation receives
/// `⌊validation·r⌋` of the `r` rows left. Stratified splits apportion both counts
/// over classes by largest remainder, so each class's share of every partition
/// is within one row of exact.
pub fn split_labels(
    labels: &[usize],
    class_names: &[String],
    fractions: SplitFractions,
    seed: u64,
    stratified: bool,
) -> Result<SplitDataset, DatasetError> {
    fractions.validate()?;
    let n = labels.len();
    let n_test = test_count(n, &fractions);
    let n_val = validation_count(n - n_test, &fractions);
    let mut rng = rng::stream(seed, u64::MAX, 0);

    let mut train = Vec::new();
    let mut validation = Vec::new();
    let mut test = Vec::new();

    if stratified {
        let n_classes = class_names.len().max(labels.iter().map(|&l| l + 1).max().unwrap_or(0));
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
        for (i, &l) in labels.iter().enumerate() {
            by_class[l].push(i);
        }
        let sizes: Vec<usize> = by_class.iter().map(Vec::len).collect();
        let test_quota = apportion(n_test, &sizes);
        let rest: Vec<usize> = sizes.iter().zip(&test_quota).map(|(s, t)| s - t).collect();
        let val_quota = apportion(n_val, &rest);
        for (c, rows) in by_class.iter_mut().enumerate() {
            rows.shuffle(&mut rng);
            let (t, v) = (test_quota[c], val_quota[c]);
            if rows.len() >= 3 && rows.len() == t + v {
                let class = class_names.get(c).cloned().unwrap_or_else(|| c.to_string());
                return Err(DatasetError::ClassMissingFromTrain { class, rows: rows.len() });
            }
            test.extend_from_slice(&rows[..t]);
            validation.extend_from_slice(&rows[t..t + v]);
            train.extend_from_slice(&rows[t + v..]);
        }
    } else {
        let mut rows: Vec<usize> = (0..n).collect();
        rows.shuffle(&mut rng);
        test.extend_from_slice(&rows[..n_test]);
        validation.extend_from_slice(&rows[n_test..n_test + n_val]);
        train.extend_from_slice(&rows[n_test + n_val..]);
    }

    train.sort_unstable();
    validation.sort_unstable();
    test.sort_unstable();
    Ok(SplitDataset { train, validation, test, seed, fractions })
}
