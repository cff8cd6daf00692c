//! Feature binarization and class output codes.
//!
//! A feature value is first mapped to a bucket index and then to a fixed-width
//! bit group. The four named strategies factor into a bucketer and a codec:
//!
//! | strategy       | bucketer        | buckets | codec                 |
//! |----------------|-----------------|---------|-----------------------|
//! | `quantization` | equal width     | 2^b     | b-bit binary          |
//! | `quantiles`    | equal frequency | 2^b     | b-bit binary          |
//! | `gray`         | equal width     | 2^b     | b-bit reflected Gray  |
//! | `one_hot`      | equal width     | b       | b-bit one-hot         |
//!
//! Bits are most-significant first within a feature and features are
//! concatenated in column order.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Cell, Column, RawDataset, SplitDataset};

#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("cannot fit an encoder on zero training rows")]
    EmptyTraining,
    #[error("bits_per_input must be in 1..={max}, got {got}")]
    BitsPerInput { got: usize, max: usize },
    #[error("bits_per_output {bits} cannot hold {n_classes} classes (need at least {needed})")]
    OutputTooNarrow { bits: usize, n_classes: usize, needed: usize },
    #[error("output codes must be distinct and fit in {bits} bits")]
    InvalidCodes { bits: usize },
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("dataset has {found} features but the encoder expects {expected}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("feature {name:?} is {found} in the data but the encoder was fitted on a {expected} column")]
    KindMismatch { name: String, expected: &'static str, found: &'static str },
}

pub const MAX_BITS_PER_INPUT: usize = 16;
pub const MAX_BITS_PER_OUTPUT: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Quantization,
    Quantiles,
    OneHot,
    Gray,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bucketer {
    EqualWidth,
    EqualFrequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Codec {
    Binary,
    Gray,
    OneHot,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Quantization, Strategy::Quantiles, Strategy::OneHot, Strategy::Gray];

    pub fn bucketer(self) -> Bucketer {
        match self {
            Strategy::Quantiles => Bucketer::EqualFrequency,
            _ => Bucketer::EqualWidth,
        }
    }

    pub fn codec(self) -> Codec {
        match self {
            Strategy::Quantization | Strategy::Quantiles => Codec::Binary,
            Strategy::Gray => Codec::Gray,
            Strategy::OneHot => Codec::OneHot,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Quantization => "quantization",
            Strategy::Quantiles => "quantiles",
            Strategy::OneHot => "one_hot",
            Strategy::Gray => "gray",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "quantization" => Ok(Strategy::Quantization),
            "quantiles" => Ok(Strategy::Quantiles),
            "one_hot" | "onehot" => Ok(Strategy::OneHot),
            "gray" => Ok(Strategy::Gray),
            _ => Err(format!("unknown encoding strategy {s:?}")),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderSpec {
    pub strategy: Strategy,
    pub bits_per_input: usize,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        EncoderSpec { strategy: Strategy::Quantiles, bits_per_input: 2 }
    }
}

impl EncoderSpec {
    pub fn new(strategy: Strategy, bits_per_input: usize) -> Result<Self, EncodingError> {
        let spec = EncoderSpec { strategy, bits_per_input };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), EncodingError> {
        if (1..=MAX_BITS_PER_INPUT).contains(&self.bits_per_input) {
            Ok(())
        } else {
            Err(EncodingError::BitsPerInput { got: self.bits_per_input, max: MAX_BITS_PER_INPUT })
        }
    }

    pub fn bucket_count(&self) -> usize {
        match self.strategy.codec() {
            Codec::OneHot => self.bits_per_input,
            _ => 1 << self.bits_per_input,
        }
    }
}

/// Writes the `bits`-wide code of bucket `k` into `out` (MSB first).
pub fn write_code(codec: Codec, k: usize, out: &mut [bool]) {
    let bits = out.len();
    match codec {
        Codec::Binary | Codec::Gray => {
            let v = if codec == Codec::Gray { gray_code(k) } else { k };
            for (j, slot) in out.iter_mut().enumerate() {
                *slot = (v >> (bits - 1 - j)) & 1 == 1;
            }
        }
        Codec::OneHot => {
            for (j, slot) in out.iter_mut().enumerate() {
                *slot = j == k;
            }
        }
    }
}

pub fn gray_code(k: usize) -> usize {
    k ^ (k >> 1)
}

pub fn gray_decode(mut g: usize) -> usize {
    let mut k = g;
    while g > 1 {
        g >>= 1;
        k ^= g;
    }
    k
}

/// Empirical quantile of sorted data, linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Per-feature fitted state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeatureEncoding {
    Numeric {
        name: String,
        /// Non-decreasing; a value `v` lands in bucket `#{t : t < v}`.
        thresholds: Vec<f64>,
        impute: f64,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        degenerate: bool,
    },
    Categorical {
        name: String,
        category_map: BTreeMap<String, usize>,
        impute: String,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        degenerate: bool,
    },
}

impl FeatureEncoding {
    pub fn name(&self) -> &str {
        match self {
            FeatureEncoding::Numeric { name, .. } | FeatureEncoding::Categorical { name, .. } => name,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        match self {
            FeatureEncoding::Numeric { degenerate, .. } | FeatureEncoding::Categorical { degenerate, .. } => {
                *degenerate
            }
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            FeatureEncoding::Numeric { .. } => "numeric",
            FeatureEncoding::Categorical { .. } => "categorical",
        }
    }

    /// Bucket index for a cell; `None` for degenerate features.
    pub fn bucket(&self, cell: Cell<'_>) -> Option<usize> {
        if self.is_degenerate() {
            return None;
        }
        match self {
            FeatureEncoding::Numeric { thresholds, impute, .. } => {
                let v = match cell {
                    Cell::Number(v) => v,
                    Cell::Category(s) => s.parse().unwrap_or(*impute),
                    Cell::Missing => *impute,
                };
                Some(thresholds.iter().take_while(|&&t| t < v).count())
            }
            FeatureEncoding::Categorical { category_map, impute, .. } => {
                let fallback = category_map[impute];
                Some(match cell {
                    Cell::Category(s) => category_map.get(s).copied().unwrap_or(fallback),
                    Cell::Number(v) => category_map.get(&v.to_string()).copied().unwrap_or(fallback),
                    Cell::Missing => fallback,
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedEncoder {
    pub strategy: Strategy,
    pub bits_per_input: usize,
    pub features: Vec<FeatureEncoding>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl FittedEncoder {
    pub fn spec(&self) -> EncoderSpec {
        EncoderSpec { strategy: self.strategy, bits_per_input: self.bits_per_input }
    }

    pub fn total_bits(&self) -> usize {
        self.features.len() * self.bits_per_input
    }

    /// Encodes one row into `total_bits` bits.
    pub fn encode_row(&self, row: &[Cell<'_>]) -> Result<Vec<bool>, EncodingError> {
        if row.len() != self.features.len() {
            return Err(EncodingError::ArityMismatch { expected: self.features.len(), found: row.len() });
        }
        let b = self.bits_per_input;
        let mut out = vec![false; self.total_bits()];
        for (f, (feat, &cell)) in self.features.iter().zip(row).enumerate() {
            if let Some(k) = feat.bucket(cell) {
                write_code(self.strategy.codec(), k, &mut out[f * b..(f + 1) * b]);
            }
        }
        Ok(out)
    }

    /// Human-readable provenance of each input bit, e.g. `petal_length[1/2]`.
    pub fn input_bit_labels(&self) -> Vec<String> {
        let b = self.bits_per_input;
        self.features.iter().flat_map(|f| (0..b).map(move |j| format!("{}[{}/{}]", f.name(), j + 1, b))).collect()
    }
}

/// Fits one binarizer per feature column on the given training rows.
pub fn fit_encoder(raw: &RawDataset, rows: &[usize], spec: EncoderSpec) -> Result<FittedEncoder, EncodingError> {
    spec.validate()?;
    if rows.is_empty() {
        return Err(EncodingError::EmptyTraining);
    }
    let buckets = spec.bucket_count();
    let mut warnings = Vec::new();
    let features = raw
        .columns
        .iter()
        .zip(&raw.feature_names)
        .map(|(col, name)| {
            let feat = match col {
                Column::Numeric(values) => {
                    let mut vals: Vec<f64> = rows.iter().filter_map(|&r| values[r]).collect();
                    fit_numeric(name, &mut vals, buckets, spec.strategy.bucketer())
                }
                Column::Categorical(values) => {
                    fit_categorical(name, rows.iter().filter_map(|&r| values[r].as_deref()), buckets)
                }
            };
            if feat.is_degenerate() {
                warnings.push(format!("feature {name:?} is constant on the training rows; encoded as all-zero bits"));
            }
            feat
        })
        .collect();
    Ok(FittedEncoder { strategy: spec.strategy, bits_per_input: spec.bits_per_input, features, warnings })
}

fn fit_numeric(name: &str, vals: &mut [f64], buckets: usize, bucketer: Bucketer) -> FeatureEncoding {
    vals.sort_by(f64::total_cmp);
    let (Some(&min), Some(&max)) = (vals.first(), vals.last()) else {
        return FeatureEncoding::Numeric { name: name.into(), thresholds: vec![], impute: 0.0, degenerate: true };
    };
    let impute = quantile_sorted(vals, 0.5);
    if min == max {
        return FeatureEncoding::Numeric { name: name.into(), thresholds: vec![], impute, degenerate: true };
    }
    let thresholds = (1..buckets)
        .map(|k| match bucketer {
            Bucketer::EqualWidth => min + (max - min) * k as f64 / buckets as f64,
            Bucketer::EqualFrequency => quantile_sorted(vals, k as f64 / buckets as f64),
        })
        .collect();
    FeatureEncoding::Numeric { name: name.into(), thresholds, impute, degenerate: false }
}

fn fit_categorical<'a>(name: &str, values: impl Iterator<Item = &'a str>, buckets: usize) -> FeatureEncoding {
    // (count, first appearance)
    let mut stats: HashMap<&str, (usize, usize)> = HashMap::new();
    for (i, v) in values.enumerate() {
        stats.entry(v).or_insert((0, i)).0 += 1;
    }
    let mut ranked: Vec<(&str, usize, usize)> = stats.into_iter().map(|(k, (c, f))| (k, c, f)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    let category_map: BTreeMap<String, usize> =
        ranked.iter().enumerate().map(|(rank, (k, _, _))| (k.to_string(), rank % buckets)).collect();
    let impute = ranked.first().map(|r| r.0.to_string()).unwrap_or_default();
    let degenerate = ranked.len() < 2;
    let category_map = if ranked.is_empty() { BTreeMap::from([(String::new(), 0)]) } else { category_map };
    FeatureEncoding::Categorical { name: name.into(), category_map, impute, degenerate }
}

/// What to do with an output pattern that is not any class's code.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidCodePolicy {
    /// Nearest code by Hamming distance, lowest class index on ties.
    #[default]
    Nearest,
    /// Never matches any class.
    Reject,
}

/// Class index to output code mapping. Output bit `k` is code bit `k`, MSB first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CodecDocument", into = "CodecDocument")]
pub struct OutputCodec {
    bits: usize,
    codes: Vec<u64>,
    class_labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CodecDocument {
    n_classes: usize,
    bits: usize,
    codes: Vec<String>,
    #[serde(default)]
    class_labels: Vec<String>,
}

impl TryFrom<CodecDocument> for OutputCodec {
    type Error = String;

    fn try_from(doc: CodecDocument) -> Result<Self, String> {
        if doc.codes.len() != doc.n_classes {
            return Err(format!("{} codes for {} classes", doc.codes.len(), doc.n_classes));
        }
        let codes = doc
            .codes
            .iter()
            .map(|c| {
                if c.len() != doc.bits || !c.bytes().all(|b| b == b'0' || b == b'1') {
                    return Err(format!("code {c:?} is not a {}-bit string", doc.bits));
                }
                u64::from_str_radix(c, 2).map_err(|e| e.to_string())
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut codec = OutputCodec::from_codes(doc.bits, codes).map_err(|e| e.to_string())?;
        if !doc.class_labels.is_empty() {
            codec = codec.with_labels(doc.class_labels).map_err(|e| e.to_string())?;
        }
        Ok(codec)
    }
}

impl From<OutputCodec> for CodecDocument {
    fn from(c: OutputCodec) -> Self {
        CodecDocument {
            n_classes: c.n_classes(),
            bits: c.bits,
            codes: (0..c.n_classes()).map(|k| c.code_string(k)).collect(),
            class_labels: c.class_labels,
        }
    }
}

fn min_bits(n_classes: usize) -> usize {
    (usize::BITS - (n_classes.max(2) - 1).leading_zeros()) as usize
}

impl OutputCodec {
    pub fn from_codes(bits: usize, codes: Vec<u64>) -> Result<Self, EncodingError> {
        if codes.len() < 2 {
            return Err(EncodingError::TooFewClasses(codes.len()));
        }
        let mut seen = codes.clone();
        seen.sort_unstable();
        seen.dedup();
        if bits == 0 || bits > MAX_BITS_PER_OUTPUT || seen.len() != codes.len() || codes.iter().any(|&c| c >> bits != 0)
        {
            return Err(EncodingError::InvalidCodes { bits });
        }
        let class_labels = (0..codes.len()).map(|c| c.to_string()).collect();
        Ok(OutputCodec { bits, codes, class_labels })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self, EncodingError> {
        if labels.len() != self.codes.len() {
            return Err(EncodingError::InvalidCodes { bits: self.bits });
        }
        self.class_labels = labels;
        Ok(self)
    }

    pub fn n_classes(&self) -> usize {
        self.codes.len()
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn class_labels(&self) -> &[String] {
        &self.class_labels
    }

    pub fn code(&self, class: usize) -> u64 {
        self.codes[class]
    }

    pub fn code_bits(&self, class: usize) -> Vec<bool> {
        (0..self.bits).map(|k| (self.codes[class] >> (self.bits - 1 - k)) & 1 == 1).collect()
    }

    pub fn code_string(&self, class: usize) -> String {
        self.code_bits(class).iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    /// Packs output bits (y[0] first) into the integer code.
    pub fn pack(bits: &[bool]) -> u64 {
        bits.iter().fold(0, |acc, &b| (acc << 1) | u64::from(b))
    }

    /// Class for a packed output word.
    pub fn decode_code(&self, code: u64, policy: InvalidCodePolicy) -> Option<usize> {
        if let Some(c) = self.codes.iter().position(|&k| k == code) {
            return Some(c);
        }
        match policy {
            InvalidCodePolicy::Reject => None,
            InvalidCodePolicy::Nearest => {
                // min_by_key keeps the first minimum, which is the lowest class index
                (0..self.codes.len()).min_by_key(|&c| (self.codes[c] ^ code).count_ones())
            }
        }
    }

    pub fn decode_prediction(&self, bits: &[bool]) -> usize {
        self.decode_code(Self::pack(bits), InvalidCodePolicy::Nearest).expect("nearest decoding is total")
    }

    /// Lookup table over all `2^bits` output patterns; `None` when the width is too
    /// large to tabulate.
    pub fn decode_table(&self, policy: InvalidCodePolicy) -> Option<Vec<Option<usize>>> {
        (self.bits <= 16).then(|| (0..1u64 << self.bits).map(|c| self.decode_code(c, policy)).collect())
    }
}

/// Class `c` gets the big-endian binary code of `c`, `max(1, ⌈log2 n⌉)` bits wide
/// unless a wider `bits_per_output` is requested.
pub fn make_output_codec(n_classes: usize, bits_per_output: Option<usize>) -> Result<OutputCodec, EncodingError> {
    if n_classes < 2 {
        return Err(EncodingError::TooFewClasses(n_classes));
    }
    let needed = min_bits(n_classes);
    let bits = bits_per_output.unwrap_or(needed);
    if bits < needed || bits > MAX_BITS_PER_OUTPUT {
        return Err(EncodingError::OutputTooNarrow { bits, n_classes, needed });
    }
    OutputCodec::from_codes(bits, (0..n_classes as u64).collect())
}

pub(crate) fn words_for(rows: usize) -> usize {
    rows.div_ceil(64)
}

/// One partition, stored column-major with 64 rows per word.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    /// Row indices into the source dataset.
    pub rows: Vec<usize>,
    n_inputs: usize,
    words: usize,
    /// `columns[i * words + w]` holds input bit `i` for rows `64w..64w+63`.
    columns: Vec<u64>,
    pub labels: Vec<usize>,
}

impl Partition {
    pub fn from_rows(bits: &[Vec<bool>], labels: Vec<usize>, n_inputs: usize) -> Self {
        assert_eq!(bits.len(), labels.len());
        let words = words_for(bits.len());
        let mut columns = vec![0u64; n_inputs * words];
        for (r, row) in bits.iter().enumerate() {
            assert_eq!(row.len(), n_inputs);
            for (i, &b) in row.iter().enumerate() {
                if b {
                    columns[i * words + r / 64] |= 1 << (r % 64);
                }
            }
        }
        Partition { rows: (0..bits.len()).collect(), n_inputs, words, columns, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn words(&self) -> usize {
        self.words
    }

    pub fn column(&self, input: usize) -> &[u64] {
        &self.columns[input * self.words..(input + 1) * self.words]
    }

    pub fn bit(&self, row: usize, input: usize) -> bool {
        (self.column(input)[row / 64] >> (row % 64)) & 1 == 1
    }

    pub fn row_bits(&self, row: usize) -> Vec<bool> {
        (0..self.n_inputs).map(|i| self.bit(row, i)).collect()
    }

    pub fn unpacked(&self) -> Vec<Vec<bool>> {
        (0..self.len()).map(|r| self.row_bits(r)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    pub n_inputs: usize,
    pub codec: OutputCodec,
    pub train: Partition,
    pub validation: Partition,
    pub test: Partition,
}

impl EncodedDataset {
    /// Builds a dataset where every partition is the same set of rows.
    pub fn uniform(part: Partition, codec: OutputCodec) -> Self {
        EncodedDataset { n_inputs: part.n_inputs, codec, train: part.clone(), validation: part.clone(), test: part }
    }
}

/// Encodes one partition column by column; identical to calling `encode_row` per row.
pub fn encode_partition(enc: &FittedEncoder, raw: &RawDataset, rows: &[usize]) -> Result<Partition, EncodingError> {
    if raw.n_features() != enc.features.len() {
        return Err(EncodingError::ArityMismatch { expected: enc.features.len(), found: raw.n_features() });
    }
    let b = enc.bits_per_input;
    let n_inputs = enc.total_bits();
    let words = words_for(rows.len());
    let mut columns = vec![0u64; n_inputs * words];
    let mut code = vec![false; b];
    for (f, (feat, col)) in enc.features.iter().zip(&raw.columns).enumerate() {
        let found = if col.is_numeric() { "numeric" } else { "categorical" };
        if let (FeatureEncoding::Numeric { .. }, Column::Categorical(_)) = (feat, col) {
            return Err(EncodingError::KindMismatch { name: feat.name().into(), expected: feat.kind(), found });
        }
        for (r, &src) in rows.iter().enumerate() {
            let Some(k) = feat.bucket(col.cell(src)) else { continue };
            write_code(enc.strategy.codec(), k, &mut code);
            for (j, &bit) in code.iter().enumerate() {
                if bit {
                    columns[(f * b + j) * words + r / 64] |= 1 << (r % 64);
                }
            }
        }
    }
    let labels = rows.iter().map(|&r| raw.labels[r]).collect();
    Ok(Partition { rows: rows.to_vec(), n_inputs, words, columns, labels })
}

pub fn encode_dataset(
    enc: &FittedEncoder,
    raw: &RawDataset,
    split: &SplitDataset,
    codec: &OutputCodec,
) -> Result<EncodedDataset, EncodingError> {
    Ok(EncodedDataset {
        n_inputs: enc.total_bits(),
        codec: codec.clone(),
        train: encode_partition(enc, raw, &split.train)?,
        validation: encode_partition(enc, raw, &split.validation)?,
        test: encode_partition(enc, raw, &split.test)?,
    })
}

/// Encoder plus output codec, the persisted form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderDocument {
    #[serde(flatten)]
    pub encoder: FittedEncoder,
    pub output_codec: OutputCodec,
}
