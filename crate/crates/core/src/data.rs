//! Transaction CSV ingestion, robust (median/IQR) normalisation and
//! stratified train/validation splitting.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;

pub const LABEL_COLUMN: &str = "Class";
pub const SYNTHETIC_COLUMN: &str = "is_synthetic";

/// Feature columns of the public credit-card transaction file, in order.
pub fn transaction_columns() -> Vec<String> {
    let mut cols = vec!["Time".to_string()];
    cols.extend((1..=28).map(|i| format!("V{i}")));
    cols.push("Amount".to_string());
    cols
}

/// One row of the credit-card schema.
#[derive(Debug, Clone, PartialEq)]
pub struct TransactionRecord {
    pub time: f64,
    pub v: [f64; 28],
    pub amount: f64,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<u8>,
    pub column_names: Vec<String>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<u8>, column_names: Vec<String>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::shape("Dataset", features.rows(), labels.len()));
        }
        if features.rows() > 0 && features.cols() != column_names.len() {
            return Err(Error::shape("Dataset columns", features.cols(), column_names.len()));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Config(format!("label {bad} is not binary")));
        }
        Ok(Self {
            features,
            labels,
            column_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.column_names.len()
    }

    /// `(count of label 0, count of label 1)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l == 1).count();
        (self.labels.len() - pos, pos)
    }

    pub fn labels_f64(&self) -> Vec<f64> {
        self.labels.iter().map(|&l| f64::from(l)).collect()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            column_names: self.column_names.clone(),
        }
    }

    pub fn indices_of(&self, label: u8) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == label).collect()
    }

    /// Rows of class 1.
    pub fn minority_rows(&self) -> Matrix {
        self.features.select_rows(&self.indices_of(1))
    }

    pub fn with_features(&self, features: Matrix) -> Result<Self> {
        Self::new(features, self.labels.clone(), self.column_names.clone())
    }

    /// Removes the `Time` column, if present.
    pub fn drop_column(&self, name: &str) -> Self {
        let keep: Vec<usize> = (0..self.dim())
            .filter(|&c| self.column_names[c] != name)
            .collect();
        Self {
            features: self.features.select_cols(&keep),
            labels: self.labels.clone(),
            column_names: keep.iter().map(|&c| self.column_names[c].clone()).collect(),
        }
    }

    pub fn record(&self, i: usize) -> Option<TransactionRecord> {
        if self.column_names != transaction_columns() {
            return None;
        }
        let row = self.features.row(i);
        let mut v = [0.0; 28];
        v.copy_from_slice(&row[1..29]);
        Some(TransactionRecord {
            time: row[0],
            v,
            amount: row[29],
            label: self.labels[i],
        })
    }
}

/// Reads a header-first CSV. The label comes from the `Class` column; an
/// `is_synthetic` column is ignored; every other column is a feature.
pub fn parse_csv(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_reader(file)
}

pub fn parse_reader<R: std::io::Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let label_col = header
        .iter()
        .position(|h| h == LABEL_COLUMN)
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("unknown header layout: no `{LABEL_COLUMN}` column"),
        })?;
    let skip_col = header.iter().position(|h| h == SYNTHETIC_COLUMN);
    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|&c| c != label_col && Some(c) != skip_col)
        .collect();
    if feature_cols.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "unknown header layout: no feature columns".into(),
        });
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = header.iter().find(|h| !seen.insert(h.as_str())) {
        return Err(Error::Parse {
            line: 1,
            message: format!("unknown header layout: duplicate column `{dup}`"),
        });
    }

    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line_guess = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(line_guess, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(line_guess, |p| p.line() as usize);
        if rec.len() != header.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} columns, found {}", header.len(), rec.len()),
            });
        }
        let cell = |c: usize| -> Result<f64> {
            let raw = &rec[c];
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                line,
                message: format!("non-numeric value `{raw}` in column `{}`", header[c]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("non-finite value `{raw}` in column `{}`", header[c]),
                });
            }
            Ok(v)
        };
        for &c in &feature_cols {
            data.push(cell(c)?);
        }
        let label = cell(label_col)?;
        labels.push(match label {
            0.0 => 0,
            1.0 => 1,
            _ => {
                return Err(Error::Parse {
                    line,
                    message: format!("label must be 0 or 1, found {label}"),
                })
            }
        });
    }
    let names: Vec<String> = feature_cols.iter().map(|&c| header[c].clone()).collect();
    let features = Matrix::new(labels.len(), names.len(), data)?;
    Dataset::new(features, labels, names)
}

/// Writes `ds` in the same layout `parse_csv` reads. When `synthetic` is
/// given, an `is_synthetic` column is appended.
pub fn write_csv(path: &Path, ds: &Dataset, synthetic: Option<&[bool]>) -> Result<()> {
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = String::new();
    out.push_str(&ds.column_names.join(","));
    out.push(',');
    out.push_str(LABEL_COLUMN);
    if synthetic.is_some() {
        out.push(',');
        out.push_str(SYNTHETIC_COLUMN);
    }
    out.push('\n');
    for (i, row) in ds.features.iter_rows().enumerate() {
        for v in row {
            out.push_str(&format!("{v},"));
        }
        out.push_str(&ds.labels[i].to_string());
        if let Some(flags) = synthetic {
            out.push_str(if flags[i] { ",1" } else { ",0" });
        }
        out.push('\n');
    }
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Per-column median and IQR divisor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub medians: Vec<f64>,
    pub divisors: Vec<f64>,
    pub columns: Vec<String>,
}

/// Quantile of sorted data with linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn fit_normalizer(train: &Matrix) -> Result<NormalizationParams> {
    if train.rows() == 0 {
        return Err(Error::Empty("fit_normalizer needs at least one row"));
    }
    let mut medians = Vec::with_capacity(train.cols());
    let mut divisors = Vec::with_capacity(train.cols());
    for c in 0..train.cols() {
        let mut col = train.col_values(c);
        col.sort_by(f64::total_cmp);
        medians.push(quantile_sorted(&col, 0.5));
        let iqr = quantile_sorted(&col, 0.75) - quantile_sorted(&col, 0.25);
        divisors.push(if iqr > 0.0 { iqr } else { 1.0 });
    }
    Ok(NormalizationParams {
        medians,
        divisors,
        columns: Vec::new(),
    })
}

impl NormalizationParams {
    pub fn with_columns(mut self, columns: Vec<String>) -> Self {
        self.columns = columns;
        self
    }

    pub fn dim(&self) -> usize {
        self.medians.len()
    }

    pub fn apply(&self, features: &Matrix) -> Result<Matrix> {
        self.check(features)?;
        let mut out = features.clone();
        for r in 0..out.rows() {
            for (j, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.medians[j]) / self.divisors[j];
            }
        }
        Ok(out)
    }

    /// Inverse of [`apply`](Self::apply).
    pub fn invert(&self, features: &Matrix) -> Result<Matrix> {
        self.check(features)?;
        let mut out = features.clone();
        for r in 0..out.rows() {
            for (j, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = *v * self.divisors[j] + self.medians[j];
            }
        }
        Ok(out)
    }

    fn check(&self, features: &Matrix) -> Result<()> {
        if features.cols() != self.dim() && features.rows() > 0 {
            return Err(Error::shape("normalizer", self.dim(), features.cols()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let p: Self = serde_json::from_str(&text)?;
        if p.medians.len() != p.divisors.len() || p.divisors.iter().any(|&d| d <= 0.0) {
            return Err(Error::Config("normalizer file is inconsistent".into()));
        }
        Ok(p)
    }
}

pub fn apply_normalizer(params: &NormalizationParams, features: &Matrix) -> Result<Matrix> {
    params.apply(features)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub seed: u64,
}

/// Stratified split. The total train size is `floor(n * ratio)`; the smaller
/// class gets `floor(count * ratio)` train rows and the larger class absorbs
/// the remainder. Index lists are sorted.
pub fn stratified_split(ds: &Dataset, train_ratio: f64, seed: u64) -> Result<SplitIndices> {
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(Error::Config(format!(
            "train ratio must lie in (0, 1), got {train_ratio}"
        )));
    }
    let (n0, n1) = ds.class_counts();
    if n0 == 0 || n1 == 0 {
        return Err(Error::SingleClass("stratified_split"));
    }
    // Guards against 0.29 * 100 = 28.999999999999996.
    let floor = |x: f64| (x + 1e-9).floor() as usize;
    let total_train = floor(ds.len() as f64 * train_ratio);
    let minority = if n1 <= n0 { 1u8 } else { 0u8 };
    let minority_count = if minority == 1 { n1 } else { n0 };
    let minority_train = floor(minority_count as f64 * train_ratio);
    let majority_train = total_train - minority_train;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_idx = Vec::with_capacity(total_train);
    let mut val_idx = Vec::with_capacity(ds.len() - total_train);
    for label in [0u8, 1u8] {
        let mut idx = ds.indices_of(label);
        idx.shuffle(&mut rng);
        let take = if label == minority {
            minority_train
        } else {
            majority_train
        };
        train_idx.extend_from_slice(&idx[..take]);
        val_idx.extend_from_slice(&idx[take..]);
    }
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    Ok(SplitIndices {
        train_idx,
        val_idx,
        seed,
    })
}

/// Two-Gaussian stand-in for the transaction file: unit-variance normal
/// rows at the origin, minority rows shifted by `shift` in the first
/// `shifted_coords` coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub rows: usize,
    pub dim: usize,
    pub minority_fraction: f64,
    pub shift: f64,
    pub shifted_coords: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            rows: 20_000,
            dim: 30,
            minority_fraction: 0.002,
            shift: 4.0,
            shifted_coords: 5,
            seed: 7,
        }
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.dim == 0 || spec.shifted_coords > spec.dim {
        return Err(Error::Config("synthetic: need 0 < shifted_coords <= dim".into()));
    }
    if !(0.0..1.0).contains(&spec.minority_fraction) {
        return Err(Error::Config("synthetic: minority fraction must lie in [0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_pos = ((spec.rows as f64 * spec.minority_fraction).round() as usize).max(2);
    let mut labels: Vec<u8> = (0..spec.rows).map(|i| u8::from(i < n_pos)).collect();
    labels.shuffle(&mut rng);
    let mut data = Vec::with_capacity(spec.rows * spec.dim);
    for &l in &labels {
        for c in 0..spec.dim {
            let z: f64 = StandardNormal.sample(&mut rng);
            let shift = if l == 1 && c < spec.shifted_coords {
                spec.shift
            } else {
                0.0
            };
            data.push(z + shift);
        }
    }
    let names = if spec.dim == 30 {
        transaction_columns()
    } else {
        (0..spec.dim).map(|c| format!("f{c}")).collect()
    };
    Dataset::new(Matrix::new(spec.rows, spec.dim, data)?, labels, names)
}
