//! Missing-value imputation, categorical encoding and label-correlation
//! feature selection.
//!
//! Plans are fitted once (normally on the training split) and then applied
//! unchanged to any table with the same columns.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnKind, DataError, Dataset, RawTable, Schema};

#[derive(Debug, thiserror::Error)]
pub enum PreprocessError {
    #[error("column {column:?} has no non-missing values")]
    FullyMissing { column: String },
    #[error("column {column:?} is not covered by the preprocessing plans")]
    UnknownColumn { column: String },
    #[error("table is missing columns required by the preprocessing plans: {}", columns.join(", "))]
    MissingColumns { columns: Vec<String> },
    #[error("column {column:?} row {row}: {value:?} is not numeric")]
    NotNumeric { column: String, row: usize, value: String },
    #[error("vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("correlation needs at least 2 values, got {0}")]
    TooShort(usize),
    #[error("feature selection needs both classes in the data")]
    SingleClass,
    #[error("no feature is positively correlated with the label; rerun with --no-selection")]
    NothingSelected,
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Median fill value for every numeric column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationPlan {
    pub fills: BTreeMap<String, f64>,
    pub fitted_on: usize,
}

impl ImputationPlan {
    pub fn fill(&self, column: &str) -> Option<f64> {
        self.fills.get(column).copied()
    }
}

/// Dense integer codes for one categorical column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCodes {
    /// Code `i` is `categories[i]`; sorted so the mapping does not depend on
    /// row order.
    pub categories: Vec<String>,
    /// Code substituted for missing and unseen categories.
    pub most_frequent: usize,
}

/// Returned by [`CategoryCodes::encode`] for a category absent at fit time.
pub const UNSEEN_CODE: i64 = -1;

impl CategoryCodes {
    pub fn encode(&self, category: &str) -> i64 {
        self.categories
            .binary_search_by(|c| c.as_str().cmp(category))
            .map_or(UNSEEN_CODE, |i| i as i64)
    }

    fn resolve(&self, cell: Option<&str>) -> f64 {
        match cell.map(|c| self.encode(c)) {
            Some(code) if code != UNSEEN_CODE => code as f64,
            _ => self.most_frequent as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EncodingPlan {
    pub columns: BTreeMap<String, CategoryCodes>,
}

fn parse_finite(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Fits the lower median of each numeric feature column, ignoring missing
/// and non-finite cells.
pub fn fit_imputation(train: &RawTable) -> Result<ImputationPlan, PreprocessError> {
    let mut fills = BTreeMap::new();
    for col in train.feature_indices() {
        if train.infer_kind(col) != ColumnKind::Numeric {
            continue;
        }
        let name = &train.headers()[col];
        let mut values: Vec<f64> = train
            .column(col)
            .iter()
            .flatten()
            .filter_map(|c| parse_finite(c))
            .collect();
        if values.is_empty() {
            return Err(PreprocessError::FullyMissing { column: name.clone() });
        }
        values.sort_by(f64::total_cmp);
        fills.insert(name.clone(), values[(values.len() - 1) / 2]);
    }
    Ok(ImputationPlan {
        fills,
        fitted_on: train.n_rows(),
    })
}

pub fn fit_encoding(train: &RawTable) -> Result<EncodingPlan, PreprocessError> {
    let mut columns = BTreeMap::new();
    for col in train.feature_indices() {
        if train.infer_kind(col) != ColumnKind::Categorical {
            continue;
        }
        let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
        for cell in train.column(col).iter().flatten() {
            *freq.entry(cell.as_str()).or_default() += 1;
        }
        let categories: Vec<String> = freq.keys().map(|s| s.to_string()).collect();
        // max_by_key keeps the last maximum; reverse so ties go to the lowest code.
        let most_frequent = freq
            .values()
            .enumerate()
            .rev()
            .max_by_key(|(_, &n)| n)
            .map(|(i, _)| i)
            .ok_or_else(|| PreprocessError::FullyMissing {
                column: train.headers()[col].clone(),
            })?;
        columns.insert(
            train.headers()[col].clone(),
            CategoryCodes {
                categories,
                most_frequent,
            },
        );
    }
    Ok(EncodingPlan { columns })
}

/// Real-valued feature columns produced from a raw table.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureColumns {
    pub names: Vec<String>,
    pub kinds: Vec<ColumnKind>,
    pub columns: Vec<Vec<f64>>,
    pub n_rows: usize,
}

/// Converts every feature column of `table` to reals using the plans. Row
/// order is preserved and the label column, if any, is ignored.
pub fn transform_features(
    table: &RawTable,
    imp: &ImputationPlan,
    enc: &EncodingPlan,
) -> Result<FeatureColumns, PreprocessError> {
    let feature_cols = table.feature_indices();
    let present: BTreeSet<&str> = feature_cols.iter().map(|&i| table.headers()[i].as_str()).collect();
    let missing: Vec<String> = imp
        .fills
        .keys()
        .chain(enc.columns.keys())
        .filter(|name| !present.contains(name.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(PreprocessError::MissingColumns { columns: missing });
    }

    let mut out = FeatureColumns {
        names: Vec::with_capacity(feature_cols.len()),
        kinds: Vec::with_capacity(feature_cols.len()),
        columns: Vec::with_capacity(feature_cols.len()),
        n_rows: table.n_rows(),
    };
    for col in feature_cols {
        let name = &table.headers()[col];
        let cells = table.column(col);
        let values = if let Some(fill) = imp.fill(name) {
            out.kinds.push(ColumnKind::Numeric);
            cells
                .iter()
                .enumerate()
                .map(|(row, cell)| match cell {
                    None => Ok(fill),
                    Some(text) => match text.trim().parse::<f64>() {
                        Ok(v) if v.is_finite() => Ok(v),
                        Ok(_) => Ok(fill),
                        Err(_) => Err(PreprocessError::NotNumeric {
                            column: name.clone(),
                            row,
                            value: text.clone(),
                        }),
                    },
                })
                .collect::<Result<Vec<f64>, _>>()?
        } else if let Some(codes) = enc.columns.get(name) {
            out.kinds.push(ColumnKind::Categorical);
            cells.iter().map(|c| codes.resolve(c.as_deref())).collect()
        } else {
            return Err(PreprocessError::UnknownColumn { column: name.clone() });
        };
        out.names.push(name.clone());
        out.columns.push(values);
    }
    Ok(out)
}

/// Produces a fully numeric [`Dataset`]; the table must carry labels.
pub fn apply_preprocessing(
    table: &RawTable,
    imp: &ImputationPlan,
    enc: &EncodingPlan,
) -> Result<Dataset, PreprocessError> {
    let labels = table.labels()?;
    let features = transform_features(table, imp, enc)?;
    let label_name = table.label_name().unwrap_or("Class").to_string();
    let schema = Schema::new(features.names, label_name, features.kinds)?;
    Ok(Dataset::new(schema, features.columns, labels)?)
}

/// Pearson correlation with population moments. `None` when either input is
/// constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<f64>, PreprocessError> {
    if x.len() != y.len() {
        return Err(PreprocessError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(PreprocessError::TooShort(x.len()));
    }
    Ok(pearson_unchecked(x.iter().copied(), y.iter().copied(), x.len()))
}

fn is_constant(mut values: impl Iterator<Item = f64>) -> bool {
    match values.next() {
        None => true,
        Some(first) => values.all(|v| v == first),
    }
}

fn pearson_unchecked<X, Y>(x: X, y: Y, n: usize) -> Option<f64>
where
    X: Iterator<Item = f64> + Clone,
    Y: Iterator<Item = f64> + Clone,
{
    if is_constant(x.clone()) || is_constant(y.clone()) {
        return None;
    }
    let nf = n as f64;
    let mx = x.clone().sum::<f64>() / nf;
    let my = y.clone().sum::<f64>() / nf;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCorrelation {
    pub feature: String,
    /// Correlation with the label, `None` for constant features.
    pub r: Option<f64>,
    pub kept: bool,
}

/// Square feature-feature correlation matrix, `None` where undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i][j]
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["feature".to_string()];
        header.extend(self.names.iter().cloned());
        wtr.write_record(&header)?;
        for (name, row) in self.names.iter().zip(&self.values) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|v| v.map_or_else(String::new, |r| r.to_string())));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    /// One entry per input feature, in input order.
    pub features: Vec<FeatureCorrelation>,
    pub matrix: Option<CorrelationMatrix>,
}

impl CorrelationReport {
    pub fn kept_names(&self) -> Vec<String> {
        self.features
            .iter()
            .filter(|f| f.kept)
            .map(|f| f.feature.clone())
            .collect()
    }

    /// Entries ordered by |r| descending; undefined correlations last, ties in
    /// input order.
    pub fn sorted(&self) -> Vec<&FeatureCorrelation> {
        let mut rows: Vec<&FeatureCorrelation> = self.features.iter().collect();
        rows.sort_by(|a, b| match (a.r, b.r) {
            (Some(x), Some(y)) => y.abs().total_cmp(&x.abs()),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        });
        rows
    }

    /// `feature,r,kept` rows sorted by |r| descending. Undefined r is written
    /// as an empty cell.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["feature", "r", "kept"])?;
        for f in self.sorted() {
            let r = f.r.map_or_else(String::new, |r| r.to_string());
            wtr.write_record([f.feature.as_str(), r.as_str(), if f.kept { "true" } else { "false" }])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Correlation of every feature with the binary label.
pub fn label_correlations(ds: &Dataset) -> Vec<Option<f64>> {
    let labels = ds.labels();
    let n = ds.row_count();
    if n < 2 {
        return vec![None; ds.n_features()];
    }
    ds.columns()
        .par_iter()
        .map(|col| pearson_unchecked(col.iter().copied(), labels.iter().map(|&l| f64::from(l)), n))
        .collect()
}

pub fn correlation_matrix(ds: &Dataset) -> CorrelationMatrix {
    let d = ds.n_features();
    let n = ds.row_count();
    let cols = ds.columns();
    let upper: Vec<Vec<Option<f64>>> = (0..d)
        .into_par_iter()
        .map(|i| {
            (i..d)
                .map(|j| {
                    if n < 2 {
                        None
                    } else if i == j {
                        (!is_constant(cols[i].iter().copied())).then_some(1.0)
                    } else {
                        pearson_unchecked(cols[i].iter().copied(), cols[j].iter().copied(), n)
                    }
                })
                .collect()
        })
        .collect();
    let mut values = vec![vec![None; d]; d];
    for (i, row) in upper.iter().enumerate() {
        for (offset, &v) in row.iter().enumerate() {
            values[i][i + offset] = v;
            values[i + offset][i] = v;
        }
    }
    CorrelationMatrix {
        names: ds.schema().feature_names().to_vec(),
        values,
    }
}

/// Keeps exactly the features whose correlation with the label is defined
/// and strictly positive, preserving their order.
pub fn select_positive_features(ds: &Dataset) -> Result<(Dataset, CorrelationReport), PreprocessError> {
    if !ds.class_counts().both_present() {
        return Err(PreprocessError::SingleClass);
    }
    let names = ds.schema().feature_names();
    let features: Vec<FeatureCorrelation> = label_correlations(ds)
        .into_iter()
        .zip(names)
        .map(|(r, name)| FeatureCorrelation {
            feature: name.clone(),
            r,
            kept: matches!(r, Some(v) if v > 0.0),
        })
        .collect();
    let keep: Vec<usize> = features
        .iter()
        .enumerate()
        .filter(|(_, f)| f.kept)
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        return Err(PreprocessError::NothingSelected);
    }
    let selected = ds.select_features(&keep)?;
    Ok((selected, CorrelationReport { features, matrix: None }))
}

/// Restricts a dataset to the named features, in the given order.
pub fn keep_named(ds: &Dataset, names: &[String]) -> Result<Dataset, PreprocessError> {
    let mut keep = Vec::with_capacity(names.len());
    let mut missing = Vec::new();
    for name in names {
        match ds.schema().feature_index(name) {
            Some(i) => keep.push(i),
            None => missing.push(name.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(PreprocessError::MissingColumns { columns: missing });
    }
    Ok(ds.select_features(&keep)?)
}
