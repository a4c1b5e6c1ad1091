//! Flow-record tables: CSV ingestion, the numeric [`Dataset`], class balance
//! and the seeded stratified train/test split.
//!
//! Ingestion keeps cell text untouched in a [`RawTable`]; conversion to
//! numbers happens in [`crate::preprocess`] once imputation and encoding plans
//! exist. Storage is column-major because feature selection drops whole
//! columns and the tree splitter scans one feature at a time.

use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Tokens treated as missing when the caller supplies none.
pub const DEFAULT_NA_TOKENS: [&str; 4] = ["", "NA", "NaN", "null"];
pub const DEFAULT_TEST_FRACTION: f64 = 0.3;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("CSV has no header row")]
    MissingHeader,
    #[error("line {line}: expected {expected} cells, found {found}")]
    RaggedRow { line: u64, expected: usize, found: usize },
    #[error("label column {label:?} not found; available columns: {}", available.join(", "))]
    MissingLabelColumn { label: String, available: Vec<String> },
    #[error("row {row}: label {value:?} is not 0 or 1")]
    BadLabel { row: usize, value: String },
    #[error("row {row}: label is missing")]
    MissingLabel { row: usize },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("column {column} has {found} values, expected {expected}")]
    ColumnLength {
        column: String,
        expected: usize,
        found: usize,
    },
    #[error("test fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
    #[error("cannot stratify: class {class} has no rows")]
    EmptyClass { class: u8 },
    #[error("dataset contains a non-finite value in column {column} at row {row}")]
    NonFinite { column: String, row: usize },
}

/// Binary class label. 0 is normal traffic, 1 is an anomaly.
pub type Label = u8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Label,
}

/// Column layout of a [`Dataset`]. `column_kinds` lists the features in order
/// followed by the label column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    feature_names: Vec<String>,
    label_name: String,
    column_kinds: Vec<ColumnKind>,
}

impl Schema {
    pub fn new(
        feature_names: Vec<String>,
        label_name: String,
        feature_kinds: Vec<ColumnKind>,
    ) -> Result<Self, DataError> {
        if feature_names.is_empty() {
            return Err(DataError::InvalidSchema(
                "at least one feature column is required".into(),
            ));
        }
        if feature_kinds.len() != feature_names.len() {
            return Err(DataError::InvalidSchema(format!(
                "{} feature names but {} column kinds",
                feature_names.len(),
                feature_kinds.len()
            )));
        }
        if feature_kinds.contains(&ColumnKind::Label) {
            return Err(DataError::InvalidSchema("exactly one label column is allowed".into()));
        }
        let mut seen = HashSet::new();
        for name in &feature_names {
            if name.is_empty() {
                return Err(DataError::InvalidSchema("empty feature name".into()));
            }
            if name == &label_name {
                return Err(DataError::InvalidSchema(format!(
                    "feature {name:?} duplicates the label column"
                )));
            }
            if !seen.insert(name.as_str()) {
                return Err(DataError::InvalidSchema(format!("duplicate feature name {name:?}")));
            }
        }
        let mut column_kinds = feature_kinds;
        column_kinds.push(ColumnKind::Label);
        Ok(Self {
            feature_names,
            label_name,
            column_kinds,
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn label_name(&self) -> &str {
        &self.label_name
    }

    pub fn column_kinds(&self) -> &[ColumnKind] {
        &self.column_kinds
    }

    pub fn feature_kind(&self, index: usize) -> ColumnKind {
        self.column_kinds[index]
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Total column count including the label.
    pub fn n_columns(&self) -> usize {
        self.column_kinds.len()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    fn restricted(&self, keep: &[usize]) -> Result<Self, DataError> {
        Schema::new(
            keep.iter().map(|&i| self.feature_names[i].clone()).collect(),
            self.label_name.clone(),
            keep.iter().map(|&i| self.column_kinds[i]).collect(),
        )
    }
}

/// Raw cell text as read from disk. `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    headers: Vec<String>,
    label_index: Option<usize>,
    columns: Vec<Vec<Option<String>>>,
    n_rows: usize,
}

impl RawTable {
    /// Builds a table from row-major cells. The label column, when present,
    /// is addressed by name.
    pub fn from_rows(
        headers: Vec<String>,
        label_column: Option<&str>,
        rows: Vec<Vec<Option<String>>>,
    ) -> Result<Self, DataError> {
        let label_index = match label_column {
            Some(name) => {
                Some(
                    headers
                        .iter()
                        .position(|h| h == name)
                        .ok_or_else(|| DataError::MissingLabelColumn {
                            label: name.to_string(),
                            available: headers.clone(),
                        })?,
                )
            }
            None => None,
        };
        let mut columns = vec![Vec::with_capacity(rows.len()); headers.len()];
        let n_rows = rows.len();
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != headers.len() {
                return Err(DataError::RaggedRow {
                    line: i as u64 + 2,
                    expected: headers.len(),
                    found: row.len(),
                });
            }
            for (col, cell) in columns.iter_mut().zip(row) {
                col.push(cell);
            }
        }
        Ok(Self {
            headers,
            label_index,
            columns,
            n_rows,
        })
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_columns(&self) -> usize {
        self.headers.len()
    }

    pub fn label_index(&self) -> Option<usize> {
        self.label_index
    }

    pub fn label_name(&self) -> Option<&str> {
        self.label_index.map(|i| self.headers[i].as_str())
    }

    pub fn column(&self, index: usize) -> &[Option<String>] {
        &self.columns[index]
    }

    pub fn column_by_name(&self, name: &str) -> Option<&[Option<String>]> {
        self.headers
            .iter()
            .position(|h| h == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn cell(&self, row: usize, col: usize) -> Option<&str> {
        self.columns[col][row].as_deref()
    }

    /// Indices of every non-label column, in file order.
    pub fn feature_indices(&self) -> Vec<usize> {
        (0..self.headers.len())
            .filter(|&i| Some(i) != self.label_index)
            .collect()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.feature_indices()
            .into_iter()
            .map(|i| self.headers[i].clone())
            .collect()
    }

    pub fn missing_count(&self, col: usize) -> usize {
        self.columns[col].iter().filter(|c| c.is_none()).count()
    }

    /// Numeric when every present cell parses as a real number.
    pub fn infer_kind(&self, col: usize) -> ColumnKind {
        if Some(col) == self.label_index {
            return ColumnKind::Label;
        }
        let numeric = self.columns[col]
            .iter()
            .flatten()
            .all(|cell| cell.trim().parse::<f64>().is_ok());
        if numeric {
            ColumnKind::Numeric
        } else {
            ColumnKind::Categorical
        }
    }

    /// Parses the label column into {0, 1}.
    pub fn labels(&self) -> Result<Vec<Label>, DataError> {
        let Some(index) = self.label_index else {
            return Err(DataError::InvalidSchema("table has no label column".into()));
        };
        self.columns[index]
            .iter()
            .enumerate()
            .map(|(row, cell)| match cell {
                None => Err(DataError::MissingLabel { row }),
                Some(text) => parse_label(text).ok_or_else(|| DataError::BadLabel {
                    row,
                    value: text.clone(),
                }),
            })
            .collect()
    }

    /// Copies the given rows, in the given order.
    pub fn take_rows(&self, rows: &[usize]) -> RawTable {
        RawTable {
            headers: self.headers.clone(),
            label_index: self.label_index,
            columns: self
                .columns
                .iter()
                .map(|col| rows.iter().map(|&r| col[r].clone()).collect())
                .collect(),
            n_rows: rows.len(),
        }
    }

    /// Keeps only the named columns, in the given order, dropping the label.
    /// Returns the names that are absent.
    pub fn project(&self, names: &[String]) -> Result<RawTable, Vec<String>> {
        let missing: Vec<String> = names.iter().filter(|n| !self.headers.contains(n)).cloned().collect();
        if !missing.is_empty() {
            return Err(missing);
        }
        let columns = names
            .iter()
            .map(|n| self.column_by_name(n).expect("checked above").to_vec())
            .collect();
        Ok(RawTable {
            headers: names.to_vec(),
            label_index: None,
            columns,
            n_rows: self.n_rows,
        })
    }
}

fn parse_label(text: &str) -> Option<Label> {
    let t = text.trim();
    match t {
        "0" => Some(0),
        "1" => Some(1),
        _ => match t.parse::<f64>() {
            Ok(0.0) => Some(0),
            Ok(1.0) => Some(1),
            _ => None,
        },
    }
}

/// The set of missing-value tokens, with the defaults when `tokens` is empty.
pub fn na_token_set<S: AsRef<str>>(tokens: &[S]) -> BTreeSet<String> {
    if tokens.is_empty() {
        DEFAULT_NA_TOKENS.iter().map(|s| s.to_string()).collect()
    } else {
        tokens.iter().map(|s| s.as_ref().to_string()).collect()
    }
}

/// Loads a CSV whose header must contain `label_column`.
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: &str,
    na_tokens: &BTreeSet<String>,
) -> Result<RawTable, DataError> {
    let reader = open(path.as_ref())?;
    read_csv(reader, Some(label_column), na_tokens, true)
}

/// Loads a CSV for scoring. The label column is recognised when present but
/// not required.
pub fn load_csv_unlabeled(
    path: impl AsRef<Path>,
    label_column: &str,
    na_tokens: &BTreeSet<String>,
) -> Result<RawTable, DataError> {
    let reader = open(path.as_ref())?;
    read_csv(reader, Some(label_column), na_tokens, false)
}

fn open(path: &Path) -> Result<File, DataError> {
    File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Parses CSV text from any reader. With `require_label` false a missing
/// label column is tolerated.
pub fn read_csv<R: Read>(
    reader: R,
    label_column: Option<&str>,
    na_tokens: &BTreeSet<String>,
    require_label: bool,
) -> Result<RawTable, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let headers: Vec<String> = match records.next() {
        Some(rec) => rec?.iter().map(|h| h.trim().to_string()).collect(),
        None => return Err(DataError::MissingHeader),
    };
    let label = match label_column {
        Some(name) if !require_label && !headers.iter().any(|h| h == name) => None,
        other => other,
    };
    let mut rows = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != headers.len() {
            return Err(DataError::RaggedRow {
                line,
                expected: headers.len(),
                found: rec.len(),
            });
        }
        rows.push(
            rec.iter()
                .map(|cell| {
                    if na_tokens.contains(cell) || na_tokens.contains(cell.trim()) {
                        None
                    } else {
                        Some(cell.to_string())
                    }
                })
                .collect(),
        );
    }
    RawTable::from_rows(headers, label, rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassBalance {
    pub normal_count: usize,
    pub anomaly_count: usize,
}

impl ClassBalance {
    pub fn from_labels(labels: &[Label]) -> Self {
        let anomaly_count = labels.iter().filter(|&&l| l == 1).count();
        Self {
            normal_count: labels.len() - anomaly_count,
            anomaly_count,
        }
    }

    pub fn total(&self) -> usize {
        self.normal_count + self.anomaly_count
    }

    pub fn count(&self, class: Label) -> usize {
        if class == 0 {
            self.normal_count
        } else {
            self.anomaly_count
        }
    }

    pub fn both_present(&self) -> bool {
        self.normal_count > 0 && self.anomaly_count > 0
    }
}

impl std::ops::Add for ClassBalance {
    type Output = ClassBalance;

    fn add(self, rhs: Self) -> Self {
        ClassBalance {
            normal_count: self.normal_count + rhs.normal_count,
            anomaly_count: self.anomaly_count + rhs.anomaly_count,
        }
    }
}

/// Numeric feature table with binary labels. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    columns: Vec<Vec<f64>>,
    labels: Vec<Label>,
}

impl Dataset {
    pub fn new(schema: Schema, columns: Vec<Vec<f64>>, labels: Vec<Label>) -> Result<Self, DataError> {
        if columns.len() != schema.n_features() {
            return Err(DataError::InvalidSchema(format!(
                "schema lists {} features but {} columns were given",
                schema.n_features(),
                columns.len()
            )));
        }
        let n = labels.len();
        for (name, col) in schema.feature_names().iter().zip(&columns) {
            if col.len() != n {
                return Err(DataError::ColumnLength {
                    column: name.clone(),
                    expected: n,
                    found: col.len(),
                });
            }
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(DataError::NonFinite {
                    column: name.clone(),
                    row,
                });
            }
        }
        if let Some(row) = labels.iter().position(|&l| l > 1) {
            return Err(DataError::BadLabel {
                row,
                value: labels[row].to_string(),
            });
        }
        Ok(Self {
            schema,
            columns,
            labels,
        })
    }

    /// Convenience constructor for all-numeric data.
    pub fn from_columns(feature_names: &[&str], columns: Vec<Vec<f64>>, labels: Vec<Label>) -> Result<Self, DataError> {
        let schema = Schema::new(
            feature_names.iter().map(|s| s.to_string()).collect(),
            "Class".into(),
            vec![ColumnKind::Numeric; feature_names.len()],
        )?;
        Self::new(schema, columns, labels)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn row_count(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, feature: usize) -> &[f64] {
        &self.columns[feature]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    #[inline]
    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.columns[feature][row]
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[row]).collect()
    }

    /// Copies `row` into `buf`, which must hold `n_features` values.
    pub fn row_into(&self, row: usize, buf: &mut [f64]) {
        for (slot, col) in buf.iter_mut().zip(&self.columns) {
            *slot = col[row];
        }
    }

    pub fn class_counts(&self) -> ClassBalance {
        ClassBalance::from_labels(&self.labels)
    }

    /// Keeps the listed features, in the listed order.
    pub fn select_features(&self, keep: &[usize]) -> Result<Dataset, DataError> {
        Ok(Dataset {
            schema: self.schema.restricted(keep)?,
            columns: keep.iter().map(|&i| self.columns[i].clone()).collect(),
            labels: self.labels.clone(),
        })
    }

    pub fn take_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&r| c[r]).collect())
                .collect(),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
        }
    }

    /// Writes the dataset as CSV with the label as the last column. Reals use
    /// the shortest representation that parses back to the same bits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.schema.feature_names().iter().map(String::as_str).collect();
        header.push(self.schema.label_name());
        wtr.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for row in 0..self.row_count() {
            record.clear();
            record.extend(self.columns.iter().map(|c| c[row].to_string()));
            record.push(self.labels[row].to_string());
            wtr.write_record(&record)?;
        }
        wtr.flush().map_err(|source| DataError::Io {
            path: "<writer>".into(),
            source,
        })?;
        Ok(())
    }
}

pub fn class_counts(ds: &Dataset) -> ClassBalance {
    ds.class_counts()
}

#[derive(Debug, Clone)]
pub struct SplitPair {
    pub train: Dataset,
    pub test: Dataset,
    pub test_fraction: f64,
    pub seed: u64,
}

/// Row indices of a stratified split: `(train, test)`, each ascending.
///
/// The overall test size is `round(test_fraction * n)`. It is apportioned
/// across classes by largest remainder, so each class contributes either the
/// floor or the ceiling of its exact share. Rows within a class are chosen by
/// a seeded shuffle.
pub fn stratified_indices(
    labels: &[Label],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), DataError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::BadFraction(test_fraction));
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }
    for (class, rows) in by_class.iter().enumerate() {
        if rows.is_empty() {
            return Err(DataError::EmptyClass { class: class as u8 });
        }
    }

    let total_test = (test_fraction * labels.len() as f64).round() as usize;
    let quotas: Vec<f64> = by_class.iter().map(|rows| test_fraction * rows.len() as f64).collect();
    let mut take: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order = [0usize, 1];
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut remaining = total_test.saturating_sub(take.iter().sum());
    for &class in &order {
        if remaining > 0 && (take[class] as f64) < quotas[class] {
            take[class] += 1;
            remaining -= 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(labels.len());
    let mut test = Vec::with_capacity(total_test);
    for (rows, &k) in by_class.iter_mut().zip(&take) {
        rows.shuffle(&mut rng);
        test.extend_from_slice(&rows[..k]);
        train.extend_from_slice(&rows[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn stratified_split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<SplitPair, DataError> {
    let (train, test) = stratified_indices(ds.labels(), test_fraction, seed)?;
    Ok(SplitPair {
        train: ds.take_rows(&train),
        test: ds.take_rows(&test),
        test_fraction,
        seed,
    })
}
