//! End-to-end runs: ingest, split, preprocess, select features, train,
//! evaluate and write artifacts. The `ids` binary is a thin shell over the
//! `cmd_*` functions here.
//!
//! Order of operations: the raw table is split first (stratified on the
//! label), imputation and encoding plans are fitted on the training rows and
//! applied to both halves, then feature selection runs on the training half.
//! [`FitOn::Full`] fits plans and selection on every row instead.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dataset::{
    load_csv, load_csv_unlabeled, na_token_set, stratified_indices, ClassBalance, DataError, Dataset, RawTable,
    DEFAULT_SEED, DEFAULT_TEST_FRACTION,
};
use crate::ensemble::{derived_rng, fit_model, EnsembleError, Hyperparams, Model, ModelKind};
use crate::metrics::{confusion, metric_set, roc, Evaluation, MetricSet, MetricsError, RocCurve};
use crate::persist::{load_model, save_model, write_atomic, ModelEnvelope, PersistError, Preprocessing};
use crate::preprocess::{
    apply_preprocessing, correlation_matrix, fit_encoding, fit_imputation, keep_named, select_positive_features,
    transform_features, CorrelationReport, PreprocessError,
};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error("input is missing columns required by the model: {}", .0.join(", "))]
    MissingColumns(Vec<String>),
    #[error("training {kind} failed: {source}")]
    Train {
        kind: ModelKind,
        #[source]
        source: EnsembleError,
    },
    #[error("evaluating {kind} failed: {source}")]
    Evaluate {
        kind: ModelKind,
        #[source]
        source: MetricsError,
    },
    #[error("scoring failed: {0}")]
    Predict(#[from] EnsembleError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// 2 for configuration, data and schema problems; 3 for failures while
    /// training, evaluating or writing results.
    pub fn exit_code(&self) -> u8 {
        match self {
            PipelineError::Config(_)
            | PipelineError::Data(_)
            | PipelineError::Preprocess(_)
            | PipelineError::Persist(_)
            | PipelineError::MissingColumns(_) => 2,
            PipelineError::Train { .. }
            | PipelineError::Evaluate { .. }
            | PipelineError::Predict(_)
            | PipelineError::Io { .. } => 3,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> PipelineError + '_ {
    move |e| PipelineError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitOn {
    Train,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: PathBuf,
    pub label_column: String,
    pub na_tokens: Vec<String>,
    pub test_fraction: f64,
    pub seed: u64,
    pub selection: bool,
    pub fit_on: FitOn,
    pub hyperparams: Hyperparams,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn new(input: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            input: input.into(),
            label_column: "Class".into(),
            na_tokens: na_token_set::<&str>(&[]).into_iter().collect(),
            test_fraction: DEFAULT_TEST_FRACTION,
            seed: DEFAULT_SEED,
            selection: true,
            fit_on: FitOn::Train,
            hyperparams: Hyperparams::default(),
            out_dir: out_dir.into(),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad("--test-fraction must lie strictly between 0 and 1");
        }
        if self.label_column.is_empty() {
            return bad("--label-column must not be empty");
        }
        let h = &self.hyperparams;
        if h.random_forest.n_trees < 1 {
            return bad("--rf-trees must be at least 1");
        }
        if h.gradient_boosting.n_rounds < 1 {
            return bad("--gb-rounds must be at least 1");
        }
        let lr = h.gradient_boosting.learning_rate;
        if !(lr > 0.0 && lr <= 1.0) {
            return bad("--gb-lr must lie in (0, 1]");
        }
        if h.adaboost.n_rounds < 1 {
            return bad("--ada-rounds must be at least 1");
        }
        h.decision_tree
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn na_set(&self) -> std::collections::BTreeSet<String> {
        na_token_set(&self.na_tokens)
    }

    /// The configuration as written into reports.
    pub fn echo(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Seed handed to one model, derived from the run seed.
pub fn model_seed(run_seed: u64, kind: ModelKind) -> u64 {
    use rand::RngCore;
    derived_rng(run_seed, 1 << 32 | kind.ordinal()).next_u64()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub name: String,
    pub missing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub rows: usize,
    pub columns: usize,
    pub balance: ClassBalance,
    pub missing: Vec<ColumnSummary>,
}

impl DatasetSummary {
    pub fn of(raw: &RawTable) -> Result<Self, PipelineError> {
        let labels = raw.labels()?;
        Ok(Self {
            rows: raw.n_rows(),
            columns: raw.n_columns(),
            balance: ClassBalance::from_labels(&labels),
            missing: (0..raw.n_columns())
                .map(|c| ColumnSummary {
                    name: raw.headers()[c].clone(),
                    missing: raw.missing_count(c),
                })
                .collect(),
        })
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "rows: {}", self.rows);
        let _ = writeln!(out, "columns: {}", self.columns);
        let _ = writeln!(out, "normal (0): {}", self.balance.normal_count);
        let _ = writeln!(out, "anomaly (1): {}", self.balance.anomaly_count);
        let width = self.missing.iter().map(|c| c.name.len()).max().unwrap_or(0).max(6);
        let _ = writeln!(out, "{:<width$}  missing", "column");
        for c in &self.missing {
            let _ = writeln!(out, "{:<width$}  {}", c.name, c.missing);
        }
        out
    }
}

pub fn cmd_inspect(config: &RunConfig) -> Result<DatasetSummary, PipelineError> {
    let raw = load_csv(&config.input, &config.label_column, &config.na_set())?;
    DatasetSummary::of(&raw)
}

/// Row and feature counts of a prepared run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub rows: usize,
    pub columns: usize,
    pub features_before_selection: usize,
    pub features_kept: usize,
    pub balance: ClassBalance,
    pub train_balance: ClassBalance,
    pub test_balance: ClassBalance,
}

/// Train and test data after preprocessing and selection.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    pub preprocessing: Preprocessing,
    pub correlation: Option<CorrelationReport>,
    pub summary: SplitSummary,
}

pub fn prepare(config: &RunConfig) -> Result<Prepared, PipelineError> {
    config.validate()?;
    let na = config.na_set();
    let raw = load_csv(&config.input, &config.label_column, &na)?;
    let labels = raw.labels()?;
    let (train_rows, test_rows) = stratified_indices(&labels, config.test_fraction, config.seed)?;
    let raw_train = raw.take_rows(&train_rows);
    let raw_test = raw.take_rows(&test_rows);

    let basis = match config.fit_on {
        FitOn::Train => &raw_train,
        FitOn::Full => &raw,
    };
    let imputation = fit_imputation(basis)?;
    let encoding = fit_encoding(basis)?;
    let train = apply_preprocessing(&raw_train, &imputation, &encoding)?;
    let test = apply_preprocessing(&raw_test, &imputation, &encoding)?;
    let raw_feature_names = train.schema().feature_names().to_vec();

    let (train, test, kept, correlation) = if config.selection {
        let selection_basis = match config.fit_on {
            FitOn::Train => train.clone(),
            FitOn::Full => apply_preprocessing(&raw, &imputation, &encoding)?,
        };
        let (_, report) = select_positive_features(&selection_basis)?;
        let kept = report.kept_names();
        (
            keep_named(&train, &kept)?,
            keep_named(&test, &kept)?,
            kept,
            Some(report),
        )
    } else {
        let kept = raw_feature_names.clone();
        (train, test, kept, None)
    };

    let summary = SplitSummary {
        rows: raw.n_rows(),
        columns: raw.n_columns(),
        features_before_selection: raw_feature_names.len(),
        features_kept: kept.len(),
        balance: ClassBalance::from_labels(&labels),
        train_balance: train.class_counts(),
        test_balance: test.class_counts(),
    };
    let mut na_tokens: Vec<String> = na.into_iter().collect();
    na_tokens.sort();
    Ok(Prepared {
        train,
        test,
        preprocessing: Preprocessing {
            imputation,
            encoding,
            raw_feature_names,
            kept_features: kept,
            label_column: config.label_column.clone(),
            na_tokens,
        },
        correlation,
        summary,
    })
}

/// One fitted and evaluated model.
#[derive(Debug, Clone)]
pub struct ModelRun {
    pub envelope: ModelEnvelope,
    pub evaluation: Evaluation,
    pub roc: RocCurve,
    pub train_seconds: f64,
    pub eval_seconds: f64,
}

pub fn train_and_evaluate(kind: ModelKind, prepared: &Prepared, config: &RunConfig) -> Result<ModelRun, PipelineError> {
    let started = Instant::now();
    let model = fit_model(
        kind,
        &prepared.train,
        &config.hyperparams,
        model_seed(config.seed, kind),
    )
    .map_err(|source| PipelineError::Train { kind, source })?;
    let train_seconds = started.elapsed().as_secs_f64();

    let started = Instant::now();
    let (evaluation, curve) = evaluate(&model, &prepared.test)?;
    let eval_seconds = started.elapsed().as_secs_f64();
    Ok(ModelRun {
        envelope: ModelEnvelope::new(model, prepared.preprocessing.clone()),
        evaluation,
        roc: curve,
        train_seconds,
        eval_seconds,
    })
}

pub fn evaluate(model: &Model, test: &Dataset) -> Result<(Evaluation, RocCurve), PipelineError> {
    let kind = model.kind();
    let (scores, labels) = model
        .predict_dataset(test)
        .map_err(|source| PipelineError::Train { kind, source })?;
    let cm = confusion(&labels, test.labels()).map_err(|source| PipelineError::Evaluate { kind, source })?;
    let curve = roc(&scores, test.labels()).map_err(|source| PipelineError::Evaluate { kind, source })?;
    Ok((
        Evaluation {
            confusion: cm,
            auc: curve.auc,
        },
        curve,
    ))
}

fn ensure_dir(dir: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

pub fn model_path(out_dir: &Path, kind: ModelKind) -> PathBuf {
    out_dir.join(format!("{}.model.json", kind.file_name()))
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    write_atomic(path, text.as_bytes()).map_err(io_err(path))
}

fn write_roc(path: &Path, curve: &RocCurve) -> Result<(), PipelineError> {
    let mut buf = Vec::new();
    curve.write_csv(&mut buf).map_err(csv_err(path))?;
    write_atomic(path, &buf).map_err(io_err(path))
}

fn write_correlation(out_dir: &Path, report: &CorrelationReport) -> Result<(), PipelineError> {
    let path = out_dir.join("correlation.csv");
    let mut buf = Vec::new();
    report.write_csv(&mut buf).map_err(csv_err(&path))?;
    write_atomic(&path, &buf).map_err(io_err(&path))?;
    if let Some(m) = &report.matrix {
        let path = out_dir.join("correlation_matrix.csv");
        let mut buf = Vec::new();
        m.write_csv(&mut buf).map_err(csv_err(&path))?;
        write_atomic(&path, &buf).map_err(io_err(&path))?;
    }
    Ok(())
}

fn evaluation_json(kind: ModelKind, e: &Evaluation) -> Value {
    let m = e.metrics();
    json!({
        "model": kind.file_name(),
        "confusion": {"tp": e.confusion.tp, "tn": e.confusion.tn, "fp": e.confusion.fp, "fn": e.confusion.fn_},
        "precision": m.precision,
        "recall": m.recall,
        "f1": m.f1,
        "accuracy": m.accuracy,
        "auc": e.auc,
    })
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub run: ModelRun,
    pub model_path: PathBuf,
    pub metrics_path: PathBuf,
}

/// Trains one model and writes its envelope plus a metrics fragment for the
/// held-out split.
pub fn cmd_train(config: &RunConfig, kind: ModelKind) -> Result<TrainOutcome, PipelineError> {
    let prepared = prepare(config)?;
    let run = train_and_evaluate(kind, &prepared, config)?;
    ensure_dir(&config.out_dir)?;
    let model_path = model_path(&config.out_dir, kind);
    save_model(&run.envelope, &model_path)?;
    let metrics_path = config.out_dir.join(format!("{}.metrics.json", kind.file_name()));
    let fragment = json!({
        "config": config.echo(),
        "dataset": prepared.summary,
        "evaluation": evaluation_json(kind, &run.evaluation),
    });
    write_text(&metrics_path, &pretty(&fragment))?;
    write_roc(&config.out_dir.join(format!("roc_{}.csv", kind.file_name())), &run.roc)?;
    Ok(TrainOutcome {
        run,
        model_path,
        metrics_path,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub kind: ModelKind,
    pub evaluation: Evaluation,
    /// Snapshot taken when the row was built. Rendering ignores it and
    /// recomputes from the confusion counts.
    pub metrics: MetricSet,
    pub train_seconds: f64,
    pub eval_seconds: f64,
}

impl ComparisonRow {
    pub fn metrics(&self) -> MetricSet {
        metric_set(&self.evaluation.confusion)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub config: Value,
    pub dataset: SplitSummary,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    /// Rows by descending accuracy, ties by algorithm name.
    pub fn sorted_rows(&self) -> Vec<&ComparisonRow> {
        let mut rows: Vec<&ComparisonRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| {
            b.metrics()
                .accuracy
                .total_cmp(&a.metrics().accuracy)
                .then_with(|| a.kind.display_name().cmp(b.kind.display_name()))
        });
        rows
    }

    /// Algorithm / Precision / Recall / F1 / Accuracy / AUC at 4 decimals.
    pub fn render_table(&self) -> String {
        let name_width = self
            .rows
            .iter()
            .map(|r| r.kind.display_name().len())
            .max()
            .unwrap_or(0)
            .max("Algorithm".len());
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<name_width$}  {:>9}  {:>9}  {:>9}  {:>9}  {:>9}",
            "Algorithm", "Precision", "Recall", "F1", "Accuracy", "AUC"
        );
        for row in self.sorted_rows() {
            let m = row.metrics();
            let _ = writeln!(
                out,
                "{:<name_width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>9.4}  {:>9.4}",
                row.kind.display_name(),
                m.precision,
                m.recall,
                m.f1,
                m.accuracy,
                row.evaluation.auc
            );
        }
        out
    }

    /// Report body. Holds no timings so identical runs give identical text.
    pub fn render_text(&self) -> String {
        let d = &self.dataset;
        let mut out = String::new();
        let _ = writeln!(out, "Performance comparison");
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "dataset: {} rows, {} columns, normal {}, anomaly {}",
            d.rows, d.columns, d.balance.normal_count, d.balance.anomaly_count
        );
        let _ = writeln!(
            out,
            "split: train {} rows, test {} rows (normal {}, anomaly {})",
            d.train_balance.total(),
            d.test_balance.total(),
            d.test_balance.normal_count,
            d.test_balance.anomaly_count
        );
        let _ = writeln!(
            out,
            "features: {} kept of {}",
            d.features_kept, d.features_before_selection
        );
        let _ = writeln!(out);
        out.push_str(&self.render_table());
        for row in self.sorted_rows() {
            let _ = writeln!(out);
            let _ = writeln!(out, "{} confusion matrix", row.kind.display_name());
            out.push_str(&row.evaluation.confusion.render());
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "config: {}", self.config);
        out
    }

    pub fn to_json(&self) -> Value {
        json!({
            "config": self.config,
            "dataset": self.dataset,
            "models": self.sorted_rows().iter().map(|r| evaluation_json(r.kind, &r.evaluation)).collect::<Vec<_>>(),
        })
    }

    /// Timing lines, kept out of the report body.
    pub fn render_timings(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}: train {:.3}s, eval {:.3}s",
                r.kind.short_name(),
                r.train_seconds,
                r.eval_seconds
            );
        }
        out
    }
}

/// Trains all four models on one shared split and writes the comparison
/// artifacts. Any failing model aborts the whole run.
pub fn cmd_compare(config: &RunConfig) -> Result<ComparisonReport, PipelineError> {
    let prepared = prepare(config)?;
    let runs: Vec<ModelRun> = ModelKind::ALL
        .par_iter()
        .map(|&kind| train_and_evaluate(kind, &prepared, config))
        .collect::<Result<_, _>>()?;

    ensure_dir(&config.out_dir)?;
    for run in &runs {
        let kind = run.envelope.model_kind;
        save_model(&run.envelope, model_path(&config.out_dir, kind))?;
        write_roc(&config.out_dir.join(format!("roc_{}.csv", kind.file_name())), &run.roc)?;
        write_text(
            &config.out_dir.join(format!("confusion_{}.txt", kind.file_name())),
            &run.evaluation.confusion.render(),
        )?;
    }
    if let Some(report) = &prepared.correlation {
        write_correlation(&config.out_dir, report)?;
    }

    let report = ComparisonReport {
        config: config.echo(),
        dataset: prepared.summary.clone(),
        rows: runs
            .iter()
            .map(|r| ComparisonRow {
                kind: r.envelope.model_kind,
                evaluation: r.evaluation,
                metrics: r.evaluation.metrics(),
                train_seconds: r.train_seconds,
                eval_seconds: r.eval_seconds,
            })
            .collect(),
    };
    write_text(&config.out_dir.join("report.txt"), &report.render_text())?;
    write_text(&config.out_dir.join("report.json"), &pretty(&report.to_json()))?;
    write_text(&config.out_dir.join("timings.log"), &report.render_timings())?;
    Ok(report)
}

/// Correlation of every feature with the label over the whole file, with
/// plans fitted on every row. Writes `correlation.csv` (and the feature
/// matrix when `with_matrix`).
pub fn cmd_select_features(config: &RunConfig, with_matrix: bool) -> Result<CorrelationReport, PipelineError> {
    config.validate()?;
    let raw = load_csv(&config.input, &config.label_column, &config.na_set())?;
    let imputation = fit_imputation(&raw)?;
    let encoding = fit_encoding(&raw)?;
    let ds = apply_preprocessing(&raw, &imputation, &encoding)?;
    let (_, mut report) = select_positive_features(&ds)?;
    if with_matrix {
        report.matrix = Some(correlation_matrix(&ds));
    }
    ensure_dir(&config.out_dir)?;
    write_correlation(&config.out_dir, &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub row_index: usize,
    pub score: f64,
    pub label: u8,
}

/// Scores every row of `csv_path` with a saved model.
pub fn predict_file(model_path: &Path, csv_path: &Path) -> Result<Vec<Prediction>, PipelineError> {
    let envelope = load_model(model_path)?;
    let pre = &envelope.preprocessing;
    let na = pre.na_tokens.iter().cloned().collect();
    let raw = load_csv_unlabeled(csv_path, &pre.label_column, &na)?;
    let projected = raw
        .project(&pre.raw_feature_names)
        .map_err(PipelineError::MissingColumns)?;
    let features = transform_features(&projected, &pre.imputation, &pre.encoding)?;
    let index: BTreeMap<&str, usize> = features
        .names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let columns: Vec<&[f64]> = envelope
        .feature_names
        .iter()
        .map(|n| {
            index
                .get(n.as_str())
                .map(|&i| features.columns[i].as_slice())
                .ok_or_else(|| PipelineError::MissingColumns(vec![n.clone()]))
        })
        .collect::<Result<_, _>>()?;

    let mut row = vec![0.0; columns.len()];
    (0..features.n_rows)
        .map(|r| {
            for (slot, col) in row.iter_mut().zip(&columns) {
                *slot = col[r];
            }
            let (score, label) = envelope.payload.predict(&row)?;
            Ok(Prediction {
                row_index: r,
                score,
                label,
            })
        })
        .collect()
}

pub fn write_predictions<W: std::io::Write>(predictions: &[Prediction], writer: W) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["row_index", "score", "label"])?;
    for p in predictions {
        wtr.write_record([p.row_index.to_string(), p.score.to_string(), p.label.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes `row_index,score,label` for every row to `output`.
pub fn cmd_predict(model_path: &Path, csv_path: &Path, output: &Path) -> Result<Vec<Prediction>, PipelineError> {
    let predictions = predict_file(model_path, csv_path)?;
    let mut buf = Vec::new();
    write_predictions(&predictions, &mut buf).map_err(csv_err(output))?;
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_atomic(output, &buf).map_err(io_err(output))?;
    Ok(predictions)
}
