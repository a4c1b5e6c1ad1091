//! Versioned JSON model files.
//!
//! A file holds one [`ModelEnvelope`]: the fitted model, its hyperparameters,
//! and the preprocessing plans needed to score raw CSV rows. Keys are written
//! in sorted order and reals in shortest round-trip form, so the same model
//! always produces the same bytes.
//!
//! ```text
//! {
//!   "feature_names": [...],          // model inputs, after selection
//!   "format_version": 1,
//!   "hyperparams": {...},
//!   "model_kind": "decision_tree" | "random_forest" | "gradient_boosting" | "adaboost",
//!   "payload": {...},                // kind-specific body
//!   "preprocessing": {
//!     "encoding": {...}, "imputation": {...}, "kept_features": [...],
//!     "label_column": "Class", "na_tokens": [...], "raw_feature_names": [...]
//!   },
//!   "seed": 42
//! }
//! ```
//!
//! Trees are flat node arrays; a node's `left`/`right` are indices into the
//! same array, `-1` on leaves.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::ensemble::{AdaModel, DecisionTreeModel, ForestModel, GbModel, Model, ModelKind};
use crate::preprocess::{EncodingPlan, ImputationPlan};
use crate::tree::{TreeMode, TreeModel};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, thiserror::Error)]
pub enum PersistError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed model file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported model format_version {found} (this build reads {FORMAT_VERSION})")]
    UnsupportedVersion { found: String },
    #[error("invalid model file: {0}")]
    Invalid(String),
}

/// Everything needed to turn a raw CSV into model inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preprocessing {
    pub imputation: ImputationPlan,
    pub encoding: EncodingPlan,
    /// Raw feature columns the plans expect, in order.
    pub raw_feature_names: Vec<String>,
    /// Features surviving selection, in model input order.
    pub kept_features: Vec<String>,
    pub label_column: String,
    pub na_tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelEnvelope {
    pub format_version: u64,
    pub model_kind: ModelKind,
    pub hyperparams: BTreeMap<String, Value>,
    pub feature_names: Vec<String>,
    pub preprocessing: Preprocessing,
    pub payload: Model,
    pub seed: u64,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("model types serialize to JSON")
}

fn params_map(model: &Model) -> BTreeMap<String, Value> {
    let v = match model {
        Model::DecisionTree(m) => to_value(m.tree.params()),
        Model::RandomForest(m) => to_value(&m.params),
        Model::GradientBoosting(m) => to_value(&m.params),
        Model::AdaBoost(m) => to_value(&m.params),
    };
    match v {
        Value::Object(map) => map.into_iter().collect(),
        _ => BTreeMap::new(),
    }
}

impl ModelEnvelope {
    pub fn new(model: Model, preprocessing: Preprocessing) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            model_kind: model.kind(),
            hyperparams: params_map(&model),
            feature_names: preprocessing.kept_features.clone(),
            seed: model.seed(),
            payload: model,
            preprocessing,
        }
    }

    fn payload_value(&self) -> Value {
        match &self.payload {
            Model::DecisionTree(m) => to_value(m),
            Model::RandomForest(m) => to_value(m),
            Model::GradientBoosting(m) => to_value(m),
            Model::AdaBoost(m) => to_value(m),
        }
    }

    /// Canonical document text: sorted keys, two-space indent, trailing newline.
    pub fn to_json(&self) -> String {
        let doc = json!({
            "format_version": self.format_version,
            "model_kind": self.model_kind,
            "hyperparams": self.hyperparams,
            "feature_names": self.feature_names,
            "preprocessing": self.preprocessing,
            "payload": self.payload_value(),
            "seed": self.seed,
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("JSON values serialize");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, PersistError> {
        let doc: Value = serde_json::from_str(text)?;
        let Value::Object(mut fields) = doc else {
            return Err(PersistError::Invalid("top level is not an object".into()));
        };
        match fields.get("format_version") {
            Some(v) if v.as_u64() == Some(FORMAT_VERSION) => {}
            Some(v) => return Err(PersistError::UnsupportedVersion { found: v.to_string() }),
            None => return Err(PersistError::Invalid("missing format_version".into())),
        }
        let mut take = |key: &str| {
            fields
                .remove(key)
                .ok_or_else(|| PersistError::Invalid(format!("missing field {key:?}")))
        };
        let model_kind: ModelKind = serde_json::from_value(take("model_kind")?)?;
        let hyperparams: BTreeMap<String, Value> = serde_json::from_value(take("hyperparams")?)?;
        let feature_names: Vec<String> = serde_json::from_value(take("feature_names")?)?;
        let preprocessing: Preprocessing = serde_json::from_value(take("preprocessing")?)?;
        let seed: u64 = serde_json::from_value(take("seed")?)?;
        let payload = take("payload")?;
        let payload = match model_kind {
            ModelKind::DecisionTree => Model::DecisionTree(serde_json::from_value::<DecisionTreeModel>(payload)?),
            ModelKind::RandomForest => Model::RandomForest(serde_json::from_value::<ForestModel>(payload)?),
            ModelKind::GradientBoosting => Model::GradientBoosting(serde_json::from_value::<GbModel>(payload)?),
            ModelKind::AdaBoost => Model::AdaBoost(serde_json::from_value::<AdaModel>(payload)?),
        };
        if let Some(extra) = fields.keys().find(|k| k.as_str() != "format_version") {
            return Err(PersistError::Invalid(format!("unknown field {extra:?}")));
        }
        let envelope = ModelEnvelope {
            format_version: FORMAT_VERSION,
            model_kind,
            hyperparams,
            feature_names,
            preprocessing,
            payload,
            seed,
        };
        envelope.validate()?;
        Ok(envelope)
    }

    /// Structural checks beyond what deserialization enforces.
    pub fn validate(&self) -> Result<(), PersistError> {
        let invalid = |msg: String| Err(PersistError::Invalid(msg));
        let width = self.payload.n_features();
        if self.feature_names.len() != width {
            return invalid(format!(
                "{} feature names but the model expects {width} inputs",
                self.feature_names.len()
            ));
        }
        if self.feature_names != self.preprocessing.kept_features {
            return invalid("feature_names disagree with preprocessing.kept_features".into());
        }
        if let Some(name) = self
            .feature_names
            .iter()
            .find(|n| !self.preprocessing.raw_feature_names.contains(n))
        {
            return invalid(format!("feature {name:?} is not produced by preprocessing"));
        }
        if self.seed != self.payload.seed() {
            return invalid("envelope seed differs from payload seed".into());
        }
        let check_trees = |trees: &[TreeModel], mode: TreeMode, what: &str| -> Result<(), PersistError> {
            if trees.is_empty() {
                return Err(PersistError::Invalid(format!("{what} has no trees")));
            }
            for (i, t) in trees.iter().enumerate() {
                if t.n_features() != width {
                    return Err(PersistError::Invalid(format!(
                        "{what} tree {i} expects {} features, model expects {width}",
                        t.n_features()
                    )));
                }
                if t.mode() != mode {
                    return Err(PersistError::Invalid(format!("{what} tree {i} has the wrong mode")));
                }
            }
            Ok(())
        };
        match &self.payload {
            Model::DecisionTree(m) => {
                check_trees(std::slice::from_ref(&m.tree), TreeMode::Classification, "decision tree")?
            }
            Model::RandomForest(m) => check_trees(&m.trees, TreeMode::Classification, "random forest")?,
            Model::GradientBoosting(m) => {
                check_trees(&m.trees, TreeMode::Regression, "gradient boosting")?;
                if !m.initial_score.is_finite() || !m.learning_rate.is_finite() {
                    return invalid("gradient boosting has a non-finite score or rate".into());
                }
            }
            Model::AdaBoost(m) => {
                check_trees(&m.stumps, TreeMode::Classification, "adaboost")?;
                if m.stumps.len() != m.alphas.len() {
                    return invalid(format!("{} stumps but {} alphas", m.stumps.len(), m.alphas.len()));
                }
                if m.alphas.iter().any(|a| !a.is_finite()) {
                    return invalid("adaboost has a non-finite alpha".into());
                }
            }
        }
        Ok(())
    }
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn save_model(envelope: &ModelEnvelope, path: impl AsRef<Path>) -> Result<(), PersistError> {
    let path = path.as_ref();
    write_atomic(path, envelope.to_json().as_bytes()).map_err(|source| PersistError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelEnvelope, PersistError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| PersistError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ModelEnvelope::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;
    use crate::ensemble::{fit_model, Hyperparams};

    fn fixture() -> Dataset {
        Dataset::from_columns(
            &["a", "b"],
            vec![
                vec![0.3, 1.2, 2.2, 0.1, 3.3, 2.0, 1.7, 0.9, 2.8, 0.4],
                vec![5.0, 4.0, 1.0, 2.0, 7.0, 3.0, 0.5, 6.0, 2.5, 4.4],
            ],
            vec![0, 1, 1, 0, 1, 0, 1, 0, 1, 0],
        )
        .unwrap()
    }

    fn preprocessing() -> Preprocessing {
        Preprocessing {
            imputation: ImputationPlan {
                fills: [("a".to_string(), 1.0), ("b".to_string(), 3.0)].into_iter().collect(),
                fitted_on: 10,
            },
            encoding: EncodingPlan::default(),
            raw_feature_names: vec!["a".into(), "b".into()],
            kept_features: vec!["a".into(), "b".into()],
            label_column: "Class".into(),
            na_tokens: vec![String::new()],
        }
    }

    fn small_hyper() -> Hyperparams {
        let mut h = Hyperparams::default();
        h.random_forest.n_trees = 5;
        h.gradient_boosting.n_rounds = 5;
        h.adaboost.n_rounds = 5;
        h
    }

    fn envelope(kind: ModelKind) -> ModelEnvelope {
        let model = fit_model(kind, &fixture(), &small_hyper(), 17).unwrap();
        ModelEnvelope::new(model, preprocessing())
    }

    #[test]
    fn round_trip_every_kind() {
        for kind in ModelKind::ALL {
            let env = envelope(kind);
            let text = env.to_json();
            let back = ModelEnvelope::from_json(&text).unwrap();
            assert_eq!(back, env, "{kind}");
            assert_eq!(back.to_json(), text);
        }
    }

    #[test]
    fn keys_are_sorted() {
        let text = envelope(ModelKind::DecisionTree).to_json();
        let top: Vec<&str> = text
            .lines()
            .filter(|l| l.starts_with("  \"") && !l.starts_with("   "))
            .map(|l| l.trim().split('"').nth(1).unwrap())
            .collect();
        let mut sorted = top.clone();
        sorted.sort_unstable();
        assert_eq!(top, sorted);
        assert!(text.contains("\"left\": -1"));
    }

    #[test]
    fn rejects_unknown_version() {
        let text = envelope(ModelKind::AdaBoost)
            .to_json()
            .replace("\"format_version\": 1", "\"format_version\": 2");
        assert!(matches!(
            ModelEnvelope::from_json(&text),
            Err(PersistError::UnsupportedVersion { .. })
        ));
    }

    #[test]
    fn rejects_truncated_file() {
        let text = envelope(ModelKind::GradientBoosting).to_json();
        assert!(matches!(
            ModelEnvelope::from_json(&text[..text.len() / 2]),
            Err(PersistError::Parse(_))
        ));
    }

    #[test]
    fn rejects_out_of_range_child() {
        let mut doc: Value = serde_json::from_str(&envelope(ModelKind::DecisionTree).to_json()).unwrap();
        doc["payload"]["tree"]["nodes"][0]["right"] = json!(999);
        let err = ModelEnvelope::from_json(&doc.to_string()).unwrap_err();
        assert!(err.to_string().contains("999"), "{err}");
    }

    #[test]
    fn rejects_feature_count_mismatch() {
        let mut doc: Value = serde_json::from_str(&envelope(ModelKind::RandomForest).to_json()).unwrap();
        doc["feature_names"] = json!(["a"]);
        doc["preprocessing"]["kept_features"] = json!(["a"]);
        assert!(matches!(
            ModelEnvelope::from_json(&doc.to_string()),
            Err(PersistError::Invalid(_))
        ));
    }

    #[test]
    fn save_and_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let env = envelope(ModelKind::RandomForest);
        save_model(&env, &path).unwrap();
        let first = std::fs::read(&path).unwrap();
        save_model(&env, &path).unwrap();
        assert_eq!(first, std::fs::read(&path).unwrap());
        let back = load_model(&path).unwrap();
        assert_eq!(back.hyperparams, env.hyperparams);
        assert_eq!(back.seed, 17);
        assert!(matches!(
            save_model(&env, dir.path().join("missing/dir/m.json")),
            Err(PersistError::Io { .. })
        ));
    }
}
