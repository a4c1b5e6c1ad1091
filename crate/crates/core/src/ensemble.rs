//! Random forest, gradient boosting and AdaBoost on top of [`crate::tree`],
//! plus the [`Model`] enum that lets the pipeline treat all four learners
//! (including a lone decision tree) uniformly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Label};
use crate::tree::{fit_tree, fit_tree_on_rows, Targets, TreeError, TreeModel, TreeParams};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EnsembleError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("training data must contain both classes")]
    SingleClass,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("no weak learner did better than chance on the first round")]
    NoWeakLearner,
    #[error("expected {expected} features, got {found}")]
    FeatureCount { expected: usize, found: usize },
}

fn check_width(expected: usize, row: &[f64]) -> Result<(), EnsembleError> {
    if row.len() == expected {
        Ok(())
    } else {
        Err(EnsembleError::FeatureCount {
            expected,
            found: row.len(),
        })
    }
}

fn require_both_classes(ds: &Dataset) -> Result<(), EnsembleError> {
    if ds.class_counts().both_present() {
        Ok(())
    } else {
        Err(EnsembleError::SingleClass)
    }
}

/// Row-major copy of the feature matrix for repeated prediction.
fn row_major(ds: &Dataset) -> Vec<Vec<f64>> {
    (0..ds.row_count()).map(|r| ds.row(r)).collect()
}

/// Seeded stream `stream` of the generator family keyed by `seed`.
pub fn derived_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

// Decision tree

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTreeModel {
    pub tree: TreeModel,
    pub seed: u64,
}

pub fn fit_decision_tree(ds: &Dataset, params: &TreeParams, seed: u64) -> Result<DecisionTreeModel, EnsembleError> {
    require_both_classes(ds)?;
    let mut rng = derived_rng(seed, 0);
    let tree = fit_tree(ds, Targets::labels(ds.labels()), params, &mut rng)?;
    Ok(DecisionTreeModel { tree, seed })
}

// Random forest

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// `floor(sqrt(d))`, at least 1.
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(&self, d: usize) -> usize {
        match *self {
            MaxFeatures::Sqrt => ((d as f64).sqrt().floor() as usize).max(1),
            MaxFeatures::All => d,
            MaxFeatures::Count(k) => k.clamp(1, d.max(1)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_features: MaxFeatures::Sqrt,
            max_depth: None,
            min_samples_split: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<TreeModel>,
    pub params: ForestParams,
    pub seed: u64,
    pub n_features: usize,
}

/// Bagged CART trees. Tree `t` draws its bootstrap sample and its per-node
/// feature subsets from stream `t` of `seed`, so the result does not depend
/// on how trees are scheduled.
pub fn fit_random_forest(ds: &Dataset, params: &ForestParams, seed: u64) -> Result<ForestModel, EnsembleError> {
    if params.n_trees < 1 {
        return Err(EnsembleError::InvalidParams("n_trees must be at least 1".into()));
    }
    require_both_classes(ds)?;
    let n = ds.row_count();
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_split: params.min_samples_split,
        min_gain: 0.0,
        features_per_split: Some(params.max_features.resolve(ds.n_features())),
    };
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = derived_rng(seed, t as u64);
            let sample: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            fit_tree_on_rows(ds, &sample, Targets::labels(ds.labels()), &tree_params, &mut rng)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ForestModel {
        trees,
        params: *params,
        seed,
        n_features: ds.n_features(),
    })
}

impl ForestModel {
    /// Fraction of trees voting for class 1.
    pub fn vote_fraction(&self, row: &[f64]) -> Result<f64, EnsembleError> {
        check_width(self.n_features, row)?;
        let ones = self
            .trees
            .iter()
            .filter(|t| t.predict_unchecked(row).class() == 1)
            .count();
        Ok(ones as f64 / self.trees.len() as f64)
    }
}

/// Majority vote; a tied vote goes to class 0.
pub fn predict_forest(model: &ForestModel, row: &[f64]) -> Result<Label, EnsembleError> {
    check_width(model.n_features, row)?;
    let ones = model
        .trees
        .iter()
        .filter(|t| t.predict_unchecked(row).class() == 1)
        .count();
    Ok(u8::from(2 * ones > model.trees.len()))
}

// Gradient boosting

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_split: usize,
}

impl Default for GbParams {
    fn default() -> Self {
        Self {
            n_rounds: 100,
            learning_rate: 0.1,
            max_depth: 3,
            min_samples_split: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbModel {
    /// Log-odds of the training class balance.
    pub initial_score: f64,
    pub trees: Vec<TreeModel>,
    pub learning_rate: f64,
    pub n_rounds: usize,
    pub params: GbParams,
    pub seed: u64,
    pub n_features: usize,
}

/// Smallest Newton denominator for which a leaf value is computed.
pub const NEWTON_GUARD: f64 = 1e-12;
/// Probabilities are kept this far from 0 and 1.
pub const PROBABILITY_FLOOR: f64 = 1e-15;

pub fn logistic(score: f64) -> f64 {
    (1.0 / (1.0 + (-score).exp())).clamp(PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR)
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Mean binomial deviance (negative log-likelihood) of raw scores.
pub fn binomial_deviance(scores: &[f64], labels: &[Label]) -> f64 {
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&f, &y)| softplus(f) - f64::from(y) * f)
        .sum();
    total / scores.len() as f64
}

impl GbModel {
    pub fn raw_score(&self, row: &[f64]) -> Result<f64, EnsembleError> {
        check_width(self.n_features, row)?;
        Ok(self.raw_score_unchecked(row))
    }

    fn raw_score_unchecked(&self, row: &[f64]) -> f64 {
        let boost: f64 = self.trees.iter().map(|t| t.predict_unchecked(row).score()).sum();
        self.initial_score + self.learning_rate * boost
    }
}

/// Training deviance before the first round and after each round.
#[derive(Debug, Clone, PartialEq)]
pub struct GbTrace {
    pub deviance: Vec<f64>,
}

pub fn fit_gradient_boosting(ds: &Dataset, params: &GbParams, seed: u64) -> Result<GbModel, EnsembleError> {
    fit_gradient_boosting_traced(ds, params, seed).map(|(m, _)| m)
}

/// Binomial-deviance boosting with Newton leaf values.
pub fn fit_gradient_boosting_traced(
    ds: &Dataset,
    params: &GbParams,
    seed: u64,
) -> Result<(GbModel, GbTrace), EnsembleError> {
    if params.n_rounds < 1 {
        return Err(EnsembleError::InvalidParams("n_rounds must be at least 1".into()));
    }
    if !(params.learning_rate > 0.0 && params.learning_rate <= 1.0) {
        return Err(EnsembleError::InvalidParams("learning_rate must lie in (0, 1]".into()));
    }
    let balance = ds.class_counts();
    if !balance.both_present() {
        return Err(EnsembleError::SingleClass);
    }
    let labels = ds.labels();
    let rows = row_major(ds);
    let initial_score = (balance.anomaly_count as f64 / balance.normal_count as f64).ln();
    let tree_params = TreeParams {
        max_depth: Some(params.max_depth),
        min_samples_split: params.min_samples_split,
        min_gain: 0.0,
        features_per_split: None,
    };
    let mut rng = derived_rng(seed, 0);

    let mut scores = vec![initial_score; rows.len()];
    let mut deviance = vec![binomial_deviance(&scores, labels)];
    let mut trees = Vec::with_capacity(params.n_rounds);
    for _ in 0..params.n_rounds {
        let probs: Vec<f64> = scores.iter().map(|&f| logistic(f)).collect();
        let residuals: Vec<f64> = labels.iter().zip(&probs).map(|(&y, &p)| f64::from(y) - p).collect();
        let mut tree = fit_tree(ds, Targets::Values(&residuals), &tree_params, &mut rng)?;

        let leaves: Vec<usize> = rows.iter().map(|r| tree.leaf_index(r)).collect();
        let mut numer = vec![0.0; tree.nodes().len()];
        let mut denom = vec![0.0; tree.nodes().len()];
        for ((&leaf, &r), &p) in leaves.iter().zip(&residuals).zip(&probs) {
            numer[leaf] += r;
            denom[leaf] += p * (1.0 - p);
        }
        tree.set_regression_leaves(|i| {
            if denom[i] < NEWTON_GUARD {
                0.0
            } else {
                numer[i] / denom[i]
            }
        });

        for (score, row) in scores.iter_mut().zip(&rows) {
            *score += params.learning_rate * tree.predict_unchecked(row).score();
        }
        deviance.push(binomial_deviance(&scores, labels));
        trees.push(tree);
    }
    let model = GbModel {
        initial_score,
        trees,
        learning_rate: params.learning_rate,
        n_rounds: params.n_rounds,
        params: *params,
        seed,
        n_features: ds.n_features(),
    };
    Ok((model, GbTrace { deviance }))
}

/// Probability of class 1; the hard label is 1 iff this is at least 0.5.
pub fn predict_gb_score(model: &GbModel, row: &[f64]) -> Result<f64, EnsembleError> {
    model.raw_score(row).map(logistic)
}

// AdaBoost

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaParams {
    pub n_rounds: usize,
    pub max_depth: usize,
}

impl Default for AdaParams {
    fn default() -> Self {
        Self {
            n_rounds: 50,
            max_depth: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaModel {
    pub stumps: Vec<TreeModel>,
    pub alphas: Vec<f64>,
    pub n_rounds: usize,
    pub params: AdaParams,
    pub seed: u64,
    pub n_features: usize,
}

/// Weighted errors are clamped into `[ERROR_CLAMP, 1 - ERROR_CLAMP]` before
/// computing a stage weight.
pub const ERROR_CLAMP: f64 = 1e-10;

/// Record of one boosting round.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaRound {
    /// Weighted error before clamping.
    pub error: f64,
    pub alpha: f64,
    /// Rows the round's stump got wrong.
    pub misclassified: Vec<usize>,
    /// Normalized instance weights after the update. Empty when the round was
    /// discarded.
    pub weights: Vec<f64>,
    pub kept: bool,
}

fn vote(tree: &TreeModel, row: &[f64]) -> f64 {
    if tree.predict_unchecked(row).class() == 1 {
        1.0
    } else {
        -1.0
    }
}

pub fn fit_adaboost(ds: &Dataset, params: &AdaParams, seed: u64) -> Result<AdaModel, EnsembleError> {
    fit_adaboost_traced(ds, params, seed).map(|(m, _)| m)
}

/// Discrete two-class AdaBoost over weighted-Gini stumps.
pub fn fit_adaboost_traced(
    ds: &Dataset,
    params: &AdaParams,
    seed: u64,
) -> Result<(AdaModel, Vec<AdaRound>), EnsembleError> {
    if params.n_rounds < 1 {
        return Err(EnsembleError::InvalidParams("n_rounds must be at least 1".into()));
    }
    require_both_classes(ds)?;
    let n = ds.row_count();
    let labels = ds.labels();
    let signs: Vec<f64> = labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
    let rows = row_major(ds);
    let stump_params = TreeParams::with_max_depth(Some(params.max_depth));
    let mut rng = derived_rng(seed, 0);

    let mut weights = vec![1.0 / n as f64; n];
    let mut stumps = Vec::new();
    let mut alphas = Vec::new();
    let mut rounds = Vec::new();
    for _ in 0..params.n_rounds {
        let stump = fit_tree(ds, Targets::weighted(labels, &weights), &stump_params, &mut rng)?;
        let votes: Vec<f64> = rows.iter().map(|r| vote(&stump, r)).collect();
        let misclassified: Vec<usize> = (0..n).filter(|&i| votes[i] != signs[i]).collect();
        let error: f64 = misclassified.iter().map(|&i| weights[i]).sum();
        if error >= 0.5 {
            rounds.push(AdaRound {
                error,
                alpha: 0.0,
                misclassified,
                weights: Vec::new(),
                kept: false,
            });
            break;
        }
        let clamped = error.clamp(ERROR_CLAMP, 1.0 - ERROR_CLAMP);
        let alpha = 0.5 * ((1.0 - clamped) / clamped).ln();
        for ((w, &y), &h) in weights.iter_mut().zip(&signs).zip(&votes) {
            *w *= (-alpha * y * h).exp();
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        rounds.push(AdaRound {
            error,
            alpha,
            misclassified,
            weights: weights.clone(),
            kept: true,
        });
        stumps.push(stump);
        alphas.push(alpha);
        if error == 0.0 {
            break;
        }
    }
    if stumps.is_empty() {
        return Err(EnsembleError::NoWeakLearner);
    }
    let model = AdaModel {
        stumps,
        alphas,
        n_rounds: params.n_rounds,
        params: *params,
        seed,
        n_features: ds.n_features(),
    };
    Ok((model, rounds))
}

impl AdaModel {
    pub fn margin(&self, row: &[f64]) -> Result<f64, EnsembleError> {
        check_width(self.n_features, row)?;
        Ok(self
            .stumps
            .iter()
            .zip(&self.alphas)
            .map(|(s, a)| a * vote(s, row))
            .sum())
    }
}

/// `(label, margin)`: the label is 1 when the weighted vote is non-negative.
pub fn predict_adaboost(model: &AdaModel, row: &[f64]) -> Result<(Label, f64), EnsembleError> {
    let margin = model.margin(row)?;
    Ok((u8::from(margin >= 0.0), margin))
}

// Uniform view over the four learners

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    DecisionTree,
    RandomForest,
    GradientBoosting,
    AdaBoost,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::DecisionTree,
        ModelKind::RandomForest,
        ModelKind::GradientBoosting,
        ModelKind::AdaBoost,
    ];

    /// CLI spelling.
    pub fn short_name(&self) -> &'static str {
        match self {
            ModelKind::DecisionTree => "dt",
            ModelKind::RandomForest => "rf",
            ModelKind::GradientBoosting => "gb",
            ModelKind::AdaBoost => "ada",
        }
    }

    /// Spelling used in model files.
    pub fn file_name(&self) -> &'static str {
        match self {
            ModelKind::DecisionTree => "decision_tree",
            ModelKind::RandomForest => "random_forest",
            ModelKind::GradientBoosting => "gradient_boosting",
            ModelKind::AdaBoost => "adaboost",
        }
    }

    pub fn display_name(&self) -> &'static str {
        match self {
            ModelKind::DecisionTree => "Decision Tree",
            ModelKind::RandomForest => "Random Forest",
            ModelKind::GradientBoosting => "Gradient Boosting",
            ModelKind::AdaBoost => "Ada Boost",
        }
    }

    pub fn from_short_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.short_name() == name)
    }

    pub fn ordinal(&self) -> u64 {
        *self as u64
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.short_name())
    }
}

/// Hyperparameters for every learner.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Hyperparams {
    pub decision_tree: TreeParams,
    pub random_forest: ForestParams,
    pub gradient_boosting: GbParams,
    pub adaboost: AdaParams,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    DecisionTree(DecisionTreeModel),
    RandomForest(ForestModel),
    GradientBoosting(GbModel),
    AdaBoost(AdaModel),
}

pub fn fit_model(kind: ModelKind, ds: &Dataset, hyper: &Hyperparams, seed: u64) -> Result<Model, EnsembleError> {
    Ok(match kind {
        ModelKind::DecisionTree => Model::DecisionTree(fit_decision_tree(ds, &hyper.decision_tree, seed)?),
        ModelKind::RandomForest => Model::RandomForest(fit_random_forest(ds, &hyper.random_forest, seed)?),
        ModelKind::GradientBoosting => {
            Model::GradientBoosting(fit_gradient_boosting(ds, &hyper.gradient_boosting, seed)?)
        }
        ModelKind::AdaBoost => Model::AdaBoost(fit_adaboost(ds, &hyper.adaboost, seed)?),
    })
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::DecisionTree(_) => ModelKind::DecisionTree,
            Model::RandomForest(_) => ModelKind::RandomForest,
            Model::GradientBoosting(_) => ModelKind::GradientBoosting,
            Model::AdaBoost(_) => ModelKind::AdaBoost,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Model::DecisionTree(m) => m.tree.n_features(),
            Model::RandomForest(m) => m.n_features,
            Model::GradientBoosting(m) => m.n_features,
            Model::AdaBoost(m) => m.n_features,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Model::DecisionTree(m) => m.seed,
            Model::RandomForest(m) => m.seed,
            Model::GradientBoosting(m) => m.seed,
            Model::AdaBoost(m) => m.seed,
        }
    }

    /// Ranking score and hard label. The score is the leaf probability for a
    /// tree, the vote fraction for a forest, the probability for gradient
    /// boosting and the margin for AdaBoost.
    pub fn predict(&self, row: &[f64]) -> Result<(f64, Label), EnsembleError> {
        match self {
            Model::DecisionTree(m) => {
                let leaf = m.tree.predict(row)?;
                Ok((leaf.score(), leaf.class()))
            }
            Model::RandomForest(m) => Ok((m.vote_fraction(row)?, predict_forest(m, row)?)),
            Model::GradientBoosting(m) => {
                let p = predict_gb_score(m, row)?;
                Ok((p, u8::from(p >= 0.5)))
            }
            Model::AdaBoost(m) => {
                let (label, margin) = predict_adaboost(m, row)?;
                Ok((margin, label))
            }
        }
    }

    /// Scores and labels for every row of `ds`.
    pub fn predict_dataset(&self, ds: &Dataset) -> Result<(Vec<f64>, Vec<Label>), EnsembleError> {
        let mut buf = vec![0.0; ds.n_features()];
        let mut scores = Vec::with_capacity(ds.row_count());
        let mut labels = Vec::with_capacity(ds.row_count());
        for r in 0..ds.row_count() {
            ds.row_into(r, &mut buf);
            let (s, l) = self.predict(&buf)?;
            scores.push(s);
            labels.push(l);
        }
        Ok((scores, labels))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{LeafValue, Node, TreeMode};

    fn separable() -> Dataset {
        Dataset::from_columns(&["x"], vec![vec![1.0, 2.0, 3.0, 4.0]], vec![0, 0, 1, 1]).unwrap()
    }

    fn constant_tree(class: Label) -> TreeModel {
        let p = if class == 1 { [0.0, 1.0] } else { [1.0, 0.0] };
        TreeModel::from_nodes(
            1,
            TreeMode::Classification,
            vec![Node::Leaf(LeafValue::Distribution(p))],
        )
    }

    fn forest_of(votes: &[Label]) -> ForestModel {
        ForestModel {
            trees: votes.iter().map(|&v| constant_tree(v)).collect(),
            params: ForestParams::default(),
            seed: 0,
            n_features: 1,
        }
    }

    #[test]
    fn forest_vote_rules() {
        assert_eq!(predict_forest(&forest_of(&[1, 1, 0]), &[0.0]).unwrap(), 1);
        assert_eq!(predict_forest(&forest_of(&[0, 1]), &[0.0]).unwrap(), 0);
        assert_eq!(predict_forest(&forest_of(&[1, 1, 1]), &[0.0]).unwrap(), 1);
        assert!(predict_forest(&forest_of(&[1]), &[0.0, 1.0]).is_err());
    }

    #[test]
    fn forest_rejects_zero_trees() {
        let params = ForestParams {
            n_trees: 0,
            ..ForestParams::default()
        };
        assert!(matches!(
            fit_random_forest(&separable(), &params, 1),
            Err(EnsembleError::InvalidParams(_))
        ));
    }

    #[test]
    fn single_tree_forest_matches_cart_on_bootstrap() {
        let ds = Dataset::from_columns(
            &["a", "b"],
            vec![
                vec![0.3, 1.2, 2.2, 0.1, 3.3, 2.0, 1.7, 0.9],
                vec![5.0, 4.0, 1.0, 2.0, 7.0, 3.0, 0.5, 6.0],
            ],
            vec![0, 1, 1, 0, 1, 0, 1, 0],
        )
        .unwrap();
        let params = ForestParams {
            n_trees: 1,
            max_features: MaxFeatures::All,
            ..ForestParams::default()
        };
        let forest = fit_random_forest(&ds, &params, 5).unwrap();
        let mut rng = derived_rng(5, 0);
        let sample: Vec<usize> = (0..8).map(|_| rng.gen_range(0..8)).collect();
        let cart = fit_tree_on_rows(
            &ds,
            &sample,
            Targets::labels(ds.labels()),
            &TreeParams::default(),
            &mut rng,
        )
        .unwrap();
        for x in [-1.0, 0.5, 1.0, 1.5, 2.1, 3.0, 4.0] {
            for y in [0.0, 2.5, 4.5, 8.0] {
                let row = [x, y];
                assert_eq!(
                    predict_forest(&forest, &row).unwrap(),
                    cart.predict(&row).unwrap().class()
                );
            }
        }
    }

    #[test]
    fn forest_fits_separable_set() {
        let ds = separable();
        let params = ForestParams {
            n_trees: 15,
            ..ForestParams::default()
        };
        let forest = fit_random_forest(&ds, &params, 42).unwrap();
        for r in 0..4 {
            assert_eq!(predict_forest(&forest, &ds.row(r)).unwrap(), ds.labels()[r]);
        }
    }

    #[test]
    fn forest_vote_ignores_tree_order() {
        let ds = separable();
        let mut forest = fit_random_forest(
            &ds,
            &ForestParams {
                n_trees: 9,
                ..Default::default()
            },
            3,
        )
        .unwrap();
        let before: Vec<_> = [0.0, 2.4, 2.6, 9.0]
            .iter()
            .map(|&x| predict_forest(&forest, &[x]).unwrap())
            .collect();
        forest.trees.reverse();
        forest.trees.rotate_left(4);
        let after: Vec<_> = [0.0, 2.4, 2.6, 9.0]
            .iter()
            .map(|&x| predict_forest(&forest, &[x]).unwrap())
            .collect();
        assert_eq!(before, after);
    }

    #[test]
    fn gb_initial_scores() {
        let balanced = separable();
        let m = fit_gradient_boosting(
            &balanced,
            &GbParams {
                n_rounds: 1,
                ..Default::default()
            },
            0,
        )
        .unwrap();
        assert_eq!(m.initial_score, 0.0);
        let skewed = Dataset::from_columns(&["x"], vec![vec![1.0, 2.0, 3.0, 4.0]], vec![0, 1, 1, 1]).unwrap();
        let m = fit_gradient_boosting(
            &skewed,
            &GbParams {
                n_rounds: 1,
                ..Default::default()
            },
            0,
        )
        .unwrap();
        assert!((m.initial_score - 3f64.ln()).abs() < 1e-15);
        assert!((m.initial_score - 1.0986).abs() < 1e-4);
    }

    #[test]
    fn gb_zero_round_scores() {
        let mut m = fit_gradient_boosting(
            &separable(),
            &GbParams {
                n_rounds: 1,
                ..Default::default()
            },
            0,
        )
        .unwrap();
        m.trees.clear();
        assert_eq!(predict_gb_score(&m, &[7.0]).unwrap(), 0.5);
        m.initial_score = 3f64.ln();
        assert!((predict_gb_score(&m, &[7.0]).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn gb_one_round_hand_trace() {
        let ds = separable();
        let params = GbParams {
            n_rounds: 1,
            learning_rate: 1.0,
            max_depth: 1,
            min_samples_split: 2,
        };
        let (m, trace) = fit_gradient_boosting_traced(&ds, &params, 0).unwrap();
        let tree = &m.trees[0];
        assert_eq!(tree.predict(&[1.0]).unwrap(), LeafValue::Value(-2.0));
        assert_eq!(tree.predict(&[4.0]).unwrap(), LeafValue::Value(2.0));
        assert!(trace.deviance[1] < trace.deviance[0]);
        for r in 0..4 {
            let p = predict_gb_score(&m, &ds.row(r)).unwrap();
            assert_eq!(p > 0.5, ds.labels()[r] == 1);
        }
    }

    #[test]
    fn gb_hard_label_boundary() {
        let mut m = fit_gradient_boosting(
            &separable(),
            &GbParams {
                n_rounds: 1,
                ..Default::default()
            },
            0,
        )
        .unwrap();
        m.trees.clear();
        m.initial_score = 0.0;
        let model = Model::GradientBoosting(m);
        assert_eq!(model.predict(&[0.0]).unwrap(), (0.5, 1));
    }

    #[test]
    fn gb_probability_stays_inside_unit_interval() {
        for s in [-1e6, -800.0, -40.0, 0.0, 40.0, 800.0, 1e6] {
            let p = logistic(s);
            assert!(p > 0.0 && p < 1.0, "{s} -> {p}");
        }
    }

    #[test]
    fn gb_rejects_bad_params() {
        let ds = separable();
        assert!(fit_gradient_boosting(
            &ds,
            &GbParams {
                n_rounds: 0,
                ..Default::default()
            },
            0
        )
        .is_err());
        assert!(fit_gradient_boosting(
            &ds,
            &GbParams {
                learning_rate: 0.0,
                ..Default::default()
            },
            0
        )
        .is_err());
        let one = Dataset::from_columns(&["x"], vec![vec![1.0, 2.0]], vec![1, 1]).unwrap();
        assert_eq!(
            fit_gradient_boosting(&one, &GbParams::default(), 0).unwrap_err(),
            EnsembleError::SingleClass
        );
    }

    fn one_error_fixture() -> Dataset {
        // Best Gini stump splits at 2.5; its right leaf is a 1:1 tie that votes
        // class 0, misclassifying row 2 only.
        Dataset::from_columns(&["x"], vec![vec![1.0, 2.0, 3.0, 4.0]], vec![0, 0, 1, 0]).unwrap()
    }

    #[test]
    fn adaboost_first_round_trace() {
        let (m, rounds) = fit_adaboost_traced(
            &one_error_fixture(),
            &AdaParams {
                n_rounds: 1,
                max_depth: 1,
            },
            0,
        )
        .unwrap();
        let r = &rounds[0];
        assert_eq!(r.misclassified, vec![2]);
        assert!((r.error - 0.25).abs() < 1e-15);
        assert!((r.alpha - 0.5 * 3f64.ln()).abs() < 1e-12);
        assert!((m.alphas[0] - 0.549_306_144).abs() < 1e-9);
        for (i, w) in r.weights.iter().enumerate() {
            let expected = if i == 2 { 0.5 } else { 1.0 / 6.0 };
            assert!((w - expected).abs() < 1e-12, "w[{i}] = {w}");
        }
    }

    #[test]
    fn adaboost_perfect_stump_stops() {
        let (m, rounds) = fit_adaboost_traced(&separable(), &AdaParams::default(), 0).unwrap();
        assert_eq!(m.stumps.len(), 1);
        assert_eq!(rounds.len(), 1);
        assert_eq!(rounds[0].error, 0.0);
        assert!(m.alphas[0] > 10.0);
    }

    #[test]
    fn adaboost_weights_stay_normalized() {
        let ds = Dataset::from_columns(
            &["a", "b"],
            vec![
                vec![0.1, 0.4, 0.35, 0.8, 0.9, 0.2, 0.6, 0.7, 0.05, 0.55],
                vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0],
            ],
            vec![0, 1, 0, 1, 1, 0, 1, 0, 0, 1],
        )
        .unwrap();
        let (_, rounds) = fit_adaboost_traced(
            &ds,
            &AdaParams {
                n_rounds: 20,
                max_depth: 1,
            },
            0,
        )
        .unwrap();
        for r in rounds.iter().filter(|r| r.kept) {
            assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(r.weights.iter().all(|&w| w > 0.0));
            if r.error > 0.0 {
                let mass: f64 = r.misclassified.iter().map(|&i| r.weights[i]).sum();
                assert!((mass - 0.5).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn adaboost_margin_rules() {
        let stump = |class| constant_tree(class);
        let mut m = AdaModel {
            stumps: vec![stump(1)],
            alphas: vec![0.7],
            n_rounds: 1,
            params: AdaParams::default(),
            seed: 0,
            n_features: 1,
        };
        assert_eq!(predict_adaboost(&m, &[0.0]).unwrap().0, 1);
        m.stumps = vec![stump(1), stump(0)];
        m.alphas = vec![0.9, 0.4];
        let (label, margin) = predict_adaboost(&m, &[0.0]).unwrap();
        assert!((margin - 0.5).abs() < 1e-15);
        assert_eq!(label, 1);
        m.alphas = vec![0.4, 0.4];
        assert_eq!(predict_adaboost(&m, &[0.0]).unwrap(), (1, 0.0));
    }

    #[test]
    fn adaboost_scaled_alphas_keep_labels() {
        let ds = one_error_fixture();
        let m = fit_adaboost(
            &ds,
            &AdaParams {
                n_rounds: 10,
                max_depth: 1,
            },
            0,
        )
        .unwrap();
        let mut scaled = m.clone();
        for a in &mut scaled.alphas {
            *a *= 3.7;
        }
        for x in [0.0, 1.5, 2.5, 3.0, 3.5, 5.0] {
            assert_eq!(
                predict_adaboost(&m, &[x]).unwrap().0,
                predict_adaboost(&scaled, &[x]).unwrap().0
            );
        }
    }

    #[test]
    fn adaboost_rejects_zero_rounds() {
        assert!(matches!(
            fit_adaboost(
                &separable(),
                &AdaParams {
                    n_rounds: 0,
                    max_depth: 1
                },
                0
            ),
            Err(EnsembleError::InvalidParams(_))
        ));
    }

    #[test]
    fn adaboost_without_useful_stump_errors() {
        // Identical feature values, balanced labels: every stump is a coin flip.
        let ds = Dataset::from_columns(&["x"], vec![vec![1.0, 1.0]], vec![0, 1]).unwrap();
        assert_eq!(
            fit_adaboost(&ds, &AdaParams::default(), 0).unwrap_err(),
            EnsembleError::NoWeakLearner
        );
    }

    #[test]
    fn model_kind_names() {
        for k in ModelKind::ALL {
            assert_eq!(ModelKind::from_short_name(k.short_name()), Some(k));
        }
        assert_eq!(ModelKind::from_short_name("svm"), None);
    }
}
