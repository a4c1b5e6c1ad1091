//! Binary CART trees.
//!
//! Classification trees split on Gini information gain, regression trees on
//! variance reduction. Both use the same search: every midpoint between
//! consecutive distinct values of every allowed feature, rows with
//! `value <= threshold` going left, ties resolved towards the lower feature
//! index and then the lower threshold.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Label};

/// Gains closer than this are treated as equal, and a split must beat
/// `min_gain` by at least this much to be taken.
pub const GAIN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TreeError {
    #[error("impurity of an empty node is undefined")]
    EmptyNode,
    #[error("child counts ({left} + {right}) do not add up to the parent ({parent})")]
    CountMismatch { parent: u64, left: u64, right: u64 },
    #[error("cannot fit a tree on an empty dataset")]
    EmptyDataset,
    #[error("expected {expected} features, got {found}")]
    FeatureCount { expected: usize, found: usize },
    #[error("{targets} targets for {rows} rows")]
    TargetLength { targets: usize, rows: usize },
    #[error("invalid tree parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassCounts {
    pub count_0: u64,
    pub count_1: u64,
}

impl ClassCounts {
    pub fn new(count_0: u64, count_1: u64) -> Self {
        Self { count_0, count_1 }
    }

    pub fn total(&self) -> u64 {
        self.count_0 + self.count_1
    }
}

fn gini_of(w0: f64, w1: f64) -> f64 {
    let total = w0 + w1;
    let (p0, p1) = (w0 / total, w1 / total);
    1.0 - (p0 * p0 + p1 * p1)
}

/// `1 - p0^2 - p1^2`.
pub fn gini(c: ClassCounts) -> Result<f64, TreeError> {
    if c.total() == 0 {
        return Err(TreeError::EmptyNode);
    }
    Ok(gini_of(c.count_0 as f64, c.count_1 as f64))
}

fn weighted_gain(parent: (f64, f64), left: (f64, f64), right: (f64, f64)) -> f64 {
    let n = parent.0 + parent.1;
    let nl = left.0 + left.1;
    let nr = right.0 + right.1;
    gini_of(parent.0, parent.1) - (nl / n) * gini_of(left.0, left.1) - (nr / n) * gini_of(right.0, right.1)
}

/// Parent Gini minus the size-weighted Gini of the two children.
pub fn information_gain(parent: ClassCounts, left: ClassCounts, right: ClassCounts) -> Result<f64, TreeError> {
    if left.count_0 + right.count_0 != parent.count_0 || left.count_1 + right.count_1 != parent.count_1 {
        return Err(TreeError::CountMismatch {
            parent: parent.total(),
            left: left.total(),
            right: right.total(),
        });
    }
    if left.total() == 0 || right.total() == 0 {
        return Err(TreeError::EmptyNode);
    }
    let as_pair = |c: ClassCounts| (c.count_0 as f64, c.count_1 as f64);
    Ok(weighted_gain(as_pair(parent), as_pair(left), as_pair(right)))
}

/// Training targets, indexed by dataset row.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    /// Binary labels, optionally with per-row weights.
    Classes {
        labels: &'a [Label],
        weights: Option<&'a [f64]>,
    },
    /// Real-valued targets, split by variance reduction.
    Values(&'a [f64]),
}

impl<'a> Targets<'a> {
    pub fn labels(labels: &'a [Label]) -> Self {
        Targets::Classes { labels, weights: None }
    }

    pub fn weighted(labels: &'a [Label], weights: &'a [f64]) -> Self {
        Targets::Classes {
            labels,
            weights: Some(weights),
        }
    }

    fn len(&self) -> usize {
        match self {
            Targets::Classes { labels, .. } => labels.len(),
            Targets::Values(v) => v.len(),
        }
    }

    fn mode(&self) -> TreeMode {
        match self {
            Targets::Classes { .. } => TreeMode::Classification,
            Targets::Values(_) => TreeMode::Regression,
        }
    }
}

/// Summary of the rows on one side of a split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SideStats {
    /// Total weight of class 0 and class 1 (plain counts when unweighted).
    Classes {
        weight_0: f64,
        weight_1: f64,
    },
    Values {
        rows: usize,
        sum: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature_index: usize,
    pub threshold: f64,
    pub gain: f64,
    pub left: SideStats,
    pub right: SideStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until the other stopping rules apply.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_gain: f64,
    /// Features examined at each node; `None` means all of them.
    pub features_per_split: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_split: 2,
            min_gain: 0.0,
            features_per_split: None,
        }
    }
}

impl TreeParams {
    pub fn with_max_depth(max_depth: Option<usize>) -> Self {
        Self {
            max_depth,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TreeError> {
        if self.min_samples_split < 2 {
            return Err(TreeError::InvalidParams("min_samples_split must be at least 2".into()));
        }
        if !(self.min_gain >= 0.0 && self.min_gain.is_finite()) {
            return Err(TreeError::InvalidParams("min_gain must be a finite value >= 0".into()));
        }
        if self.features_per_split == Some(0) {
            return Err(TreeError::InvalidParams("features_per_split must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeMode {
    Classification,
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LeafValue {
    /// Class proportions `[p0, p1]`.
    Distribution([f64; 2]),
    Value(f64),
}

impl LeafValue {
    /// Majority class; an even split goes to class 0.
    pub fn class(&self) -> Label {
        match *self {
            LeafValue::Distribution([p0, p1]) => u8::from(p1 > p0),
            LeafValue::Value(v) => u8::from(v > 0.5),
        }
    }

    /// Probability of class 1, or the raw value for regression leaves.
    pub fn score(&self) -> f64 {
        match *self {
            LeafValue::Distribution([_, p1]) => p1,
            LeafValue::Value(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(LeafValue),
}

/// A fitted tree. Node 0 is the root and every child index is larger than
/// its parent's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TreeRecord", into = "TreeRecord")]
pub struct TreeModel {
    n_features: usize,
    mode: TreeMode,
    params: TreeParams,
    nodes: Vec<Node>,
}

impl TreeModel {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn mode(&self) -> TreeMode {
        self.mode
    }

    pub fn params(&self) -> &TreeParams {
        &self.params
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Index of the leaf reached by `row`. The row length is not checked.
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(_) => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> Result<LeafValue, TreeError> {
        if row.len() != self.n_features {
            return Err(TreeError::FeatureCount {
                expected: self.n_features,
                found: row.len(),
            });
        }
        Ok(self.predict_unchecked(row))
    }

    pub(crate) fn predict_unchecked(&self, row: &[f64]) -> LeafValue {
        match self.nodes[self.leaf_index(row)] {
            Node::Leaf(v) => v,
            Node::Split { .. } => unreachable!("leaf_index returns leaves"),
        }
    }

    /// Replaces every regression leaf value with `f(leaf_index)`.
    pub(crate) fn set_regression_leaves(&mut self, mut f: impl FnMut(usize) -> f64) {
        for (i, node) in self.nodes.iter_mut().enumerate() {
            if let Node::Leaf(LeafValue::Value(v)) = node {
                *v = f(i);
            }
        }
    }

    #[cfg(test)]
    pub(crate) fn from_nodes(n_features: usize, mode: TreeMode, nodes: Vec<Node>) -> Self {
        Self {
            n_features,
            mode,
            params: TreeParams::default(),
            nodes,
        }
    }
}

pub fn predict_tree(model: &TreeModel, row: &[f64]) -> Result<LeafValue, TreeError> {
    model.predict(row)
}

#[derive(Debug, Clone, Copy, Default)]
struct Accum {
    w0: f64,
    w1: f64,
    rows: usize,
    sum: f64,
}

impl Accum {
    fn add(&mut self, row: usize, targets: &Targets<'_>) {
        self.rows += 1;
        match targets {
            Targets::Classes { labels, weights } => {
                let w = weights.map_or(1.0, |w| w[row]);
                if labels[row] == 1 {
                    self.w1 += w;
                } else {
                    self.w0 += w;
                }
            }
            Targets::Values(v) => self.sum += v[row],
        }
    }

    fn minus(&self, other: &Accum) -> Accum {
        Accum {
            w0: (self.w0 - other.w0).max(0.0),
            w1: (self.w1 - other.w1).max(0.0),
            rows: self.rows - other.rows,
            sum: self.sum - other.sum,
        }
    }

    fn side(&self, mode: TreeMode) -> SideStats {
        match mode {
            TreeMode::Classification => SideStats::Classes {
                weight_0: self.w0,
                weight_1: self.w1,
            },
            TreeMode::Regression => SideStats::Values {
                rows: self.rows,
                sum: self.sum,
            },
        }
    }
}

fn accumulate(rows: &[usize], targets: &Targets<'_>) -> Accum {
    let mut acc = Accum::default();
    for &r in rows {
        acc.add(r, targets);
    }
    acc
}

fn split_gain(mode: TreeMode, parent: &Accum, left: &Accum, right: &Accum) -> f64 {
    match mode {
        TreeMode::Classification => weighted_gain((parent.w0, parent.w1), (left.w0, left.w1), (right.w0, right.w1)),
        TreeMode::Regression => {
            // Reduction in mean squared deviation.
            let n = parent.rows as f64;
            let term = |a: &Accum| a.sum * a.sum / a.rows as f64;
            (term(left) + term(right) - term(parent)) / n
        }
    }
    .max(0.0)
}

/// Midpoint of two consecutive distinct values, nudged down to `lo` when the
/// midpoint rounds onto `hi`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = 0.5 * (lo + hi);
    if mid < hi && mid.is_finite() {
        mid
    } else {
        lo
    }
}

/// Best split of `rows` over `allowed_features`, or `None` when no split
/// improves on `params.min_gain` (or the node is too small to split).
pub fn best_split(
    rows: &[usize],
    ds: &Dataset,
    targets: &Targets<'_>,
    allowed_features: &[usize],
    params: &TreeParams,
) -> Option<SplitCandidate> {
    if rows.len() < params.min_samples_split.max(2) {
        return None;
    }
    search_split(rows, ds, targets, allowed_features, params.min_gain)
}

/// Highest-gain midpoint split whose gain exceeds `floor`.
fn search_split(
    rows: &[usize],
    ds: &Dataset,
    targets: &Targets<'_>,
    allowed_features: &[usize],
    floor: f64,
) -> Option<SplitCandidate> {
    let mode = targets.mode();
    let parent = accumulate(rows, targets);
    let mut features = allowed_features.to_vec();
    features.sort_unstable();
    features.dedup();

    let mut best: Option<SplitCandidate> = None;
    let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(rows.len());
    for &feature in &features {
        let column = ds.column(feature);
        sorted.clear();
        sorted.extend(rows.iter().map(|&r| (column[r], r)));
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let mut left = Accum::default();
        for i in 0..sorted.len() - 1 {
            left.add(sorted[i].1, targets);
            let (lo, hi) = (sorted[i].0, sorted[i + 1].0);
            if lo == hi {
                continue;
            }
            let right = parent.minus(&left);
            let gain = split_gain(mode, &parent, &left, &right);
            let improves = match &best {
                None => gain > floor + GAIN_TOLERANCE,
                Some(b) => gain > b.gain + GAIN_TOLERANCE,
            };
            if improves {
                best = Some(SplitCandidate {
                    feature_index: feature,
                    threshold: midpoint(lo, hi),
                    gain,
                    left: left.side(mode),
                    right: right.side(mode),
                });
            }
        }
    }
    best
}

fn leaf_for(acc: &Accum, mode: TreeMode) -> LeafValue {
    match mode {
        TreeMode::Classification => {
            let total = acc.w0 + acc.w1;
            if total > 0.0 {
                LeafValue::Distribution([acc.w0 / total, acc.w1 / total])
            } else {
                LeafValue::Distribution([0.5, 0.5])
            }
        }
        TreeMode::Regression => LeafValue::Value(if acc.rows > 0 { acc.sum / acc.rows as f64 } else { 0.0 }),
    }
}

fn is_pure(acc: &Accum, rows: &[usize], targets: &Targets<'_>) -> bool {
    match targets {
        Targets::Classes { .. } => acc.w0 == 0.0 || acc.w1 == 0.0,
        Targets::Values(v) => rows.windows(2).all(|w| v[w[0]] == v[w[1]]),
    }
}

/// Fits a tree on every row of `ds`.
pub fn fit_tree<R: Rng + ?Sized>(
    ds: &Dataset,
    targets: Targets<'_>,
    params: &TreeParams,
    rng: &mut R,
) -> Result<TreeModel, TreeError> {
    let rows: Vec<usize> = (0..ds.row_count()).collect();
    fit_tree_on_rows(ds, &rows, targets, params, rng)
}

/// Fits a tree on the given rows; repeated indices count once per repeat.
pub fn fit_tree_on_rows<R: Rng + ?Sized>(
    ds: &Dataset,
    rows: &[usize],
    targets: Targets<'_>,
    params: &TreeParams,
    rng: &mut R,
) -> Result<TreeModel, TreeError> {
    params.validate()?;
    if ds.row_count() == 0 || rows.is_empty() {
        return Err(TreeError::EmptyDataset);
    }
    if targets.len() != ds.row_count() {
        return Err(TreeError::TargetLength {
            targets: targets.len(),
            rows: ds.row_count(),
        });
    }
    let mode = targets.mode();
    let d = ds.n_features();
    let all_features: Vec<usize> = (0..d).collect();
    let subset = params.features_per_split.filter(|&k| k < d);

    let mut nodes = vec![Node::Leaf(LeafValue::Value(0.0))];
    let mut stack: Vec<(usize, Vec<usize>, usize)> = vec![(0, rows.to_vec(), 0)];
    while let Some((index, node_rows, depth)) = stack.pop() {
        let acc = accumulate(&node_rows, &targets);
        let at_limit = params.max_depth.is_some_and(|m| depth >= m);
        let split = if at_limit || node_rows.len() < params.min_samples_split || is_pure(&acc, &node_rows, &targets) {
            None
        } else {
            let allowed = match subset {
                Some(k) => rand::seq::index::sample(rng, d, k).into_vec(),
                None => all_features.clone(),
            };
            best_split(&node_rows, ds, &targets, &allowed, params).or_else(|| {
                // XOR-like nodes have no positive-gain split but are still
                // impure; with min_gain 0 take the best zero-gain split.
                let zero_gain_allowed = mode == TreeMode::Classification && params.min_gain == 0.0;
                zero_gain_allowed.then(|| search_split(&node_rows, ds, &targets, &allowed, f64::NEG_INFINITY))?
            })
        };
        match split {
            None => nodes[index] = Node::Leaf(leaf_for(&acc, mode)),
            Some(s) => {
                let column = ds.column(s.feature_index);
                let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                    node_rows.iter().partition(|&&r| column[r] <= s.threshold);
                let left = nodes.len();
                let right = left + 1;
                nodes.push(Node::Leaf(LeafValue::Value(0.0)));
                nodes.push(Node::Leaf(LeafValue::Value(0.0)));
                nodes[index] = Node::Split {
                    feature: s.feature_index,
                    threshold: s.threshold,
                    left,
                    right,
                };
                stack.push((right, right_rows, depth + 1));
                stack.push((left, left_rows, depth + 1));
            }
        }
    }
    Ok(TreeModel {
        n_features: d,
        mode,
        params: *params,
        nodes,
    })
}

/// Flat on-disk form of a node. Leaves carry `left = right = -1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRecord {
    pub left: i64,
    pub right: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeRecord {
    pub n_features: usize,
    pub mode: TreeMode,
    pub params: TreeParams,
    pub nodes: Vec<NodeRecord>,
}

impl From<TreeModel> for TreeRecord {
    fn from(t: TreeModel) -> Self {
        let nodes = t
            .nodes
            .iter()
            .map(|n| match *n {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => NodeRecord {
                    left: left as i64,
                    right: right as i64,
                    feature: Some(feature),
                    threshold: Some(threshold),
                    value: None,
                },
                Node::Leaf(v) => NodeRecord {
                    left: -1,
                    right: -1,
                    feature: None,
                    threshold: None,
                    value: Some(match v {
                        LeafValue::Distribution(p) => p.to_vec(),
                        LeafValue::Value(x) => vec![x],
                    }),
                },
            })
            .collect();
        TreeRecord {
            n_features: t.n_features,
            mode: t.mode,
            params: t.params,
            nodes,
        }
    }
}

impl TryFrom<TreeRecord> for TreeModel {
    type Error = String;

    fn try_from(rec: TreeRecord) -> Result<Self, String> {
        let n = rec.nodes.len();
        if n == 0 {
            return Err("tree has no nodes".into());
        }
        let mut referenced = vec![false; n];
        let mut nodes = Vec::with_capacity(n);
        for (i, node) in rec.nodes.into_iter().enumerate() {
            if node.left == -1 && node.right == -1 {
                let value = node.value.ok_or_else(|| format!("leaf node {i} has no value"))?;
                if value.iter().any(|v| !v.is_finite()) {
                    return Err(format!("leaf node {i} has a non-finite value"));
                }
                let leaf = match (rec.mode, value.as_slice()) {
                    (TreeMode::Classification, &[p0, p1]) => {
                        if (p0 + p1 - 1.0).abs() > 1e-9 || p0 < 0.0 || p1 < 0.0 {
                            return Err(format!("leaf node {i} distribution does not sum to 1"));
                        }
                        LeafValue::Distribution([p0, p1])
                    }
                    (TreeMode::Regression, &[v]) => LeafValue::Value(v),
                    _ => return Err(format!("leaf node {i} has {} values", value.len())),
                };
                nodes.push(Node::Leaf(leaf));
                continue;
            }
            let child = |c: i64| -> Result<usize, String> {
                if c <= i as i64 || c >= n as i64 {
                    Err(format!(
                        "node {i} references node index {c} outside 1..{n} or not after itself"
                    ))
                } else {
                    Ok(c as usize)
                }
            };
            let (left, right) = (child(node.left)?, child(node.right)?);
            for c in [left, right] {
                if std::mem::replace(&mut referenced[c], true) {
                    return Err(format!("node {c} has more than one parent"));
                }
            }
            let feature = node.feature.ok_or_else(|| format!("split node {i} has no feature"))?;
            if feature >= rec.n_features {
                return Err(format!(
                    "node {i} splits on feature {feature} but the tree has {}",
                    rec.n_features
                ));
            }
            let threshold = node
                .threshold
                .filter(|t| t.is_finite())
                .ok_or_else(|| format!("split node {i} has no finite threshold"))?;
            nodes.push(Node::Split {
                feature,
                threshold,
                left,
                right,
            });
        }
        if let Some(orphan) = (1..n).find(|&i| !referenced[i]) {
            return Err(format!("node {orphan} is unreachable from the root"));
        }
        Ok(TreeModel {
            n_features: rec.n_features,
            mode: rec.mode,
            params: rec.params,
            nodes,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    fn separable() -> Dataset {
        Dataset::from_columns(&["x"], vec![vec![1.0, 2.0, 3.0, 4.0]], vec![0, 0, 1, 1]).unwrap()
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini(ClassCounts::new(4, 0)).unwrap(), 0.0);
        assert_eq!(gini(ClassCounts::new(2, 2)).unwrap(), 0.5);
        assert!((gini(ClassCounts::new(1, 4)).unwrap() - 0.32).abs() < 1e-15);
        assert_eq!(gini(ClassCounts::new(0, 0)), Err(TreeError::EmptyNode));
    }

    #[test]
    fn information_gain_examples() {
        let c = ClassCounts::new;
        assert_eq!(information_gain(c(2, 2), c(2, 0), c(0, 2)).unwrap(), 0.5);
        assert_eq!(information_gain(c(2, 2), c(1, 1), c(1, 1)).unwrap(), 0.0);
        assert!((information_gain(c(3, 1), c(2, 0), c(1, 1)).unwrap() - 0.125).abs() < 1e-15);
        assert!(matches!(
            information_gain(c(3, 1), c(2, 0), c(2, 1)),
            Err(TreeError::CountMismatch { .. })
        ));
    }

    #[test]
    fn best_split_on_separable_set() {
        let ds = separable();
        let s = best_split(
            &[0, 1, 2, 3],
            &ds,
            &Targets::labels(ds.labels()),
            &[0],
            &TreeParams::default(),
        )
        .unwrap();
        assert_eq!(s.threshold, 2.5);
        assert_eq!(s.gain, 0.5);
        assert_eq!(
            s.left,
            SideStats::Classes {
                weight_0: 2.0,
                weight_1: 0.0
            }
        );
    }

    #[test]
    fn xor_grows_past_zero_gain_root() {
        let ds = Dataset::from_columns(
            &["a", "b"],
            vec![vec![0.0, 0.0, 1.0, 1.0], vec![0.0, 1.0, 0.0, 1.0]],
            vec![0, 1, 1, 0],
        )
        .unwrap();
        let rows = [0, 1, 2, 3];
        let labels = ds.labels().to_vec();
        assert_eq!(
            best_split(&rows, &ds, &Targets::labels(&labels), &[0, 1], &TreeParams::default()),
            None
        );
        let tree = fit_tree(
            &ds,
            Targets::labels(&labels),
            &TreeParams::default(),
            &mut rand::thread_rng(),
        )
        .unwrap();
        for (r, &label) in labels.iter().enumerate() {
            assert_eq!(tree.predict(&ds.row(r)).unwrap().class(), label);
        }
        let gated = TreeParams {
            min_gain: 0.01,
            ..TreeParams::default()
        };
        let stump = fit_tree(&ds, Targets::labels(&labels), &gated, &mut rand::thread_rng()).unwrap();
        assert_eq!(stump.n_leaves(), 1);
    }

    #[test]
    fn best_split_pure_node_is_none() {
        let ds = Dataset::from_columns(&["x"], vec![vec![1.0, 2.0, 3.0]], vec![1, 1, 1]).unwrap();
        assert!(best_split(
            &[0, 1, 2],
            &ds,
            &Targets::labels(ds.labels()),
            &[0],
            &TreeParams::default()
        )
        .is_none());
    }

    #[test]
    fn best_split_ties_prefer_lower_feature() {
        let col = vec![1.0, 2.0, 3.0, 4.0];
        let ds = Dataset::from_columns(&["a", "b"], vec![col.clone(), col], vec![0, 0, 1, 1]).unwrap();
        let s = best_split(
            &[0, 1, 2, 3],
            &ds,
            &Targets::labels(ds.labels()),
            &[1, 0],
            &TreeParams::default(),
        )
        .unwrap();
        assert_eq!(s.feature_index, 0);
    }

    #[test]
    fn regression_split_reduces_variance() {
        let ds = separable();
        let y = [-0.5, -0.5, 0.5, 0.5];
        let s = best_split(&[0, 1, 2, 3], &ds, &Targets::Values(&y), &[0], &TreeParams::default()).unwrap();
        assert_eq!(s.threshold, 2.5);
        assert!((s.gain - 0.25).abs() < 1e-15);
    }

    #[test]
    fn fit_separable_depth_one() {
        let ds = separable();
        let t = fit_tree(&ds, Targets::labels(ds.labels()), &TreeParams::default(), &mut rng()).unwrap();
        assert_eq!(t.depth(), 1);
        assert_eq!(t.n_leaves(), 2);
        assert_eq!(predict_tree(&t, &[1.0]).unwrap(), LeafValue::Distribution([1.0, 0.0]));
        // threshold is 2.5; a value on it goes left
        assert_eq!(predict_tree(&t, &[2.5]).unwrap().class(), 0);
        assert_eq!(predict_tree(&t, &[2.6]).unwrap().class(), 1);
        assert!(matches!(
            predict_tree(&t, &[1.0, 2.0]),
            Err(TreeError::FeatureCount { .. })
        ));
    }

    #[test]
    fn max_depth_zero_is_majority_leaf() {
        let ds = Dataset::from_columns(&["x"], vec![vec![1.0, 2.0, 3.0]], vec![1, 0, 1]).unwrap();
        let t = fit_tree(
            &ds,
            Targets::labels(ds.labels()),
            &TreeParams::with_max_depth(Some(0)),
            &mut rng(),
        )
        .unwrap();
        assert_eq!(t.nodes().len(), 1);
        assert_eq!(t.predict(&[100.0]).unwrap().class(), 1);
        assert_eq!(t.predict(&[-5.0]).unwrap(), t.predict(&[100.0]).unwrap());
    }

    #[test]
    fn pure_training_set_is_single_leaf() {
        let ds = Dataset::from_columns(&["x"], vec![vec![1.0, 2.0, 3.0]], vec![0, 0, 0]).unwrap();
        let t = fit_tree(&ds, Targets::labels(ds.labels()), &TreeParams::default(), &mut rng()).unwrap();
        assert_eq!(t.nodes().len(), 1);
    }

    #[test]
    fn empty_dataset_rejected() {
        let ds = Dataset::from_columns(&["x"], vec![vec![]], vec![]).unwrap();
        assert_eq!(
            fit_tree(&ds, Targets::labels(ds.labels()), &TreeParams::default(), &mut rng()).unwrap_err(),
            TreeError::EmptyDataset
        );
    }

    #[test]
    fn bad_params_rejected() {
        let ds = separable();
        let params = TreeParams {
            min_samples_split: 1,
            ..TreeParams::default()
        };
        assert!(matches!(
            fit_tree(&ds, Targets::labels(ds.labels()), &params, &mut rng()),
            Err(TreeError::InvalidParams(_))
        ));
    }

    #[test]
    fn weighted_split_follows_weights() {
        let ds = Dataset::from_columns(&["x"], vec![vec![1.0, 2.0, 3.0]], vec![0, 1, 1]).unwrap();
        let w = [0.1, 0.8, 0.1];
        let t = fit_tree(
            &ds,
            Targets::weighted(ds.labels(), &w),
            &TreeParams::with_max_depth(Some(0)),
            &mut rng(),
        )
        .unwrap();
        let p = t.predict(&[0.0]).unwrap();
        assert!((p.score() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn record_round_trip_and_validation() {
        let ds = separable();
        let t = fit_tree(&ds, Targets::labels(ds.labels()), &TreeParams::default(), &mut rng()).unwrap();
        let rec: TreeRecord = t.clone().into();
        assert_eq!(rec.nodes[1].left, -1);
        assert_eq!(TreeModel::try_from(rec.clone()).unwrap(), t);

        let mut bad = rec.clone();
        bad.nodes[0].right = 7;
        assert!(TreeModel::try_from(bad).unwrap_err().contains("index 7"));
        let mut cycle = rec.clone();
        cycle.nodes[0].left = 0;
        assert!(TreeModel::try_from(cycle).is_err());
        let mut wide = rec;
        wide.nodes[0].feature = Some(3);
        assert!(TreeModel::try_from(wide).is_err());
    }

    fn rows_of(ds: &Dataset) -> Vec<Vec<f64>> {
        (0..ds.row_count()).map(|r| ds.row(r)).collect()
    }

    fn conflict_free(cols: &[Vec<f64>], labels: &[u8]) -> bool {
        let n = labels.len();
        (0..n).all(|i| (0..n).all(|j| labels[i] == labels[j] || cols.iter().any(|c| c[i] != c[j])))
    }

    proptest! {
        #[test]
        fn gini_is_symmetric(a in 0u64..1000, b in 0u64..1000) {
            prop_assume!(a + b > 0);
            prop_assert_eq!(gini(ClassCounts::new(a, b)).unwrap(), gini(ClassCounts::new(b, a)).unwrap());
        }

        #[test]
        fn proportional_children_have_zero_gain(p0 in 1u64..20, p1 in 0u64..20, k in 1u64..5, m in 1u64..5) {
            let left = ClassCounts::new(p0 * k, p1 * k);
            let right = ClassCounts::new(p0 * m, p1 * m);
            let parent = ClassCounts::new(p0 * (k + m), p1 * (k + m));
            prop_assert!(information_gain(parent, left, right).unwrap().abs() < 1e-12);
        }

        #[test]
        fn full_tree_fits_training_labels(
            cols in prop::collection::vec(prop::collection::vec(0u8..40, 12), 1..4),
            labels in prop::collection::vec(0u8..2, 12),
        ) {
            let cols: Vec<Vec<f64>> = cols.into_iter().map(|c| c.into_iter().map(f64::from).collect()).collect();
            prop_assume!(conflict_free(&cols, &labels));
            let names: Vec<String> = (0..cols.len()).map(|i| format!("f{i}")).collect();
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            let ds = Dataset::from_columns(&refs, cols, labels.clone()).unwrap();
            let t = fit_tree(&ds, Targets::labels(ds.labels()), &TreeParams::default(), &mut rng()).unwrap();
            for (row, &label) in rows_of(&ds).iter().zip(&labels) {
                prop_assert_eq!(t.predict(row).unwrap().class(), label);
            }
        }

        #[test]
        fn monotone_transform_keeps_routing(
            x in prop::collection::vec(-50.0f64..50.0, 10),
            other in prop::collection::vec(-5.0f64..5.0, 10),
            labels in prop::collection::vec(0u8..2, 10),
        ) {
            let transformed: Vec<f64> = x.iter().map(|v| (v / 10.0).exp() * 3.0 + 1.0).collect();
            let a = Dataset::from_columns(&["x", "o"], vec![x, other.clone()], labels.clone()).unwrap();
            let b = Dataset::from_columns(&["x", "o"], vec![transformed, other], labels).unwrap();
            let ta = fit_tree(&a, Targets::labels(a.labels()), &TreeParams::default(), &mut rng()).unwrap();
            let tb = fit_tree(&b, Targets::labels(b.labels()), &TreeParams::default(), &mut rng()).unwrap();
            for r in 0..a.row_count() {
                prop_assert_eq!(ta.leaf_index(&a.row(r)), tb.leaf_index(&b.row(r)));
            }
        }
    }
}
