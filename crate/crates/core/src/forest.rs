//! Random forest of CART classification trees.
//!
//! Splits maximize the decrease in (optionally class-weighted) Gini impurity
//! over `mtry` features sampled per node. Thresholds sit at midpoints between
//! consecutive distinct values; among equal decreases the lowest feature index
//! and then the lowest threshold win. Tree `t` draws all of its randomness from
//! the stream `(seed, t)`, so parallel training is reproducible.

use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

const MIN_DECREASE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassWeight {
    None,
    /// Weights inversely proportional to class frequency.
    Balanced,
}

impl FromStr for ClassWeight {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(ClassWeight::None),
            "balanced" => Ok(ClassWeight::Balanced),
            other => Err(Error::Validation(format!("unknown class weighting `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows trees until leaves are pure or too small.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features tried per split; `None` means ⌈√p⌉.
    pub mtry: Option<usize>,
    pub bootstrap: bool,
    pub class_weight: ClassWeight,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 500,
            max_depth: None,
            min_samples_leaf: 1,
            mtry: None,
            bootstrap: true,
            class_weight: ClassWeight::None,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn resolved_mtry(&self, p: usize) -> usize {
        self.mtry.unwrap_or_else(|| (p as f64).sqrt().ceil() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { counts: Vec<f64> },
}

/// Flattened node arrays; `feature = -1` marks a leaf.
#[derive(Serialize, Deserialize)]
struct TreeArrays {
    feature: Vec<i64>,
    threshold: Vec<f64>,
    left: Vec<i64>,
    right: Vec<i64>,
    counts: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "TreeArrays", try_from = "TreeArrays")]
pub struct Tree {
    nodes: Vec<Node>,
}

impl From<Tree> for TreeArrays {
    fn from(t: Tree) -> Self {
        let mut a = TreeArrays {
            feature: Vec::with_capacity(t.nodes.len()),
            threshold: Vec::with_capacity(t.nodes.len()),
            left: Vec::with_capacity(t.nodes.len()),
            right: Vec::with_capacity(t.nodes.len()),
            counts: Vec::with_capacity(t.nodes.len()),
        };
        for node in t.nodes {
            match node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    a.feature.push(feature as i64);
                    a.threshold.push(threshold);
                    a.left.push(left as i64);
                    a.right.push(right as i64);
                    a.counts.push(Vec::new());
                }
                Node::Leaf { counts } => {
                    a.feature.push(-1);
                    a.threshold.push(0.0);
                    a.left.push(-1);
                    a.right.push(-1);
                    a.counts.push(counts);
                }
            }
        }
        a
    }
}

impl TryFrom<TreeArrays> for Tree {
    type Error = String;

    fn try_from(a: TreeArrays) -> std::result::Result<Self, String> {
        let n = a.feature.len();
        if [a.threshold.len(), a.left.len(), a.right.len(), a.counts.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err("tree arrays have different lengths".into());
        }
        let mut nodes = Vec::with_capacity(n);
        for i in 0..n {
            if a.feature[i] < 0 {
                if a.counts[i].is_empty() {
                    return Err(format!("leaf {i} has no class counts"));
                }
                nodes.push(Node::Leaf {
                    counts: a.counts[i].clone(),
                });
            } else {
                let (l, r) = (a.left[i], a.right[i]);
                if l <= i as i64 || r <= i as i64 || l as usize >= n || r as usize >= n {
                    return Err(format!("node {i} has invalid children"));
                }
                nodes.push(Node::Split {
                    feature: a.feature[i] as usize,
                    threshold: a.threshold[i],
                    left: l as usize,
                    right: r as usize,
                });
            }
        }
        Ok(Tree { nodes })
    }
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Leaf class counts reached by `row`.
    pub fn leaf_counts(&self, row: impl Fn(usize) -> f64) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row(*feature) <= *threshold { *left } else { *right },
                Node::Leaf { counts } => return counts,
            }
        }
    }
}

/// `1 − Σ (cᵢ/n)²`.
pub fn gini(counts: &[f64]) -> Result<f64> {
    if counts.iter().any(|c| *c < 0.0 || !c.is_finite()) {
        return Err(Error::Validation("class counts must be finite and ≥ 0".into()));
    }
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return Err(Error::Validation("Gini impurity of an empty node".into()));
    }
    Ok(gini_unchecked(counts, total))
}

fn gini_unchecked(counts: &[f64], total: f64) -> f64 {
    1.0 - counts.iter().map(|c| (c / total).powi(2)).sum::<f64>()
}

struct TreeBuilder<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [usize],
    /// Per-class weight applied to every sample of that class.
    weights: &'a [f64],
    n_classes: usize,
    params: &'a ForestParams,
    mtry: usize,
}

struct SplitChoice {
    decrease: f64,
    feature: usize,
    threshold: f64,
}

impl TreeBuilder<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<f64> {
        let mut counts = vec![0.0; self.n_classes];
        for &i in idx {
            counts[self.y[i]] += self.weights[self.y[i]];
        }
        counts
    }

    fn best_split<R: Rng>(&self, idx: &[usize], counts: &[f64], rng: &mut R) -> Option<SplitChoice> {
        let p = self.x.ncols();
        let total: f64 = counts.iter().sum();
        let parent = gini_unchecked(counts, total);
        let min_leaf = self.params.min_samples_leaf;
        let mut features = sample(rng, p, self.mtry).into_vec();
        features.sort_unstable();

        let mut best: Option<SplitChoice> = None;
        let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(idx.len());
        let mut left = vec![0.0; self.n_classes];
        let mut right = vec![0.0; self.n_classes];
        for f in features {
            let column = self.x.column(f);
            pairs.clear();
            pairs.extend(idx.iter().map(|&i| (column[i], self.y[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            left.iter_mut().for_each(|v| *v = 0.0);
            let mut left_w = 0.0;
            for t in 0..pairs.len() - 1 {
                let (v, c) = pairs[t];
                left[c] += self.weights[c];
                left_w += self.weights[c];
                let next = pairs[t + 1].0;
                if v == next {
                    continue;
                }
                let n_left = t + 1;
                if n_left < min_leaf || pairs.len() - n_left < min_leaf {
                    continue;
                }
                let right_w = total - left_w;
                for k in 0..self.n_classes {
                    right[k] = counts[k] - left[k];
                }
                let decrease = parent
                    - left_w / total * gini_unchecked(&left, left_w)
                    - right_w / total * gini_unchecked(&right, right_w);
                if best.as_ref().is_none_or(|b| decrease > b.decrease) {
                    let mut threshold = v + (next - v) / 2.0;
                    if threshold >= next {
                        threshold = v;
                    }
                    best = Some(SplitChoice {
                        decrease,
                        feature: f,
                        threshold,
                    });
                }
            }
        }
        best.filter(|b| b.decrease > MIN_DECREASE)
    }

    /// Returns the tree and the per-feature sum of weighted impurity decreases.
    fn build<R: Rng>(&self, root: Vec<usize>, rng: &mut R) -> (Tree, Vec<f64>) {
        let mut importance = vec![0.0; self.x.ncols()];
        let mut nodes: Vec<Node> = vec![Node::Leaf { counts: Vec::new() }];
        let root_weight: f64 = self.counts(&root).iter().sum();
        let mut stack = vec![(0usize, root, 0usize)];
        while let Some((id, idx, depth)) = stack.pop() {
            let counts = self.counts(&idx);
            let total: f64 = counts.iter().sum();
            let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
            let splittable = depth_ok
                && idx.len() >= 2 * self.params.min_samples_leaf
                && gini_unchecked(&counts, total) > 0.0;
            let choice = if splittable {
                self.best_split(&idx, &counts, rng)
            } else {
                None
            };
            match choice {
                None => nodes[id] = Node::Leaf { counts },
                Some(s) => {
                    importance[s.feature] += total / root_weight * s.decrease;
                    let column = self.x.column(s.feature);
                    let (l, r): (Vec<usize>, Vec<usize>) =
                        idx.iter().partition(|&&i| column[i] <= s.threshold);
                    let left = nodes.len();
                    nodes.push(Node::Leaf { counts: Vec::new() });
                    let right = nodes.len();
                    nodes.push(Node::Leaf { counts: Vec::new() });
                    nodes[id] = Node::Split {
                        feature: s.feature,
                        threshold: s.threshold,
                        left,
                        right,
                    };
                    stack.push((right, r, depth + 1));
                    stack.push((left, l, depth + 1));
                }
            }
        }
        (Tree { nodes }, importance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    trees: Vec<Tree>,
    classes: Vec<String>,
    feature_names: Vec<String>,
    oob_error: Option<f64>,
    importances: Vec<f64>,
    params: ForestParams,
}

fn validate_training(x: &DMatrix<f64>, labels: &[String], feature_names: &[String], params: &ForestParams) -> Result<()> {
    if labels.len() != x.nrows() {
        return Err(Error::Validation(format!(
            "{} labels for {} rows",
            labels.len(),
            x.nrows()
        )));
    }
    if feature_names.len() != x.ncols() {
        return Err(Error::Validation(format!(
            "{} feature names for {} columns",
            feature_names.len(),
            x.ncols()
        )));
    }
    if x.ncols() == 0 {
        return Err(Error::Validation("no features to train on".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("features contain non-finite values".into()));
    }
    if params.n_trees == 0 || params.min_samples_leaf == 0 {
        return Err(Error::Validation("n_trees and min_samples_leaf must be ≥ 1".into()));
    }
    let mtry = params.resolved_mtry(x.ncols());
    if mtry > x.ncols() {
        return Err(Error::Validation(format!(
            "mtry {mtry} exceeds the {} available features",
            x.ncols()
        )));
    }
    Ok(())
}

pub fn train_forest(
    x: &DMatrix<f64>,
    labels: &[String],
    feature_names: &[String],
    params: &ForestParams,
) -> Result<ForestModel> {
    validate_training(x, labels, feature_names, params)?;
    let mut classes: Vec<String> = labels.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Validation(format!(
            "need at least two classes, found {:?}",
            classes
        )));
    }
    let y: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("class list built from labels"))
        .collect();
    let n = x.nrows();
    let n_classes = classes.len();
    let weights: Vec<f64> = match params.class_weight {
        ClassWeight::None => vec![1.0; n_classes],
        ClassWeight::Balanced => {
            let mut freq = vec![0usize; n_classes];
            y.iter().for_each(|&c| freq[c] += 1);
            freq.iter()
                .map(|&f| n as f64 / (n_classes as f64 * f as f64))
                .collect()
        }
    };
    let builder = TreeBuilder {
        x,
        y: &y,
        weights: &weights,
        n_classes,
        params,
        mtry: params.resolved_mtry(x.ncols()),
    };

    let grown: Vec<(Tree, Vec<f64>, Option<Vec<bool>>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(params.seed, &[rng::TAG_FOREST, t as u64]);
            let (idx, in_bag) = if params.bootstrap {
                let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let mut in_bag = vec![false; n];
                idx.iter().for_each(|&i| in_bag[i] = true);
                (idx, Some(in_bag))
            } else {
                ((0..n).collect(), None)
            };
            let (tree, imp) = builder.build(idx, &mut rng);
            (tree, imp, in_bag)
        })
        .collect();

    let mut importances = vec![0.0; x.ncols()];
    for (_, imp, _) in &grown {
        for (a, b) in importances.iter_mut().zip(imp) {
            *a += b;
        }
    }
    let total: f64 = importances.iter().map(|v| v / params.n_trees as f64).sum();
    if total > 0.0 {
        importances
            .iter_mut()
            .for_each(|v| *v = *v / params.n_trees as f64 / total);
    } else {
        log::warn!("no tree in the forest made a split; feature importances are all zero");
        importances.iter_mut().for_each(|v| *v = 0.0);
    }

    let oob_error = params.bootstrap.then(|| {
        let mut votes = DMatrix::<f64>::zeros(n, n_classes);
        let mut seen = vec![false; n];
        for (tree, _, in_bag) in &grown {
            let in_bag = in_bag.as_ref().expect("bootstrap records membership");
            for i in (0..n).filter(|&i| !in_bag[i]) {
                let counts = tree.leaf_counts(|f| x[(i, f)]);
                let s: f64 = counts.iter().sum();
                for (c, v) in counts.iter().enumerate() {
                    votes[(i, c)] += v / s;
                }
                seen[i] = true;
            }
        }
        let scored: Vec<usize> = (0..n).filter(|&i| seen[i]).collect();
        if scored.is_empty() {
            return f64::NAN;
        }
        let wrong = scored
            .iter()
            .filter(|&&i| argmax(votes.row(i).iter().copied()) != y[i])
            .count();
        wrong as f64 / scored.len() as f64
    });

    Ok(ForestModel {
        trees: grown.into_iter().map(|(t, _, _)| t).collect(),
        classes,
        feature_names: feature_names.to_vec(),
        oob_error: oob_error.filter(|e| e.is_finite()),
        importances,
        params: params.clone(),
    })
}

/// Index of the largest value; ties go to the earliest.
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

impl ForestModel {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn oob_error(&self) -> Option<f64> {
        self.oob_error
    }

    /// Per-feature importances in feature order.
    pub fn importances(&self) -> &[f64] {
        &self.importances
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Average over trees of the class frequencies in the leaf each row reaches.
pub fn predict_proba(model: &ForestModel, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != model.feature_names.len() {
        return Err(Error::Schema(format!(
            "forest expects {} features, got {}",
            model.feature_names.len(),
            x.ncols()
        )));
    }
    let n_classes = model.classes.len();
    let rows: Vec<Vec<f64>> = (0..x.nrows())
        .into_par_iter()
        .map(|i| {
            let mut acc = vec![0.0; n_classes];
            for tree in &model.trees {
                let counts = tree.leaf_counts(|f| x[(i, f)]);
                let s: f64 = counts.iter().sum();
                for (a, c) in acc.iter_mut().zip(counts) {
                    *a += c / s;
                }
            }
            acc.iter_mut().for_each(|a| *a /= model.trees.len() as f64);
            acc
        })
        .collect();
    Ok(DMatrix::from_fn(x.nrows(), n_classes, |i, c| rows[i][c]))
}

/// Hard labels (indices into `model.classes()`), ties to the earliest class.
pub fn predict(model: &ForestModel, x: &DMatrix<f64>) -> Result<Vec<usize>> {
    let proba = predict_proba(model, x)?;
    Ok(proba.row_iter().map(|r| argmax(r.iter().copied())).collect())
}

/// Features sorted by descending importance, ties by feature index.
pub fn feature_importance(model: &ForestModel) -> Vec<(String, f64)> {
    let mut order: Vec<usize> = (0..model.importances.len()).collect();
    order.sort_by(|&a, &b| {
        model.importances[b]
            .total_cmp(&model.importances[a])
            .then(a.cmp(&b))
    });
    order
        .into_iter()
        .map(|i| (model.feature_names[i].clone(), model.importances[i]))
        .collect()
}

/// `feature,importance`, descending.
pub fn write_importances_csv<W: Write>(w: W, ranked: &[(String, f64)]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["feature", "importance"])?;
    for (f, v) in ranked {
        wr.write_record([f.as_str(), &v.to_string()])?;
    }
    wr.flush().map_err(|e| Error::io("<importance csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|j| format!("f{j}@0")).collect()
    }

    fn labels(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini(&[5.0, 5.0]).unwrap(), 0.5);
        assert_eq!(gini(&[10.0, 0.0]).unwrap(), 0.0);
        assert_eq!(gini(&[1.0, 1.0, 1.0, 1.0]).unwrap(), 0.75);
        assert!(matches!(gini(&[0.0, 0.0]), Err(Error::Validation(_))));
    }

    #[test]
    fn separable_data_is_fit_perfectly() {
        let x = DMatrix::from_column_slice(8, 1, &[-4.0, -3.0, -2.0, -1.0, 1.0, 2.0, 3.0, 4.0]);
        let y = labels(&["A", "A", "A", "A", "B", "B", "B", "B"]);
        let model = train_forest(&x, &y, &names(1), &ForestParams { n_trees: 20, ..Default::default() }).unwrap();
        let pred = predict(&model, &x).unwrap();
        let truth: Vec<usize> = (0..8).map(|i| usize::from(i >= 4)).collect();
        assert_eq!(pred, truth);
    }

    #[test]
    fn pure_node_is_a_leaf() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let y = labels(&["A", "A", "A"]);
        let builder_y = vec![0usize; 3];
        let params = ForestParams::default();
        let b = TreeBuilder {
            x: &x,
            y: &builder_y,
            weights: &[1.0, 1.0],
            n_classes: 2,
            params: &params,
            mtry: 1,
        };
        let (tree, imp) = b.build(vec![0, 1, 2], &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(tree.nodes().len(), 1);
        assert_eq!(imp, vec![0.0]);
        assert!(train_forest(&x, &y, &names(1), &params).is_err());
    }

    #[test]
    fn single_tree_leaf_frequencies() {
        let tree = Tree {
            nodes: vec![Node::Leaf {
                counts: vec![3.0, 1.0],
            }],
        };
        let model = ForestModel {
            trees: vec![tree],
            classes: labels(&["a", "b"]),
            feature_names: names(1),
            oob_error: None,
            importances: vec![0.0],
            params: ForestParams::default(),
        };
        let p = predict_proba(&model, &DMatrix::zeros(1, 1)).unwrap();
        assert_eq!(p.row(0).iter().copied().collect::<Vec<_>>(), [0.75, 0.25]);
        assert!(matches!(predict_proba(&model, &DMatrix::zeros(1, 2)), Err(Error::Schema(_))));
    }

    #[test]
    fn only_informative_feature_gets_importance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 120;
        let x = DMatrix::from_fn(n, 3, |i, j| if j == 1 { i as f64 } else { rng.random::<f64>() });
        let y: Vec<String> = (0..n).map(|i| if i < 60 { "lo".into() } else { "hi".into() }).collect();
        let params = ForestParams {
            n_trees: 50,
            mtry: Some(3),
            bootstrap: false,
            ..Default::default()
        };
        let model = train_forest(&x, &y, &names(3), &params).unwrap();
        let ranked = feature_importance(&model);
        assert_eq!(ranked[0].0, "f1@0");
        assert!((ranked[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stump_forest_reports_zero_importance() {
        let x = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let y = labels(&["a", "a", "b", "b"]);
        let params = ForestParams {
            n_trees: 3,
            min_samples_leaf: 4,
            ..Default::default()
        };
        let model = train_forest(&x, &y, &names(1), &params).unwrap();
        assert_eq!(model.importances(), &[0.0]);
        assert!(model.trees().iter().all(|t| t.nodes().len() == 1));
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = DMatrix::from_column_slice(2, 1, &[1.0, f64::NAN]);
        assert!(train_forest(&x, &labels(&["a", "b"]), &names(1), &ForestParams::default()).is_err());
        let x = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
        let too_many = ForestParams {
            mtry: Some(2),
            ..Default::default()
        };
        assert!(train_forest(&x, &labels(&["a", "b"]), &names(1), &too_many).is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(30, 2, |_, _| rng.random::<f64>());
        let y: Vec<String> = (0..30).map(|i| ["a", "b", "c"][i % 3].to_string()).collect();
        let model = train_forest(&x, &y, &names(2), &ForestParams { n_trees: 5, ..Default::default() }).unwrap();
        assert_eq!(ForestModel::from_json(&model.to_json().unwrap()).unwrap(), model);
    }
}
