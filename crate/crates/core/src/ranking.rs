//! Random-forest feature ranking and top-fraction feature selection.
//!
//! Trees are CART classifiers grown on bootstrap resamples with Gini
//! impurity, axis-aligned `x[f] <= threshold` splits and a random subset of
//! features tried at each node. Importance is the mean decrease in impurity,
//! normalized per tree, averaged over trees and renormalized to sum to 1.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{class_counts, feature_dim};
use crate::error::{invalid, Error, Result};
use crate::wfdb::EpisodeLabel;

/// Splits whose impurity decrease is at or below this are rejected.
const MIN_DECREASE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Features tried per split; `None` means `round(sqrt(dim))`.
    pub max_features: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 750,
            max_features: None,
            max_depth: None,
            min_samples_leaf: 1,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(invalid("n_trees", "must be at least 1"));
        }
        if self.max_features == Some(0) {
            return Err(invalid("max_features", "must be at least 1"));
        }
        if self.min_samples_leaf == 0 {
            return Err(invalid("min_samples_leaf", "must be at least 1"));
        }
        Ok(())
    }

    fn features_per_split(&self, dim: usize) -> usize {
        self.max_features
            .unwrap_or_else(|| (dim as f64).sqrt().round() as usize)
            .clamp(1, dim)
    }
}

/// Bootstrap class counts reaching a node, indexed `[NOT_VF, VF]`.
pub type ClassCounts = [u32; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        counts: ClassCounts,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        counts: ClassCounts,
        /// `n * gini(parent) - n_l * gini(left) - n_r * gini(right)`.
        weighted_decrease: f64,
    },
}

impl Node {
    pub fn counts(&self) -> ClassCounts {
        match self {
            Node::Leaf { counts } | Node::Split { counts, .. } => *counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    /// Root is `nodes[0]`.
    pub nodes: Vec<Node>,
    /// RNG stream used for this tree's bootstrap and feature draws.
    pub stream: u64,
}

impl DecisionTree {
    /// Fraction of VF samples in the leaf reached by `x`.
    pub fn predict_vf_fraction(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => {
                    let total = counts[0] + counts[1];
                    return counts[1] as f64 / total as f64;
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    fn importances(&self, dim: usize) -> Vec<f64> {
        let mut imp = vec![0.0; dim];
        for node in &self.nodes {
            if let Node::Split {
                feature,
                weighted_decrease,
                ..
            } = node
            {
                imp[*feature] += weighted_decrease;
            }
        }
        imp
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    pub n_features: usize,
    pub max_features_per_split: usize,
    pub seed: u64,
    /// Out-of-bag accuracy over samples left out by at least one tree.
    pub oob_accuracy: Option<f64>,
}

impl RandomForest {
    /// Mean VF fraction over trees.
    pub fn predict_vf_probability(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                actual: x.len(),
            });
        }
        let sum: f64 = self.trees.iter().map(|t| t.predict_vf_fraction(x)).sum();
        Ok(sum / self.trees.len() as f64)
    }

    pub fn predict(&self, x: &[f64]) -> Result<EpisodeLabel> {
        Ok(if self.predict_vf_probability(x)? > 0.5 {
            EpisodeLabel::Vf
        } else {
            EpisodeLabel::NotVf
        })
    }
}

fn class_index(label: EpisodeLabel) -> usize {
    match label {
        EpisodeLabel::NotVf => 0,
        EpisodeLabel::Vf => 1,
    }
}

/// `n * gini` for the given counts.
fn weighted_gini(c: [u64; 2]) -> f64 {
    let n = (c[0] + c[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    n - (c[0] * c[0] + c[1] * c[1]) as f64 / n
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

struct TreeGrower<'a> {
    x: &'a [Vec<f64>],
    classes: &'a [usize],
    cfg: &'a ForestConfig,
    max_features: usize,
    rng: ChaCha8Rng,
    features: Vec<usize>,
    pairs: Vec<(f64, usize)>,
}

impl TreeGrower<'_> {
    fn counts(&self, idx: &[usize]) -> [u64; 2] {
        let mut c = [0u64; 2];
        for &i in idx {
            c[self.classes[i]] += 1;
        }
        c
    }

    fn best_split(&mut self, idx: &[usize], parent: [u64; 2]) -> Option<BestSplit> {
        let n = idx.len();
        let min_leaf = self.cfg.min_samples_leaf;
        let parent_imp = weighted_gini(parent);
        let dim = self.features.len();
        let mut best: Option<BestSplit> = None;
        let mut visited = 0;
        for k in 0..dim {
            if visited >= self.max_features {
                break;
            }
            let j = self.rng.random_range(k..dim);
            self.features.swap(k, j);
            let f = self.features[k];

            self.pairs.clear();
            self.pairs.extend(idx.iter().map(|&i| (self.x[i][f], self.classes[i])));
            self.pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if self.pairs[0].0 == self.pairs[n - 1].0 {
                // constant within the node; does not count toward the budget
                continue;
            }
            visited += 1;

            let mut left = [0u64; 2];
            for p in 0..n - 1 {
                left[self.pairs[p].1] += 1;
                let (a, b) = (self.pairs[p].0, self.pairs[p + 1].0);
                if a == b || p + 1 < min_leaf || n - p - 1 < min_leaf {
                    continue;
                }
                let right = [parent[0] - left[0], parent[1] - left[1]];
                let decrease = parent_imp - weighted_gini(left) - weighted_gini(right);
                if decrease > MIN_DECREASE && best.as_ref().is_none_or(|s| decrease > s.decrease) {
                    let mid = 0.5 * (a + b);
                    best = Some(BestSplit {
                        feature: f,
                        threshold: if mid < b { mid } else { a },
                        decrease,
                    });
                }
            }
        }
        best
    }

    fn grow(mut self, bootstrap: Vec<usize>) -> Vec<Node> {
        let mut nodes = Vec::new();
        // (node slot, samples, depth)
        let mut stack = vec![(0usize, bootstrap, 0usize)];
        nodes.push(Node::Leaf { counts: [0, 0] });
        while let Some((slot, idx, depth)) = stack.pop() {
            let c = self.counts(&idx);
            let counts = [c[0] as u32, c[1] as u32];
            let splittable = c[0] > 0
                && c[1] > 0
                && idx.len() >= 2 * self.cfg.min_samples_leaf
                && self.cfg.max_depth.is_none_or(|d| depth < d);
            let split = if splittable { self.best_split(&idx, c) } else { None };
            let Some(split) = split else {
                nodes[slot] = Node::Leaf { counts };
                continue;
            };
            let (l, r): (Vec<usize>, Vec<usize>) =
                idx.iter().partition(|&&i| self.x[i][split.feature] <= split.threshold);
            let left = nodes.len();
            nodes.push(Node::Leaf { counts: [0, 0] });
            let right = nodes.len();
            nodes.push(Node::Leaf { counts: [0, 0] });
            nodes[slot] = Node::Split {
                feature: split.feature,
                threshold: split.threshold,
                left,
                right,
                counts,
                weighted_decrease: split.decrease,
            };
            stack.push((right, r, depth + 1));
            stack.push((left, l, depth + 1));
        }
        nodes
    }
}

/// Grows `cfg.n_trees` trees in parallel. Tree `t` draws from stream `t` of a
/// ChaCha8 generator seeded with `cfg.seed`, so the forest does not depend on
/// thread scheduling.
pub fn train_forest(x: &[Vec<f64>], y: &[EpisodeLabel], cfg: &ForestConfig) -> Result<RandomForest> {
    cfg.validate()?;
    let dim = feature_dim(x)?;
    if dim == 0 {
        return Err(invalid("features", "feature dimension must be at least 1"));
    }
    if y.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    let (pos, neg) = class_counts(y);
    if pos < 2 || neg < 2 {
        return Err(Error::InsufficientData(format!(
            "random forest needs at least 2 samples per class, got {pos} VF and {neg} NOT_VF"
        )));
    }
    let classes: Vec<usize> = y.iter().map(|&l| class_index(l)).collect();
    let n = x.len();
    let max_features = cfg.features_per_split(dim);

    let grown: Vec<(DecisionTree, Vec<bool>)> = (0..cfg.n_trees as u64)
        .into_par_iter()
        .map(|stream| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(stream);
            let mut in_bag = vec![false; n];
            let bootstrap: Vec<usize> = (0..n)
                .map(|_| {
                    let i = rng.random_range(0..n);
                    in_bag[i] = true;
                    i
                })
                .collect();
            let mut features: Vec<usize> = (0..dim).collect();
            features.shuffle(&mut rng);
            let grower = TreeGrower {
                x,
                classes: &classes,
                cfg,
                max_features,
                rng,
                features,
                pairs: Vec::with_capacity(n),
            };
            let nodes = grower.grow(bootstrap);
            (DecisionTree { nodes, stream }, in_bag)
        })
        .collect();

    let mut vote = vec![0.0; n];
    let mut votes = vec![0u32; n];
    for (tree, in_bag) in &grown {
        for i in (0..n).filter(|&i| !in_bag[i]) {
            vote[i] += tree.predict_vf_fraction(&x[i]);
            votes[i] += 1;
        }
    }
    let (mut correct, mut scored) = (0usize, 0usize);
    for i in (0..n).filter(|&i| votes[i] > 0) {
        scored += 1;
        let predicted = vote[i] / votes[i] as f64 > 0.5;
        if predicted == (classes[i] == 1) {
            correct += 1;
        }
    }

    Ok(RandomForest {
        trees: grown.into_iter().map(|(t, _)| t).collect(),
        n_features: dim,
        max_features_per_split: max_features,
        seed: cfg.seed,
        oob_accuracy: (scored > 0).then(|| correct as f64 / scored as f64),
    })
}

/// Mean-decrease-in-impurity importances, non-negative and summing to 1.
/// Trees without any split are left out of the average; if no tree split at
/// all, every feature gets `1 / dim`.
pub fn feature_importances(model: &RandomForest) -> Vec<f64> {
    let dim = model.n_features;
    let mut total = vec![0.0; dim];
    let mut used = 0usize;
    for tree in &model.trees {
        let imp = tree.importances(dim);
        let sum: f64 = imp.iter().sum();
        if sum > 0.0 {
            used += 1;
            for (t, v) in total.iter_mut().zip(&imp) {
                *t += v / sum;
            }
        }
    }
    if used == 0 {
        return vec![1.0 / dim as f64; dim];
    }
    let sum: f64 = total.iter().sum();
    total.iter().map(|v| v / sum).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMask {
    /// Sorted, unique, each `< dim`.
    pub selected_indices: Vec<usize>,
    pub fraction: f64,
    pub dim: usize,
}

impl FeatureMask {
    pub fn new(selected_indices: Vec<usize>, fraction: f64, dim: usize) -> Result<Self> {
        if selected_indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Malformed("mask indices must be strictly increasing".into()));
        }
        if let Some(&last) = selected_indices.last() {
            if last >= dim {
                return Err(Error::Malformed(format!(
                    "mask index {last} out of range for dimension {dim}"
                )));
            }
        }
        Ok(Self {
            selected_indices,
            fraction,
            dim,
        })
    }

    /// Mask that keeps every feature.
    pub fn all(dim: usize) -> Self {
        Self {
            selected_indices: (0..dim).collect(),
            fraction: 1.0,
            dim,
        }
    }

    pub fn len(&self) -> usize {
        self.selected_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected_indices.is_empty()
    }

    pub fn apply(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: row.len(),
            });
        }
        Ok(self.selected_indices.iter().map(|&i| row[i]).collect())
    }
}

/// Indices of the `round(fraction * dim)` largest importances, ties going to
/// the lower index.
pub fn select_top_fraction(importances: &[f64], fraction: f64) -> Result<FeatureMask> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(invalid("fraction", format!("must be in (0, 1], got {fraction}")));
    }
    let dim = importances.len();
    if dim == 0 {
        return Err(Error::EmptyInput("importances"));
    }
    if importances.iter().any(|v| !v.is_finite()) {
        return Err(invalid("importances", "must be finite"));
    }
    let k = (fraction * dim as f64).round() as usize;
    if k == 0 {
        return Err(invalid(
            "fraction",
            format!("{fraction} of {dim} features selects nothing"),
        ));
    }
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| importances[b].total_cmp(&importances[a]).then(a.cmp(&b)));
    let mut selected = order[..k].to_vec();
    selected.sort_unstable();
    FeatureMask::new(selected, fraction, dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn label(b: bool) -> EpisodeLabel {
        if b {
            EpisodeLabel::Vf
        } else {
            EpisodeLabel::NotVf
        }
    }

    fn small(seed: u64) -> ForestConfig {
        ForestConfig {
            n_trees: 60,
            seed,
            ..ForestConfig::default()
        }
    }

    /// y = 1[x_0 > 0] with `noise` standard-normal distractors.
    fn single_informative(n: usize, noise: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<EpisodeLabel>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..=noise).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let y = x.iter().map(|r| label(r[0] > 0.0)).collect();
        (x, y)
    }

    #[test]
    fn separable_feature_gives_perfect_training_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<Vec<f64>> = (0..80)
            .map(|i| {
                let side = if i % 2 == 0 { 1.0 } else { -1.0 };
                vec![side * rng.random_range(0.5..2.0), rng.random_range(-1.0..1.0)]
            })
            .collect();
        let y: Vec<EpisodeLabel> = x.iter().map(|r| label(r[0] > 0.0)).collect();
        let forest = train_forest(&x, &y, &small(3)).unwrap();
        for (row, l) in x.iter().zip(&y) {
            assert_eq!(forest.predict(row).unwrap(), *l);
        }
    }

    #[test]
    fn tree_structure_invariants() {
        let (x, y) = single_informative(120, 4, 7);
        let forest = train_forest(&x, &y, &small(7)).unwrap();
        for tree in &forest.trees {
            for node in &tree.nodes {
                let c = node.counts();
                assert!(c[0] + c[1] >= 1);
                if let Node::Split {
                    left,
                    right,
                    weighted_decrease,
                    ..
                } = node
                {
                    assert!(*weighted_decrease > 0.0);
                    let (lc, rc) = (tree.nodes[*left].counts(), tree.nodes[*right].counts());
                    assert_eq!([lc[0] + rc[0], lc[1] + rc[1]], c);
                    let parent = weighted_gini([c[0] as u64, c[1] as u64]);
                    let children =
                        weighted_gini([lc[0] as u64, lc[1] as u64]) + weighted_gini([rc[0] as u64, rc[1] as u64]);
                    assert!(children < parent);
                }
            }
        }
    }

    #[test]
    fn same_seed_same_forest() {
        let (x, y) = single_informative(100, 5, 2);
        let a = train_forest(&x, &y, &small(11)).unwrap();
        let b = train_forest(&x, &y, &small(11)).unwrap();
        assert_eq!(a, b);
        let c = train_forest(&x, &y, &small(12)).unwrap();
        assert_ne!(a.trees, c.trees);
    }

    #[test]
    fn random_labels_give_chance_oob_accuracy() {
        let mut accs = Vec::new();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let x: Vec<Vec<f64>> = (0..300)
                .map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let mut y: Vec<EpisodeLabel> = (0..300).map(|i| label(i < 150)).collect();
            y.shuffle(&mut rng);
            let forest = train_forest(&x, &y, &small(seed)).unwrap();
            accs.push(forest.oob_accuracy.unwrap());
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        assert!((mean - 0.5).abs() <= 0.1, "mean oob {mean}");
        assert!(accs.iter().all(|a| (a - 0.5).abs() <= 0.15), "{accs:?}");
    }

    #[test]
    fn importances_normalized_and_constant_feature_zero() {
        let (mut x, y) = single_informative(150, 6, 5);
        for row in &mut x {
            row.push(3.25);
        }
        let forest = train_forest(&x, &y, &small(5)).unwrap();
        let imp = feature_importances(&forest);
        assert!((imp.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        assert!(imp.iter().all(|v| *v >= 0.0));
        assert_eq!(imp[7], 0.0);
        let top = (0..imp.len()).max_by(|&a, &b| imp[a].total_cmp(&imp[b])).unwrap();
        assert_eq!(top, 0);
    }

    #[test]
    fn rejects_degenerate_training_sets() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        let y = vec![EpisodeLabel::Vf; 3];
        assert!(matches!(
            train_forest(&x, &y, &small(0)),
            Err(Error::InsufficientData(_))
        ));
        let y = vec![EpisodeLabel::Vf, EpisodeLabel::NotVf, EpisodeLabel::NotVf];
        assert!(train_forest(&x, &y, &small(0)).is_err());
    }

    #[test]
    fn top_fraction_examples() {
        assert_eq!(
            select_top_fraction(&[0.5, 0.3, 0.2], 1.0 / 3.0)
                .unwrap()
                .selected_indices,
            vec![0]
        );
        let flat = vec![0.1; 10];
        assert_eq!(
            select_top_fraction(&flat, 0.5).unwrap().selected_indices,
            vec![0, 1, 2, 3, 4]
        );
        let imp: Vec<f64> = (0..2500).map(|i| ((i * 7919) % 2500) as f64).collect();
        assert_eq!(select_top_fraction(&imp, 0.24).unwrap().len(), 600);
        assert!(select_top_fraction(&imp, 0.0).is_err());
        assert!(select_top_fraction(&imp, 1.5).is_err());
    }

    #[test]
    fn mask_apply_checks_dimension() {
        let m = FeatureMask::new(vec![1, 3], 0.5, 4).unwrap();
        assert_eq!(m.apply(&[0.0, 1.0, 2.0, 3.0]).unwrap(), vec![1.0, 3.0]);
        assert!(m.apply(&[0.0]).is_err());
        assert!(FeatureMask::new(vec![3, 1], 0.5, 4).is_err());
        assert!(FeatureMask::new(vec![4], 0.5, 4).is_err());
    }

    proptest! {
        #[test]
        fn top_fraction_size_and_order(
            imp in prop::collection::vec(0.0f64..1.0, 1..300),
            fraction in 0.01f64..=1.0,
        ) {
            let k = (fraction * imp.len() as f64).round() as usize;
            match select_top_fraction(&imp, fraction) {
                Ok(mask) => {
                    prop_assert_eq!(mask.len(), k);
                    prop_assert!(mask.selected_indices.windows(2).all(|w| w[0] < w[1]));
                    let min_kept = mask.selected_indices.iter().map(|&i| imp[i]).fold(f64::INFINITY, f64::min);
                    for i in (0..imp.len()).filter(|i| !mask.selected_indices.contains(i)) {
                        prop_assert!(imp[i] <= min_kept);
                    }
                }
                Err(_) => prop_assert_eq!(k, 0),
            }
        }
    }
}
