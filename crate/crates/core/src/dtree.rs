//! Weighted CART: axis-aligned binary trees grown greedily on weighted Gini.
//!
//! Instance weights replace counts everywhere: class fractions at a node are
//! weight sums per class over the node's weight sum, both when scoring splits
//! and when estimating leaf distributions. Assignment of instances to nodes
//! stays hard.

use std::cmp::Ordering;

use crate::data::{weighted_class_distribution, ClassDistribution, WeightedDataset, DEFAULT_SMOOTHING};
use crate::error::{Error, Result};

/// Splits whose impurity decrease does not exceed this are rejected.
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    /// Instances with `x[feature] <= threshold` go left.
    Internal {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf(ClassDistribution),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeFitConfig {
    pub max_depth: usize,
    pub min_weight_split: f64,
    pub smoothing_eps: f64,
}

impl Default for TreeFitConfig {
    fn default() -> Self {
        Self {
            max_depth: 3,
            min_weight_split: 1e-9,
            smoothing_eps: DEFAULT_SMOOTHING,
        }
    }
}

impl TreeFitConfig {
    pub fn with_max_depth(max_depth: usize) -> Self {
        Self {
            max_depth,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// Parent Gini minus the weight-averaged child Gini.
    pub gain: f64,
}

/// Sum over classes of squared masses divided by the total: W - W * gini.
fn impurity_mass(masses: &[f64], total: f64) -> f64 {
    total - masses.iter().map(|m| m * m).sum::<f64>() / total
}

/// Best axis-aligned split of the instances in `indices`.
///
/// Candidate thresholds are midpoints between consecutive distinct values.
/// Ties resolve to the lowest feature, then the lowest threshold.
pub fn best_split(data: &WeightedDataset, indices: &[usize]) -> Option<Split> {
    let examples = data.examples();
    let c = data.num_classes();
    let mut parent = vec![0.0; c];
    for &i in indices {
        parent[examples[i].label] += examples[i].weight;
    }
    let total: f64 = parent.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let parent_imp = impurity_mass(&parent, total);

    let mut best: Option<(f64, usize, f64)> = None;
    let mut order = indices.to_vec();
    let mut left = vec![0.0; c];
    let mut right = vec![0.0; c];
    for feature in 0..data.num_features() {
        order.sort_by(|&a, &b| {
            examples[a].features[feature]
                .partial_cmp(&examples[b].features[feature])
                .unwrap_or(Ordering::Equal)
        });
        left.iter_mut().for_each(|m| *m = 0.0);
        let mut left_w = 0.0;
        for k in 0..order.len().saturating_sub(1) {
            let ex = &examples[order[k]];
            left[ex.label] += ex.weight;
            left_w += ex.weight;
            let lo = ex.features[feature];
            let hi = examples[order[k + 1]].features[feature];
            if !(lo < hi) {
                continue;
            }
            for (r, (p, l)) in right.iter_mut().zip(parent.iter().zip(&left)) {
                *r = p - l;
            }
            let right_w = total - left_w;
            if !(left_w > 0.0) || !(right_w > 0.0) {
                continue;
            }
            let child = impurity_mass(&left, left_w) + impurity_mass(&right, right_w);
            if best.is_none_or(|(b, _, _)| child < b) {
                let mut threshold = 0.5 * (lo + hi);
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some((child, feature, threshold));
            }
        }
    }
    let (child, feature, threshold) = best?;
    let gain = (parent_imp - child) / total;
    (gain > MIN_GAIN).then_some(Split {
        feature,
        threshold,
        gain,
    })
}

/// Grows a tree on the positively weighted instances of `data`.
pub fn fit_tree(data: &WeightedDataset, cfg: &TreeFitConfig) -> Result<TreeNode> {
    let indices: Vec<usize> = data
        .examples()
        .iter()
        .enumerate()
        .filter(|(_, e)| e.weight > 0.0)
        .map(|(i, _)| i)
        .collect();
    let total: f64 = indices.iter().map(|&i| data.examples()[i].weight).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateWeight(total));
    }
    grow(data, indices, 0, cfg)
}

fn grow(
    data: &WeightedDataset,
    indices: Vec<usize>,
    depth: usize,
    cfg: &TreeFitConfig,
) -> Result<TreeNode> {
    let leaf = || weighted_class_distribution(data, &indices, cfg.smoothing_eps).map(TreeNode::Leaf);
    if depth >= cfg.max_depth {
        return leaf();
    }
    let examples = data.examples();
    let mut weight = 0.0;
    let mut first_label = None;
    let mut pure = true;
    for &i in &indices {
        weight += examples[i].weight;
        match first_label {
            None => first_label = Some(examples[i].label),
            Some(l) if l != examples[i].label => pure = false,
            _ => {}
        }
    }
    if pure || weight < cfg.min_weight_split {
        return leaf();
    }
    let Some(split) = best_split(data, &indices) else {
        return leaf();
    };
    let (l, r): (Vec<usize>, Vec<usize>) = indices
        .iter()
        .partition(|&&i| examples[i].features[split.feature] <= split.threshold);
    Ok(TreeNode::Internal {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(grow(data, l, depth + 1, cfg)?),
        right: Box::new(grow(data, r, depth + 1, cfg)?),
    })
}

impl TreeNode {
    pub fn leaf(dist: ClassDistribution) -> Self {
        TreeNode::Leaf(dist)
    }

    pub fn predict_proba(&self, x: &[f64]) -> &ClassDistribution {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf(d) => return d,
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        crate::data::argmax_class(self.predict_proba(x))
    }

    /// (depth, node count); a lone leaf is (0, 1).
    pub fn stats(&self) -> (usize, usize) {
        match self {
            TreeNode::Leaf(_) => (0, 1),
            TreeNode::Internal { left, right, .. } => {
                let (dl, nl) = left.stats();
                let (dr, nr) = right.stats();
                (1 + dl.max(dr), 1 + nl + nr)
            }
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            TreeNode::Leaf(d) => d.num_classes(),
            TreeNode::Internal { left, .. } => left.num_classes(),
        }
    }

    /// Highest feature index referenced by any split, if any.
    pub fn max_feature(&self) -> Option<usize> {
        match self {
            TreeNode::Leaf(_) => None,
            TreeNode::Internal {
                feature,
                left,
                right,
                ..
            } => [Some(*feature), left.max_feature(), right.max_feature()]
                .into_iter()
                .flatten()
                .max(),
        }
    }
}

pub fn tree_stats(tree: &TreeNode) -> (usize, usize) {
    tree.stats()
}
