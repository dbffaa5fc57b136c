//! Shared data model: weighted datasets, class distributions and impurity.

use crate::error::{Error, Result};

/// Additive smoothing applied to every class fraction before renormalizing.
pub const DEFAULT_SMOOTHING: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedExample {
    pub features: Vec<f64>,
    pub label: usize,
    pub weight: f64,
}

impl WeightedExample {
    pub fn new(features: Vec<f64>, label: usize, weight: f64) -> Self {
        Self {
            features,
            label,
            weight,
        }
    }
}

/// Labeled feature vectors carrying per-instance weights.
///
/// All examples share the same feature count and class count; both are
/// checked when the dataset is built.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDataset {
    examples: Vec<WeightedExample>,
    num_classes: usize,
    num_features: usize,
}

impl WeightedDataset {
    pub fn new(
        examples: Vec<WeightedExample>,
        num_features: usize,
        num_classes: usize,
    ) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::InvalidData("num_classes must be positive".into()));
        }
        for (i, ex) in examples.iter().enumerate() {
            if ex.features.len() != num_features {
                return Err(Error::InvalidData(format!(
                    "example {i} has {} features, expected {num_features}",
                    ex.features.len()
                )));
            }
            if ex.label >= num_classes {
                return Err(Error::InvalidData(format!(
                    "example {i} has label {} >= {num_classes}",
                    ex.label
                )));
            }
            if !(ex.weight >= 0.0) || !ex.weight.is_finite() {
                return Err(Error::InvalidData(format!(
                    "example {i} has invalid weight {}",
                    ex.weight
                )));
            }
            if ex.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!(
                    "example {i} has a non-finite feature"
                )));
            }
        }
        Ok(Self {
            examples,
            num_classes,
            num_features,
        })
    }

    /// Builds a dataset with unit weights.
    pub fn unweighted(
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        num_features: usize,
        num_classes: usize,
    ) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::InvalidData(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let examples = features
            .into_iter()
            .zip(labels)
            .map(|(f, y)| WeightedExample::new(f, y, 1.0))
            .collect();
        Self::new(examples, num_features, num_classes)
    }

    pub fn examples(&self) -> &[WeightedExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn total_weight(&self) -> f64 {
        self.examples.iter().map(|e| e.weight).sum()
    }

    /// Same features and labels, new weights.
    pub fn reweighted(&self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.examples.len() {
            return Err(Error::InvalidData(format!(
                "{} weights for {} examples",
                weights.len(),
                self.examples.len()
            )));
        }
        let examples = self
            .examples
            .iter()
            .zip(weights)
            .map(|(e, &w)| WeightedExample::new(e.features.clone(), e.label, w))
            .collect();
        Self::new(examples, self.num_features, self.num_classes)
    }
}

/// A probability vector over classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution {
    probs: Vec<f64>,
}

impl ClassDistribution {
    /// Validates that entries lie in [0, 1] and sum to one within 1e-9.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidData("empty class distribution".into()));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidData(format!(
                "class probabilities out of range: {probs:?}"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidData(format!(
                "class probabilities sum to {sum}"
            )));
        }
        Ok(Self { probs })
    }

    pub fn uniform(num_classes: usize) -> Self {
        Self {
            probs: vec![1.0 / num_classes as f64; num_classes],
        }
    }

    /// Normalizes raw per-class masses after adding `eps` to each fraction.
    pub fn from_masses(masses: &[f64], eps: f64) -> Result<Self> {
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::DegenerateWeight(total));
        }
        let denom = 1.0 + eps * masses.len() as f64;
        let probs = masses.iter().map(|m| (m / total + eps) / denom).collect();
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    pub fn prob(&self, class: usize) -> f64 {
        self.probs[class]
    }
}

/// Weighted class fractions over `indices`, smoothed by `eps`.
pub fn weighted_class_distribution(
    data: &WeightedDataset,
    indices: &[usize],
    eps: f64,
) -> Result<ClassDistribution> {
    if indices.is_empty() {
        return Err(Error::DegenerateWeight(0.0));
    }
    let mut masses = vec![0.0; data.num_classes()];
    for &i in indices {
        let ex = &data.examples()[i];
        masses[ex.label] += ex.weight;
    }
    ClassDistribution::from_masses(&masses, eps)
}

pub fn gini_index(dist: &ClassDistribution) -> f64 {
    1.0 - dist.probs().iter().map(|p| p * p).sum::<f64>()
}

/// Index of the largest probability; ties go to the lowest index.
pub fn argmax_class(dist: &ClassDistribution) -> usize {
    argmax(dist.probs())
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoetConfig {
    pub num_experts: usize,
    pub epochs: usize,
    pub expert_max_depth: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub gradient_steps_per_epoch: usize,
    pub smoothing_eps: f64,
    pub seed: u64,
}

impl Default for MoetConfig {
    fn default() -> Self {
        Self {
            num_experts: 2,
            epochs: 50,
            expert_max_depth: 0,
            learning_rate: 0.3,
            lr_decay: 0.97,
            gradient_steps_per_epoch: 20,
            smoothing_eps: DEFAULT_SMOOTHING,
            seed: 0,
        }
    }
}

impl MoetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.num_experts == 0 {
            return bad("num_experts must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay must lie in (0, 1]");
        }
        if self.gradient_steps_per_epoch == 0 {
            return bad("gradient_steps_per_epoch must be at least 1");
        }
        if !(self.smoothing_eps > 0.0) {
            return bad("smoothing_eps must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(labels: &[usize], weights: &[f64], c: usize) -> WeightedDataset {
        let ex = labels
            .iter()
            .zip(weights)
            .map(|(&y, &w)| WeightedExample::new(vec![0.0], y, w))
            .collect();
        WeightedDataset::new(ex, 1, c).unwrap()
    }

    fn all(d: &WeightedDataset) -> Vec<usize> {
        (0..d.len()).collect()
    }

    #[test]
    fn symmetric_weights_give_even_split() {
        let d = ds(&[0, 1], &[0.5, 0.5], 2);
        let p = weighted_class_distribution(&d, &all(&d), DEFAULT_SMOOTHING).unwrap();
        assert!((p.prob(0) - 0.5).abs() < 1e-12);
        assert!((p.prob(1) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fractional_weights_match_replicated_counts() {
        // integer weights 2, 3, 5 replicated: class 0 has 5 copies, class 1 has 5
        let replicated = ds(&[0, 0, 0, 0, 0, 1, 1, 1, 1, 1], &[1.0; 10], 2);
        let oracle =
            weighted_class_distribution(&replicated, &all(&replicated), DEFAULT_SMOOTHING).unwrap();
        let d = ds(&[0, 0, 1], &[0.2, 0.3, 0.5], 2);
        let p = weighted_class_distribution(&d, &all(&d), DEFAULT_SMOOTHING).unwrap();
        for c in 0..2 {
            assert!((p.prob(c) - oracle.prob(c)).abs() < 1e-12);
            assert!((p.prob(c) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn single_class_is_near_pure() {
        let d = ds(&[1, 1], &[0.7, 3.0], 2);
        let p = weighted_class_distribution(&d, &all(&d), DEFAULT_SMOOTHING).unwrap();
        assert!(p.prob(0) < 1e-5 && p.prob(0) > 0.0);
        assert!(p.prob(1) > 1.0 - 1e-5);
        assert!((p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_weight_is_degenerate() {
        let d = ds(&[0, 1], &[0.0, 0.0], 2);
        assert!(matches!(
            weighted_class_distribution(&d, &all(&d), DEFAULT_SMOOTHING),
            Err(Error::DegenerateWeight(_))
        ));
        assert!(weighted_class_distribution(&d, &[], DEFAULT_SMOOTHING).is_err());
    }

    #[test]
    fn gini_examples() {
        let g = |p: Vec<f64>| gini_index(&ClassDistribution::new(p).unwrap());
        assert_eq!(g(vec![1.0, 0.0]), 0.0);
        assert_eq!(g(vec![0.5, 0.5]), 0.5);
        assert!((g(vec![0.2, 0.3, 0.5]) - 0.62).abs() < 1e-12);
    }

    #[test]
    fn gini_of_uniform_is_one_minus_inverse_c() {
        for c in 2..=10 {
            let g = gini_index(&ClassDistribution::uniform(c));
            assert!((g - (1.0 - 1.0 / c as f64)).abs() < 1e-15, "C={c}: {g}");
        }
    }

    #[test]
    fn argmax_breaks_ties_low() {
        let a = |p: Vec<f64>| argmax_class(&ClassDistribution::new(p).unwrap());
        assert_eq!(a(vec![0.1, 0.9]), 1);
        assert_eq!(a(vec![0.5, 0.5]), 0);
        assert_eq!(a(vec![0.3, 0.4, 0.3]), 1);
    }

    #[test]
    fn dataset_rejects_bad_rows() {
        let bad_label = vec![WeightedExample::new(vec![0.0], 2, 1.0)];
        assert!(WeightedDataset::new(bad_label, 1, 2).is_err());
        let nan = vec![WeightedExample::new(vec![f64::NAN], 0, 1.0)];
        assert!(WeightedDataset::new(nan, 1, 2).is_err());
        let neg = vec![WeightedExample::new(vec![0.0], 0, -1.0)];
        assert!(WeightedDataset::new(neg, 1, 2).is_err());
    }

    #[test]
    fn config_bounds() {
        assert!(MoetConfig::default().validate().is_ok());
        let c = MoetConfig {
            lr_decay: 0.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = MoetConfig {
            num_experts: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn scale_invariance(
                rows in prop::collection::vec((0usize..3, 0.01f64..10.0), 1..30),
                scale in 0.001f64..1000.0,
            ) {
                let labels: Vec<usize> = rows.iter().map(|r| r.0).collect();
                let weights: Vec<f64> = rows.iter().map(|r| r.1).collect();
                let scaled: Vec<f64> = weights.iter().map(|w| w * scale).collect();
                let a = ds(&labels, &weights, 3);
                let b = ds(&labels, &scaled, 3);
                let pa = weighted_class_distribution(&a, &all(&a), DEFAULT_SMOOTHING).unwrap();
                let pb = weighted_class_distribution(&b, &all(&b), DEFAULT_SMOOTHING).unwrap();
                for c in 0..3 {
                    prop_assert!((pa.prob(c) - pb.prob(c)).abs() < 1e-12);
                }
            }

            #[test]
            fn integer_weights_equal_replication(
                rows in prop::collection::vec((0usize..4, 1u32..8), 1..30),
            ) {
                let labels: Vec<usize> = rows.iter().map(|r| r.0).collect();
                let weights: Vec<f64> = rows.iter().map(|r| r.1 as f64).collect();
                let mut rep = Vec::new();
                for &(y, w) in &rows {
                    rep.extend(std::iter::repeat(y).take(w as usize));
                }
                let a = ds(&labels, &weights, 4);
                let b = ds(&rep, &vec![1.0; rep.len()], 4);
                let pa = weighted_class_distribution(&a, &all(&a), DEFAULT_SMOOTHING).unwrap();
                let pb = weighted_class_distribution(&b, &all(&b), DEFAULT_SMOOTHING).unwrap();
                for c in 0..4 {
                    prop_assert!((pa.prob(c) - pb.prob(c)).abs() < 1e-12);
                }
            }
        }
    }
}
