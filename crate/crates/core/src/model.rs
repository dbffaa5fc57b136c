//! Mixture of expert trees: EM-style training and soft/hard inference.

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{argmax, weighted_class_distribution, MoetConfig, WeightedDataset};
use crate::dtree::{fit_tree, TreeFitConfig, TreeNode};
use crate::error::{Error, Result};
use crate::gating::{
    gate_probabilities, responsibilities, weighted_gradient_step, weighted_objective, GatingParams,
    Standardizer,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InferenceMode {
    /// Argmax of the gate-weighted mixture of expert distributions.
    Soft,
    /// Argmax of the single expert with the highest gate score.
    Hard,
}

impl InferenceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            InferenceMode::Soft => "soft",
            InferenceMode::Hard => "hard",
        }
    }
}

impl std::str::FromStr for InferenceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "soft" => Ok(InferenceMode::Soft),
            "hard" => Ok(InferenceMode::Hard),
            other => Err(Error::InvalidConfig(format!("unknown inference mode {other:?}"))),
        }
    }
}

/// A gate over raw-space inputs plus one decision tree per expert.
#[derive(Debug, Clone, PartialEq)]
pub struct MoetModel {
    gate: GatingParams,
    experts: Vec<TreeNode>,
    standardization: Standardizer,
    num_classes: usize,
    mode: InferenceMode,
}

impl MoetModel {
    pub fn new(
        gate: GatingParams,
        experts: Vec<TreeNode>,
        standardization: Standardizer,
        num_classes: usize,
        mode: InferenceMode,
    ) -> Result<Self> {
        if experts.len() != gate.num_experts() {
            return Err(Error::InvalidConfig(format!(
                "{} experts but the gate has {}",
                experts.len(),
                gate.num_experts()
            )));
        }
        let f = gate.num_features();
        if standardization.mean.len() != f || standardization.std.len() != f {
            return Err(Error::InvalidConfig("standardization width mismatch".into()));
        }
        for t in &experts {
            if t.num_classes() != num_classes {
                return Err(Error::InvalidConfig("expert class count mismatch".into()));
            }
            if t.max_feature().is_some_and(|m| m >= f) {
                return Err(Error::InvalidConfig("expert splits on a missing feature".into()));
            }
        }
        Ok(Self {
            gate,
            experts,
            standardization,
            num_classes,
            mode,
        })
    }

    /// A single tree wrapped as a one-expert model.
    pub fn from_tree(tree: TreeNode, num_features: usize) -> Result<Self> {
        let c = tree.num_classes();
        Self::new(
            GatingParams::zeros(1, num_features),
            vec![tree],
            Standardizer::identity(num_features),
            c,
            InferenceMode::Hard,
        )
    }

    pub fn gate(&self) -> &GatingParams {
        &self.gate
    }

    pub fn experts(&self) -> &[TreeNode] {
        &self.experts
    }

    pub fn standardization(&self) -> &Standardizer {
        &self.standardization
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_features(&self) -> usize {
        self.gate.num_features()
    }

    pub fn num_experts(&self) -> usize {
        self.experts.len()
    }

    pub fn mode(&self) -> InferenceMode {
        self.mode
    }

    pub fn with_mode(mut self, mode: InferenceMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_gate(mut self, gate: GatingParams) -> Result<Self> {
        if gate.num_experts() != self.experts.len() || gate.num_features() != self.num_features() {
            return Err(Error::InvalidConfig("gate shape mismatch".into()));
        }
        self.gate = gate;
        Ok(self)
    }

    /// Mixture probability of every class.
    pub fn mixture_proba(&self, x: &[f64]) -> Vec<f64> {
        let g = gate_probabilities(&self.gate, x);
        let mut out = vec![0.0; self.num_classes];
        for (gi, tree) in g.iter().zip(&self.experts) {
            for (o, p) in out.iter_mut().zip(tree.predict_proba(x).probs()) {
                *o += gi * p;
            }
        }
        out
    }

    pub fn predict_soft(&self, x: &[f64]) -> usize {
        argmax(&self.mixture_proba(x))
    }

    /// Expert with the largest linear gate score.
    pub fn selected_expert(&self, x: &[f64]) -> usize {
        self.gate.select(x)
    }

    pub fn predict_hard(&self, x: &[f64]) -> usize {
        self.experts[self.selected_expert(x)].predict(x)
    }

    /// Prediction under the model's own inference mode.
    pub fn predict(&self, x: &[f64]) -> usize {
        match self.mode {
            InferenceMode::Soft => self.predict_soft(x),
            InferenceMode::Hard => self.predict_hard(x),
        }
    }

    /// (depth, nodes). A one-expert model reports its tree; otherwise the gate
    /// counts as one extra level and one extra node.
    pub fn size_stats(&self) -> (usize, usize) {
        if let [tree] = self.experts.as_slice() {
            return tree.stats();
        }
        let (depth, nodes) = self
            .experts
            .iter()
            .map(TreeNode::stats)
            .fold((0, 0), |(d, n), (td, tn)| (d.max(td), n + tn));
        (1 + depth, 1 + nodes)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Gating term of the auxiliary EM objective after each epoch.
    pub gating_objective: Vec<f64>,
    /// Expert term of the auxiliary EM objective after each epoch.
    pub expert_log_likelihood: Vec<f64>,
    pub training_fidelity: f64,
    /// (epoch, expert) pairs where the expert kept its previous tree.
    pub degenerate_experts: Vec<(usize, usize)>,
}

/// Fits gate and experts by alternating responsibility-weighted tree fitting
/// with gradient ascent on the gate.
///
/// Responsibilities are frozen for the whole epoch. Before the first epoch
/// every expert has a uniform likelihood, so the first responsibilities
/// equal the initial gate. The gate is trained on z-scored inputs and
/// returned in raw coordinates; the step size is divided by the total
/// instance weight.
pub fn train_moet(data: &WeightedDataset, cfg: &MoetConfig) -> Result<(MoetModel, TrainReport)> {
    cfg.validate()?;
    let e = cfg.num_experts;
    let n = data.len();
    let c = data.num_classes();
    let f = data.num_features();
    if n == 0 {
        return Err(Error::InvalidData("empty training set".into()));
    }
    if c < 2 {
        return Err(Error::InvalidData("at least two classes are required".into()));
    }
    let total_weight = data.total_weight();
    if !(total_weight > 0.0) {
        return Err(Error::DegenerateWeight(total_weight));
    }

    let xs: Vec<Vec<f64>> = data.examples().iter().map(|ex| ex.features.clone()).collect();
    let labels: Vec<usize> = data.examples().iter().map(|ex| ex.label).collect();
    let base: Vec<f64> = data.examples().iter().map(|ex| ex.weight).collect();
    let standardizer = Standardizer::fit(&xs, &base);
    let zs: Vec<Vec<f64>> = xs.iter().map(|x| standardizer.apply(x)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut gate = GatingParams::random(e, f, &mut rng);
    let mut experts: Vec<Option<TreeNode>> = vec![None; e];
    let tree_cfg = TreeFitConfig {
        max_depth: cfg.expert_max_depth,
        smoothing_eps: cfg.smoothing_eps,
        ..Default::default()
    };
    let uniform = 1.0 / c as f64;
    let likelihoods = |experts: &[Option<TreeNode>]| -> Vec<Vec<f64>> {
        xs.iter()
            .zip(&labels)
            .map(|(x, &y)| {
                experts
                    .iter()
                    .map(|t| t.as_ref().map_or(uniform, |t| t.predict_proba(x).prob(y)))
                    .collect()
            })
            .collect()
    };

    let mut report = TrainReport::default();
    let mut lr = cfg.learning_rate;
    for epoch in 0..cfg.epochs {
        let h = responsibilities(&gate, &likelihoods(&experts), &zs)?;

        let fitted: Vec<Result<Option<TreeNode>>> = (0..e)
            .into_par_iter()
            .map(|j| {
                let w: Vec<f64> = h.rows().iter().zip(&base).map(|(r, b)| r[j] * b).collect();
                let mass: f64 = w.iter().sum();
                if mass < 1e-6 * n as f64 {
                    return Ok(None);
                }
                fit_tree(&data.reweighted(&w)?, &tree_cfg).map(Some)
            })
            .collect();
        for (j, tree) in fitted.into_iter().enumerate() {
            match tree? {
                Some(t) => experts[j] = Some(t),
                None => {
                    warn!("epoch {epoch}: expert {j} has negligible responsibility, keeping previous tree");
                    report.degenerate_experts.push((epoch, j));
                }
            }
        }

        let lik = likelihoods(&experts);
        let expert_ll: f64 = h
            .rows()
            .iter()
            .zip(&lik)
            .zip(&base)
            .map(|((hr, lr), b)| b * hr.iter().zip(lr).map(|(h, p)| h * p.max(1e-300).ln()).sum::<f64>())
            .sum();
        report.expert_log_likelihood.push(expert_ll);

        let step = lr / total_weight;
        for _ in 0..cfg.gradient_steps_per_epoch {
            gate = weighted_gradient_step(&gate, &h, &zs, Some(&base), step);
        }
        report
            .gating_objective
            .push(weighted_objective(&gate, &h, &zs, Some(&base)));
        lr *= cfg.lr_decay;
    }

    let all: Vec<usize> = (0..n).collect();
    let fallback = TreeNode::leaf(weighted_class_distribution(data, &all, cfg.smoothing_eps)?);
    let experts = experts
        .into_iter()
        .map(|t| t.unwrap_or_else(|| fallback.clone()))
        .collect();
    let model = MoetModel::new(
        gate.to_raw_space(&standardizer),
        experts,
        standardizer,
        c,
        InferenceMode::Soft,
    )?;
    let agree = xs
        .iter()
        .zip(&labels)
        .filter(|(x, &y)| model.predict(x) == y)
        .count();
    report.training_fidelity = agree as f64 / n as f64;
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ClassDistribution, WeightedExample};
    use rand::Rng;

    fn leaf(p: &[f64]) -> TreeNode {
        TreeNode::leaf(ClassDistribution::new(p.to_vec()).unwrap())
    }

    fn random_tree(rng: &mut ChaCha8Rng, depth: usize, f: usize, c: usize) -> TreeNode {
        if depth == 0 {
            let raw: Vec<f64> = (0..c).map(|_| rng.random_range(0.01..1.0)).collect();
            let s: f64 = raw.iter().sum();
            return leaf(&raw.iter().map(|v| v / s).collect::<Vec<_>>());
        }
        TreeNode::Internal {
            feature: rng.random_range(0..f),
            threshold: rng.random_range(-1.0..1.0),
            left: Box::new(random_tree(rng, depth - 1, f, c)),
            right: Box::new(random_tree(rng, depth - 1, f, c)),
        }
    }

    pub(crate) fn random_model(rng: &mut ChaCha8Rng, e: usize, depth: usize, f: usize, c: usize) -> MoetModel {
        let gate = GatingParams::new(
            (0..e)
                .map(|_| (0..=f).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect(),
        )
        .unwrap();
        let experts = (0..e).map(|_| random_tree(rng, depth, f, c)).collect();
        MoetModel::new(gate, experts, Standardizer::identity(f), c, InferenceMode::Hard).unwrap()
    }

    #[test]
    fn single_expert_collapses_to_tree() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_model(&mut rng, 1, 3, 2, 3);
        for _ in 0..200 {
            let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let t = m.experts()[0].predict(&x);
            assert_eq!(m.predict_soft(&x), t);
            assert_eq!(m.predict_hard(&x), t);
        }
    }

    #[test]
    fn identical_experts_ignore_gate() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tree = random_tree(&mut rng, 2, 2, 3);
        let gate = GatingParams::new(vec![vec![3.0, -1.0, 0.5], vec![-2.0, 0.7, 0.1]]).unwrap();
        let m = MoetModel::new(
            gate,
            vec![tree.clone(), tree.clone()],
            Standardizer::identity(2),
            3,
            InferenceMode::Soft,
        )
        .unwrap();
        for _ in 0..200 {
            let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            assert_eq!(m.predict_soft(&x), tree.predict(&x));
        }
    }

    #[test]
    fn soft_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let m = random_model(&mut rng, 3, 2, 2, 3);
            for _ in 0..50 {
                let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
                let scores: Vec<f64> = m
                    .gate()
                    .coefficients()
                    .iter()
                    .map(|c| (c[0] * x[0] + c[1] * x[1] + c[2]).exp())
                    .collect();
                let z: f64 = scores.iter().sum();
                let mut best = (0, f64::MIN);
                for class in 0..3 {
                    let p: f64 = (0..3)
                        .map(|j| scores[j] / z * m.experts()[j].predict_proba(&x).prob(class))
                        .sum();
                    if p > best.1 + 1e-12 {
                        best = (class, p);
                    }
                }
                assert_eq!(m.predict_soft(&x), best.0);
            }
        }
    }

    #[test]
    fn saturated_gate_picks_expert() {
        let gate = GatingParams::new(vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 60.0]]).unwrap();
        let m = MoetModel::new(
            gate,
            vec![leaf(&[0.9, 0.1]), leaf(&[0.8, 0.2]), leaf(&[0.3, 0.7])],
            Standardizer::identity(1),
            2,
            InferenceMode::Hard,
        )
        .unwrap();
        assert_eq!(m.selected_expert(&[5.0]), 2);
        assert_eq!(m.predict_hard(&[5.0]), 1);
    }

    #[test]
    fn softmax_and_linear_selection_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let m = random_model(&mut rng, 4, 1, 3, 2);
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            let g = gate_probabilities(m.gate(), &x);
            assert_eq!(argmax(&g), m.selected_expert(&x));
        }
    }

    #[test]
    fn hard_prediction_is_shift_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let m = random_model(&mut rng, 3, 2, 2, 2);
            let shift: Vec<f64> = (0..3).map(|_| rng.random_range(-10.0..10.0)).collect();
            let shifted = m.clone().with_gate(m.gate().shifted(&shift)).unwrap();
            for _ in 0..20 {
                let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
                assert_eq!(m.predict_hard(&x), shifted.predict_hard(&x));
            }
        }
    }

    #[test]
    fn hard_and_soft_agree_under_certainty() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut checked = 0;
        for _ in 0..200 {
            let m = random_model(&mut rng, 3, 2, 2, 2);
            let sharp = m
                .clone()
                .with_gate(GatingParams::new(
                    m.gate().coefficients().iter().map(|c| c.iter().map(|v| v * 20.0).collect()).collect(),
                ).unwrap())
                .unwrap();
            for _ in 0..20 {
                let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
                let g = gate_probabilities(sharp.gate(), &x);
                let j = sharp.selected_expert(&x);
                let mut p = sharp.experts()[j].predict_proba(&x).probs().to_vec();
                p.sort_by(|a, b| b.total_cmp(a));
                // the selected expert's lead outweighs all other gate mass
                if g[j] * (p[0] - p[1]) > 1.0 - g[j] {
                    checked += 1;
                    assert_eq!(sharp.predict_hard(&x), sharp.predict_soft(&x));
                }
            }
        }
        assert!(checked > 100, "only {checked} confident states");
    }

    #[test]
    fn size_stats_count_the_gate() {
        let m = MoetModel::new(
            GatingParams::zeros(2, 2),
            vec![leaf(&[1.0, 0.0]), leaf(&[0.0, 1.0])],
            Standardizer::identity(2),
            2,
            InferenceMode::Hard,
        )
        .unwrap();
        assert_eq!(m.size_stats(), (1, 3));
        let single = MoetModel::from_tree(leaf(&[0.5, 0.5]), 2).unwrap();
        assert_eq!(single.size_stats(), (0, 1));
    }

    fn diagonal_data() -> WeightedDataset {
        let mut ex = Vec::new();
        for x in 0..6 {
            for y in 0..6 {
                if x + y != 5 {
                    ex.push(WeightedExample::new(vec![x as f64, y as f64], usize::from(x + y > 5), 1.0));
                }
            }
        }
        WeightedDataset::new(ex, 2, 2).unwrap()
    }

    #[test]
    fn single_expert_training_equals_fit_tree() {
        let d = diagonal_data();
        let cfg = MoetConfig {
            num_experts: 1,
            expert_max_depth: 2,
            epochs: 3,
            ..Default::default()
        };
        let (m, _) = train_moet(&d, &cfg).unwrap();
        let t = fit_tree(&d, &TreeFitConfig::with_max_depth(2)).unwrap();
        assert_eq!(m.experts()[0], t);
        for ex in d.examples() {
            assert_eq!(gate_probabilities(m.gate(), &ex.features), vec![1.0]);
            assert_eq!(m.predict_soft(&ex.features), t.predict(&ex.features));
        }
    }

    #[test]
    fn two_constant_experts_split_a_diagonal() {
        let d = diagonal_data();
        let cfg = MoetConfig {
            num_experts: 2,
            expert_max_depth: 0,
            ..Default::default()
        };
        let (m, report) = train_moet(&d, &cfg).unwrap();
        let m = m.with_mode(InferenceMode::Hard);
        assert_eq!(report.gating_objective.len(), cfg.epochs);
        assert_eq!(report.expert_log_likelihood.len(), cfg.epochs);
        for ex in d.examples() {
            assert_eq!(m.predict_hard(&ex.features), ex.label, "at {:?}", ex.features);
        }
        assert_eq!(m.size_stats(), (1, 3));
    }

    #[test]
    fn training_is_deterministic() {
        let d = diagonal_data();
        let cfg = MoetConfig {
            num_experts: 3,
            expert_max_depth: 1,
            epochs: 10,
            seed: 9,
            ..Default::default()
        };
        let (a, ra) = train_moet(&d, &cfg).unwrap();
        let (b, rb) = train_moet(&d, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
    }

    #[test]
    fn more_experts_than_instances() {
        // Resampling can leave fewer distinct states than experts.
        let d = WeightedDataset::new(
            vec![
                WeightedExample::new(vec![0.0], 0, 7.0),
                WeightedExample::new(vec![1.0], 1, 3.0),
            ],
            1,
            2,
        )
        .unwrap();
        let cfg = MoetConfig {
            num_experts: 4,
            expert_max_depth: 2,
            ..MoetConfig::default()
        };
        let (m, _) = train_moet(&d, &cfg).unwrap();
        assert_eq!(m.num_experts(), 4);

        let empty = WeightedDataset::new(Vec::new(), 1, 2).unwrap();
        assert!(train_moet(&empty, &MoetConfig::default()).is_err());
    }
}
