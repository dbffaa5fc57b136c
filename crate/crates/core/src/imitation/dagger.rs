//! Importance-weighted DAgger with pluggable student learners.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::eval::{episode_starts, evaluate_model, EvalResult};
use super::teacher::{importance, Teacher};
use crate::data::{MoetConfig, WeightedDataset, WeightedExample};
use crate::dtree::{fit_tree, TreeFitConfig};
use crate::envs::{rollout_from, Env, Policy};
use crate::error::{Error, Result};
use crate::model::{train_moet, InferenceMode, MoetModel};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledState {
    pub features: Vec<f64>,
    pub action: usize,
    pub importance: f64,
}

/// Every state visited so far, labeled by the teacher.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AggregatedDataset {
    samples: Vec<LabeledState>,
}

impl AggregatedDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn samples(&self) -> &[LabeledState] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Labels `states` with the teacher's action and importance.
    pub fn add_states(&mut self, teacher: &dyn Teacher, states: Vec<Vec<f64>>) {
        let labeled: Vec<LabeledState> = states
            .into_par_iter()
            .map(|features| LabeledState {
                action: teacher.act(&features),
                importance: importance(teacher, &features),
                features,
            })
            .collect();
        self.samples.extend(labeled);
    }

    /// Keeps a uniformly chosen subset of `max_samples`, in original order.
    pub fn cap<R: Rng + ?Sized>(&mut self, max_samples: usize, rng: &mut R) {
        if self.samples.len() <= max_samples {
            return;
        }
        let mut keep = index::sample(rng, self.samples.len(), max_samples).into_vec();
        keep.sort_unstable();
        let mut old = std::mem::take(&mut self.samples).into_iter().enumerate();
        for k in keep {
            let (_, s) = old.by_ref().find(|(i, _)| *i == k).expect("sorted in range");
            self.samples.push(s);
        }
    }

    /// How often each sample is drawn when `len()` samples are taken with
    /// replacement, with probability proportional to importance (uniform if
    /// every importance is zero).
    pub fn resample_counts<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let n = self.samples.len();
        let mut counts = vec![0usize; n];
        let weights: Vec<f64> = self.samples.iter().map(|s| s.importance).collect();
        match WeightedIndex::new(&weights) {
            Ok(dist) => {
                for _ in 0..n {
                    counts[dist.sample(rng)] += 1;
                }
            }
            Err(_) => {
                for _ in 0..n {
                    counts[rng.random_range(0..n)] += 1;
                }
            }
        }
        counts
    }

    /// Training set where each sample is weighted by its draw count.
    pub fn to_weighted(
        &self,
        counts: &[usize],
        num_features: usize,
        num_classes: usize,
    ) -> Result<WeightedDataset> {
        let examples = self
            .samples
            .iter()
            .zip(counts)
            .filter(|(_, &c)| c > 0)
            .map(|(s, &c)| WeightedExample::new(s.features.clone(), s.action, c as f64))
            .collect();
        WeightedDataset::new(examples, num_features, num_classes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StudentLearner {
    /// A single tree, as in Viper.
    Tree(TreeFitConfig),
    Moet {
        config: MoetConfig,
        mode: InferenceMode,
    },
}

impl StudentLearner {
    pub fn name(&self) -> &'static str {
        match self {
            StudentLearner::Tree(_) => "viper-tree",
            StudentLearner::Moet {
                mode: InferenceMode::Soft,
                ..
            } => "moet",
            StudentLearner::Moet { .. } => "moet-hard",
        }
    }

    pub fn num_experts(&self) -> usize {
        match self {
            StudentLearner::Tree(_) => 1,
            StudentLearner::Moet { config, .. } => config.num_experts,
        }
    }

    pub fn max_depth(&self) -> usize {
        match self {
            StudentLearner::Tree(cfg) => cfg.max_depth,
            StudentLearner::Moet { config, .. } => config.expert_max_depth,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StudentLearner::Tree(_) => Ok(()),
            StudentLearner::Moet { config, .. } => config.validate(),
        }
    }

    pub fn fit(&self, data: &WeightedDataset, seed: u64) -> Result<MoetModel> {
        match self {
            StudentLearner::Tree(cfg) => MoetModel::from_tree(fit_tree(data, cfg)?, data.num_features()),
            StudentLearner::Moet { config, mode } => {
                let cfg = MoetConfig {
                    seed,
                    ..config.clone()
                };
                Ok(train_moet(data, &cfg)?.0.with_mode(*mode))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DaggerConfig {
    pub iterations: usize,
    pub max_samples: usize,
    /// Episodes sampled per iteration to grow the dataset.
    pub rollouts_per_iteration: usize,
    /// Episodes used to score each iteration's student.
    pub eval_episodes: usize,
    pub seed: u64,
}

impl Default for DaggerConfig {
    fn default() -> Self {
        Self {
            iterations: 40,
            max_samples: 200_000,
            rollouts_per_iteration: 10,
            eval_episodes: 50,
            seed: 0,
        }
    }
}

impl DaggerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be at least 1".into()));
        }
        if self.max_samples == 0 || self.rollouts_per_iteration == 0 || self.eval_episodes == 0 {
            return Err(Error::InvalidConfig(
                "max_samples, rollouts and evaluation episodes must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DaggerOutcome {
    pub best: MoetModel,
    /// Zero-based iteration that produced `best`.
    pub best_iteration: usize,
    pub history: Vec<EvalResult>,
    pub final_dataset: AggregatedDataset,
}

/// `a` is a better student than `b`: higher reward, then higher fidelity.
fn better(a: &EvalResult, b: &EvalResult) -> bool {
    a.mean_reward > b.mean_reward || (a.mean_reward == b.mean_reward && a.fidelity > b.fidelity)
}

pub fn dagger_train(
    env: &Env,
    teacher: &dyn Teacher,
    learner: &StudentLearner,
    cfg: &DaggerConfig,
) -> Result<DaggerOutcome> {
    env.validate()?;
    cfg.validate()?;
    learner.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let eval_seed: u64 = rng.random();
    let mut data = AggregatedDataset::new();
    let mut history = Vec::with_capacity(cfg.iterations);
    let mut best: Option<(MoetModel, usize)> = None;
    let mut student: Option<MoetModel> = None;

    for iteration in 0..cfg.iterations {
        let sampler: &dyn Policy = match &student {
            Some(s) => s,
            None => teacher,
        };
        let starts = episode_starts(env, cfg.rollouts_per_iteration, rng.random());
        let states: Vec<Vec<f64>> = starts
            .into_par_iter()
            .map(|start| rollout_from(env, sampler, start).0)
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .map(|t| t.state)
            .collect();
        data.add_states(teacher, states);
        data.cap(cfg.max_samples, &mut rng);

        let counts = data.resample_counts(&mut rng);
        let train = data.to_weighted(&counts, env.num_features(), env.num_actions())?;
        let model = learner.fit(&train, rng.random())?;
        let result = evaluate_model(env, &model, teacher, cfg.eval_episodes, eval_seed);
        log::info!(
            "{} {} iteration {iteration}: |D| = {}, reward {:.3}, fidelity {:.4}",
            env.name(),
            learner.name(),
            data.len(),
            result.mean_reward,
            result.fidelity
        );
        let improves = match &best {
            None => true,
            Some((_, i)) => better(&result, &history[*i]),
        };
        if improves {
            best = Some((model.clone(), iteration));
        }
        history.push(result);
        student = Some(model);
    }

    let (best, best_iteration) = best.expect("at least one iteration");
    Ok(DaggerOutcome {
        best,
        best_iteration,
        history,
        final_dataset: data,
    })
}
