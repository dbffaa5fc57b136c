//! Run configuration read from TOML, validated before any work starts.
//!
//! Grid-valued sweep keys accept either an array or a comma-separated string.

use std::path::{Path, PathBuf};
use std::time::Duration;

use moet::envs::{CartPoleSpec, Env, GridworldSpec, MountainCarSpec};
use moet::imitation::{DaggerConfig, StudentLearner};
use moet::verify::VerificationSpec;
use moet::{InferenceMode, MoetConfig, TreeFitConfig};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum GridValue<T> {
    List(Vec<T>),
    Text(String),
    One(T),
}

/// A list of values for one swept key.
#[derive(Debug, Clone, Deserialize)]
#[serde(
    try_from = "GridValue<T>",
    bound(deserialize = "T: Deserialize<'de> + std::str::FromStr")
)]
pub struct Grid<T>(pub Vec<T>);

impl<T: std::str::FromStr> TryFrom<GridValue<T>> for Grid<T> {
    type Error = String;

    fn try_from(v: GridValue<T>) -> Result<Self, String> {
        let values = match v {
            GridValue::List(xs) => xs,
            GridValue::One(x) => vec![x],
            GridValue::Text(s) => s
                .split(',')
                .map(str::trim)
                .filter(|p| !p.is_empty())
                .map(|p| p.parse::<T>().map_err(|_| format!("bad grid entry {p:?}")))
                .collect::<Result<_, _>>()?,
        };
        if values.is_empty() {
            return Err("empty grid".into());
        }
        Ok(Grid(values))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunSection {
    env: String,
    learner: String,
    seed: u64,
    out: PathBuf,
    /// Episodes of the final evaluation.
    episodes: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            env: "cartpole".into(),
            learner: "moet-hard".into(),
            seed: 0,
            out: PathBuf::from("out"),
            episodes: 250,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DaggerSection {
    iterations: usize,
    max_samples: usize,
    rollouts: usize,
    eval_episodes: usize,
}

impl Default for DaggerSection {
    fn default() -> Self {
        let d = DaggerConfig::default();
        Self {
            iterations: d.iterations,
            max_samples: d.max_samples,
            rollouts: d.rollouts_per_iteration,
            eval_episodes: d.eval_episodes,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct MoetSection {
    experts: usize,
    depth: usize,
    learning_rate: f64,
    lr_decay: f64,
    epochs: usize,
    gradient_steps: usize,
    smoothing: f64,
}

impl Default for MoetSection {
    fn default() -> Self {
        let m = MoetConfig::default();
        Self {
            experts: m.num_experts,
            depth: m.expert_max_depth,
            learning_rate: m.learning_rate,
            lr_decay: m.lr_decay,
            epochs: m.epochs,
            gradient_steps: m.gradient_steps_per_epoch,
            smoothing: m.smoothing_eps,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TreeSection {
    max_depth: usize,
    min_weight_split: f64,
}

impl Default for TreeSection {
    fn default() -> Self {
        let t = TreeFitConfig::default();
        Self {
            max_depth: t.max_depth,
            min_weight_split: t.min_weight_split,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EnvSection {
    /// Gridworld side length.
    size: Option<usize>,
    horizon: Option<usize>,
    /// CartPole failure angle in radians.
    angle_limit: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SweepSection {
    learner: Option<Grid<String>>,
    experts: Option<Grid<usize>>,
    depth: Option<Grid<usize>>,
    seed: Option<Grid<u64>>,
    jobs: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct VerifySection {
    horizon: usize,
    angle_limit: Option<f64>,
    init_bound: f64,
    timeout_secs: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            horizon: 10,
            angle_limit: None,
            init_bound: moet::envs::cartpole::INIT_BOUND,
            timeout_secs: 120.0,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawConfig {
    run: RunSection,
    dagger: DaggerSection,
    moet: MoetSection,
    tree: TreeSection,
    env: EnvSection,
    sweep: SweepSection,
    verify: VerifySection,
}

/// Learner family named in a config.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearnerKind {
    ViperTree,
    Moet,
    MoetHard,
}

impl std::str::FromStr for LearnerKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "viper-tree" => Ok(LearnerKind::ViperTree),
            "moet" => Ok(LearnerKind::Moet),
            "moet-hard" => Ok(LearnerKind::MoetHard),
            other => Err(CliError::config(format!(
                "unknown learner {other:?} (expected viper-tree, moet or moet-hard)"
            ))),
        }
    }
}

/// One point of a sweep: learner family, size and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub learner: LearnerKind,
    pub experts: usize,
    pub depth: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub env: Env,
    pub learner: StudentLearner,
    pub dagger: DaggerConfig,
    pub episodes: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub verification: VerificationSpec,
    pub timeout: Duration,
    pub sweep: Vec<SweepPoint>,
    pub jobs: usize,
    moet: MoetConfig,
    tree: TreeFitConfig,
}

fn build_env(run: &RunSection, env: &EnvSection) -> Result<Env, CliError> {
    let e = match run.env.as_str() {
        "gridworld" => {
            let size = env.size.unwrap_or(5);
            if !(2..=12).contains(&size) {
                return Err(CliError::config(format!("gridworld size {size} outside [2, 12]")));
            }
            let mut spec = GridworldSpec::diagonal(size);
            if let Some(h) = env.horizon {
                spec.horizon = h;
            }
            Env::Gridworld(spec)
        }
        "cartpole" => {
            let mut spec = CartPoleSpec::default();
            if let Some(h) = env.horizon {
                spec.horizon = h;
            }
            if let Some(a) = env.angle_limit {
                spec.angle_limit = a;
            }
            Env::CartPole(spec)
        }
        "mountaincar" => {
            let mut spec = MountainCarSpec::default();
            if let Some(h) = env.horizon {
                spec.horizon = h;
            }
            Env::MountainCar(spec)
        }
        other => {
            return Err(CliError::config(format!(
                "unknown environment {other:?} (expected gridworld, cartpole or mountaincar)"
            )))
        }
    };
    if run.env != "gridworld" && env.size.is_some() {
        return Err(CliError::config("env.size only applies to gridworld"));
    }
    if run.env != "cartpole" && env.angle_limit.is_some() {
        return Err(CliError::config("env.angle_limit only applies to cartpole"));
    }
    e.validate()?;
    Ok(e)
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| CliError::config(format!("malformed config: {e}")))?;
        Self::from_raw(raw)
    }

    fn from_raw(raw: RawConfig) -> Result<Self, CliError> {
        let env = build_env(&raw.run, &raw.env)?;
        let moet = MoetConfig {
            num_experts: raw.moet.experts,
            epochs: raw.moet.epochs,
            expert_max_depth: raw.moet.depth,
            learning_rate: raw.moet.learning_rate,
            lr_decay: raw.moet.lr_decay,
            gradient_steps_per_epoch: raw.moet.gradient_steps,
            smoothing_eps: raw.moet.smoothing,
            seed: raw.run.seed,
        };
        let tree = TreeFitConfig {
            max_depth: raw.tree.max_depth,
            min_weight_split: raw.tree.min_weight_split,
            smoothing_eps: raw.moet.smoothing,
        };
        let dagger = DaggerConfig {
            iterations: raw.dagger.iterations,
            max_samples: raw.dagger.max_samples,
            rollouts_per_iteration: raw.dagger.rollouts,
            eval_episodes: raw.dagger.eval_episodes,
            seed: raw.run.seed,
        };
        dagger.validate()?;
        if raw.run.episodes == 0 {
            return Err(CliError::config("run.episodes must be positive"));
        }
        let kind: LearnerKind = raw.run.learner.parse()?;
        let depth = if kind == LearnerKind::ViperTree {
            tree.max_depth
        } else {
            moet.expert_max_depth
        };
        let learner = make_learner(kind, &moet, &tree, moet.num_experts, depth)?;

        let sweep = sweep_points(&raw, kind)?;
        for p in &sweep {
            make_learner(p.learner, &moet, &tree, p.experts, p.depth)?;
        }
        let jobs = raw.sweep.jobs.unwrap_or(1);
        if jobs == 0 {
            return Err(CliError::config("sweep.jobs must be positive"));
        }

        let v = &raw.verify;
        let mut verification = match &env {
            Env::CartPole(spec) => VerificationSpec::cartpole(spec),
            _ => VerificationSpec::cartpole(&CartPoleSpec::default()),
        };
        verification.horizon = v.horizon;
        verification.initial_box = vec![(-v.init_bound, v.init_bound); verification.initial_box.len()];
        if let Some(a) = v.angle_limit {
            verification.angle_limit = a;
        }
        verification.validate()?;
        if !(v.timeout_secs > 0.0) || !v.timeout_secs.is_finite() {
            return Err(CliError::config("verify.timeout_secs must be positive"));
        }

        Ok(Self {
            env,
            learner,
            dagger,
            episodes: raw.run.episodes,
            seed: raw.run.seed,
            out: raw.run.out,
            verification,
            timeout: Duration::from_secs_f64(v.timeout_secs),
            sweep,
            jobs,
            moet,
            tree,
        })
    }

    /// Replaces the seed everywhere it is used.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.dagger.seed = seed;
        self.moet.seed = seed;
        if let StudentLearner::Moet { config, .. } = &mut self.learner {
            config.seed = seed;
        }
        self
    }

    pub fn with_out(mut self, out: PathBuf) -> Self {
        self.out = out;
        self
    }

    pub fn with_jobs(mut self, jobs: usize) -> Result<Self, CliError> {
        if jobs == 0 {
            return Err(CliError::config("--jobs must be positive"));
        }
        self.jobs = jobs;
        Ok(self)
    }

    /// The learner for one sweep point.
    pub fn learner_for(&self, p: &SweepPoint) -> StudentLearner {
        make_learner(p.learner, &self.moet, &self.tree, p.experts, p.depth)
            .expect("sweep points are validated on load")
    }
}

fn make_learner(
    kind: LearnerKind,
    moet: &MoetConfig,
    tree: &TreeFitConfig,
    experts: usize,
    depth: usize,
) -> Result<StudentLearner, CliError> {
    let learner = match kind {
        LearnerKind::ViperTree => StudentLearner::Tree(TreeFitConfig {
            max_depth: depth,
            ..tree.clone()
        }),
        LearnerKind::Moet | LearnerKind::MoetHard => StudentLearner::Moet {
            config: MoetConfig {
                num_experts: experts,
                expert_max_depth: depth,
                ..moet.clone()
            },
            mode: if kind == LearnerKind::Moet {
                InferenceMode::Soft
            } else {
                InferenceMode::Hard
            },
        },
    };
    learner.validate()?;
    Ok(learner)
}

/// Cartesian product of the sweep grids in learner, experts, depth, seed
/// order. Missing grids fall back to the single-run values; trees ignore the
/// expert grid.
fn sweep_points(raw: &RawConfig, kind: LearnerKind) -> Result<Vec<SweepPoint>, CliError> {
    let s = &raw.sweep;
    let learners: Vec<LearnerKind> = match &s.learner {
        Some(g) => g.0.iter().map(|l| l.parse()).collect::<Result<_, _>>()?,
        None => vec![kind],
    };
    let experts = s.experts.clone().map_or(vec![raw.moet.experts], |g| g.0);
    let seeds = s.seed.clone().map_or(vec![raw.run.seed], |g| g.0);
    let mut points = Vec::new();
    for &learner in &learners {
        let default_depth = if learner == LearnerKind::ViperTree {
            raw.tree.max_depth
        } else {
            raw.moet.depth
        };
        let depths = s.depth.clone().map_or(vec![default_depth], |g| g.0);
        let expert_grid = if learner == LearnerKind::ViperTree { vec![1] } else { experts.clone() };
        for &e in &expert_grid {
            for &d in &depths {
                for &seed in &seeds {
                    points.push(SweepPoint {
                        learner,
                        experts: e,
                        depth: d,
                        seed,
                    });
                }
            }
        }
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_load_from_empty_text() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c.env.name(), "cartpole");
        assert_eq!(c.learner.name(), "moet-hard");
        assert_eq!(c.sweep.len(), 1);
        assert_eq!(c.verification.horizon, 10);
    }

    #[test]
    fn grids_accept_lists_and_comma_strings() {
        let c = RunConfig::from_toml(
            "[run]\nlearner = \"moet-hard\"\n[sweep]\nexperts = \"2, 4,8\"\ndepth = [0, 1]\nseed = 3\n",
        )
        .unwrap();
        assert_eq!(c.sweep.len(), 6);
        assert_eq!(c.sweep[0].experts, 2);
        assert_eq!(c.sweep[5].experts, 8);
        assert_eq!(c.sweep[5].depth, 1);
        assert!(c.sweep.iter().all(|p| p.seed == 3));
    }

    #[test]
    fn tree_learners_ignore_the_expert_grid() {
        let c = RunConfig::from_toml(
            "[sweep]\nlearner = \"viper-tree,moet-hard\"\nexperts = [2, 4]\ndepth = \"2,3\"\n",
        )
        .unwrap();
        let trees = c.sweep.iter().filter(|p| p.learner == LearnerKind::ViperTree).count();
        assert_eq!(trees, 2);
        assert_eq!(c.sweep.len(), 2 + 4);
    }

    #[test]
    fn single_tree_run_uses_the_tree_depth() {
        let c = RunConfig::from_toml("[run]\nlearner = \"viper-tree\"\n[tree]\nmax_depth = 6\n[moet]\ndepth = 1\n")
            .unwrap();
        assert_eq!(c.learner.max_depth(), 6);
        assert_eq!(c.learner.num_experts(), 1);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for text in [
            "[run]\nenv = \"pong\"\n",
            "[run]\nlearner = \"forest\"\n",
            "[moet]\nexperts = 0\n",
            "[moet]\nlearning_rate = -1.0\n",
            "[dagger]\niterations = 0\n",
            "[run]\nenv = \"gridworld\"\n[env]\nsize = 13\n",
            "[run]\nenv = \"mountaincar\"\n[env]\nangle_limit = 0.2\n",
            "[run]\nbogus = 1\n",
            "[sweep]\nexperts = \"2,x\"\n",
            "[sweep]\nexperts = \"\"\n",
            "[sweep]\njobs = 0\n",
            "[verify]\nhorizon = 0\n",
            "not toml at all [",
        ] {
            let err = RunConfig::from_toml(text).unwrap_err();
            assert_eq!(err.code, crate::EXIT_CONFIG, "{text}: {err}");
        }
    }

    #[test]
    fn seed_override_reaches_every_component() {
        let c = RunConfig::from_toml("[run]\nseed = 1\n").unwrap().with_seed(9);
        assert_eq!(c.dagger.seed, 9);
        let StudentLearner::Moet { config, .. } = &c.learner else { panic!() };
        assert_eq!(config.seed, 9);
    }
}
