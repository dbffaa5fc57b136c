//! Deterministic environments and episode rollouts.

pub mod cartpole;
pub mod gridworld;
pub mod mountaincar;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use cartpole::{cartpole_linearized_step, cartpole_step, AffineDynamics, CartPoleSpec};
pub use gridworld::{gridworld_optimal_policy, gridworld_step, GridSolution, GridworldSpec};
pub use mountaincar::{mountaincar_step, MountainCarSpec};

use crate::model::MoetModel;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub values: Vec<f64>,
    pub terminal: bool,
    pub steps_elapsed: usize,
}

impl EnvState {
    pub fn new(values: Vec<f64>) -> Self {
        Self {
            values,
            terminal: false,
            steps_elapsed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub next_state: EnvState,
    pub reward: f64,
    pub done: bool,
}

/// Anything that maps an observation to a discrete action.
pub trait Policy: Sync {
    fn act(&self, state: &[f64]) -> usize;
}

impl<F: Fn(&[f64]) -> usize + Sync> Policy for F {
    fn act(&self, state: &[f64]) -> usize {
        self(state)
    }
}

impl Policy for MoetModel {
    fn act(&self, state: &[f64]) -> usize {
        self.predict(state)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Env {
    Gridworld(GridworldSpec),
    CartPole(CartPoleSpec),
    MountainCar(MountainCarSpec),
}

impl Env {
    pub fn name(&self) -> &'static str {
        match self {
            Env::Gridworld(_) => "gridworld",
            Env::CartPole(_) => "cartpole",
            Env::MountainCar(_) => "mountaincar",
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        match self {
            Env::Gridworld(s) => s.validate(),
            Env::CartPole(s) => s.validate(),
            Env::MountainCar(s) => s.validate(),
        }
    }

    pub fn num_features(&self) -> usize {
        match self {
            Env::Gridworld(_) | Env::MountainCar(_) => 2,
            Env::CartPole(_) => 4,
        }
    }

    pub fn num_actions(&self) -> usize {
        match self {
            Env::Gridworld(_) => gridworld::NUM_ACTIONS,
            Env::CartPole(_) => cartpole::NUM_ACTIONS,
            Env::MountainCar(_) => mountaincar::NUM_ACTIONS,
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            Env::Gridworld(s) => s.horizon,
            Env::CartPole(s) => s.horizon,
            Env::MountainCar(s) => s.horizon,
        }
    }

    /// Gridworld: uniform over free cells. CartPole: uniform on the
    /// `[-0.05, 0.05]^4` box. Mountaincar: position uniform on `[-0.6, -0.4)`
    /// at rest.
    pub fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> EnvState {
        let values = match self {
            Env::Gridworld(s) => {
                let cells = s.free_cells();
                gridworld::state_of(cells[rng.random_range(0..cells.len())])
            }
            Env::CartPole(s) => s.sample_initial(rng),
            Env::MountainCar(s) => s.sample_initial(rng),
        };
        EnvState::new(values)
    }

    pub fn step(&self, state: &EnvState, action: usize) -> Transition {
        match self {
            Env::Gridworld(s) => gridworld_step(s, state, action),
            Env::CartPole(s) => cartpole_step(s, state, action),
            Env::MountainCar(s) => mountaincar_step(s, state, action),
        }
    }
}

/// Runs `policy` from `start` until the episode ends.
pub fn rollout_from(env: &Env, policy: &dyn Policy, start: EnvState) -> (Vec<Transition>, f64) {
    let mut state = start;
    let mut trajectory = Vec::new();
    let mut total = 0.0;
    while !state.terminal && state.steps_elapsed < env.horizon() {
        let t = env.step(&state, policy.act(&state.values));
        total += t.reward;
        state = t.next_state.clone();
        let done = t.done;
        trajectory.push(t);
        if done {
            break;
        }
    }
    (trajectory, total)
}

/// One episode from an initial state drawn with `seed`.
pub fn rollout(env: &Env, policy: &dyn Policy, seed: u64) -> (Vec<Transition>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = env.initial_state(&mut rng);
    rollout_from(env, policy, start)
}

/// One CSV row per transition: step, state, action, next state, reward, done.
pub fn write_trajectory_csv<W: Write>(out: W, trajectory: &[Transition]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let f = trajectory.first().map_or(0, |t| t.state.len());
    let mut header = vec!["step".to_string()];
    header.extend((0..f).map(|k| format!("s{k}")));
    header.push("action".into());
    header.extend((0..f).map(|k| format!("next_s{k}")));
    header.extend(["reward".into(), "done".into()]);
    w.write_record(&header)?;
    for (i, t) in trajectory.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(t.state.iter().map(|v| crate::io::fmt_real(*v)));
        row.push(t.action.to_string());
        row.extend(t.next_state.values.iter().map(|v| crate::io::fmt_real(*v)));
        row.push(t.reward.to_string());
        row.push(t.done.to_string());
        w.write_record(&row)?;
    }
    w.flush()
}
