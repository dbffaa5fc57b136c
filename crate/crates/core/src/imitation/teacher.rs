//! Teacher policies that expose action values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::envs::gridworld::{self, GridSolution};
use crate::envs::{
    cartpole, gridworld_optimal_policy, mountaincar, CartPoleSpec, Env, EnvState, GridworldSpec,
    MountainCarSpec, Policy,
};
use crate::error::Result;

pub trait Teacher: Policy {
    /// Action values at `state`, one per action.
    fn q_values(&self, state: &[f64]) -> Vec<f64>;
}

/// Q-value gap `max_a Q(s, a) - min_a Q(s, a)`.
pub fn importance(teacher: &dyn Teacher, state: &[f64]) -> f64 {
    let q = teacher.q_values(state);
    let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = q.iter().copied().fold(f64::INFINITY, f64::min);
    (max - min).max(0.0)
}

/// Exact optimal gridworld policy with exact action values.
#[derive(Debug, Clone)]
pub struct GridworldTeacher {
    solution: GridSolution,
}

impl GridworldTeacher {
    pub fn solution(&self) -> &GridSolution {
        &self.solution
    }
}

impl Policy for GridworldTeacher {
    fn act(&self, state: &[f64]) -> usize {
        self.solution
            .action(gridworld::cell_of(state))
            .unwrap_or(gridworld::LEFT)
    }
}

impl Teacher for GridworldTeacher {
    fn q_values(&self, state: &[f64]) -> Vec<f64> {
        self.solution.q_values(gridworld::cell_of(state))
    }
}

pub fn gridworld_teacher(spec: &GridworldSpec) -> Result<GridworldTeacher> {
    Ok(GridworldTeacher {
        solution: gridworld_optimal_policy(spec)?,
    })
}

/// Picks `above` when `weights . s + bias > 0`, otherwise `below`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineController {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub below: usize,
    pub above: usize,
}

impl AffineController {
    pub fn act(&self, s: &[f64]) -> usize {
        let score: f64 = self.weights.iter().zip(s).map(|(w, x)| w * x).sum::<f64>() + self.bias;
        if score > 0.0 {
            self.above
        } else {
            self.below
        }
    }
}

/// Monte-Carlo estimation of action values by continuing with the teacher.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloConfig {
    pub rollouts: usize,
    pub horizon: usize,
    pub discount: f64,
    /// Half-width of the uniform perturbation applied to the state reached
    /// by the first action, per rollout.
    pub jitter: f64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            rollouts: 8,
            horizon: 50,
            discount: 0.99,
            jitter: 1e-3,
        }
    }
}

/// A hand-written controller acting as the expert.
#[derive(Debug, Clone)]
pub struct ScriptedTeacher {
    pub env: Env,
    pub controller: AffineController,
    pub monte_carlo: MonteCarloConfig,
}

/// Seed derived from the exact bits of a state, so repeated queries agree.
fn state_seed(state: &[f64]) -> u64 {
    let mut h: u64 = 0x9e37_79b9_7f4a_7c15;
    for v in state {
        h ^= v.to_bits();
        h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h ^= h >> 31;
    }
    h
}

impl Policy for ScriptedTeacher {
    fn act(&self, state: &[f64]) -> usize {
        self.controller.act(state)
    }
}

impl Teacher for ScriptedTeacher {
    fn q_values(&self, state: &[f64]) -> Vec<f64> {
        let mc = &self.monte_carlo;
        let seed = state_seed(state);
        (0..self.env.num_actions())
            .map(|a| {
                // same perturbations for every action
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut total = 0.0;
                for _ in 0..mc.rollouts {
                    let first = self.env.step(&EnvState::new(state.to_vec()), a);
                    let mut ret = first.reward;
                    let mut s = first.next_state;
                    for v in s.values.iter_mut() {
                        *v += rng.random_range(-mc.jitter..=mc.jitter);
                    }
                    let mut done = first.done;
                    let mut discount = 1.0;
                    for _ in 1..mc.horizon {
                        if done {
                            break;
                        }
                        discount *= mc.discount;
                        let t = self.env.step(&s, self.controller.act(&s.values));
                        ret += discount * t.reward;
                        done = t.done;
                        s = t.next_state;
                    }
                    total += ret;
                }
                total / mc.rollouts as f64
            })
            .collect()
    }
}

/// Affine balance controller: push right iff
/// `0.1 x + 0.5 x_dot + 10 theta + 2 theta_dot > 0`.
pub fn cartpole_teacher(spec: &CartPoleSpec) -> ScriptedTeacher {
    ScriptedTeacher {
        env: Env::CartPole(spec.clone()),
        controller: AffineController {
            weights: vec![0.1, 0.5, 10.0, 2.0],
            bias: 0.0,
            below: cartpole::LEFT,
            above: cartpole::RIGHT,
        },
        monte_carlo: MonteCarloConfig::default(),
    }
}

/// Energy pumping: push in the direction of motion, left when at rest.
pub fn mountaincar_teacher(spec: &MountainCarSpec) -> ScriptedTeacher {
    ScriptedTeacher {
        env: Env::MountainCar(spec.clone()),
        controller: AffineController {
            weights: vec![0.0, 1.0],
            bias: 0.0,
            below: mountaincar::LEFT,
            above: mountaincar::RIGHT,
        },
        monte_carlo: MonteCarloConfig::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::rollout;

    struct Fixed(Vec<f64>);
    impl Policy for Fixed {
        fn act(&self, _: &[f64]) -> usize {
            0
        }
    }
    impl Teacher for Fixed {
        fn q_values(&self, _: &[f64]) -> Vec<f64> {
            self.0.clone()
        }
    }

    #[test]
    fn importance_is_q_gap() {
        assert!((importance(&Fixed(vec![1.0, 0.2]), &[0.0]) - 0.8).abs() < 1e-12);
        assert_eq!(importance(&Fixed(vec![0.5, 0.5, 0.5]), &[0.0]), 0.0);
    }

    #[test]
    fn gridworld_teacher_matches_diagonal_rule() {
        let spec = GridworldSpec::diagonal(5);
        let t = gridworld_teacher(&spec).unwrap();
        for (x, y) in spec.free_cells() {
            let a = t.act(&gridworld::state_of((x, y)));
            assert_eq!(a, if x + y < 4 { gridworld::LEFT } else { gridworld::RIGHT });
        }
    }

    #[test]
    fn gridworld_q_gap_at_door_is_detour_cost() {
        let spec = GridworldSpec::diagonal(5);
        let t = gridworld_teacher(&spec).unwrap();
        // (0, 1): left exits (-0.1); right steps to (1, 1), two from a door
        let q = t.q_values(&[0.0, 1.0]);
        assert!((q[gridworld::LEFT] - (-0.1)).abs() < 1e-12);
        assert!((q[gridworld::RIGHT] - (-0.3)).abs() < 1e-12);
        let gap = importance(&t, &[0.0, 1.0]);
        assert!((gap - 0.2).abs() < 1e-12, "{q:?}");
        // a neighbouring door row costs one extra action
        assert!((q[gridworld::DOWN] - (-0.2)).abs() < 1e-12);
    }

    #[test]
    fn cartpole_teacher_balances() {
        let spec = CartPoleSpec::default();
        let t = cartpole_teacher(&spec);
        let env = Env::CartPole(spec);
        for seed in 0..100 {
            let (_, r) = rollout(&env, &t, seed);
            assert_eq!(r, 200.0, "seed {seed}");
        }
    }

    #[test]
    fn tilted_cartpole_prefers_catching_action() {
        let t = cartpole_teacher(&CartPoleSpec::default());
        // leaning and falling right: pushing right keeps it up longer
        let q = t.q_values(&[0.0, 0.0, 0.15, 0.6]);
        assert!(q[cartpole::RIGHT] > q[cartpole::LEFT], "{q:?}");
        let q = t.q_values(&[0.0, 0.0, -0.15, -0.6]);
        assert!(q[cartpole::LEFT] > q[cartpole::RIGHT], "{q:?}");
    }

    #[test]
    fn near_failure_states_matter_more() {
        let t = cartpole_teacher(&CartPoleSpec::default());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (mut calm, mut critical) = (0.0, 0.0);
        for _ in 0..100 {
            let mut s: Vec<f64> = (0..4).map(|_| rng.random_range(-0.01..0.01)).collect();
            calm += importance(&t, &s);
            s[2] = 0.17 + rng.random_range(0.0..0.02);
            s[3] = 0.8 + rng.random_range(0.0..0.2);
            critical += importance(&t, &s);
        }
        assert!(calm / 100.0 < critical / 100.0, "{calm} vs {critical}");
    }

    #[test]
    fn mountaincar_teacher_reaches_goal() {
        let spec = MountainCarSpec::default();
        let t = mountaincar_teacher(&spec);
        let env = Env::MountainCar(spec);
        let solved = (0..100).filter(|&s| rollout(&env, &t, s).1 > -200.0).count();
        assert!(solved >= 95, "{solved}");
    }

    #[test]
    fn q_values_are_repeatable() {
        let t = mountaincar_teacher(&MountainCarSpec::default());
        assert_eq!(t.q_values(&[-0.5, 0.01]), t.q_values(&[-0.5, 0.01]));
    }
}
