//! Student evaluation, Pareto fronts and the results ledger.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::envs::{rollout_from, Env, Policy};
use crate::model::MoetModel;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub mean_reward: f64,
    /// Fraction of student-visited states where the student agrees with the teacher.
    pub fidelity: f64,
    pub episodes: usize,
    /// Reported `(depth, nodes)` of the student, when it is a model.
    pub size: Option<(usize, usize)>,
}

/// Per-episode start states, drawn from one stream seeded with `seed`.
pub fn episode_starts(env: &Env, episodes: usize, seed: u64) -> Vec<crate::envs::EnvState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..episodes)
        .map(|_| {
            let mut ep = ChaCha8Rng::seed_from_u64(rng.random());
            env.initial_state(&mut ep)
        })
        .collect()
}

/// Rolls the student out from `episodes` seeded starts and compares its
/// actions with the teacher on every visited state.
pub fn evaluate_policy(
    env: &Env,
    student: &dyn Policy,
    teacher: &dyn Policy,
    episodes: usize,
    seed: u64,
) -> EvalResult {
    assert!(episodes >= 1, "at least one episode is needed");
    let per_episode: Vec<(f64, usize, usize)> = episode_starts(env, episodes, seed)
        .into_par_iter()
        .map(|start| {
            let (traj, reward) = rollout_from(env, student, start);
            let agree = traj
                .iter()
                .filter(|t| t.action == teacher.act(&t.state))
                .count();
            (reward, agree, traj.len())
        })
        .collect();
    let (mut reward, mut agree, mut visited) = (0.0, 0, 0);
    for (r, a, n) in per_episode {
        reward += r;
        agree += a;
        visited += n;
    }
    EvalResult {
        mean_reward: reward / episodes as f64,
        fidelity: if visited == 0 { 1.0 } else { agree as f64 / visited as f64 },
        episodes,
        size: None,
    }
}

pub fn evaluate_model(
    env: &Env,
    student: &MoetModel,
    teacher: &dyn Policy,
    episodes: usize,
    seed: u64,
) -> EvalResult {
    EvalResult {
        size: Some(student.size_stats()),
        ..evaluate_policy(env, student, teacher, episodes, seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParetoPoint {
    pub reward: f64,
    pub fidelity: f64,
    pub id: String,
}

#[cfg(test)]
fn dominates(a: &ParetoPoint, b: &ParetoPoint) -> bool {
    a.reward >= b.reward
        && a.fidelity >= b.fidelity
        && (a.reward > b.reward || a.fidelity > b.fidelity)
}

/// Points not dominated by any other, in input order.
pub fn pareto_front(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let mut sorted: Vec<usize> = (0..points.len()).collect();
    // best reward first, then best fidelity; a point can only be dominated by
    // one that precedes it in this order
    sorted.sort_by(|&i, &j| {
        let (a, b) = (&points[i], &points[j]);
        b.reward
            .total_cmp(&a.reward)
            .then(b.fidelity.total_cmp(&a.fidelity))
    });
    let mut keep = vec![false; points.len()];
    let mut best_fidelity = f64::NEG_INFINITY;
    let mut k = 0;
    while k < sorted.len() {
        // group of equal reward
        let r = points[sorted[k]].reward;
        let mut end = k;
        while end < sorted.len() && points[sorted[end]].reward == r {
            end += 1;
        }
        let group_top = points[sorted[k]].fidelity;
        for &i in &sorted[k..end] {
            let f = points[i].fidelity;
            keep[i] = f == group_top && f > best_fidelity;
        }
        best_fidelity = best_fidelity.max(group_top);
        k = end;
    }
    points
        .iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then(|| p.clone()))
        .collect()
}

/// One row of the results ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRow {
    pub env: String,
    pub learner: String,
    pub experts: usize,
    pub depth: usize,
    pub iteration: usize,
    pub reward: f64,
    pub fidelity: f64,
    pub nodes: usize,
    pub depth_actual: usize,
    pub seed: u64,
}

pub const LEDGER_HEADER: [&str; 10] = [
    "env",
    "learner",
    "E",
    "depth",
    "iteration",
    "reward",
    "fidelity",
    "nodes",
    "depth_actual",
    "seed",
];

impl LedgerRow {
    pub fn record(&self) -> Vec<String> {
        vec![
            self.env.clone(),
            self.learner.clone(),
            self.experts.to_string(),
            self.depth.to_string(),
            self.iteration.to_string(),
            format!("{:.6}", self.reward),
            format!("{:.6}", self.fidelity),
            self.nodes.to_string(),
            self.depth_actual.to_string(),
            self.seed.to_string(),
        ]
    }
}

/// Writes rows as CSV, with the header when `header` is set.
pub fn write_ledger<W: Write>(out: W, rows: &[LedgerRow], header: bool) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if header {
        w.write_record(LEDGER_HEADER)?;
    }
    for row in rows {
        w.write_record(row.record())?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::gridworld::{self, GridworldSpec};
    use crate::envs::{CartPoleSpec, MountainCarSpec};
    use crate::imitation::teacher::{cartpole_teacher, gridworld_teacher, mountaincar_teacher};
    use proptest::prelude::{prop, prop_assert_eq, proptest};

    fn pt(r: f64, f: f64, id: &str) -> ParetoPoint {
        ParetoPoint {
            reward: r,
            fidelity: f,
            id: id.into(),
        }
    }

    fn brute_force(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
        points
            .iter()
            .filter(|p| !points.iter().any(|q| dominates(q, p)))
            .cloned()
            .collect()
    }

    #[test]
    fn pareto_small_cases() {
        assert_eq!(pareto_front(&[pt(1.0, 0.5, "a")]), vec![pt(1.0, 0.5, "a")]);
        assert_eq!(
            pareto_front(&[pt(1.0, 1.0, "a"), pt(0.0, 0.0, "b")]),
            vec![pt(1.0, 1.0, "a")]
        );
        // duplicates do not dominate each other
        let twins = [pt(1.0, 1.0, "a"), pt(1.0, 1.0, "b"), pt(1.0, 0.9, "c")];
        assert_eq!(pareto_front(&twins), twins[..2].to_vec());
    }

    #[test]
    fn pareto_matches_brute_force_on_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let points: Vec<ParetoPoint> = (0..100)
            .map(|i| {
                // coarse grid to force ties
                let r = rng.random_range(0..20) as f64;
                let f = rng.random_range(0..20) as f64 / 20.0;
                pt(r, f, &i.to_string())
            })
            .collect();
        assert_eq!(pareto_front(&points), brute_force(&points));
    }

    proptest! {
        #[test]
        fn pareto_equals_dominance_filter(raw in prop::collection::vec((0u8..6, 0u8..6), 1..40)) {
            let points: Vec<ParetoPoint> = raw
                .iter()
                .enumerate()
                .map(|(i, (r, f))| pt(*r as f64, *f as f64, &i.to_string()))
                .collect();
            prop_assert_eq!(pareto_front(&points), brute_force(&points));
        }
    }

    #[test]
    fn teacher_agrees_with_itself_everywhere() {
        let gw = GridworldSpec::diagonal(5);
        let g = gridworld_teacher(&gw).unwrap();
        let c = cartpole_teacher(&CartPoleSpec::default());
        let m = mountaincar_teacher(&MountainCarSpec::default());
        assert_eq!(evaluate_policy(&Env::Gridworld(gw), &g, &g, 50, 1).fidelity, 1.0);
        let r = evaluate_policy(&Env::CartPole(CartPoleSpec::default()), &c, &c, 20, 1);
        assert_eq!(r.fidelity, 1.0);
        assert_eq!(r.mean_reward, 200.0);
        let env = Env::MountainCar(MountainCarSpec::default());
        assert_eq!(evaluate_policy(&env, &m, &m, 20, 1).fidelity, 1.0);
    }

    #[test]
    fn gridworld_teacher_reward_is_mean_shortest_path() {
        let spec = GridworldSpec::diagonal(5);
        let t = gridworld_teacher(&spec).unwrap();
        let env = Env::Gridworld(spec.clone());
        let starts = episode_starts(&env, 200, 4);
        let mean_steps = starts
            .iter()
            .map(|s| t.solution().steps_to_exit(gridworld::cell_of(&s.values)).unwrap() as f64)
            .sum::<f64>()
            / 200.0;
        let r = evaluate_policy(&env, &t, &t, 200, 4);
        assert!((r.mean_reward - (-0.1 * mean_steps)).abs() < 1e-9);
    }

    #[test]
    fn disagreeing_student_loses_fidelity() {
        let spec = GridworldSpec::diagonal(5);
        let t = gridworld_teacher(&spec).unwrap();
        let left = |_: &[f64]| gridworld::LEFT;
        let r = evaluate_policy(&Env::Gridworld(spec), &left, &t, 100, 2);
        assert!(r.fidelity < 1.0 && r.fidelity > 0.0);
        assert!(r.mean_reward < 0.0);
    }

    #[test]
    fn evaluation_is_reproducible() {
        let env = Env::CartPole(CartPoleSpec::default());
        let t = cartpole_teacher(&CartPoleSpec::default());
        let weak = |s: &[f64]| usize::from(s[2] > 0.0);
        assert_eq!(
            evaluate_policy(&env, &weak, &t, 30, 9),
            evaluate_policy(&env, &weak, &t, 30, 9)
        );
    }

    #[test]
    fn ledger_has_stable_columns() {
        let row = LedgerRow {
            env: "gridworld".into(),
            learner: "moet-hard".into(),
            experts: 2,
            depth: 0,
            iteration: 3,
            reward: -0.25,
            fidelity: 1.0,
            nodes: 3,
            depth_actual: 1,
            seed: 7,
        };
        let mut buf = Vec::new();
        write_ledger(&mut buf, &[row], true).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "env,learner,E,depth,iteration,reward,fidelity,nodes,depth_actual,seed\n\
             gridworld,moet-hard,2,0,3,-0.250000,1.000000,3,1,7\n"
        );
    }
}
