//! N x N gridworld with doors on the left and right edges.
//!
//! Cells are `(x, y)` with `(0, 0)` bottom left. Leaving the grid through the
//! left edge at a row listed in `left_doors` (or the right edge at a row in
//! `right_doors`) ends the episode. Bumping into a wall or a closed edge
//! leaves the agent in place. Every action costs `step_reward`.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

use super::{EnvState, Transition};

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;
pub const UP: usize = 2;
pub const DOWN: usize = 3;
pub const NUM_ACTIONS: usize = 4;

/// Preference order among equally short moves.
const ACTION_ORDER: [usize; 4] = [LEFT, RIGHT, UP, DOWN];

pub type Cell = (usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct GridworldSpec {
    pub size: usize,
    pub walls: BTreeSet<Cell>,
    pub left_doors: BTreeSet<usize>,
    pub right_doors: BTreeSet<usize>,
    pub step_reward: f64,
    pub horizon: usize,
}

impl GridworldSpec {
    /// Walls along the anti-diagonal `x + y = N - 1`, with a door beside every
    /// open edge cell. Cells below the wall line exit left, cells above it exit
    /// right.
    pub fn diagonal(size: usize) -> Self {
        let walls: BTreeSet<Cell> = (0..size).map(|x| (x, size - 1 - x)).collect();
        let left_doors = (0..size).filter(|&y| !walls.contains(&(0, y))).collect();
        let right_doors = (0..size).filter(|&y| !walls.contains(&(size - 1, y))).collect();
        Self {
            size,
            walls,
            left_doors,
            right_doors,
            step_reward: -0.1,
            horizon: 100,
        }
    }

    /// No walls, a single door on each side.
    pub fn open(size: usize, left_door_row: usize, right_door_row: usize) -> Self {
        Self {
            size,
            walls: BTreeSet::new(),
            left_doors: [left_door_row].into(),
            right_doors: [right_door_row].into(),
            step_reward: -0.1,
            horizon: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.size < 2 {
            return bad(format!("grid size {} is below 2", self.size));
        }
        if self.horizon == 0 {
            return bad("gridworld horizon must be positive".into());
        }
        if !self.step_reward.is_finite() {
            return bad("step reward must be finite".into());
        }
        if let Some(&(x, y)) = self.walls.iter().find(|(x, y)| *x >= self.size || *y >= self.size) {
            return bad(format!("wall ({x}, {y}) is outside the grid"));
        }
        for (&row, edge, side) in self
            .left_doors
            .iter()
            .map(|r| (r, 0, "left"))
            .chain(self.right_doors.iter().map(|r| (r, self.size - 1, "right")))
        {
            if row >= self.size {
                return bad(format!("{side} door row {row} is outside the grid"));
            }
            if self.walls.contains(&(edge, row)) {
                return bad(format!("{side} door at row {row} is blocked by a wall"));
            }
        }
        if self.left_doors.is_empty() && self.right_doors.is_empty() {
            return bad("gridworld needs at least one door".into());
        }
        Ok(())
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        cell.0 < self.size && cell.1 < self.size && !self.walls.contains(&cell)
    }

    /// Free cells in lexicographic `(x, y)` order.
    pub fn free_cells(&self) -> Vec<Cell> {
        (0..self.size)
            .flat_map(|x| (0..self.size).map(move |y| (x, y)))
            .filter(|&c| self.is_free(c))
            .collect()
    }

    /// Outcome of one action: `Exit` or the resulting cell.
    pub fn move_from(&self, (x, y): Cell, action: usize) -> Move {
        let n = self.size;
        let target = match action {
            LEFT if x == 0 => {
                return if self.left_doors.contains(&y) {
                    Move::Exit
                } else {
                    Move::To((x, y))
                }
            }
            RIGHT if x == n - 1 => {
                return if self.right_doors.contains(&y) {
                    Move::Exit
                } else {
                    Move::To((x, y))
                }
            }
            LEFT => (x - 1, y),
            RIGHT => (x + 1, y),
            UP if y + 1 < n => (x, y + 1),
            DOWN if y > 0 => (x, y - 1),
            _ => (x, y),
        };
        if self.walls.contains(&target) {
            Move::To((x, y))
        } else {
            Move::To(target)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    Exit,
    To(Cell),
}

pub fn cell_of(state: &[f64]) -> Cell {
    (state[0].round() as usize, state[1].round() as usize)
}

pub fn state_of(cell: Cell) -> Vec<f64> {
    vec![cell.0 as f64, cell.1 as f64]
}

pub fn gridworld_step(spec: &GridworldSpec, state: &EnvState, action: usize) -> Transition {
    let steps = state.steps_elapsed + 1;
    let (next, exited) = match spec.move_from(cell_of(&state.values), action) {
        Move::Exit => (state.values.clone(), true),
        Move::To(c) => (state_of(c), false),
    };
    let done = exited || steps >= spec.horizon;
    Transition {
        state: state.values.clone(),
        action,
        next_state: EnvState {
            values: next,
            terminal: done,
            steps_elapsed: steps,
        },
        reward: spec.step_reward,
        done,
    }
}

/// Exact solution: per-side step counts to an exit, optimal actions, and
/// action values.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSolution {
    spec: GridworldSpec,
    /// Actions needed to leave through a left / right door, `None` if impossible.
    left_steps: Vec<Option<u32>>,
    right_steps: Vec<Option<u32>>,
    policy: Vec<Option<usize>>,
}

impl GridSolution {
    fn index(&self, (x, y): Cell) -> usize {
        x * self.spec.size + y
    }

    pub fn spec(&self) -> &GridworldSpec {
        &self.spec
    }

    /// Fewest actions to leave the grid from `cell`.
    pub fn steps_to_exit(&self, cell: Cell) -> Option<u32> {
        let i = self.index(cell);
        match (self.left_steps[i], self.right_steps[i]) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    pub fn action(&self, cell: Cell) -> Option<usize> {
        self.policy.get(self.index(cell)).copied().flatten()
    }

    pub fn value(&self, cell: Cell) -> f64 {
        self.steps_to_exit(cell)
            .map_or(f64::NEG_INFINITY, |s| self.spec.step_reward * s as f64)
    }

    /// `Q(s, a) = r + V(s')`, with `V = 0` after exiting.
    pub fn q_values(&self, cell: Cell) -> Vec<f64> {
        (0..NUM_ACTIONS)
            .map(|a| {
                let r = self.spec.step_reward;
                match self.spec.move_from(cell, a) {
                    Move::Exit => r,
                    Move::To(c) => r + self.value(c),
                }
            })
            .collect()
    }
}

/// Value iteration over step counts restricted to one side's doors.
fn steps_via(spec: &GridworldSpec, left: bool) -> Vec<Option<u32>> {
    let n = spec.size;
    let doors = if left { &spec.left_doors } else { &spec.right_doors };
    let exit_action = if left { LEFT } else { RIGHT };
    let mut steps: Vec<Option<u32>> = vec![None; n * n];
    loop {
        let mut changed = false;
        for x in 0..n {
            for y in 0..n {
                if !spec.is_free((x, y)) {
                    continue;
                }
                let mut best: Option<u32> = None;
                for a in ACTION_ORDER {
                    let cand = match spec.move_from((x, y), a) {
                        Move::Exit if a == exit_action && doors.contains(&y) => Some(1),
                        Move::Exit => None,
                        Move::To(c) if c == (x, y) => None,
                        Move::To((cx, cy)) => steps[cx * n + cy].map(|s| s + 1),
                    };
                    best = match (best, cand) {
                        (Some(b), Some(c)) => Some(b.min(c)),
                        (b, c) => b.or(c),
                    };
                }
                if best != steps[x * n + y] {
                    steps[x * n + y] = best;
                    changed = true;
                }
            }
        }
        if !changed {
            return steps;
        }
    }
}

/// Optimal policy. The nearer exit side wins, left on ties; among moves that
/// make progress toward it, the first in (left, right, up, down) is taken.
pub fn gridworld_optimal_policy(spec: &GridworldSpec) -> Result<GridSolution> {
    spec.validate()?;
    let n = spec.size;
    let left_steps = steps_via(spec, true);
    let right_steps = steps_via(spec, false);
    let mut policy = vec![None; n * n];
    for (x, y) in spec.free_cells() {
        let i = x * n + y;
        let (side_steps, exit_action) = match (left_steps[i], right_steps[i]) {
            (None, None) => return Err(Error::UnreachableCell(x, y)),
            (Some(l), Some(r)) if r < l => (&right_steps, RIGHT),
            (Some(_), _) => (&left_steps, LEFT),
            (None, Some(_)) => (&right_steps, RIGHT),
        };
        let target = side_steps[i].expect("side chosen as reachable");
        let action = ACTION_ORDER.into_iter().find(|&a| match spec.move_from((x, y), a) {
            Move::Exit => a == exit_action && target == 1,
            Move::To(c) => c != (x, y) && side_steps[c.0 * n + c.1] == Some(target - 1),
        });
        policy[i] = action;
    }
    Ok(GridSolution {
        spec: spec.clone(),
        left_steps,
        right_steps,
        policy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    fn start(cell: Cell) -> EnvState {
        EnvState::new(state_of(cell))
    }

    #[test]
    fn exit_through_left_door() {
        let spec = GridworldSpec::diagonal(5);
        let t = gridworld_step(&spec, &start((0, 0)), LEFT);
        assert!(t.done && t.next_state.terminal);
        assert_eq!(t.reward, -0.1);
    }

    #[test]
    fn wall_and_edge_collisions_stay() {
        let spec = GridworldSpec::diagonal(5);
        // (3, 0) -> right is the wall (4, 0)
        let t = gridworld_step(&spec, &start((3, 0)), RIGHT);
        assert_eq!(t.next_state.values, state_of((3, 0)));
        assert_eq!(t.reward, -0.1);
        assert!(!t.done);
        let t = gridworld_step(&spec, &start((1, 0)), DOWN);
        assert_eq!(t.next_state.values, state_of((1, 0)));
        let open = GridworldSpec::open(5, 0, 4);
        let t = gridworld_step(&open, &start((0, 2)), LEFT);
        assert!(!t.done);
        assert_eq!(t.next_state.values, state_of((0, 2)));
    }

    #[test]
    fn horizon_ends_episode() {
        let spec = GridworldSpec::diagonal(5);
        let mut s = start((1, 1));
        for i in 0..100 {
            let t = gridworld_step(&spec, &s, DOWN);
            assert_eq!(t.done, i == 99);
            s = t.next_state;
        }
    }

    #[test]
    fn diagonal_policy_rule() {
        for n in 2..=10 {
            let spec = GridworldSpec::diagonal(n);
            let sol = gridworld_optimal_policy(&spec).unwrap();
            for (x, y) in spec.free_cells() {
                let expected = if x + y < n - 1 { LEFT } else { RIGHT };
                assert_eq!(sol.action((x, y)), Some(expected), "N={n} at ({x}, {y})");
            }
        }
    }

    #[test]
    fn two_by_two_exits_to_adjacent_door() {
        let spec = GridworldSpec::diagonal(2);
        assert_eq!(spec.left_doors, [0].into());
        assert_eq!(spec.right_doors, [1].into());
        let sol = gridworld_optimal_policy(&spec).unwrap();
        assert_eq!(sol.action((0, 0)), Some(LEFT));
        assert_eq!(sol.action((1, 1)), Some(RIGHT));
    }

    #[test]
    fn open_grid_prefers_left_exit_on_ties() {
        let spec = GridworldSpec::open(5, 0, 4);
        let sol = gridworld_optimal_policy(&spec).unwrap();
        // (2, 2) is equidistant: 5 actions either way
        assert_eq!(sol.steps_to_exit((2, 2)), Some(5));
        assert_eq!(sol.action((2, 2)), Some(LEFT));
        assert_eq!(sol.action((0, 3)), Some(DOWN));
        assert_eq!(sol.action((4, 1)), Some(UP));
    }

    #[test]
    fn enclosed_cell_is_unreachable() {
        let mut spec = GridworldSpec::open(4, 0, 3);
        spec.walls = [(1, 2), (2, 1), (3, 2), (2, 3)].into();
        assert!(matches!(
            gridworld_optimal_policy(&spec),
            Err(Error::UnreachableCell(2, 2))
        ));
    }

    #[test]
    fn invalid_doors_are_rejected() {
        let mut spec = GridworldSpec::diagonal(5);
        spec.left_doors.insert(4);
        assert!(spec.validate().is_err());
    }

    /// Breadth-first search over single moves, including door exits.
    fn bfs_exit_distance(spec: &GridworldSpec, from: Cell) -> Option<u32> {
        let mut seen = BTreeSet::from([from]);
        let mut queue = VecDeque::from([(from, 0u32)]);
        while let Some((c, d)) = queue.pop_front() {
            for a in 0..NUM_ACTIONS {
                match spec.move_from(c, a) {
                    Move::Exit => return Some(d + 1),
                    Move::To(next) if seen.insert(next) => queue.push_back((next, d + 1)),
                    Move::To(_) => {}
                }
            }
        }
        None
    }

    #[test]
    fn policy_return_is_shortest_path() {
        let mut specs = vec![GridworldSpec::diagonal(5), GridworldSpec::open(6, 2, 0)];
        let mut walled = GridworldSpec::open(7, 3, 5);
        walled.walls = [(1, 3), (1, 4), (1, 2), (4, 4), (4, 5), (5, 1), (3, 0)].into();
        specs.push(walled);
        for spec in specs {
            let sol = gridworld_optimal_policy(&spec).unwrap();
            for cell in spec.free_cells() {
                let bfs = bfs_exit_distance(&spec, cell).unwrap();
                let mut s = start(cell);
                let mut reward = 0.0;
                let mut n = 0;
                loop {
                    let t = gridworld_step(&spec, &s, sol.action(cell_of(&s.values)).unwrap());
                    reward += t.reward;
                    n += 1;
                    if t.done {
                        break;
                    }
                    s = t.next_state;
                }
                assert_eq!(n, bfs, "{cell:?}");
                assert!((reward - (-0.1 * bfs as f64)).abs() < 1e-9);
                assert_eq!(sol.steps_to_exit(cell), Some(bfs));
            }
        }
    }

    #[test]
    fn q_values_follow_successor_values() {
        let spec = GridworldSpec::diagonal(5);
        let sol = gridworld_optimal_policy(&spec).unwrap();
        let q = sol.q_values((1, 1));
        // left: to (0,1), one more step out; down: (1,0) then two steps
        assert!((q[LEFT] - (-0.2)).abs() < 1e-12);
        assert!((q[DOWN] - (-0.3)).abs() < 1e-12);
        // bumping costs a step and stays put
        let q = sol.q_values((0, 0));
        assert!((q[LEFT] - (-0.1)).abs() < 1e-12);
        assert!((q[DOWN] - (-0.2)).abs() < 1e-12);
    }
}
