//! Under-powered car in a valley; state is `(position, velocity)`.

use rand::Rng;

use super::{EnvState, Transition};

pub const LEFT: usize = 0;
pub const NEUTRAL: usize = 1;
pub const RIGHT: usize = 2;
pub const NUM_ACTIONS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct MountainCarSpec {
    pub min_position: f64,
    pub max_position: f64,
    pub max_speed: f64,
    pub goal_position: f64,
    pub force: f64,
    pub gravity: f64,
    pub horizon: usize,
}

impl Default for MountainCarSpec {
    fn default() -> Self {
        Self {
            min_position: -1.2,
            max_position: 0.6,
            max_speed: 0.07,
            goal_position: 0.5,
            force: 0.001,
            gravity: 0.0025,
            horizon: 200,
        }
    }
}

impl MountainCarSpec {
    pub fn validate(&self) -> crate::Result<()> {
        let ok = self.min_position < self.goal_position
            && self.goal_position <= self.max_position
            && self.max_speed > 0.0
            && self.force > 0.0
            && self.gravity >= 0.0
            && self.horizon > 0;
        if ok {
            Ok(())
        } else {
            Err(crate::Error::InvalidConfig("inconsistent mountaincar constants".into()))
        }
    }

    pub fn dynamics(&self, s: &[f64], action: usize) -> Vec<f64> {
        let (position, velocity) = (s[0], s[1]);
        let push = action as f64 - 1.0;
        let mut velocity = (velocity + push * self.force - (3.0 * position).cos() * self.gravity)
            .clamp(-self.max_speed, self.max_speed);
        let position = (position + velocity).clamp(self.min_position, self.max_position);
        if position == self.min_position && velocity < 0.0 {
            velocity = 0.0;
        }
        vec![position, velocity]
    }

    pub fn at_goal(&self, s: &[f64]) -> bool {
        s[0] >= self.goal_position
    }

    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        vec![rng.random_range(-0.6..-0.4), 0.0]
    }
}

pub fn mountaincar_step(spec: &MountainCarSpec, state: &EnvState, action: usize) -> Transition {
    let next = spec.dynamics(&state.values, action);
    let steps = state.steps_elapsed + 1;
    let done = spec.at_goal(&next) || steps >= spec.horizon;
    Transition {
        state: state.values.clone(),
        action,
        next_state: EnvState {
            values: next,
            terminal: done,
            steps_elapsed: steps,
        },
        reward: -1.0,
        done,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reaching_goal_ends_episode() {
        let spec = MountainCarSpec::default();
        let t = mountaincar_step(&spec, &EnvState::new(vec![0.49, 0.05]), RIGHT);
        assert!(t.next_state.values[0] >= spec.goal_position);
        assert!(t.done);
        assert_eq!(t.reward, -1.0);
    }

    #[test]
    fn velocity_is_clamped() {
        let spec = MountainCarSpec::default();
        let s = spec.dynamics(&[-0.5, 0.0699], RIGHT);
        assert_eq!(s[1], spec.max_speed);
        let s = spec.dynamics(&[-0.5, -0.07], LEFT);
        assert_eq!(s[1], -spec.max_speed);
    }

    #[test]
    fn left_wall_stops_the_car() {
        let spec = MountainCarSpec::default();
        let s = spec.dynamics(&[-1.19, -0.05], LEFT);
        assert_eq!(s, vec![spec.min_position, 0.0]);
    }

    #[test]
    fn pumping_energy_reaches_goal() {
        let spec = MountainCarSpec::default();
        let mut s = EnvState::new(vec![-0.5, 0.0]);
        let mut steps = 0;
        loop {
            let a = if s.values[1] < 0.0 { LEFT } else { RIGHT };
            let t = mountaincar_step(&spec, &s, a);
            steps += 1;
            if t.done {
                assert!(spec.at_goal(&t.next_state.values));
                break;
            }
            s = t.next_state;
        }
        assert!(steps <= 200);
    }
}
