//! Cart-pole balancing with explicit Euler integration.
//!
//! State is `(x, x_dot, theta, theta_dot)`; action 0 pushes left, 1 right.

use std::ops::Neg;

use num_rational::BigRational;
use num_traits::{Num, ToPrimitive};
use rand::Rng;

use super::{EnvState, Transition};
use crate::verify::smt::decimal_rational;

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;
pub const NUM_ACTIONS: usize = 2;
pub const ANGLE: usize = 2;

/// Half-width of the initial-state box on every component.
pub const INIT_BOUND: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct CartPoleSpec {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub pole_half_length: f64,
    pub force_magnitude: f64,
    pub tau: f64,
    /// Pole angle (radians) beyond which the episode fails.
    pub angle_limit: f64,
    pub position_limit: f64,
    pub horizon: usize,
}

impl Default for CartPoleSpec {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_half_length: 0.5,
            force_magnitude: 10.0,
            tau: 0.02,
            angle_limit: 0.2094395,
            position_limit: 2.4,
            horizon: 200,
        }
    }
}

/// `s' = A s + b[action]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineDynamics {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

impl AffineDynamics {
    pub fn apply(&self, s: &[f64], action: usize) -> Vec<f64> {
        self.a
            .iter()
            .zip(&self.b[action])
            .map(|(row, bi)| row.iter().zip(s).map(|(a, x)| a * x).sum::<f64>() + bi)
            .collect()
    }
}

/// `s' = A s + b[action]` with rational coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactAffineDynamics {
    pub a: Vec<Vec<BigRational>>,
    pub b: Vec<Vec<BigRational>>,
}

impl ExactAffineDynamics {
    /// Coefficients taken as the shortest decimals of the given floats.
    pub fn from_f64(d: &AffineDynamics) -> Self {
        let conv = |m: &[Vec<f64>]| -> Vec<Vec<BigRational>> {
            m.iter().map(|r| r.iter().map(|v| decimal_rational(*v)).collect()).collect()
        };
        Self {
            a: conv(&d.a),
            b: conv(&d.b),
        }
    }

    pub fn to_f64(&self) -> AffineDynamics {
        let conv = |m: &[Vec<BigRational>]| -> Vec<Vec<f64>> {
            m.iter()
                .map(|r| r.iter().map(|v| v.to_f64().expect("finite coefficient")).collect())
                .collect()
        };
        AffineDynamics {
            a: conv(&self.a),
            b: conv(&self.b),
        }
    }
}

/// Linearized Euler step from `[g, cart mass, pole mass, half length, force,
/// tau]`, generic over the number type. Rows of `b` are LEFT then RIGHT.
#[allow(clippy::type_complexity)]
fn linearize<T>(c: &[T; 6]) -> (Vec<Vec<T>>, Vec<Vec<T>>)
where
    T: Clone + Num + Neg<Output = T>,
{
    let [g, mc, mp, l, fm, tau] = c.clone();
    let n = |k: i32| -> T { (0..k).fold(T::zero(), |acc, _| acc + T::one()) };
    let m = mc + mp.clone();
    let pml = mp.clone() * l.clone();
    let l_eff = l * (n(4) / n(3) - mp / m.clone());
    // theta_acc = (g θ - F/m) / l_eff ; x_acc = F/m - pml θ_acc / m
    let a = vec![
        vec![T::one(), tau.clone(), T::zero(), T::zero()],
        vec![
            T::zero(),
            T::one(),
            -tau.clone() * pml.clone() * g.clone() / (m.clone() * l_eff.clone()),
            T::zero(),
        ],
        vec![T::zero(), T::zero(), T::one(), tau.clone()],
        vec![T::zero(), T::zero(), tau.clone() * g / l_eff.clone(), T::one()],
    ];
    let b = [-fm.clone(), fm]
        .into_iter()
        .map(|f| {
            vec![
                T::zero(),
                tau.clone()
                    * (f.clone() / m.clone()
                        + pml.clone() * f.clone() / (m.clone() * m.clone() * l_eff.clone())),
                T::zero(),
                -tau.clone() * f / (m.clone() * l_eff.clone()),
            ]
        })
        .collect();
    (a, b)
}

impl CartPoleSpec {
    pub fn validate(&self) -> crate::Result<()> {
        let positive = [
            self.gravity,
            self.cart_mass,
            self.pole_mass,
            self.pole_half_length,
            self.force_magnitude,
            self.tau,
            self.angle_limit,
            self.position_limit,
        ];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) || self.horizon == 0 {
            return Err(crate::Error::InvalidConfig(
                "cartpole constants must be positive".into(),
            ));
        }
        Ok(())
    }

    fn total_mass(&self) -> f64 {
        self.cart_mass + self.pole_mass
    }

    fn force(&self, action: usize) -> f64 {
        if action == RIGHT {
            self.force_magnitude
        } else {
            -self.force_magnitude
        }
    }

    /// One Euler step of the nonlinear equations of motion.
    pub fn dynamics(&self, s: &[f64], action: usize) -> Vec<f64> {
        let (x, x_dot, theta, theta_dot) = (s[0], s[1], s[2], s[3]);
        let m = self.total_mass();
        let pml = self.pole_mass * self.pole_half_length;
        let (sin, cos) = theta.sin_cos();
        let temp = (self.force(action) + pml * theta_dot * theta_dot * sin) / m;
        let theta_acc = (self.gravity * sin - cos * temp)
            / (self.pole_half_length * (4.0 / 3.0 - self.pole_mass * cos * cos / m));
        let x_acc = temp - pml * theta_acc * cos / m;
        vec![
            x + self.tau * x_dot,
            x_dot + self.tau * x_acc,
            theta + self.tau * theta_dot,
            theta_dot + self.tau * theta_acc,
        ]
    }

    /// Euler step with `sin θ ≈ θ`, `cos θ ≈ 1` and the `θ̇²` term dropped.
    pub fn linearization(&self) -> AffineDynamics {
        let (a, b) = linearize(&self.constants());
        AffineDynamics { a, b }
    }

    /// The same linearization in exact rational arithmetic, taking every
    /// constant as its shortest decimal spelling.
    pub fn exact_linearization(&self) -> ExactAffineDynamics {
        let c = self.constants().map(decimal_rational);
        let (a, b) = linearize(&c);
        ExactAffineDynamics { a, b }
    }

    fn constants(&self) -> [f64; 6] {
        [
            self.gravity,
            self.cart_mass,
            self.pole_mass,
            self.pole_half_length,
            self.force_magnitude,
            self.tau,
        ]
    }

    pub fn is_failure(&self, s: &[f64]) -> bool {
        s[ANGLE].abs() > self.angle_limit || s[0].abs() > self.position_limit
    }

    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..4).map(|_| rng.random_range(-INIT_BOUND..=INIT_BOUND)).collect()
    }
}

pub fn cartpole_step(spec: &CartPoleSpec, state: &EnvState, action: usize) -> Transition {
    let next = spec.dynamics(&state.values, action);
    let steps = state.steps_elapsed + 1;
    let done = spec.is_failure(&next) || steps >= spec.horizon;
    Transition {
        state: state.values.clone(),
        action,
        next_state: EnvState {
            values: next,
            terminal: done,
            steps_elapsed: steps,
        },
        reward: 1.0,
        done,
    }
}

pub fn cartpole_linearized_step(spec: &CartPoleSpec, state: &[f64], action: usize) -> Vec<f64> {
    spec.linearization().apply(state, action)
}
