//! Softmax linear gate over experts.
//!
//! Every expert `j` owns a coefficient vector over the bias-augmented input
//! `(x_0, .., x_{F-1}, 1)`; the gate is the softmax of the linear scores.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::argmax;
use crate::error::{Error, Result};

/// Floor applied to probabilities before taking logarithms.
const LOG_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct GatingParams {
    coefficients: Vec<Vec<f64>>,
}

impl GatingParams {
    /// `coefficients[j]` has `F + 1` entries, the bias last.
    pub fn new(coefficients: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = coefficients.first() else {
            return Err(Error::InvalidConfig("gate needs at least one expert".into()));
        };
        let width = first.len();
        if width == 0 {
            return Err(Error::InvalidConfig("gate coefficients cannot be empty".into()));
        }
        for row in &coefficients {
            if row.len() != width {
                return Err(Error::InvalidConfig("ragged gate coefficients".into()));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig("non-finite gate coefficient".into()));
            }
        }
        Ok(Self { coefficients })
    }

    pub fn zeros(num_experts: usize, num_features: usize) -> Self {
        Self {
            coefficients: vec![vec![0.0; num_features + 1]; num_experts],
        }
    }

    /// I.i.d. normal(0, 0.01) entries.
    pub fn random<R: Rng + ?Sized>(num_experts: usize, num_features: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, 0.01).expect("valid normal");
        let coefficients = (0..num_experts)
            .map(|_| (0..=num_features).map(|_| normal.sample(rng)).collect())
            .collect();
        Self { coefficients }
    }

    pub fn num_experts(&self) -> usize {
        self.coefficients.len()
    }

    pub fn num_features(&self) -> usize {
        self.coefficients[0].len() - 1
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coefficients
    }

    /// Linear score `theta_j . (x, 1)` of every expert.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.coefficients.iter().map(|c| affine(c, x)).collect()
    }

    /// Expert with the largest linear score, lowest index on ties.
    pub fn select(&self, x: &[f64]) -> usize {
        argmax(&self.scores(x))
    }

    /// Adds `shift` to every expert's coefficient vector.
    pub fn shifted(&self, shift: &[f64]) -> Self {
        let coefficients = self
            .coefficients
            .iter()
            .map(|c| c.iter().zip(shift).map(|(a, b)| a + b).collect())
            .collect();
        Self { coefficients }
    }

    /// Rewrites coefficients learned on z-scored inputs so they act on raw inputs.
    pub fn to_raw_space(&self, standardizer: &Standardizer) -> Self {
        let f = self.num_features();
        let coefficients = self
            .coefficients
            .iter()
            .map(|c| {
                let mut raw = vec![0.0; f + 1];
                let mut bias = c[f];
                for k in 0..f {
                    raw[k] = c[k] / standardizer.std[k];
                    bias -= raw[k] * standardizer.mean[k];
                }
                raw[f] = bias;
                raw
            })
            .collect();
        Self { coefficients }
    }
}

fn affine(coef: &[f64], x: &[f64]) -> f64 {
    let f = coef.len() - 1;
    let mut s = coef[f];
    for k in 0..f {
        s += coef[k] * x[k];
    }
    s
}

/// Per-feature mean and standard deviation used to z-score gate inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(num_features: usize) -> Self {
        Self {
            mean: vec![0.0; num_features],
            std: vec![1.0; num_features],
        }
    }

    /// Weighted moments; constant features get a unit scale.
    pub fn fit(rows: &[Vec<f64>], weights: &[f64]) -> Self {
        let f = rows.first().map_or(0, Vec::len);
        let total: f64 = weights.iter().sum();
        let mut mean = vec![0.0; f];
        for (x, w) in rows.iter().zip(weights) {
            for k in 0..f {
                mean[k] += w * x[k];
            }
        }
        mean.iter_mut().for_each(|m| *m /= total);
        let mut var = vec![0.0; f];
        for (x, w) in rows.iter().zip(weights) {
            for k in 0..f {
                let d = x[k] - mean[k];
                var[k] += w * d * d;
            }
        }
        let std = var
            .iter()
            .map(|v| {
                let s = (v / total).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

pub fn gate_probabilities(params: &GatingParams, x: &[f64]) -> Vec<f64> {
    softmax(&params.scores(x))
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Posterior probability of each expert having produced each instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    rows: Vec<Vec<f64>>,
}

impl Responsibilities {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > 1e-9 || r.iter().any(|h| !(0.0..=1.0).contains(h)) {
                return Err(Error::InvalidData(format!("responsibility row {i} is not a distribution")));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }
}

/// `h_ij = g_j(x_i) P_ij / sum_l g_l(x_i) P_il`.
pub fn responsibilities(
    params: &GatingParams,
    expert_likelihoods: &[Vec<f64>],
    xs: &[Vec<f64>],
) -> Result<Responsibilities> {
    let rows = xs
        .iter()
        .zip(expert_likelihoods)
        .enumerate()
        .map(|(i, (x, lik))| {
            let g = gate_probabilities(params, x);
            let joint: Vec<f64> = g.iter().zip(lik).map(|(g, p)| g * p).collect();
            let denom: f64 = joint.iter().sum();
            if !(denom > 0.0) || !denom.is_finite() {
                return Err(Error::ZeroDenominator(i));
            }
            Ok(joint.into_iter().map(|v| v / denom).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Responsibilities { rows })
}

/// `sum_i sum_j h_ij log g_j(x_i)`.
pub fn gating_objective(params: &GatingParams, h: &Responsibilities, xs: &[Vec<f64>]) -> f64 {
    weighted_objective(params, h, xs, None)
}

pub(crate) fn weighted_objective(
    params: &GatingParams,
    h: &Responsibilities,
    xs: &[Vec<f64>],
    weights: Option<&[f64]>,
) -> f64 {
    let mut total = 0.0;
    for (i, (x, row)) in xs.iter().zip(&h.rows).enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        let g = gate_probabilities(params, x);
        let s: f64 = row.iter().zip(&g).map(|(h, g)| h * g.max(LOG_FLOOR).ln()).sum();
        total += w * s;
    }
    total
}

/// Analytic gradient of [`gating_objective`], laid out like the coefficients.
pub fn gating_gradient(params: &GatingParams, h: &Responsibilities, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    objective_gradient(params, h, xs, None)
}

/// Gradient of the gating objective: `sum_i w_i (h_ij - g_j(x_i)) (x_i, 1)`.
pub(crate) fn objective_gradient(
    params: &GatingParams,
    h: &Responsibilities,
    xs: &[Vec<f64>],
    weights: Option<&[f64]>,
) -> Vec<Vec<f64>> {
    let f = params.num_features();
    let mut grad = vec![vec![0.0; f + 1]; params.num_experts()];
    for (i, (x, row)) in xs.iter().zip(&h.rows).enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        let g = gate_probabilities(params, x);
        for (j, gj) in grad.iter_mut().enumerate() {
            let r = w * (row[j] - g[j]);
            for k in 0..f {
                gj[k] += r * x[k];
            }
            gj[f] += r;
        }
    }
    grad
}

/// One ascent step on the gating objective with step size `lr`.
pub fn gradient_step(
    params: &GatingParams,
    h: &Responsibilities,
    xs: &[Vec<f64>],
    lr: f64,
) -> GatingParams {
    weighted_gradient_step(params, h, xs, None, lr)
}

pub(crate) fn weighted_gradient_step(
    params: &GatingParams,
    h: &Responsibilities,
    xs: &[Vec<f64>],
    weights: Option<&[f64]>,
    lr: f64,
) -> GatingParams {
    let grad = objective_gradient(params, h, xs, weights);
    let coefficients = params
        .coefficients
        .iter()
        .zip(grad)
        .map(|(c, g)| c.iter().zip(g).map(|(a, b)| a + lr * b).collect())
        .collect();
    GatingParams { coefficients }
}
