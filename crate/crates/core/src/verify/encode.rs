//! Hard-gated mixtures of trees as linear real arithmetic, and the bounded
//! pole-angle safety query over affine dynamics.

use super::sexp::{Evaluator, Value};
use super::smt::{Cmp, Formula, SmtScript, Term};
use crate::dtree::TreeNode;
use num_rational::BigRational;
use num_traits::Zero;

use crate::envs::cartpole::{self, ExactAffineDynamics};
use crate::envs::CartPoleSpec;
use crate::error::{Error, Result};
use crate::model::{InferenceMode, MoetModel};

pub const LOGIC: &str = "QF_LRA";

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationSpec {
    /// Per-feature `[lo, hi]` box of initial states.
    pub initial_box: Vec<(f64, f64)>,
    /// Bound on the absolute value of the monitored component.
    pub angle_limit: f64,
    /// Index of the monitored component.
    pub angle_index: usize,
    pub horizon: usize,
    pub dynamics: ExactAffineDynamics,
}

impl VerificationSpec {
    /// `[-0.05, 0.05]^4` start box, the episode's failure angle, ten steps of
    /// the linearized dynamics.
    pub fn cartpole(spec: &CartPoleSpec) -> Self {
        Self {
            initial_box: vec![(-cartpole::INIT_BOUND, cartpole::INIT_BOUND); 4],
            angle_limit: spec.angle_limit,
            angle_index: cartpole::ANGLE,
            horizon: 10,
            dynamics: spec.exact_linearization(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.horizon == 0 {
            return bad("verification horizon must be at least 1");
        }
        // a zero bound is allowed: it makes every tilted state a violation
        if !(self.angle_limit >= 0.0) || !self.angle_limit.is_finite() {
            return bad("angle bound must be a non-negative number");
        }
        if self.initial_box.iter().any(|(lo, hi)| !(lo <= hi) || !lo.is_finite() || !hi.is_finite()) {
            return bad("initial box must be nonempty and finite");
        }
        let n = self.initial_box.len();
        if self.angle_index >= n
            || self.dynamics.a.len() != n
            || self.dynamics.a.iter().any(|r| r.len() != n)
            || self.dynamics.b.iter().any(|b| b.len() != n)
        {
            return bad("dynamics and initial box dimensions disagree");
        }
        Ok(())
    }
}

/// Symbol of component `k` at step `t`.
pub fn state_symbol(t: usize, k: usize) -> String {
    format!("s_{t}_{k}")
}

pub fn state_terms(t: usize, n: usize) -> Vec<Term> {
    (0..n).map(|k| Term::var(state_symbol(t, k))).collect()
}

fn gate_score(coef: &[f64], x: &[Term]) -> Term {
    let f = coef.len() - 1;
    Term::affine(&coef[..f], coef[f], x)
}

/// One predicate per expert; expert `j` is selected iff its score beats every
/// lower-indexed score strictly and every higher-indexed score weakly.
pub fn encode_gate_selection(model: &MoetModel, x: &[Term]) -> Result<Vec<Formula>> {
    if model.mode() != InferenceMode::Hard {
        return Err(Error::ModeError);
    }
    let coef = &model.gate().coefficients();
    if coef.len() == 1 {
        return Ok(vec![Formula::True]);
    }
    let scores: Vec<Term> = coef.iter().map(|c| gate_score(c, x)).collect();
    Ok((0..coef.len())
        .map(|j| {
            Formula::and(
                (0..coef.len())
                    .filter(|&k| k != j)
                    .map(|k| {
                        let op = if k < j { Cmp::Gt } else { Cmp::Ge };
                        Formula::cmp(op, scores[j].clone(), scores[k].clone())
                    })
                    .collect(),
            )
        })
        .collect())
}

/// Root-to-leaf path conditions with each leaf's predicted action.
pub fn tree_paths(tree: &TreeNode, x: &[Term]) -> Vec<(Formula, usize)> {
    fn walk(node: &TreeNode, x: &[Term], path: &mut Vec<Formula>, out: &mut Vec<(Formula, usize)>) {
        match node {
            TreeNode::Leaf(dist) => out.push((Formula::and(path.clone()), crate::argmax_class(dist))),
            TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
            } => {
                let var = x[*feature].clone();
                path.push(Formula::cmp(Cmp::Le, var.clone(), Term::Const(*threshold)));
                walk(left, x, path, out);
                path.pop();
                path.push(Formula::cmp(Cmp::Gt, var, Term::Const(*threshold)));
                walk(right, x, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(tree, x, &mut Vec::new(), &mut out);
    out
}

/// For each action, the disjunction of paths whose leaf predicts it.
pub fn encode_tree(tree: &TreeNode, x: &[Term], num_actions: usize) -> Vec<Formula> {
    let paths = tree_paths(tree, x);
    (0..num_actions)
        .map(|a| {
            Formula::or(
                paths
                    .iter()
                    .filter(|(_, leaf)| *leaf == a)
                    .map(|(p, _)| p.clone())
                    .collect(),
            )
        })
        .collect()
}

/// For each action, the condition under which the hard-gated model takes it.
pub fn encode_policy(model: &MoetModel, x: &[Term]) -> Result<Vec<Formula>> {
    let selection = encode_gate_selection(model, x)?;
    let per_expert: Vec<Vec<Formula>> = model
        .experts()
        .iter()
        .map(|t| encode_tree(t, x, model.num_classes()))
        .collect();
    Ok((0..model.num_classes())
        .map(|a| {
            Formula::or(
                selection
                    .iter()
                    .zip(&per_expert)
                    .map(|(sel, acts)| Formula::and(vec![sel.clone(), acts[a].clone()]))
                    .collect(),
            )
        })
        .collect())
}

/// Name of the defined predicate for `action`.
pub fn action_predicate(action: usize) -> String {
    format!("takes_action_{action}")
}

/// `next = A from + b[action]`, with the action-dependent offset chosen by
/// nested `ite` over the action predicates (the last action is the default,
/// which is sound because the predicates partition the state space).
fn transition(dynamics: &ExactAffineDynamics, from: &[Term], to: &[Term]) -> Formula {
    let num_actions = dynamics.b.len();
    Formula::and(
        dynamics
            .a
            .iter()
            .zip(to)
            .enumerate()
            .map(|(k, (row, next))| {
                let offsets: Vec<&BigRational> = dynamics.b.iter().map(|b| &b[k]).collect();
                let mut terms = Vec::new();
                if offsets.iter().all(|o| *o == offsets[0]) {
                    if !offsets[0].is_zero() {
                        terms.push(Term::Exact(offsets[0].clone()));
                    }
                } else {
                    terms.push((0..num_actions - 1).rev().fold(
                        Term::Exact(offsets[num_actions - 1].clone()),
                        |rest, a| {
                            Term::Ite(
                                Box::new(Formula::Apply(action_predicate(a), from.to_vec())),
                                Box::new(Term::Exact(offsets[a].clone())),
                                Box::new(rest),
                            )
                        },
                    ));
                }
                terms.extend(
                    row.iter()
                        .zip(from)
                        .filter(|(c, _)| !c.is_zero())
                        .map(|(c, v)| Term::ExactScale(c.clone(), Box::new(v.clone()))),
                );
                Formula::cmp(Cmp::Eq, next.clone(), Term::Sum(terms))
            })
            .collect(),
    )
}

/// Satisfiable iff some start in the box drives the monitored component past
/// the bound within the horizon under the model's actions.
pub fn encode_safety(model: &MoetModel, vspec: &VerificationSpec) -> Result<SmtScript> {
    vspec.validate()?;
    if model.mode() != InferenceMode::Hard {
        return Err(Error::ModeError);
    }
    let n = vspec.initial_box.len();
    if model.num_features() != n {
        return Err(Error::InvalidConfig(format!(
            "model has {} features but the verification state has {n}",
            model.num_features()
        )));
    }
    if model.num_classes() != vspec.dynamics.b.len() {
        return Err(Error::InvalidConfig(format!(
            "model has {} actions but the dynamics define {}",
            model.num_classes(),
            vspec.dynamics.b.len()
        )));
    }
    let mut script = SmtScript::new(LOGIC);
    for t in 0..=vspec.horizon {
        for k in 0..n {
            script.declare_real(&state_symbol(t, k));
        }
    }
    let params: Vec<String> = (0..n).map(|k| format!("x{k}")).collect();
    let param_terms: Vec<Term> = params.iter().map(|p| Term::var(p.clone())).collect();
    for (a, f) in encode_policy(model, &param_terms)?.iter().enumerate() {
        script.define_bool(&action_predicate(a), &params, f);
    }
    script.comment("initial states");
    let s0 = state_terms(0, n);
    script.assert(&Formula::and(
        vspec
            .initial_box
            .iter()
            .zip(&s0)
            .flat_map(|((lo, hi), v)| {
                [
                    Formula::cmp(Cmp::Ge, v.clone(), Term::Const(*lo)),
                    Formula::cmp(Cmp::Le, v.clone(), Term::Const(*hi)),
                ]
            })
            .collect(),
    ));
    script.comment("closed-loop transitions");
    for t in 0..vspec.horizon {
        let (from, to) = (state_terms(t, n), state_terms(t + 1, n));
        script.assert(&transition(&vspec.dynamics, &from, &to));
    }
    script.comment("some step leaves the safe angle band");
    let limit = vspec.angle_limit;
    script.assert(&Formula::or(
        (1..=vspec.horizon)
            .flat_map(|t| {
                let angle = Term::var(state_symbol(t, vspec.angle_index));
                [
                    Formula::cmp(Cmp::Gt, angle.clone(), Term::Const(limit)),
                    Formula::cmp(Cmp::Lt, angle, Term::Const(-limit)),
                ]
            })
            .collect(),
    ));
    script.check_sat();
    script.get_model();
    Ok(script)
}

/// First step (1-based) at which the closed loop started at `s0` exceeds the
/// bound, simulated in floating point.
pub fn first_violation(model: &MoetModel, vspec: &VerificationSpec, s0: &[f64]) -> Option<usize> {
    let dynamics = vspec.dynamics.to_f64();
    let mut s = s0.to_vec();
    for t in 1..=vspec.horizon {
        s = dynamics.apply(&s, model.predict_hard(&s));
        if s[vspec.angle_index].abs() > vspec.angle_limit {
            return Some(t);
        }
    }
    None
}

/// Indices of `states` where the encoded action predicates, evaluated on
/// their own, disagree with hard inference (none true, several true, or the
/// wrong one).
pub fn encoding_mismatches(model: &MoetModel, states: &[Vec<f64>]) -> Result<Vec<usize>> {
    let n = model.num_features();
    let params: Vec<String> = (0..n).map(|k| format!("x{k}")).collect();
    let param_terms: Vec<Term> = params.iter().map(|p| Term::var(p.clone())).collect();
    let mut script = SmtScript::new(LOGIC);
    for (a, f) in encode_policy(model, &param_terms)?.iter().enumerate() {
        script.define_bool(&action_predicate(a), &params, f);
    }
    let ev = Evaluator::from_script(&script.text())?;
    let mut bad = Vec::new();
    for (i, x) in states.iter().enumerate() {
        let args: Vec<Value> = x.iter().map(|v| Value::Real(*v)).collect();
        let mut held = Vec::new();
        for a in 0..model.num_classes() {
            if ev.call(&action_predicate(a), &args)?.as_bool()? {
                held.push(a);
            }
        }
        if held != [model.predict_hard(x)] {
            bad.push(i);
        }
    }
    Ok(bad)
}
