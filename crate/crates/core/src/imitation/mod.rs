//! Distilling teacher policies into trees and mixtures of expert trees.

pub mod dagger;
pub mod eval;
pub mod teacher;

pub use dagger::{dagger_train, AggregatedDataset, DaggerConfig, DaggerOutcome, LabeledState, StudentLearner};
pub use eval::{
    evaluate_model, evaluate_policy, pareto_front, write_ledger, EvalResult, LedgerRow, ParetoPoint,
    LEDGER_HEADER,
};
pub use teacher::{
    cartpole_teacher, gridworld_teacher, importance, mountaincar_teacher, AffineController,
    GridworldTeacher, MonteCarloConfig, ScriptedTeacher, Teacher,
};
