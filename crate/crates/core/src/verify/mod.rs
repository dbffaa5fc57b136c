//! SMT-LIB encodings of hard-gated models, an external solver driver, and
//! exhaustive gridworld policy comparison.

pub mod encode;
pub mod sexp;
pub mod smt;
pub mod solver;

pub use encode::{
    action_predicate, encode_gate_selection, encode_policy, encode_safety, encode_tree,
    encoding_mismatches, first_violation, state_symbol, VerificationSpec,
};
pub use smt::{smt_decimal, Formula, SmtScript, Term};
pub use solver::{initial_state, run_solver, SolverRun, Verdict};

use crate::envs::gridworld::{self, Cell};
use crate::envs::{gridworld_optimal_policy, GridworldSpec, Policy};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GridEquivalence {
    Equivalent,
    Differs {
        cell: Cell,
        optimal: usize,
        actual: usize,
    },
}

/// Compares `policy` with the optimal policy on every free cell and reports
/// the lexicographically smallest disagreement.
pub fn check_gridworld_equivalence(policy: &dyn Policy, spec: &GridworldSpec) -> Result<GridEquivalence> {
    let solution = gridworld_optimal_policy(spec)?;
    for cell in spec.free_cells() {
        let optimal = solution.action(cell).expect("free cells are solved");
        let actual = policy.act(&gridworld::state_of(cell));
        if actual != optimal {
            return Ok(GridEquivalence::Differs {
                cell,
                optimal,
                actual,
            });
        }
    }
    Ok(GridEquivalence::Equivalent)
}
