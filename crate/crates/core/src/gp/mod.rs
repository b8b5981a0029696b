//! Placement optimization by successive geometric programming.
//!
//! The exact average-rate minimization is a complementary GP: it is a
//! standard GP except for the constraints `1 / (q_n + x_n) <= 1` that link a
//! caching fraction to its complement. [`condense`] replaces those with
//! monomial approximations around the current point, [`solve_gp`] solves the
//! resulting standard GP, and [`successive_gp`] iterates the two.

pub mod condense;
pub mod posynomial;
pub mod problem;
pub mod solver;
pub mod successive;

pub use condense::{condense, condense_at, condense_posynomial};
pub use posynomial::{Monomial, Posynomial, VarId};
pub use problem::{
    build_dccs, build_p1, build_p4, build_scheme_program, count_message_variables, dump, parse_dump, Constraint,
    ConstraintBody, ConstraintTag, GpProblem, MessageSet, VarRole,
};
pub use solver::{solve_gp, GpSolution, SolverConfig};
pub use successive::{successive_gp, GpTarget, SuccessiveResult};

use crate::combinatorics::CombinatoricsError;
use crate::model::ModelError;
use crate::rate::RateError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GpError {
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("variable {0} is not registered")]
    UnknownVariable(VarId),
    #[error("problem would need about {variables:.3e} variables")]
    ProblemTooLarge { variables: f64 },
    #[error("{distinct} distinct files give too many permutations")]
    TooManyPermutations { distinct: usize },
    #[error("anchor value {value} for {var} is not positive")]
    NonPositiveAnchor { var: VarId, value: f64 },
    #[error("anchor vectors are shorter than the catalog")]
    AnchorLength,
    #[error("constraint {constraint} is not a posynomial inequality")]
    NotStandard { constraint: usize },
    #[error("infeasible (phase-1 optimum {phase1_objective:.3e} in log scale)")]
    Infeasible { phase1_objective: f64 },
    #[error("no convergence within {steps} Newton steps")]
    MaxIterations { steps: usize },
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("objective rose from {previous} to {current} at iteration {iteration}")]
    NonMonotoneTrace { iteration: usize, previous: f64, current: f64 },
    #[error("condensed solution violates q + x >= 1 for file {file} by {violation:.3e}")]
    UnsoundCondensation { file: usize, violation: f64 },
    #[error("bad solver configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Combinatorics(#[from] CombinatoricsError),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Model(#[from] ModelError),
}
