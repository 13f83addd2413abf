//! Conic formulation of frequency security and the solvers around it.
//!
//! [`builder`] turns frequency-security requirements into rotated
//! second-order cones gated by interval selectors. [`ipm`] solves the
//! continuous relaxations, [`bnb`] searches the selectors and any other
//! integers, and [`enumerate`] gives an independent check by solving one
//! continuous program per interval hypothesis.

pub mod bnb;
pub mod builder;
pub mod enumerate;
pub mod export;
pub mod ipm;
pub mod program;
pub mod solve;

pub use bnb::{solve_mi, solve_mi_with, MiOptions, NodeOutcome, NodeRecord, DEFAULT_GAP};
pub use builder::{add_frequency_constraints, build_program, FrequencyBlock, FrequencyProblem};
pub use enumerate::{solve_by_enumeration, solve_by_enumeration_mi, solve_by_enumeration_with};
pub use export::{export_program, import_program};
pub use ipm::{ConeProblem, IpmOptions, IpmSolution, IpmStatus};
pub use program::{
    BigMLink, ConicProgram, LinExpr, LinearRow, LinkTarget, RsocBlock, Sense, VarKind, Variable,
};
pub use solve::{solve_continuous, solve_continuous_with, SolveResult, SolveStatus};
