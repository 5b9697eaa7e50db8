//! Mixed-binary linear programs and the embedded exact solver.

mod branch;
mod lp_format;
mod model;
mod simplex;
mod solution;

pub use branch::{solve_milp, BranchAndBound, MilpOptions, MilpSolver};
pub use lp_format::write_lp;
pub use model::{Integrality, LinExpr, MilpModel, Relation, Row, RowId, VarId, Variable};
pub use simplex::{solve_lp, solve_lp_with, LpOptions};
pub use solution::{SolveStats, SolveStatus, Solution};
