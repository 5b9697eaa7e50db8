//! Reverse-logistics network design for e-waste take-back systems.
//!
//! Builds and exactly solves the system-optimum and user-optimum MILPs of a
//! four-tier network (residence areas, drop-off sites, primary and secondary
//! processors), reports cost and emission per life-cycle stage, traces
//! cost/emission Pareto fronts and builds budgeted-uncertainty robust
//! counterparts.

pub mod builders;
pub mod bundled;
pub mod domain;
pub mod error;
pub mod geo;
pub mod milp;
pub mod multiobjective;
pub mod objectives;
pub mod robust;
pub mod scenarios;

pub use builders::{ModelArtifacts, ObjectiveKind};
pub use domain::{NetworkInstance, ValidationReport};
pub use error::{Error, Result};
pub use milp::{MilpModel, Solution, SolveStatus};
pub use objectives::StageBreakdown;
