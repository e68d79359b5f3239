//! Two-phase active set solver for nonlinear programs
//!
//! ```text
//! min f(x)  subject to  h(x) = 0,  bl <= A x <= bu,  lo <= x <= hi
//! ```
//!
//! Phase one runs a safeguarded method of multipliers whose subproblems are
//! solved by a gradient projection / active face optimizer over the polyhedron.
//! Phase two alternates a perturbed Newton step on the constraints with a
//! multiplier step, and falls back to phase one whenever the KKT error does not
//! shrink fast enough.

pub mod cli;
pub mod error;
pub mod global_step;
pub mod kkt;
pub mod local_step;
pub mod model;
pub mod pco;
pub mod polyproj;
pub mod registry;
pub mod solver;

pub use error::{NpasaError, Result};
pub use kkt::{error_report, ErrorReport, Iterate};
pub use model::{load_problem_json, Polyhedron, Problem};
pub use polyproj::{project, ProjectionResult};
pub use solver::{solve, NpasaConfig, SolveResult};
