//! Randomized algorithms for uncertain linear and bilinear matrix
//! inequalities.
//!
//! A problem is an LMI or BMI whose coefficient matrices depend on a vector
//! of uncertain parameters drawn from a box. Instead of requiring the
//! inequality for every parameter value, the crate
//!
//! - sizes multisamples from VC-dimension bounds ([`learning`]),
//! - solves the scenario program over a sampled set with a built-in barrier
//!   method, locally for BMIs ([`solver`]),
//! - runs a sequential design/validation loop that returns a solution with a
//!   probabilistic robustness guarantee ([`sequential`]).
//!
//! ```
//! use randmi::problems::testbed;
//! use randmi::sequential::{run_sequential, SequentialConfig, SequentialStatus};
//!
//! let p = testbed();
//! let out = run_sequential(&p, &SequentialConfig::default()).unwrap();
//! assert_ne!(out.status, SequentialStatus::Infeasible);
//! ```

pub mod error;
pub mod expr;
pub mod learning;
pub mod linalg;
pub mod problem;
pub mod problems;
pub mod sampling;
pub mod sequential;
pub mod solver;

pub use error::{Error, Result};
pub use expr::{ParamTable, Parameter};
pub use learning::{BoundReport, ProbabilisticLevels, ValidationConstant};
pub use problem::{ProblemKind, Strictness, UncertainProblem};
pub use sampling::{Purpose, ScenarioSet};
pub use sequential::{SequentialConfig, SequentialOutcome, SequentialStatus};
pub use solver::{SolveResult, SolveStatus, SolverOptions};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
