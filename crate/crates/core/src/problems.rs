//! Problem files shipped with the crate.

use crate::error::ModelError;
use crate::problem::UncertainProblem;

pub const TESTBED_JSON: &str = include_str!("../data/testbed.json");
pub const MANIPULATOR_JSON: &str = include_str!("../data/manipulator.json");

/// `min x` s.t. `x - q > 0`, `q ~ U[0, 1]`.
pub fn testbed() -> UncertainProblem {
    UncertainProblem::from_json(TESTBED_JSON).expect("bundled testbed parses")
}

/// Static output feedback H-infinity design for a flexible manipulator joint
/// with six uncertain plant parameters.
pub fn manipulator() -> UncertainProblem {
    UncertainProblem::from_json(MANIPULATOR_JSON).expect("bundled manipulator parses")
}

/// Looks up a bundled problem by name.
pub fn bundled(name: &str) -> Result<UncertainProblem, ModelError> {
    match name {
        "testbed" => UncertainProblem::from_json(TESTBED_JSON),
        "manipulator" => UncertainProblem::from_json(MANIPULATOR_JSON),
        other => Err(ModelError::schema("$", format!("no bundled problem named `{other}`"))),
    }
}
