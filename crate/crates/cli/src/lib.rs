//! Scenario files, report rendering and the named verification suites
//! behind the `conformal-jets` command.

pub mod report;
pub mod run;
pub mod scenario;
pub mod suites;

pub use report::{Record, Report, SuiteOutcome, SuiteStatus};
pub use scenario::{parse_scenario, serialize_scenario, Scenario, ScenarioError, Theorem};
