//! Scenario files, output formats and the experiment runner behind the
//! `collapsar` command line.
//!
//! A run reads a [`scenario::Scenario`], builds the core objects, executes one
//! [`run::Task`] and writes CSV/JSON data files plus a `manifest.json`
//! describing the run and its checks.

pub mod checks;
pub mod io;
pub mod run;
pub mod scenario;

pub use run::{run, Report, RunError, Task};
pub use scenario::{load_scenario, parse_scenario, Mode, Scenario, ScenarioError};
