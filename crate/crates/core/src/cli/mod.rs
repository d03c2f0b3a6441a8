//! Configuration, task orchestration and artifact output for the
//! `eigenweight` binary.

mod config;
mod run;
mod validate;

pub use config::{parse_config, parse_config_for, resolve_weight, RunConfig, Task, WeightSpec};
pub use run::{parse_summary, run, RunOutcome, STATUS_NO_POSITIVE};
pub use validate::{
    bracket_violation, derivative_error, euler_error, exhaustive_max_mu1, for_each_permutation, random_weight,
    validate_suite, validate_with, Check, Hooks, Pairing, SquareIntegrals, ValidationReport,
};
