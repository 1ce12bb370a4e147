//! Mean-field compiler and stochastic simulator for S-PALPS population models.
//!
//! The pipeline runs parse, validate, enumerate states, build the
//! state-transition table, derive recurrences, then evaluate them. The
//! stochastic oracle provides an individual-based reference.

pub mod dsl;
pub mod expr;
pub mod meanfield;
pub mod model;
pub mod oracle;
pub mod rational;
pub mod states;
pub mod stt;

pub use dsl::{parse, render, validate, Diagnostic, Severity, ValidatedModel};
pub use expr::{Expr, Loc};
pub use meanfield::{
    collapse_symbolic, collapse_ticks, derive_equations, evaluate, evaluate_equations,
    EquationSystem, Frame, Phase, PhaseClassifier, Trajectory,
};
pub use model::{canonicalize, resolve_location, Habitat, ModelSpec, ProcessTerm, State};
pub use oracle::{compare, ensemble, simulate_once, CompareReport, EnsembleStats, RunConfig};
pub use rational::Rational;
pub use states::{build_init_matrix, enumerate_states, HeadClass, InitMatrix, StateSpace};
pub use stt::{build_stt, comm_yield, comm_yield_exact, row_mass_check, TransitionTable};

/// Version of the CSV and JSON formats written by this crate.
pub const SCHEMA_VERSION: u32 = 1;
