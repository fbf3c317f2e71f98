//! Backward stochastic difference equations on finite scenario trees.
//!
//! A finite-state process observed at times 0..=T generates a tree of path
//! atoms. Against that tree this crate solves backward equations
//!
//! ```text
//! Y_t = Y_{t+1} + F(t, Y_t, Z_t) - Z_t M_{t+1},
//! ```
//!
//! where M is the martingale difference of the state indicators and F is a
//! driver acting on the value Y and the gains matrix Z. On top of the solver
//! sit four capabilities:
//!
//! * martingale representation and canonical gains matrices ([`representation`]),
//! * order comparison of two solutions from pointwise driver and terminal
//!   inequalities, with strictness propagation and counterexample analysis
//!   ([`comparison`]),
//! * recovery of an unknown driver from observed one-step solution operators
//!   or from endpoint pairs ([`recovery`]),
//! * dynamic nonlinear expectations and convex risk measures induced by
//!   balanced drivers, including extension of static maps to dynamic ones
//!   ([`nlexp`], [`static2dyn`]).
//!
//! Everything is deterministic: no global state, explicit seeds wherever
//! sampling is involved, and text reports that are byte-identical across
//! runs. The `bsde` binary exposes the same operations on TOML documents.

pub mod comparison;
pub mod document;
pub mod driver;
pub mod error;
pub mod nlexp;
pub mod recovery;
pub mod report;
pub mod representation;
mod roots;
pub mod solver;
pub mod static2dyn;
pub mod testkit;
pub mod tree;

pub mod cli;

pub use driver::Driver;
pub use error::{Error, Result};
pub use nlexp::{
    check_balanced, driver_from_expectation, expectation_from_driver, risk_measure,
    verify_axioms, NonlinearExpectation,
};
pub use representation::{
    canonicalize, equivalent, increment_distance, represent, represent_centered, seminorm,
    GainsMatrix, GainsProcess,
};
pub use solver::{
    check_driver_assumptions, forward_generate, one_step_solve, solve, AssumptionReport,
    BsdeSolution, ProbeConfig,
};
pub use static2dyn::{
    builtin_static, extend_static, extension_operator, probe_monotonicity, ExtensionResult,
    StaticExpectation, StaticKind,
};
pub use tree::{Atom, AdaptedProcess, ScenarioTree};
