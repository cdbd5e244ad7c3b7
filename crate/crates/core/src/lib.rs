//! Beliefs induced by causal-model narratives and the equilibria they
//! sustain.
//!
//! A narrative pairs a causal model (a DAG over a subset of the observed
//! binary variables) with an objective joint distribution; fitting the
//! model to the distribution — multiplying each variable's objective
//! conditional given its modeled parents — yields a subjective belief about
//! how the action maps into the outcome. Competing narrative-policy pairs
//! are then ranked by the anticipatory utility they generate, and an
//! equilibrium is a distribution over such pairs whose support is utility
//! maximal and whose average policy reproduces the historical action
//! frequency it was evaluated at.
//!
//! The crate is organized bottom-up:
//!
//! - [`prob`]: exact tabular distributions over binary variables.
//! - [`dag`]: causal models, enumeration, cliques, junction trees,
//!   d-separation.
//! - [`belief`]: network factorization, anticipatory utilities, structural
//!   property checks.
//! - [`linearize`]: clique factorization and the reduction of perfect-DAG
//!   narratives to linear chains.
//! - [`equilibrium`]: best responses, the fixed-point solver, and
//!   closed-form bound oracles.
//! - [`scenario`] / [`report`]: scenario configuration, built-in model
//!   instances with verification oracles, sweeps and JSON/CSV reports.

pub mod belief;
pub mod dag;
pub mod equilibrium;
mod error;
pub mod linearize;
pub mod prob;
pub mod report;
pub mod scenario;

pub use error::{Error, Result};
