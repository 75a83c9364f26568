//! Exact population regression estimands for a binary treatment with
//! post-treatment actions, and their decompositions into direct, indirect
//! and selection terms.
//!
//! A [`Dgp`] fixes the joint law of `(D, A)` on a finite support together
//! with outcome mean tables. [`projection::project`] solves the population
//! normal equations of a regression; [`decomposition`] computes closed-form
//! weights that must reproduce those coefficients.

pub mod config;
pub mod decomposition;
pub mod dgp;
pub mod diagnostics;
pub mod error;
pub mod moments;
pub mod montecarlo;
pub mod projection;
pub mod report;
pub mod sweep;

pub use config::DgpConfig;
pub use decomposition::{decompose, DecompositionReport, EstimandKind, WeightTable};
pub use dgp::{ActionSpace, ArmTable, Assumption, Atom, Dgp, JointLaw, OutcomeModel};
pub use error::{Error, Result};
pub use projection::{project, ProjectionResult, RegressionKind};
